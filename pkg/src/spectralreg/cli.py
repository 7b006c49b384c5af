"""Experiment runner: configs in, metrics/summaries/checkpoints out.

One invocation either runs a configured task for each seed (``--config`` /
``--task``), benchmarks the eigensolvers on synthetic spectra
(``--bench-eig``), or aggregates finished run directories into a
comparison table (``--report``). All files are written atomically
(temp file + rename) so interrupted runs never leave torn outputs.

Run directory layout:
    <out_dir>/config.json
    <out_dir>/seed<k>/metrics.csv     one row per epoch (see METRICS_FIELDS)
    <out_dir>/seed<k>/summary.json    deterministic: no wall-clock content
    <out_dir>/seed<k>/model.ckpt      final network checkpoint

Exit codes: 0 success; 1 aborted run, I/O problem, or incomplete report
input; 2 invalid configuration (e.g. unknown task).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import eigensolvers as eig
from . import linops, oracle, tasks
from .errors import ContractError
from .network import save_checkpoint
from .regularizers import RegularizerSpec
from .tasks import METHODS, METRICS_FIELDS, TASKS, TrainConfig, derive_seed

SCHEMA_VERSION = 1

_DEFAULT_KIND = {
    "conservative-field": "symmetry",
    "disentanglement": "diagonality",
    "robustness": "zero-hessian",
}


class ConfigError(ContractError):
    """Configuration problem; the message names the offending field."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One reproducible experiment: task, method, schedules, seeds, paths."""

    task: str
    method: str = "lanczos"
    seeds: tuple = (0,)
    out_dir: str = "runs/out"
    train: dict = field(default_factory=dict)
    regularizer: dict | None = None
    pgd: dict | None = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(
                f"field 'task': unknown task {self.task!r}; valid tasks: {', '.join(TASKS)}"
            )
        if self.method not in METHODS:
            raise ConfigError(
                f"field 'method': unknown method {self.method!r}; valid: {', '.join(METHODS)}"
            )
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"field 'schema_version': expected {SCHEMA_VERSION}, got {self.schema_version}"
            )
        try:
            object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"field 'seeds': must be a list of integers ({exc})")
        if not self.seeds:
            raise ConfigError("field 'seeds': at least one seed required")

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "task": self.task,
            "method": self.method,
            "seeds": list(self.seeds),
            "out_dir": self.out_dir,
            "train": dict(self.train),
            "regularizer": None if self.regularizer is None else dict(self.regularizer),
            "pgd": None if self.pgd is None else dict(self.pgd),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        known = {
            "schema_version", "task", "method", "seeds", "out_dir",
            "train", "regularizer", "pgd",
        }
        for key in raw:
            if key not in known:
                raise ConfigError(f"field {key!r}: unknown configuration field")
        if "task" not in raw:
            raise ConfigError(f"field 'task': required; valid tasks: {', '.join(TASKS)}")
        return cls(
            task=raw["task"],
            method=raw.get("method", "lanczos"),
            seeds=tuple(raw.get("seeds", (0,))),
            out_dir=raw.get("out_dir", "runs/out"),
            train=dict(raw.get("train") or {}),
            regularizer=raw.get("regularizer"),
            pgd=raw.get("pgd"),
            schema_version=raw.get("schema_version", SCHEMA_VERSION),
        )

    def build_train_config(self, seed: int) -> TrainConfig:
        kwargs = dict(self.train)
        for tuple_field in ("decay_epochs", "hidden"):
            if tuple_field in kwargs:
                kwargs[tuple_field] = tuple(kwargs[tuple_field])
        if self.pgd is not None:
            kwargs["pgd"] = tasks.PGDConfig(**self.pgd)
        reg = None
        kind = _DEFAULT_KIND[self.task]
        if self.regularizer is not None:
            reg_kwargs = dict(self.regularizer)
            if "target" in reg_kwargs and reg_kwargs["target"] is not None:
                reg_kwargs["target"] = np.asarray(reg_kwargs["target"], dtype=np.float64)
            reg = RegularizerSpec(**reg_kwargs)
            kind = reg.kind
        try:
            base = TrainConfig(task=self.task, seed=int(seed), regularizer=reg, **kwargs)
        except TypeError as exc:
            raise ConfigError(f"field 'train': {exc}")
        if reg is None and self.method != "normal":
            base = replace(base, regularizer=RegularizerSpec(kind))
        return tasks.method_config(base, self.method, kind)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    return ExperimentConfig.from_dict(raw)


# --------------------------------------------------------------------------
# atomic output
# --------------------------------------------------------------------------


def atomic_write(path: str, data) -> None:
    """Write text or bytes via a temp file and rename."""
    tmp = f"{path}.tmp.{os.getpid()}"
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode) as fh:
        fh.write(data)
    os.replace(tmp, path)


def write_metrics_csv(path: str, records) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(METRICS_FIELDS)
    for record in records:
        writer.writerow(record.csv_row())
    atomic_write(path, buf.getvalue())


def write_summary_json(path: str, summary: dict) -> None:
    atomic_write(path, json.dumps(summary, sort_keys=True, indent=2) + "\n")


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------


def _run_one_seed(config: ExperimentConfig, seed: int) -> dict:
    cfg = config.build_train_config(seed)
    result = tasks.train_task(cfg)
    seed_dir = os.path.join(config.out_dir, f"seed{seed}")
    os.makedirs(seed_dir, exist_ok=True)
    write_metrics_csv(os.path.join(seed_dir, "metrics.csv"), result.records)
    summary = dict(result.summary)
    summary["method"] = config.method
    write_summary_json(os.path.join(seed_dir, "summary.json"), summary)
    tmp_ckpt = os.path.join(seed_dir, f"model.ckpt.tmp.{os.getpid()}")
    save_checkpoint(result.net, tmp_ckpt)
    os.replace(tmp_ckpt, os.path.join(seed_dir, "model.ckpt"))
    return summary


def worker_count() -> int:
    raw = os.environ.get("SPECTRALREG_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run(config: ExperimentConfig) -> int:
    """Execute the configured task for each seed; 0 on success."""
    os.makedirs(config.out_dir, exist_ok=True)
    atomic_write(
        os.path.join(config.out_dir, "config.json"),
        json.dumps(config.to_dict(), sort_keys=True, indent=2) + "\n",
    )
    workers = min(worker_count(), len(config.seeds))
    summaries = []
    if workers <= 1:
        for seed in config.seeds:
            summaries.append(_run_one_seed(config, seed))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one_seed, config, s) for s in config.seeds]
            summaries = [f.result() for f in futures]
    return 1 if any(s["aborted"] for s in summaries) else 0


# --------------------------------------------------------------------------
# eigensolver benchmark
# --------------------------------------------------------------------------

BENCH_FIELDS = ("solver", "dim", "gap", "seed", "iteration", "lambda_est",
                "rel_error", "residual")


def synthetic_spectrum_operator(dim: int, gap: float, matrix_seed: int):
    """Symmetric PSD operator with eigenvalues gap^k in a random basis.

    Returns (operator, symmetric square root pair, true lambda_max from
    the dense Jacobi oracle).
    """
    rng = np.random.default_rng(matrix_seed)
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    lam = gap ** np.arange(dim)
    m = (q * lam) @ q.T
    m = 0.5 * (m + m.T)
    root = (q * np.sqrt(lam)) @ q.T
    root = 0.5 * (root + root.T)
    lam_true = float(oracle.dense_symm_eig(m)[0][0])
    op = linops.from_dense(m, batch=1, symmetric=True)
    pair = linops.dense_pair(root, batch=1)
    return op, pair, lam_true


def bench_eig(dims, gaps, budget: int, seeds, out_dir: str | None = None) -> list:
    """Per-iteration relative eigenvalue errors for the three solvers.

    Returns CSV-ready rows; also writes ``bench_eig.csv`` when ``out_dir``
    is given.
    """
    rows = []
    for dim in dims:
        for gap in gaps:
            op, pair, lam_true = synthetic_spectrum_operator(
                dim, gap, derive_seed(9000, dim, int(gap * 1e6))
            )
            for seed in seeds:
                traces = {
                    "lanczos": eig.convergence_trace("lanczos", op, budget, seed),
                    "power": eig.convergence_trace("power", op, budget, seed),
                    "gradient-ascent": eig.convergence_trace(
                        "gradient-ascent", pair, budget, seed
                    ),
                }
                for solver, trace in traces.items():
                    for iteration, lam, residual in trace:
                        est = float(lam[0])
                        rows.append((
                            solver, dim, gap, int(seed), iteration, est,
                            abs(est - lam_true) / abs(lam_true), float(residual[0]),
                        ))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(BENCH_FIELDS)
        writer.writerows(rows)
        atomic_write(os.path.join(out_dir, "bench_eig.csv"), buf.getvalue())
    return rows


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------

_REPORT_METRICS = ("clean_acc", "robust_acc", "final_task_loss", "final_penalty")


def report(run_dirs) -> tuple[str, list, int]:
    """Aggregate run directories into mean(std) cells per method.

    Returns (text table, CSV-ready rows, exit code). A directory whose
    seed subdirectories lack summaries is marked incomplete and the exit
    code becomes 1.
    """
    rows = []
    status = 0
    for run_dir in run_dirs:
        label = os.path.basename(os.path.normpath(run_dir)) or run_dir
        method = None
        config_path = os.path.join(run_dir, "config.json")
        if os.path.exists(config_path):
            with open(config_path, "r", encoding="utf-8") as fh:
                method = json.load(fh).get("method")
        summaries = []
        incomplete = False
        seed_dirs = sorted(
            d for d in os.listdir(run_dir)
            if d.startswith("seed") and os.path.isdir(os.path.join(run_dir, d))
        ) if os.path.isdir(run_dir) else []
        if not seed_dirs:
            incomplete = True
        for d in seed_dirs:
            summary_path = os.path.join(run_dir, d, "summary.json")
            if not os.path.exists(summary_path):
                incomplete = True
                continue
            with open(summary_path, "r", encoding="utf-8") as fh:
                summaries.append(json.load(fh))
        if incomplete:
            status = 1
        row = {"run": label, "method": method or "?",
               "seeds": len(summaries), "incomplete": incomplete}
        for metric in _REPORT_METRICS:
            values = [s[metric] for s in summaries if s.get(metric) is not None]
            row[f"{metric}_mean"] = float(np.mean(values)) if values else None
            row[f"{metric}_std"] = float(np.std(values)) if values else None
        rows.append(row)

    lines = [f"{'run':<24} {'method':<16} {'seeds':>5} " +
             " ".join(f"{m:>24}" for m in _REPORT_METRICS)]
    for row in rows:
        cells = []
        for metric in _REPORT_METRICS:
            mean_v, std_v = row[f"{metric}_mean"], row[f"{metric}_std"]
            cells.append("-" if mean_v is None else f"{mean_v:.4f}({std_v:.4f})")
        marker = " INCOMPLETE" if row["incomplete"] else ""
        lines.append(
            f"{row['run']:<24} {row['method']:<16} {row['seeds']:>5} "
            + " ".join(f"{c:>24}" for c in cells) + marker
        )
    return "\n".join(lines), rows, status


def write_report_csv(path: str, rows) -> None:
    if not rows:
        return
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    writer.writerows(rows)
    atomic_write(path, buf.getvalue())


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def _parse_args(argv):
    parser = argparse.ArgumentParser(
        prog="spectralreg",
        description="Run regularization experiments, eigensolver benchmarks, and reports.",
    )
    parser.add_argument("--config", metavar="PATH", help="experiment config JSON")
    parser.add_argument("--task", choices=TASKS, help="task name (overrides config)")
    parser.add_argument("--method", choices=METHODS, help="method (overrides config)")
    parser.add_argument("--seed", type=int, help="single seed (overrides config seeds)")
    parser.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
    parser.add_argument("--bench-eig", action="store_true",
                        help="run the eigensolver convergence benchmark")
    parser.add_argument("--dims", default="32,64", help="bench: comma-separated dims")
    parser.add_argument("--gaps", default="0.5,0.99", help="bench: comma-separated gap ratios")
    parser.add_argument("--budget", type=int, default=16, help="bench: iteration budget")
    parser.add_argument("--bench-seeds", type=int, default=20, help="bench: number of seeds")
    parser.add_argument("--report", nargs="+", metavar="DIR",
                        help="aggregate finished run directories")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = _parse_args(sys.argv[1:] if argv is None else argv)
    try:
        if args.bench_eig:
            out = args.out or "runs/bench"
            dims = [int(d) for d in args.dims.split(",")]
            gaps = [float(g) for g in args.gaps.split(",")]
            rows = bench_eig(dims, gaps, args.budget, range(args.bench_seeds), out)
            print(f"wrote {len(rows)} rows to {os.path.join(out, 'bench_eig.csv')}")
            return 0
        if args.report:
            text, rows, status = report(args.report)
            print(text)
            if args.out:
                write_report_csv(args.out, rows)
            return status
        if args.config:
            config = load_config(args.config)
        elif args.task:
            config = ExperimentConfig(task=args.task)
        else:
            print("nothing to do: pass --config/--task, --bench-eig, or --report",
                  file=sys.stderr)
            return 2
        overrides = {}
        if args.task:
            overrides["task"] = args.task
        if args.method:
            overrides["method"] = args.method
        if args.seed is not None:
            overrides["seeds"] = (args.seed,)
        if args.out:
            overrides["out_dir"] = args.out
        if overrides:
            config = ExperimentConfig.from_dict({**config.to_dict(), **overrides})
        return run(config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
