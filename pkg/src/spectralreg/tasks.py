"""Desk-scale experiment tasks: data, training loops, schedules, attacks.

Three tasks are provided. ``conservative-field`` fits the gradient field
of a separable function and can regularize the Jacobian toward symmetry;
``disentanglement`` fits the value of a separable function and can
regularize the Hessian toward diagonality; ``robustness`` trains a
scalar-score binary classifier on two Gaussian clusters and evaluates
PGD adversaries, regularizing the input Hessian (or Jacobian) toward
zero with any of the available solvers.

Schedules follow the iteration-doubling / power-ramp recipe: at stage s
(the number of learning-rate decays so far) the solver runs 2^s * n0
iterations and the regularizer power is min(0.25 * (s + 1), 0.95).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import regularizers as regs
from .errors import ContractError, NumericError
from .network import Network, TapedNetwork, forward, forward_nodes, jvp, value_and_param_grad
from .regularizers import RegularizerSpec

Array = np.ndarray

TASKS = ("conservative-field", "disentanglement", "robustness")

METHODS = ("normal", "hutchinson", "hutchinson-0.1", "power", "lanczos", "gradascent")

# metrics above this input dimension switch from dense matrices to probes
DENSE_METRIC_LIMIT = 128


def derive_seed(*parts) -> int:
    """Deterministic child seed from integer parts."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


# --------------------------------------------------------------------------
# data
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SeparableFunctionSpec:
    """f(x_1..x_N) = sum g(x_i), learned by value or by gradient field."""

    g: str
    n: int
    mode: str

    def __post_init__(self):
        if self.g not in ("sin", "square"):
            raise ContractError(f"g must be 'sin' or 'square', got {self.g!r}")
        if self.mode not in ("value", "gradient-field"):
            raise ContractError(f"mode must be 'value' or 'gradient-field', got {self.mode!r}")
        if self.n < 1:
            raise ContractError("dimensionality must be >= 1")


def gen_separable(spec: SeparableFunctionSpec, count: int, seed) -> tuple[Array, Array]:
    """Spherical-Gaussian inputs with analytic targets."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((count, spec.n))
    if spec.g == "sin":
        value = np.sum(np.sin(x), axis=1, keepdims=True)
        grad = np.cos(x)
    else:
        value = np.sum(x * x, axis=1, keepdims=True)
        grad = 2.0 * x
    return x, (value if spec.mode == "value" else grad)


def gen_two_gaussians(
    dim: int,
    count: int,
    seed,
    separation: float = 0.12,
    noise: float = 0.14,
    direction: Array | None = None,
) -> tuple[Array, Array]:
    """Balanced two-class Gaussian clusters inside the unit box.

    Class means sit at 0.5 +- separation along a random unit direction;
    samples are clipped to [0, 1] so the box doubles as the valid input
    range for attacks. Labels are -1/+1, shape [count, 1]. Pass the same
    ``direction`` to draw train and test splits of one problem.
    """
    rng = np.random.default_rng(seed)
    if direction is None:
        direction = rng.standard_normal(dim)
    direction = np.asarray(direction, dtype=np.float64)
    direction = direction / np.linalg.norm(direction)
    labels = np.where(np.arange(count) % 2 == 0, 1.0, -1.0)
    labels = rng.permutation(labels)[:, None]
    x = 0.5 + labels * separation * direction[None, :]
    x = x + noise * rng.standard_normal((count, dim))
    return np.clip(x, 0.0, 1.0), labels


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PGDConfig:
    epsilon: float = 8.0 / 255.0
    step: float = 2.0 / 255.0
    steps: int = 20
    clip_min: float | None = 0.0
    clip_max: float | None = 1.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ContractError("pgd.epsilon must be >= 0")
        if self.steps < 1:
            raise ContractError("pgd.steps must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    task: str
    epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 1e-3
    decay_epochs: tuple = ()
    decay_factor: float = 0.1
    hidden: tuple = (256, 256, 256)
    dim: int = 64
    g: str = "sin"
    train_count: int = 2048
    test_count: int = 512
    eval_points: int = 8
    metric_probes: int = 64
    separation: float = 0.12
    noise: float = 0.14
    label_noise: float = 0.0
    dataset_path: str | None = None
    regularizer: RegularizerSpec | None = None
    power_scale: float = 1.0
    mixing: str = "convex"
    pgd: PGDConfig = field(default_factory=PGDConfig)
    seed: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ContractError(f"task must be one of {TASKS}, got {self.task!r}")
        decays = tuple(int(e) for e in self.decay_epochs)
        object.__setattr__(self, "decay_epochs", decays)
        if any(b <= a for a, b in zip(decays, decays[1:])):
            raise ContractError("decay_epochs must be strictly increasing")
        if self.epochs < 0:
            raise ContractError("epochs must be >= 0")
        if self.batch_size < 1 or self.batch_size > self.train_count:
            raise ContractError("batch_size must be in [1, train_count]")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def stage_at(self, epoch: int) -> int:
        """Number of learning-rate decays in effect during `epoch` (1-based)."""
        return sum(1 for d in self.decay_epochs if epoch > d)

    def layer_dims(self) -> tuple:
        out = 1 if self.task in ("disentanglement", "robustness") else self.dim
        return (self.dim, *self.hidden, out)


def stage_power(stage: int, scale: float = 1.0) -> float:
    """Regularizer mixing power at a schedule stage: 25% ramp capped at 95%."""
    return min(0.25 * (stage + 1), 0.95) * scale


def stage_iterations(n0: int, stage: int) -> int:
    """Solver iteration count at a schedule stage: doubles per decay."""
    return n0 * (2 ** stage)


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

METRICS_FIELDS = (
    "epoch",
    "stage",
    "solver_iterations",
    "reg_power",
    "task_loss",
    "penalty",
    "lambda_max",
    "solve_residual",
    "asymmetry",
    "offdiag_mass",
    "clean_acc",
    "robust_acc",
    "metric_source",
    "wall_seconds",
)


@dataclass(frozen=True)
class MetricsRecord:
    epoch: int
    stage: int
    solver_iterations: int
    reg_power: float
    task_loss: float
    penalty: float | None = None
    lambda_max: float | None = None
    solve_residual: float | None = None
    asymmetry: float | None = None
    offdiag_mass: float | None = None
    clean_acc: float | None = None
    robust_acc: float | None = None
    metric_source: str = "dense"
    wall_seconds: float = 0.0

    def __post_init__(self):
        for name in ("task_loss", "penalty", "asymmetry", "offdiag_mass",
                     "clean_acc", "robust_acc", "wall_seconds"):
            v = getattr(self, name)
            if v is not None and not np.isfinite(v):
                raise NumericError(f"metric {name} is not finite", value=v)

    def csv_row(self) -> list:
        out = []
        for name in METRICS_FIELDS:
            v = getattr(self, name)
            out.append("" if v is None else v)
        return out


@dataclass
class TrainResult:
    records: list
    net: Network
    aborted: bool
    step_penalties: list
    summary: dict


# --------------------------------------------------------------------------
# attacks and accuracy
# --------------------------------------------------------------------------


def _score_input_grad(net: Network, x: Array, labels: Array) -> Array:
    """Per-row gradient of the logistic loss with respect to the inputs."""
    x_node = ad.leaf(x)
    tn = TapedNetwork(net, trainable=False)
    s = forward_nodes(tn.weight_nodes, tn.bias_nodes, tn.beta, x_node)
    loss = ad.reduce_sum(ad.softplus(ad.neg(ad.mul(labels, s))))
    return ad.grad(loss, [x_node])[0].value


def pgd_attack(
    net: Network,
    x: Array,
    labels: Array,
    epsilon: float,
    step: float,
    k: int = 20,
    clip_min: float | None = 0.0,
    clip_max: float | None = 1.0,
    seed: int = 0,
) -> Array:
    """k-step signed-gradient l-inf attack with random start.

    Each iterate is projected back to the epsilon-ball around the clean
    inputs and to the valid input range. ``epsilon=0`` returns the clean
    inputs unchanged.
    """
    if epsilon < 0:
        raise ContractError("epsilon must be >= 0")
    if k < 1:
        raise ContractError("attack steps must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    rng = np.random.default_rng(seed)
    adv = x + rng.uniform(-epsilon, epsilon, x.shape)
    if clip_min is not None or clip_max is not None:
        adv = np.clip(adv, clip_min, clip_max)
    for _ in range(k):
        g = _score_input_grad(net, adv, labels)
        adv = adv + step * np.sign(g)
        adv = np.clip(adv, x - epsilon, x + epsilon)
        if clip_min is not None or clip_max is not None:
            adv = np.clip(adv, clip_min, clip_max)
    return adv


def classify_accuracy(net: Network, x: Array, labels: Array) -> float:
    scores = forward(net, x)
    pred = np.where(scores >= 0.0, 1.0, -1.0)
    return float(np.mean(pred == labels))


# --------------------------------------------------------------------------
# metric helpers
# --------------------------------------------------------------------------


def _dense_jacobians(net: Network, xs: Array) -> Array:
    """Stacked J_f for each row of xs, shape [k, out, in] (metric path)."""
    k, d = xs.shape
    x_rep = np.repeat(xs, d, axis=0)
    v = np.tile(np.eye(d), (k, 1))
    cols = jvp(net, x_rep, v)
    return cols.reshape(k, d, net.out_dim).transpose(0, 2, 1)


def _dense_hessians(net: Network, xs: Array) -> Array:
    from .network import hvp

    k, d = xs.shape
    x_rep = np.repeat(xs, d, axis=0)
    v = np.tile(np.eye(d), (k, 1))
    cols = hvp(net, x_rep, v)
    return cols.reshape(k, d, d).transpose(0, 2, 1)


def asymmetry_metric(net: Network, xs: Array, probes: int = 64, seed: int = 0):
    """Mean ||J - J'||_F over sample rows; probe-based above the dense limit."""
    if net.in_dim <= DENSE_METRIC_LIMIT:
        jacs = _dense_jacobians(net, xs)
        vals = [np.linalg.norm(j - j.T) for j in jacs]
        return float(np.mean(vals)), "dense"
    # Hutchinson estimate of ||J - J'||_F^2 per row via defect products
    rng = np.random.default_rng(seed)
    total = np.zeros(xs.shape[0])
    from .network import vjp

    for _ in range(probes):
        v = rng.standard_normal(xs.shape)
        r = vjp(net, xs, v) - jvp(net, xs, v)
        total += np.sum(r * r, axis=1)
    return float(np.mean(np.sqrt(total / probes))), "probe"


def offdiag_metric(net: Network, xs: Array, probes: int = 64, seed: int = 0):
    """Mean off-diagonal Hessian mass over sample rows; probes above the limit."""
    if net.in_dim <= DENSE_METRIC_LIMIT:
        hess = _dense_hessians(net, xs)
        vals = [np.sum(h * h) - np.sum(np.diag(h) ** 2) for h in hess]
        return float(np.mean(vals)), "dense"
    # the two-probe variance estimator has expectation 2 * offdiag mass
    est = regs.hutchinson_offdiag(net, xs, samples=max(2, probes), seed=seed)
    return float(est / 2.0), "probe"


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


class _Adam:
    """Adam with default moments (0.9, 0.999, eps 1e-8) and bias correction."""

    def __init__(self, arrays):
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, arrays, grads, lr):
        self.t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        out = []
        for i, (a, g) in enumerate(zip(arrays, grads)):
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            mhat = self.m[i] / (1 - b1 ** self.t)
            vhat = self.v[i] / (1 - b2 ** self.t)
            out.append(a - lr * mhat / (np.sqrt(vhat) + eps))
        return out


@dataclass(frozen=True)
class TaskData:
    """Train/test splits plus the target standardization used in training.

    Regression targets are shifted/scaled to zero mean and unit deviation
    for optimization; reported task losses are always in original units.
    """

    x_train: Array
    y_train: Array
    x_test: Array
    y_test: Array
    y_shift: float = 0.0
    y_scale: float = 1.0

    def scaled_train_targets(self) -> Array:
        return (self.y_train - self.y_shift) / self.y_scale


def load_packaged_dataset(path) -> TaskData:
    """Adapter for packaged classification sets stored as .npz archives.

    Expects arrays x_train, y_train, x_test, y_test with inputs in [0, 1]
    and labels in {-1, +1} shaped [count, 1]; emitted records and
    checkpoints are identical to the synthetic path.
    """
    with np.load(path) as archive:
        required = ("x_train", "y_train", "x_test", "y_test")
        missing = [k for k in required if k not in archive]
        if missing:
            raise ContractError(f"packaged dataset lacks arrays: {missing}")
        return TaskData(
            np.asarray(archive["x_train"], dtype=np.float64),
            np.asarray(archive["y_train"], dtype=np.float64),
            np.asarray(archive["x_test"], dtype=np.float64),
            np.asarray(archive["y_test"], dtype=np.float64),
        )


def make_dataset(cfg: TrainConfig) -> TaskData:
    data_seed = derive_seed(cfg.seed, 101)
    test_seed = derive_seed(cfg.seed, 102)
    if cfg.task == "robustness" and cfg.dataset_path is not None:
        data = load_packaged_dataset(cfg.dataset_path)
        if data.x_train.shape[1] != cfg.dim:
            raise ContractError(
                f"field 'dim': dataset {cfg.dataset_path} has input dim "
                f"{data.x_train.shape[1]}, config says {cfg.dim}"
            )
        return data
    if cfg.task == "robustness":
        direction = np.random.default_rng(derive_seed(cfg.seed, 103)).standard_normal(
            cfg.dim
        )
        xtr, ytr = gen_two_gaussians(cfg.dim, cfg.train_count, data_seed,
                                     cfg.separation, cfg.noise, direction)
        xte, yte = gen_two_gaussians(cfg.dim, cfg.test_count, test_seed,
                                     cfg.separation, cfg.noise, direction)
        if cfg.label_noise > 0.0:
            # flip a fraction of the training labels; evaluation labels stay
            # clean, so memorizing the flips costs robustness, not accuracy
            flip_rng = np.random.default_rng(derive_seed(cfg.seed, 104))
            flip = flip_rng.random(ytr.shape[0]) < cfg.label_noise
            ytr = np.where(flip[:, None], -ytr, ytr)
        return TaskData(xtr, ytr, xte, yte)
    mode = "gradient-field" if cfg.task == "conservative-field" else "value"
    spec = SeparableFunctionSpec(cfg.g, cfg.dim, mode)
    xtr, ytr = gen_separable(spec, cfg.train_count, data_seed)
    xte, yte = gen_separable(spec, cfg.test_count, test_seed)
    shift = float(np.mean(ytr))
    scale = float(np.std(ytr - shift))
    scale = scale if scale > 1e-12 else 1.0
    return TaskData(xtr, ytr, xte, yte, shift, scale)


def _task_loss_node(tn: TapedNetwork, xb: Array, yb: Array, task: str) -> ad.Node:
    pred = tn.forward(xb)
    if task == "robustness":
        return ad.mean(ad.softplus(ad.neg(ad.mul(yb, pred))))
    diff = ad.sub(pred, yb)
    return ad.mean(ad.mul(diff, diff))


def _task_loss_value(net: Network, data: "TaskData", task: str) -> float:
    """Held-out task loss in original target units."""
    pred = forward(net, data.x_test)
    if task == "robustness":
        m = -(data.y_test * pred)
        return float(np.mean(np.maximum(m, 0.0) + np.log1p(np.exp(-np.abs(m)))))
    pred = pred * data.y_scale + data.y_shift
    return float(np.mean((pred - data.y_test) ** 2))


def evaluate(net: Network, cfg: TrainConfig, data: "TaskData", epoch: int, stage: int,
             wall_seconds: float) -> MetricsRecord:
    xte, yte = data.x_test, data.y_test
    spec = cfg.regularizer
    n_iters = stage_iterations(spec.iterations, stage) if spec else 0
    power = stage_power(stage, cfg.power_scale) if spec else 0.0
    task_loss = _task_loss_value(net, data, cfg.task)

    penalty = lam = res = None
    if spec is not None:
        eval_x = xte[: min(64, xte.shape[0])]
        eval_seed = derive_seed(cfg.seed, 201, epoch)
        if spec.is_spectral:
            report = regs.spectral_penalty(
                net, eval_x, spec.with_iterations(n_iters), seed=eval_seed
            )
            penalty = report.value
            lam = float(np.mean(report.solve.lambda_max))
            res = float(np.mean(report.solve.residual))
        else:
            tn = TapedNetwork(net, trainable=False)
            penalty = float(regs.hutchinson_penalty_node(tn, eval_x, spec, eval_seed).value)

    xs = xte[: cfg.eval_points]
    asym = offd = None
    source = "dense"
    metric_seed = derive_seed(cfg.seed, 202, epoch)
    if cfg.task == "conservative-field":
        asym, source = asymmetry_metric(net, xs, cfg.metric_probes, metric_seed)
    elif net.out_dim == 1:
        offd, source = offdiag_metric(net, xs, cfg.metric_probes, metric_seed)

    clean = robust = None
    if cfg.task == "robustness":
        clean = classify_accuracy(net, xte, yte)
        adv = pgd_attack(
            net, xte, yte, cfg.pgd.epsilon, cfg.pgd.step, cfg.pgd.steps,
            cfg.pgd.clip_min, cfg.pgd.clip_max, seed=derive_seed(cfg.seed, 203, epoch),
        )
        robust = classify_accuracy(net, adv, yte)

    return MetricsRecord(
        epoch=epoch, stage=stage, solver_iterations=n_iters, reg_power=power,
        task_loss=task_loss, penalty=penalty, lambda_max=lam, solve_residual=res,
        asymmetry=asym, offdiag_mass=offd, clean_acc=clean, robust_acc=robust,
        metric_source=source, wall_seconds=wall_seconds,
    )


def train_task(cfg: TrainConfig) -> TrainResult:
    """Train per the config; returns per-epoch metrics and the final network.

    A non-finite loss aborts the run and the last end-of-epoch network is
    retained. A zero-epoch config returns initialization metrics only.
    """
    data = make_dataset(cfg)
    xtr = data.x_train
    ytr = data.y_train if cfg.task == "robustness" else data.scaled_train_targets()
    net = Network.init(cfg.layer_dims(), seed=derive_seed(cfg.seed, 100))
    adam = _Adam(net.param_arrays())
    spec = cfg.regularizer

    t_start = time.perf_counter()
    records = [evaluate(net, cfg, data, epoch=0, stage=0, wall_seconds=0.0)]
    step_penalties: list[float] = []
    aborted = False
    last_good = net

    for epoch in range(1, cfg.epochs + 1):
        t_epoch = time.perf_counter()
        stage = cfg.stage_at(epoch)
        lr = cfg.learning_rate * (cfg.decay_factor ** stage)
        n_iters = stage_iterations(spec.iterations, stage) if spec else 0
        power = stage_power(stage, cfg.power_scale) if spec else 0.0
        order = np.random.default_rng(derive_seed(cfg.seed, 300, epoch)).permutation(
            xtr.shape[0]
        )
        for step_idx in range(xtr.shape[0] // cfg.batch_size):
            rows = order[step_idx * cfg.batch_size : (step_idx + 1) * cfg.batch_size]
            xb, yb = xtr[rows], ytr[rows]
            solve_seed = derive_seed(cfg.seed, 400, epoch, step_idx)
            penalty_box = {}

            def build(tn):
                task_node = _task_loss_node(tn, xb, yb, cfg.task)
                if spec is None:
                    return task_node
                pen, report = regs.regularizer_node(
                    tn, xb, spec.with_iterations(n_iters), solve_seed
                )
                penalty_box["value"] = float(pen.value)
                return regs.composite_loss(task_node, pen, power, cfg.mixing)

            try:
                _, grads = value_and_param_grad(net, build)
            except NumericError:
                aborted = True
                net = last_good
                break
            if spec is not None:
                step_penalties.append(penalty_box["value"])
            net = net.with_params(adam.step(net.param_arrays(), grads, lr))
        if aborted:
            break
        records.append(
            evaluate(net, cfg, data, epoch, stage,
                     wall_seconds=time.perf_counter() - t_epoch)
        )
        last_good = net

    summary = _summarize(cfg, records, step_penalties, aborted)
    return TrainResult(records, net, aborted, step_penalties, summary)


def penalty_step_variance(step_penalties) -> float | None:
    """Variance of first differences of the per-step penalty series.

    First differences remove the optimization trend, leaving the
    step-to-step fluctuation that distinguishes stochastic estimators
    from deterministic eigensolves.
    """
    if len(step_penalties) < 3:
        return None
    diffs = np.diff(np.asarray(step_penalties))
    return float(np.var(diffs))


def _summarize(cfg, records, step_penalties, aborted) -> dict:
    final = records[-1]
    summary = {
        "task": cfg.task,
        "seed": cfg.seed,
        "epochs_run": final.epoch,
        "aborted": aborted,
        "final_task_loss": final.task_loss,
        "final_penalty": final.penalty,
        "initial_penalty": records[0].penalty,
        "final_asymmetry": final.asymmetry,
        "final_offdiag_mass": final.offdiag_mass,
        "clean_acc": final.clean_acc,
        "robust_acc": final.robust_acc,
        "metric_source": final.metric_source,
        "penalty_step_variance": penalty_step_variance(step_penalties),
        "solver": cfg.regularizer.solver if cfg.regularizer else None,
        "regularizer_kind": cfg.regularizer.kind if cfg.regularizer else None,
    }
    return summary


# --------------------------------------------------------------------------
# method presets and the robustness comparison suite
# --------------------------------------------------------------------------


def method_config(base: TrainConfig, method: str, kind: str | None = None) -> TrainConfig:
    """Specialize a base config for one named method row."""
    if method not in METHODS:
        raise ContractError(f"unknown method {method!r}; one of {METHODS}")
    if kind is None:
        kind = base.regularizer.kind if base.regularizer else "zero-hessian"
    base_spec = base.regularizer
    iterations = base_spec.iterations if base_spec else 2
    samples = base_spec.samples if base_spec else 1
    squared = base_spec.squared if base_spec else False
    target = base_spec.target if base_spec else None
    if method == "normal":
        return replace(base, regularizer=None, power_scale=1.0)
    if method.startswith("hutchinson"):
        solver = "hutchinson-rademacher" if kind == "diagonality" else "hutchinson-gaussian"
        scale = 0.1 if method.endswith("-0.1") else 1.0
        spec = RegularizerSpec(kind, solver, iterations, samples, squared, None, target)
        return replace(base, regularizer=spec, power_scale=scale)
    solver = {"power": "power", "lanczos": "lanczos", "gradascent": "gradient-ascent"}[method]
    spec = RegularizerSpec(kind, solver, iterations, samples, squared, None, target)
    return replace(base, regularizer=spec, power_scale=1.0)


@dataclass
class SuiteRow:
    method: str
    clean_mean: float
    clean_std: float
    robust_mean: float
    robust_std: float
    penalty_step_variance: float | None
    seeds: list


@dataclass
class SuiteResult:
    rows: list
    results: dict  # (method, seed) -> TrainResult


def format_suite_table(result: "SuiteResult", title: str = "") -> str:
    """Text table of clean/robust accuracy cells as mean(std)."""
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'method':<16} {'clean':>16} {'pgd':>16} {'penalty step var':>18}")
    for row in result.rows:
        var = "-" if row.penalty_step_variance is None else f"{row.penalty_step_variance:.2e}"
        lines.append(
            f"{row.method:<16} "
            f"{row.clean_mean:.3f}({row.clean_std:.3f}){'':>4} "
            f"{row.robust_mean:.3f}({row.robust_std:.3f}){'':>4} "
            f"{var:>12}"
        )
    return "\n".join(lines)


def robustness_suite(base: TrainConfig, methods, seeds, kind: str = "zero-hessian") -> SuiteResult:
    """Train one model per (method, seed) with shared data/init seeds.

    Every method sees identical seeds, so rows differ only in the
    regularization route. Cells aggregate to mean and standard deviation
    across seeds.
    """
    results = {}
    rows = []
    for method in methods:
        cleans, robusts, variances = [], [], []
        for seed in seeds:
            cfg = replace(method_config(base, method, kind), seed=int(seed))
            res = train_task(cfg)
            results[(method, int(seed))] = res
            cleans.append(res.summary["clean_acc"])
            robusts.append(res.summary["robust_acc"])
            if res.summary["penalty_step_variance"] is not None:
                variances.append(res.summary["penalty_step_variance"])
        rows.append(
            SuiteRow(
                method=method,
                clean_mean=float(np.mean(cleans)),
                clean_std=float(np.std(cleans)),
                robust_mean=float(np.mean(robusts)),
                robust_std=float(np.std(robusts)),
                penalty_step_variance=float(np.mean(variances)) if variances else None,
                seeds=list(int(s) for s in seeds),
            )
        )
    return SuiteResult(rows, results)
