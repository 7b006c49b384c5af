"""Differentiable penalties that shrink Jacobians/Hessians toward targets.

The spectral route follows a two-step procedure: (1) solve the extremal
eigenproblem of the matching defect Gram operator for a unit direction
v_m, then (2) minimize ||v_m' (A - A0)||_2 built from differentiable
vjp/jvp/hvp calls. v_m is always detached: gradients never flow through
the eigensolver. The Hutchinson route replaces the eigensolve with random
probes and estimates squared Frobenius mass instead.

Penalties are unsquared spectral norms by default (the singular value
itself); set ``squared=True`` on the spec for the squared variant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import eigensolvers as eig
from . import linops
from .errors import ContractError, DimensionError
from .network import Network, TapedNetwork, hvp, jvp, vjp

Array = np.ndarray

KINDS = ("zero-jacobian", "zero-hessian", "symmetry", "diagonality", "custom-target")
SPECTRAL_SOLVERS = ("lanczos", "power", "gradient-ascent")
HUTCHINSON_SOLVERS = ("hutchinson-gaussian", "hutchinson-rademacher")
SOLVERS = SPECTRAL_SOLVERS + HUTCHINSON_SOLVERS

# a solve whose residual exceeds this fraction of |lambda| is flagged
RESIDUAL_WARN_RATIO = 1e-2


@dataclass(frozen=True, eq=False)
class RegularizerSpec:
    """What to regularize, with which solver, and how hard to solve."""

    kind: str
    solver: str = "lanczos"
    iterations: int = 2
    samples: int = 2
    squared: bool = False
    ga_step: float | None = None
    target: Array | None = None  # constant target matrix for kind custom-target

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown regularizer kind {self.kind!r}; one of {KINDS}")
        if self.solver not in SOLVERS:
            raise ContractError(f"unknown solver {self.solver!r}; one of {SOLVERS}")
        if self.iterations < 1:
            raise ContractError("iterations must be >= 1")
        if self.kind == "custom-target":
            if self.target is None:
                raise ContractError("custom-target needs a target matrix")
            object.__setattr__(
                self, "target", np.asarray(self.target, dtype=np.float64)
            )
        if self.kind == "diagonality" and self.solver in HUTCHINSON_SOLVERS:
            if self.solver != "hutchinson-rademacher":
                raise ContractError(
                    "the off-diagonal Hutchinson estimator needs Rademacher probes"
                )

    @property
    def is_spectral(self) -> bool:
        return self.solver in SPECTRAL_SOLVERS

    def with_iterations(self, n: int) -> "RegularizerSpec":
        return RegularizerSpec(
            self.kind, self.solver, n, self.samples, self.squared,
            self.ga_step, self.target,
        )


def _require_kind_fits(net: Network, spec: RegularizerSpec) -> None:
    if spec.kind == "symmetry" and net.in_dim != net.out_dim:
        raise ContractError("symmetry regularizer needs a square Jacobian")
    if spec.kind in ("zero-hessian", "diagonality") and net.out_dim != 1:
        raise ContractError(f"{spec.kind} regularizer needs a scalar-output network")
    if spec.kind == "custom-target" and spec.target.shape != (net.out_dim, net.in_dim):
        raise DimensionError(
            f"target shape {spec.target.shape} does not match Jacobian shape "
            f"{(net.out_dim, net.in_dim)}"
        )


def gram_operator(net: Network, x, spec: RegularizerSpec) -> linops.BatchedLinearOperator:
    """The defect Gram operator (A - A0)(A - A0)' matching the spec kind."""
    _require_kind_fits(net, spec)
    if spec.kind == "zero-jacobian":
        return linops.jacobian_gram(net, x)
    if spec.kind == "zero-hessian":
        return linops.hessian_gram(net, x)
    if spec.kind == "symmetry":
        return linops.symmetry_defect_gram(net, x)
    if spec.kind == "diagonality":
        return linops.diagonality_defect_gram(linops.hessian_operator(net, x))
    a = linops.jacobian_operator(net, x)
    return linops.target_difference_gram(
        a, linops.dense_pair(spec.target, a.batch)
    )


def difference_pair(net: Network, x, spec: RegularizerSpec) -> linops.RectangularOperatorPair:
    """(A - A0) with both products, used by the gradient-ascent solver."""
    _require_kind_fits(net, spec)
    x = np.asarray(x, dtype=np.float64)
    batch = x.shape[0]
    if spec.kind == "zero-jacobian":
        return linops.jacobian_operator(net, x)
    if spec.kind == "zero-hessian":
        return linops.hessian_operator(net, x)
    if spec.kind == "symmetry":
        return linops.RectangularOperatorPair(
            net.in_dim, net.out_dim, batch,
            apply=lambda v: jvp(net, x, v) - vjp(net, x, v),
            apply_adjoint=lambda u: vjp(net, x, u) - jvp(net, x, u),
        )
    if spec.kind == "diagonality":
        row_sums = hvp(net, x, np.ones((batch, net.in_dim)))
        apply = lambda v: hvp(net, x, v) - row_sums * v
        return linops.RectangularOperatorPair(
            net.in_dim, net.in_dim, batch, apply, apply
        )
    a0 = spec.target
    return linops.RectangularOperatorPair(
        net.in_dim, net.out_dim, batch,
        apply=lambda v: jvp(net, x, v) - v @ a0.T,
        apply_adjoint=lambda u: vjp(net, x, u) - u @ a0,
    )


@dataclass(frozen=True)
class SolveReport:
    """Eigensolve diagnostics attached to a penalty evaluation."""

    lambda_max: Array
    residual: Array
    warned: bool

    @property
    def sigma_max(self) -> Array:
        return np.sqrt(np.clip(self.lambda_max, 0.0, None))


def solve_direction(net: Network, x, spec: RegularizerSpec, seed) -> tuple[Array, SolveReport]:
    """Step (1): the detached unit direction v_m for the defect operator."""
    if not spec.is_spectral:
        raise ContractError(f"solver {spec.solver!r} does not produce a direction")
    if spec.solver == "gradient-ascent":
        pair = difference_pair(net, x, spec).transpose()
        result = eig.gradient_ascent_spectral(pair, spec.ga_step, spec.iterations, seed)
    else:
        gram = gram_operator(net, x, spec)
        n = min(spec.iterations, gram.dim)
        if spec.solver == "lanczos":
            result = eig.extremal_eigenpair(gram, n, seed)
        else:
            result = eig.power_iteration(gram, spec.iterations, seed)
    warned = bool(
        np.any(result.residual > RESIDUAL_WARN_RATIO * np.abs(result.lambda_max))
    )
    return result.v_m, SolveReport(result.lambda_max, result.residual, warned)


def penalty_node(tn: TapedNetwork, x, spec: RegularizerSpec, v_m: Array) -> ad.Node:
    """Step (2): mean over batch of ||v_m' (A - A0)||_2, differentiable in theta.

    ``v_m`` enters as a plain array, i.e. detached.
    """
    x = np.asarray(x, dtype=np.float64)
    v_m = np.asarray(v_m, dtype=np.float64)
    if spec.kind == "zero-jacobian":
        r = tn.vjp(x, v_m)
    elif spec.kind == "zero-hessian":
        r = tn.hvp(x, v_m)
    elif spec.kind == "symmetry":
        # v'(J - J') = v'J - (J v)'
        r = ad.sub(tn.vjp(x, v_m), tn.jvp(x, v_m))
    elif spec.kind == "diagonality":
        # v'(A - D(A1)) = (H v)' - (A1 * v)', with A1 = H @ ones re-derived
        # differentiably so the target moves with theta
        ones = np.ones_like(v_m)
        r = ad.sub(tn.hvp(x, v_m), ad.mul(tn.hvp(x, ones), v_m))
    else:
        r = ad.sub(tn.vjp(x, v_m), ad.constant(v_m @ spec.target))
    per_row = ad.reduce_sum(ad.mul(r, r), axis=1)
    if not spec.squared:
        per_row = ad.sqrt(per_row)
    return ad.mean(per_row)


@dataclass(frozen=True)
class PenaltyReport:
    value: float
    solve: SolveReport


def spectral_penalty(net: Network, x, spec: RegularizerSpec, seed=0) -> PenaltyReport:
    """Evaluate the spectral penalty (no parameter gradients)."""
    _require_kind_fits(net, spec)
    v_m, report = solve_direction(net, x, spec, seed)
    tn = TapedNetwork(net, trainable=False)
    node = penalty_node(tn, x, spec, v_m)
    value = float(node.value)
    if not np.isfinite(value):
        from .errors import NumericError

        raise NumericError("spectral penalty is not finite", value=value)
    return PenaltyReport(value, report)


# --------------------------------------------------------------------------
# Hutchinson estimators
# --------------------------------------------------------------------------


def _probes(rng, distribution: str, shape) -> Array:
    if distribution == "gaussian":
        return rng.standard_normal(shape)
    if distribution == "rademacher":
        return rng.integers(0, 2, shape).astype(np.float64) * 2.0 - 1.0
    raise ContractError(f"unknown probe distribution {distribution!r}")


def hutchinson_frobenius_samples(
    net: Network, x, distribution: str, samples: int, seed=0
) -> Array:
    """Per-probe values of ||v'J||_2^2, shape [samples, batch].

    Each column is an unbiased estimator sequence for ||J_f||_F^2 at that
    batch row; mean and variance are what Hutchinson theory predicts for
    the chosen probe distribution.
    """
    if samples < 1:
        raise ContractError("samples must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    batch = x.shape[0]
    rng = np.random.default_rng(seed)
    u = _probes(rng, distribution, (samples * batch, net.out_dim))
    x_rep = np.tile(x, (samples, 1))
    r = vjp(net, x_rep, u)
    return np.sum(r * r, axis=1).reshape(samples, batch)


def hutchinson_frobenius(
    net: Network, x, distribution: str = "gaussian", samples: int = 1, seed=0
) -> float:
    """Unbiased estimate of ||J_f||_F^2, averaged over probes and batch."""
    return float(np.mean(hutchinson_frobenius_samples(net, x, distribution, samples, seed)))


def hutchinson_offdiag_samples(net: Network, x, samples: int, seed=0) -> Array:
    """Rademacher quadratic forms v'Hv, shape [samples, batch]."""
    if samples < 2:
        raise ContractError("off-diagonal estimation needs samples >= 2")
    if net.out_dim != 1:
        raise ContractError("hutchinson_offdiag requires a scalar-output network")
    x = np.asarray(x, dtype=np.float64)
    batch = x.shape[0]
    rng = np.random.default_rng(seed)
    v = _probes(rng, "rademacher", (samples * batch, net.in_dim))
    x_rep = np.tile(x, (samples, 1))
    hv = hvp(net, x_rep, v)
    return np.sum(v * hv, axis=1).reshape(samples, batch)


def hutchinson_offdiag(net: Network, x, samples: int = 2, seed=0) -> float:
    """Estimate of off-diagonal Hessian mass: empirical variance of v'Hv.

    Unbiased sample variance over Rademacher probes per batch row,
    averaged over the batch; computed in the pairwise form
    sum (q_i - q_j)^2 / (2 n (n-1)) so a diagonal Hessian yields exactly
    zero. For symmetric H the expectation equals 2 * sum of squared
    off-diagonal entries.
    """
    q = hutchinson_offdiag_samples(net, x, samples, seed)
    n = q.shape[0]
    pair_sq = (q[:, None, :] - q[None, :, :]) ** 2
    return float(np.mean(np.sum(pair_sq, axis=(0, 1)) / (2.0 * n * (n - 1))))


def hutchinson_penalty_node(
    tn: TapedNetwork, x, spec: RegularizerSpec, seed
) -> ad.Node:
    """Differentiable Hutchinson penalty matching the spec kind."""
    x = np.asarray(x, dtype=np.float64)
    batch = x.shape[0]
    distribution = "gaussian" if spec.solver == "hutchinson-gaussian" else "rademacher"
    rng = np.random.default_rng(seed)
    net = tn.net
    if spec.kind == "diagonality":
        qs = []
        for _ in range(max(spec.samples, 2)):
            v = _probes(rng, "rademacher", (batch, net.in_dim))
            qs.append(ad.reduce_sum(ad.mul(tn.hvp(x, v), v), axis=1))
        # unbiased variance in pairwise form (exactly zero for diagonal H)
        n = len(qs)
        total = None
        for i in range(n):
            for j in range(i + 1, n):
                d = ad.sub(qs[i], qs[j])
                sq = ad.mul(d, d)
                total = sq if total is None else ad.add(total, sq)
        return ad.mean(ad.mul(total, 1.0 / (n * (n - 1))))
    terms = []
    for _ in range(spec.samples):
        if spec.kind == "zero-jacobian":
            u = _probes(rng, distribution, (batch, net.out_dim))
            r = tn.vjp(x, u)
        elif spec.kind == "zero-hessian":
            v = _probes(rng, distribution, (batch, net.in_dim))
            r = tn.hvp(x, v)
        elif spec.kind == "symmetry":
            u = _probes(rng, distribution, (batch, net.in_dim))
            r = ad.sub(tn.vjp(x, u), tn.jvp(x, u))
        else:
            u = _probes(rng, distribution, (batch, net.out_dim))
            r = ad.sub(tn.vjp(x, u), ad.constant(u @ spec.target))
        terms.append(ad.mean(ad.reduce_sum(ad.mul(r, r), axis=1)))
    return ad.mul(sum(terms[1:], terms[0]), 1.0 / len(terms))


def regularizer_node(tn: TapedNetwork, x, spec: RegularizerSpec, seed) -> tuple[ad.Node, SolveReport | None]:
    """One differentiable penalty term for a training step.

    Spectral solvers run the (detached) eigensolve first and report its
    diagnostics; Hutchinson solvers return no report.
    """
    if spec.is_spectral:
        v_m, report = solve_direction(tn.net, x, spec, seed)
        return penalty_node(tn, x, spec, v_m), report
    return hutchinson_penalty_node(tn, x, spec, seed), None


def composite_loss(task_loss, penalty, power: float, mode: str = "convex"):
    """Blend task loss and penalty under the scheduled regularizer power.

    ``convex`` returns (1 - power) * task + power * penalty;
    ``multiplicative`` returns task + power * penalty. Works on floats
    and autodiff nodes alike.
    """
    if not 0.0 <= power < 1.0:
        raise ContractError(f"power must lie in [0, 1), got {power}")
    if mode == "convex":
        return (1.0 - power) * task_loss + power * penalty
    if mode == "multiplicative":
        return task_loss + power * penalty
    raise ContractError(f"unknown mixing mode {mode!r}")
