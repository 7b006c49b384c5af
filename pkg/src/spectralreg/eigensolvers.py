"""Extremal eigenpairs of batched symmetric operators.

``lanczos`` runs the parallelized Lanczos three-term recurrence on every
batch row at once, with no reorthogonalization; rows that break down
(vanishing recurrence norm) restart from fresh random unit vectors.
``tridiagonal_eigh`` diagonalizes the small tridiagonal results with
implicit-shift QL, and ``extremal_eigenpair`` maps the winning Ritz
vector back through the Lanczos basis. ``power_iteration`` and
``gradient_ascent_spectral`` are the baselines the Lanczos route is
compared against.

Randomness is drawn from per-row streams keyed by (seed, row index), so
results are reproducible for a fixed seed regardless of how the batch is
scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericError
from .linops import BatchedLinearOperator, RectangularOperatorPair

Array = np.ndarray

# a recurrence norm below this is treated as breakdown (alongside NaN rows)
BREAKDOWN_EPS = 1e-12


@dataclass(frozen=True)
class LanczosDecomposition:
    """Per-batch Lanczos basis and tridiagonal matrix."""

    basis: Array        # [batch, n, dim], rows are Lanczos vectors
    tridiagonal: Array  # [batch, n, n]
    alphas: Array       # [batch, n] diagonal recurrence coefficients
    betas: Array        # [batch, n]; betas[:, i] couples vectors i-1 and i

    @property
    def iterations(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class ExtremalEigenpair:
    """Largest-magnitude eigenvalue estimate with its unit Ritz vector."""

    lambda_max: Array  # [batch]
    v_m: Array         # [batch, dim], unit rows
    residual: Array    # [batch], ||M v - lambda v||_2, recomputed not assumed

    @property
    def sigma_max(self) -> Array:
        """Spectral norm when the operator is a Gram matrix A A'.

        lambda_max(A A') is the squared spectral norm; this is its square
        root, clipped at zero against round-off.
        """
        return np.sqrt(np.clip(self.lambda_max, 0.0, None))


def _row_rngs(seed, batch: int) -> list:
    return [np.random.default_rng((int(seed), row)) for row in range(batch)]


def _fresh_unit(rng, dim: int) -> Array:
    while True:
        v = rng.standard_normal(dim)
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            return v / norm


def _unit_rows(rngs, dim: int) -> Array:
    return np.stack([_fresh_unit(rng, dim) for rng in rngs])


def _check_finite(w: Array, what: str) -> None:
    if not np.isfinite(w).all():
        raise NumericError(f"{what} produced non-finite values", value=w)


def lanczos(
    m_op: BatchedLinearOperator, n: int, seed, v0: Array | None = None
) -> LanczosDecomposition:
    """Run n iterations of the batched Lanczos recurrence on ``m_op``.

    ``v0`` optionally overrides the random unit start rows (shape
    [batch, dim], unit rows), which makes runs comparable across solvers.
    """
    if not m_op.symmetric:
        raise ContractError("lanczos requires an operator flagged symmetric")
    if n < 1:
        raise ContractError(f"iteration count must be >= 1, got {n}")
    if n > m_op.dim:
        raise ContractError(f"iteration count {n} exceeds operator dim {m_op.dim}")
    batch, dim = m_op.batch, m_op.dim
    rngs = _row_rngs(seed, batch)

    v = _unit_rows(rngs, dim) if v0 is None else np.array(v0, dtype=np.float64)
    if v.shape != (batch, dim):
        raise ContractError(f"v0 must have shape {(batch, dim)}, got {v.shape}")

    vectors = [v]
    omega = m_op(v)
    _check_finite(omega, "operator")
    a = np.einsum("bd,bd->b", omega, v)
    alphas = [a]
    betas = [np.zeros(batch)]
    omega = omega - a[:, None] * v

    v_prev = v
    for _ in range(1, n):
        b = np.linalg.norm(omega, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = omega / b[:, None]
        # breakdown: NaN rows (exact invariant subspace) or norms below
        # threshold restart from fresh random unit vectors, decoupled (beta 0)
        broken = (b < BREAKDOWN_EPS) | ~np.isfinite(v).all(axis=1)
        if broken.any():
            for row in np.flatnonzero(broken):
                v[row] = _fresh_unit(rngs[row], dim)
            b = np.where(broken, 0.0, b)
        omega = m_op(v)
        _check_finite(omega, "operator")
        a = np.einsum("bd,bd->b", omega, v)
        omega = omega - a[:, None] * v - b[:, None] * v_prev
        vectors.append(v)
        alphas.append(a)
        betas.append(b)
        v_prev = v

    # stack iteration-major, then permute to per-batch layout
    basis = np.stack(vectors).transpose(1, 0, 2)
    alpha_arr = np.stack(alphas).T
    beta_arr = np.stack(betas).T
    tridiag = np.zeros((batch, n, n))
    idx = np.arange(n)
    tridiag[:, idx, idx] = alpha_arr
    if n > 1:
        off = beta_arr[:, 1:]
        tridiag[:, idx[:-1], idx[1:]] = off
        tridiag[:, idx[1:], idx[:-1]] = off
    return LanczosDecomposition(basis, tridiag, alpha_arr, beta_arr)


# --------------------------------------------------------------------------
# implicit-shift QL for symmetric tridiagonal matrices
# --------------------------------------------------------------------------

_QL_MAX_SWEEPS = 30


def _tqli(d: list, e: list, z: list) -> None:
    """In-place implicit-shift QL on diagonal d and off-diagonal e.

    ``e[i]`` couples entries i and i+1 (e[n-1] is workspace). Rotations
    accumulate into the rows of ``z`` (row k is the k-th eigenvector).
    Operates on plain Python floats: the matrices are tiny (n <= 32) and
    scalar loops dominate, so this is much faster than ndarray indexing.
    """
    n = len(d)
    eps = 2.220446049250313e-16
    hypot = math.hypot
    for l in range(n):
        sweeps = 0
        while True:
            for m in range(l, n - 1):
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
            else:
                m = n - 1
            if m == l:
                break
            sweeps += 1
            if sweeps > _QL_MAX_SWEEPS:
                raise NumericError(
                    f"tridiagonal QL failed to converge within {_QL_MAX_SWEEPS} sweeps"
                )
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0 else -r))
            s = c = 1.0
            p = 0.0
            underflow = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi, zi1 = z[i], z[i + 1]
                for k in range(n):
                    f = zi1[k]
                    zi1[k] = s * zi[k] + c * f
                    zi[k] = c * zi[k] - s * f
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0


def tridiagonal_eigh(tridiag: Array) -> tuple[Array, Array]:
    """Full spectrum of each symmetric tridiagonal matrix in a batch.

    Returns (eigenvalues [b, n] descending, eigenvectors [b, n, n] with
    orthonormal columns matching the eigenvalue order).
    """
    t = np.asarray(tridiag, dtype=np.float64)
    if t.ndim == 2:
        t = t[None]
    batch, n, n2 = t.shape
    if n != n2:
        raise ContractError(f"square matrices required, got {t.shape}")
    if n > 1:
        sym = np.max(np.abs(t - t.transpose(0, 2, 1)))
        if sym > 1e-9:
            raise ContractError(f"input not symmetric: max |T - T'| = {sym:g}")
        far = t.copy()
        idx = np.arange(n)
        far[:, idx, idx] = 0.0
        far[:, idx[:-1], idx[1:]] = 0.0
        far[:, idx[1:], idx[:-1]] = 0.0
        stray = np.max(np.abs(far))
        if stray > 1e-9:
            raise ContractError(f"input not tridiagonal: stray entry {stray:g}")

    values = np.empty((batch, n))
    vectors = np.empty((batch, n, n))
    for k in range(batch):
        d = t[k].diagonal().tolist()
        e = t[k].diagonal(1).tolist() + [0.0] if n > 1 else [0.0]
        z = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
        _tqli(d, e, z)
        d = np.asarray(d)
        order = np.argsort(-d, kind="stable")
        values[k] = d[order]
        vectors[k] = np.asarray(z)[order].T  # row i of z is eigenvector i
    if tridiag.ndim == 2:
        return values[0], vectors[0]
    return values, vectors


# --------------------------------------------------------------------------
# extremal solvers
# --------------------------------------------------------------------------


def extremal_eigenpair(
    m_op: BatchedLinearOperator, n: int, seed, v0: Array | None = None
) -> ExtremalEigenpair:
    """Largest-magnitude eigenpair estimate from an n-step Lanczos run."""
    dec = lanczos(m_op, n, seed, v0=v0)
    values, vectors = tridiagonal_eigh(dec.tridiagonal)
    pick = np.argmax(np.abs(values), axis=1)
    rows = np.arange(m_op.batch)
    lam = values[rows, pick]
    y = vectors[rows, :, pick]                     # [batch, n]
    v = np.einsum("bn,bnd->bd", y, dec.basis)      # map back through the basis
    norms = np.linalg.norm(v, axis=1)
    degenerate = norms < BREAKDOWN_EPS
    if degenerate.any():
        v[degenerate] = dec.basis[degenerate, 0]
        norms = np.linalg.norm(v, axis=1)
    v = v / norms[:, None]
    mv = m_op(v)
    residual = np.linalg.norm(mv - lam[:, None] * v, axis=1)
    return ExtremalEigenpair(lam, v, residual)


def power_iteration(
    m_op: BatchedLinearOperator, n: int, seed, v0: Array | None = None
) -> ExtremalEigenpair:
    """n normalized matvec steps; Rayleigh quotient as the estimate."""
    if not m_op.symmetric:
        raise ContractError("power_iteration requires an operator flagged symmetric")
    if n < 1:
        raise ContractError(f"iteration count must be >= 1, got {n}")
    batch, dim = m_op.batch, m_op.dim
    rngs = _row_rngs(seed, batch)
    v = _unit_rows(rngs, dim) if v0 is None else np.array(v0, dtype=np.float64)
    if v.shape != (batch, dim):
        raise ContractError(f"v0 must have shape {(batch, dim)}, got {v.shape}")
    for _ in range(n):
        w = m_op(v)
        _check_finite(w, "operator")
        norms = np.linalg.norm(w, axis=1)
        dead = norms < BREAKDOWN_EPS
        if dead.any():
            for row in np.flatnonzero(dead):
                w[row] = _fresh_unit(rngs[row], dim)
            norms = np.where(dead, 1.0, norms)
        v = w / norms[:, None]
    w = m_op(v)
    lam = np.einsum("bd,bd->b", v, w)
    residual = np.linalg.norm(w - lam[:, None] * v, axis=1)
    return ExtremalEigenpair(lam, v, residual)


def gradient_ascent_spectral(
    a: RectangularOperatorPair,
    alpha: float | None,
    n: int,
    seed,
    v0: Array | None = None,
) -> ExtremalEigenpair:
    """Normalized gradient ascent on ||A v||_2, matvec products only.

    The ascent direction is A'Av / ||Av||, so no differentiation through
    the norm is performed. Returns the eigenpair estimate for A'A. When
    ``alpha`` is None, each row uses 9x its first ||A v0|| as step size
    (a deliberately large step, which makes the iteration track power
    iteration closely).
    """
    if alpha is not None and alpha <= 0:
        raise ContractError(f"step size must be positive, got {alpha}")
    if n < 1:
        raise ContractError(f"iteration count must be >= 1, got {n}")
    batch, dim = a.batch, a.in_dim
    rngs = _row_rngs(seed, batch)
    v = _unit_rows(rngs, dim) if v0 is None else np.array(v0, dtype=np.float64)
    if v.shape != (batch, dim):
        raise ContractError(f"v0 must have shape {(batch, dim)}, got {v.shape}")
    step = None if alpha is None else np.full(batch, float(alpha))
    for i in range(n):
        av = a.apply(v)
        _check_finite(av, "operator")
        norms = np.linalg.norm(av, axis=1)
        dead = norms < BREAKDOWN_EPS
        if dead.any():
            # A v vanished: restart those rows from fresh random unit vectors
            for row in np.flatnonzero(dead):
                v[row] = _fresh_unit(rngs[row], dim)
            av = a.apply(v)
            norms = np.linalg.norm(av, axis=1)
            norms = np.where(norms < BREAKDOWN_EPS, 1.0, norms)
        if step is None:
            step = 9.0 * norms
        v = v + step[:, None] * (a.apply_adjoint(av) / norms[:, None])
        v = v / np.linalg.norm(v, axis=1)[:, None]
    atav = a.apply_adjoint(a.apply(v))
    lam = np.einsum("bd,bd->b", v, atav)
    residual = np.linalg.norm(atav - lam[:, None] * v, axis=1)
    return ExtremalEigenpair(lam, v, residual)


def convergence_trace(solver: str, operator, budget: int, seed, alpha=None) -> list:
    """Per-iteration (iteration, lambda_max, residual) rows for a solver.

    Reruns the solver at every iteration count up to ``budget``; with a
    fixed seed each rerun extends the same trajectory. ``operator`` is a
    BatchedLinearOperator for 'lanczos'/'power' and a
    RectangularOperatorPair for 'gradient-ascent'.
    """
    rows = []
    for it in range(1, budget + 1):
        if solver == "lanczos":
            pair = extremal_eigenpair(operator, min(it, operator.dim), seed)
        elif solver == "power":
            pair = power_iteration(operator, it, seed)
        elif solver == "gradient-ascent":
            pair = gradient_ascent_spectral(operator, alpha, it, seed)
        else:
            raise ContractError(f"unknown solver {solver!r}")
        rows.append((it, pair.lambda_max.copy(), pair.residual.copy()))
    return rows
