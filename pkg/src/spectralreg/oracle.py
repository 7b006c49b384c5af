"""Dense brute-force ground truth for tests and acceptance checks.

Everything here materializes matrices explicitly and is deliberately
independent of the matrix-free training path: the eigensolver is cyclic
Jacobi rotation (not Lanczos, not QL), and gradients come from central
finite differences. Intended for dimensions up to ~128.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, NumericError
from .network import Network, hvp, jvp, vjp

Array = np.ndarray

# DenseMatrix in this package is simply a 2-d float64 ndarray (row-major).
DenseMatrix = np.ndarray


def dense_jacobian(net: Network, x) -> DenseMatrix:
    """Explicit J_f(x) for a single input point, shape [out_dim, in_dim].

    Built column-wise from JVPs and cross-checked row-wise against VJPs;
    the two constructions must agree to 1e-12.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    d_in, d_out = net.in_dim, net.out_dim
    if x.shape != (d_in,):
        raise ContractError(f"x must be a single point of dim {d_in}, got {x.shape}")
    x_in = np.tile(x, (d_in, 1))
    jac_cols = jvp(net, x_in, np.eye(d_in)).T          # [out, in]
    x_out = np.tile(x, (d_out, 1))
    jac_rows = vjp(net, x_out, np.eye(d_out))          # [out, in]
    gap = np.max(np.abs(jac_cols - jac_rows))
    if gap > 1e-12 * max(1.0, np.max(np.abs(jac_cols))):
        raise NumericError(
            f"jvp/vjp Jacobian constructions disagree by {gap:g}", value=gap
        )
    return jac_cols


def dense_hessian(net: Network, x) -> DenseMatrix:
    """Explicit input Hessian of a scalar-output network at one point."""
    if net.out_dim != 1:
        raise ContractError("dense_hessian requires a scalar-output network")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    d = net.in_dim
    x_in = np.tile(x, (d, 1))
    hess = hvp(net, x_in, np.eye(d)).T
    asym = np.linalg.norm(hess - hess.T)
    if asym > 1e-8:
        raise NumericError(f"Hessian asymmetry {asym:g} exceeds 1e-8", value=asym)
    return hess


def dense_symm_eig(matrix) -> tuple[Array, Array]:
    """Full spectrum of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues descending, eigenvectors as matching columns).
    Sweeps run until the off-diagonal Frobenius mass of the working
    matrix is negligible at the matrix's own scale.
    """
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ContractError(f"square matrix required, got shape {a.shape}")
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-9 * max(1.0, np.max(np.abs(a))):
        raise ContractError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n), np.eye(n)
    a /= scale
    vecs = np.eye(n)
    # One sweep visits every index pair once, tournament-scheduled so each
    # round holds disjoint pairs: their pivots are untouched by each other,
    # and the round's rotations compose into one orthogonal update applied
    # with dense matmuls. Convergence target: off-diagonal mass below
    # 5e-15 of the matrix scale (the float64 floor is ~1e-15 at n <= 128).
    rounds = _tournament_rounds(n)
    for _ in range(50):
        strictly_off = a.copy()
        np.fill_diagonal(strictly_off, 0.0)
        off = np.linalg.norm(strictly_off)
        if off < 5e-15:
            break
        for pairs in rounds:
            p = pairs[:, 0]
            q = pairs[:, 1]
            apq = a[p, q]
            theta = 0.5 * np.arctan2(2.0 * apq, a[q, q] - a[p, p])
            c, s = np.cos(theta), np.sin(theta)
            rot = np.eye(n)
            rot[p, p] = c
            rot[q, q] = c
            rot[p, q] = s
            rot[q, p] = -s
            a = rot.T @ a @ rot
            vecs = vecs @ rot
        a = 0.5 * (a + a.T)
    else:
        raise NumericError("Jacobi eigensolver failed to converge", value=off)
    values = np.diag(a) * scale
    order = np.argsort(-values, kind="stable")
    return values[order], vecs[:, order]


def _tournament_rounds(n: int) -> list:
    """Round-robin schedule: n-1 rounds of disjoint index pairs covering all pairs."""
    players = list(range(n)) + ([None] if n % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = [
            (players[i], players[m - 1 - i])
            for i in range(m // 2)
            if players[i] is not None and players[m - 1 - i] is not None
        ]
        rounds.append(np.array([(min(p, q), max(p, q)) for p, q in pairs]))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def theorem1_sides(matrix) -> tuple[float, float, float]:
    """The three sides of the off-diagonal-mass sandwich for a square A.

    With B = A - D(A @ 1) (D maps a vector to a diagonal matrix), returns
    (||B||_F^2 / N, sum of squared off-diagonal entries of A, ||B||_F^2).
    """
    a = np.asarray(matrix, dtype=np.float64)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ContractError(f"square matrix required, got shape {a.shape}")
    b = a - np.diag(a @ np.ones(n))
    upper = float(np.sum(b * b))
    strictly_off = a - np.diag(np.diag(a))
    middle = float(np.sum(strictly_off * strictly_off))
    return upper / n, middle, upper


def finite_diff_grad(f, point, step: float = 1e-4) -> Array:
    """Central-difference gradient of a scalar function of a flat vector."""
    x = np.asarray(point, dtype=np.float64)
    flat = x.reshape(-1)
    out = np.zeros_like(flat)
    for i in range(flat.size):
        hi = flat.copy()
        lo = flat.copy()
        hi[i] += step
        lo[i] -= step
        out[i] = (f(hi.reshape(x.shape)) - f(lo.reshape(x.shape))) / (2.0 * step)
    return out.reshape(x.shape)
