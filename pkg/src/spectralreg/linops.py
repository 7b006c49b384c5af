"""Matrix-free batched linear operators built from network derivatives.

A :class:`BatchedLinearOperator` maps a batch of row vectors through a
square matrix per batch row without materializing any matrix. The Gram
constructors below realize A A' for A a Jacobian, Hessian, or difference
A - A0 against a target: the defect operators for transpose-symmetry and
diagonality are special cases of the generalized difference.

Operators capture their (net, x) immutably; ``apply`` is pure, so
concurrent calls and batch-parallel evaluation are safe.

Note on scale: the extremal eigenvalue of a Gram operator A A' is the
*squared* spectral norm, lambda_max = sigma_max(A)^2. Both are exposed
(`ExtremalEigenpair.lambda_max` and `.sigma_max` in the eigensolvers
module) so callers never have to guess which scale they are holding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContractError, DimensionError
from .network import Network, hvp, jvp, vjp

Array = np.ndarray


@dataclass(frozen=True)
class BatchedLinearOperator:
    """Batched map v -> M v for a square M per batch row."""

    dim: int
    batch: int
    apply: Callable[[Array], Array]
    symmetric: bool = False

    def __call__(self, v: Array) -> Array:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.batch, self.dim):
            raise DimensionError(
                f"operand must have shape {(self.batch, self.dim)}, got {v.shape}"
            )
        return self.apply(v)


@dataclass(frozen=True)
class RectangularOperatorPair:
    """A batched matrix A with both products: apply = Av, apply_adjoint = u'A."""

    in_dim: int
    out_dim: int
    batch: int
    apply: Callable[[Array], Array]
    apply_adjoint: Callable[[Array], Array]

    @property
    def square(self) -> bool:
        return self.in_dim == self.out_dim

    def transpose(self) -> "RectangularOperatorPair":
        return RectangularOperatorPair(
            self.out_dim, self.in_dim, self.batch, self.apply_adjoint, self.apply
        )


def _freeze_x(x: Array) -> Array:
    x = np.array(x, dtype=np.float64)
    x.setflags(write=False)
    return x


def jacobian_operator(net: Network, x) -> RectangularOperatorPair:
    """The Jacobian J_f(x) as an operator pair (jvp / vjp)."""
    x = _freeze_x(x)
    return RectangularOperatorPair(
        in_dim=net.in_dim,
        out_dim=net.out_dim,
        batch=x.shape[0],
        apply=lambda v: jvp(net, x, v),
        apply_adjoint=lambda u: vjp(net, x, u),
    )


def hessian_operator(net: Network, x) -> RectangularOperatorPair:
    """The (symmetric) input Hessian of a scalar-output network."""
    if net.out_dim != 1:
        raise ContractError("hessian_operator requires a scalar-output network")
    x = _freeze_x(x)
    apply = lambda v: hvp(net, x, v)
    return RectangularOperatorPair(net.in_dim, net.in_dim, x.shape[0], apply, apply)


def dense_pair(matrix, batch: int) -> RectangularOperatorPair:
    """A constant matrix, shared across the batch, as an operator pair."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"matrix must be 2-d, got shape {m.shape}")
    out_dim, in_dim = m.shape
    return RectangularOperatorPair(
        in_dim, out_dim, batch,
        apply=lambda v: v @ m.T,
        apply_adjoint=lambda u: u @ m,
    )


def zero_pair(in_dim: int, out_dim: int, batch: int) -> RectangularOperatorPair:
    return RectangularOperatorPair(
        in_dim, out_dim, batch,
        apply=lambda v: np.zeros((batch, out_dim)),
        apply_adjoint=lambda u: np.zeros((batch, in_dim)),
    )


def from_dense(matrix, batch: int, symmetric: bool = False) -> BatchedLinearOperator:
    """Wrap a constant square matrix as a batched operator (tests, benchmarks)."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"square matrix required, got shape {m.shape}")
    return BatchedLinearOperator(m.shape[0], batch, lambda v: v @ m.T, symmetric)


# --------------------------------------------------------------------------
# Gram constructors
# --------------------------------------------------------------------------


def jacobian_gram(net: Network, x) -> BatchedLinearOperator:
    """v -> J J' v, computed as one vjp followed by one jvp per batch."""
    x = _freeze_x(x)
    return BatchedLinearOperator(
        dim=net.out_dim,
        batch=x.shape[0],
        apply=lambda v: jvp(net, x, vjp(net, x, v)),
        symmetric=True,
    )


def hessian_gram(net: Network, x) -> BatchedLinearOperator:
    """v -> H H' v = H (H v), two hvp calls per application."""
    if net.out_dim != 1:
        raise ContractError("hessian_gram requires a scalar-output network")
    x = _freeze_x(x)
    return BatchedLinearOperator(
        dim=net.in_dim,
        batch=x.shape[0],
        apply=lambda v: hvp(net, x, hvp(net, x, v)),
        symmetric=True,
    )


def symmetry_defect_gram(net: Network, x) -> BatchedLinearOperator:
    """v -> (J - J')(J - J')' v for a square Jacobian.

    The four products J J' v, J J v, J' J' v, J' J v share the two
    intermediates J v and J' v, so one application costs exactly two jvp
    and two vjp calls.
    """
    if net.in_dim != net.out_dim:
        raise ContractError(
            f"symmetry defect needs a square Jacobian, got "
            f"{net.out_dim}x{net.in_dim}"
        )
    x = _freeze_x(x)

    def apply(v: Array) -> Array:
        jv = jvp(net, x, v)
        jtv = vjp(net, x, v)
        return jvp(net, x, jtv - jv) + vjp(net, x, jv - jtv)

    return BatchedLinearOperator(net.in_dim, x.shape[0], apply, symmetric=True)


def diagonality_defect_gram(a: RectangularOperatorPair) -> BatchedLinearOperator:
    """v -> (A - D(A1))(A - D(A1))' v for a square A.

    A1 = A @ ones is evaluated once at construction and cached; products
    with the diagonal target are then elementwise (D(w) v = w * v).
    """
    if not a.square:
        raise ContractError(
            f"diagonality defect needs a square operator, got {a.out_dim}x{a.in_dim}"
        )
    row_sums = a.apply(np.ones((a.batch, a.in_dim)))

    def apply(v: Array) -> Array:
        w = a.apply_adjoint(v) - row_sums * v  # (A - D(A1))' v
        return a.apply(w) - row_sums * w

    return BatchedLinearOperator(a.in_dim, a.batch, apply, symmetric=True)


def target_difference_gram(
    a: RectangularOperatorPair, a0: RectangularOperatorPair
) -> BatchedLinearOperator:
    """v -> (A - A0)(A - A0)' v, the generalized difference Gram.

    Expands to A A'v - A A0'v - A0 A'v + A0 A0'v; the adjoint products
    are shared between the two outer applications.
    """
    if (a.in_dim, a.out_dim, a.batch) != (a0.in_dim, a0.out_dim, a0.batch):
        raise DimensionError(
            f"target dims {(a0.out_dim, a0.in_dim)} do not match "
            f"operator dims {(a.out_dim, a.in_dim)}"
        )

    def apply(v: Array) -> Array:
        w = a.apply_adjoint(v) - a0.apply_adjoint(v)  # (A - A0)' v
        return a.apply(w) - a0.apply(w)

    return BatchedLinearOperator(a.out_dim, a.batch, apply, symmetric=True)
