import numpy as np
import pytest

from spectralreg import ContractError, NumericError, linops
from spectralreg.eigensolvers import (
    convergence_trace,
    extremal_eigenpair,
    gradient_ascent_spectral,
    lanczos,
    power_iteration,
    tridiagonal_eigh,
)
from spectralreg.oracle import dense_symm_eig

rng = np.random.default_rng(41)


def dense_op(m, batch=1):
    return linops.from_dense(m, batch=batch, symmetric=True)


# -------------------------------------------------------------------- lanczos


def test_lanczos_identity_breakdown_path():
    op = dense_op(np.eye(4), batch=2)
    dec = lanczos(op, 2, seed=0)
    # omega vanishes after the first step: replacement rows, zero coupling
    np.testing.assert_allclose(dec.tridiagonal, np.tile(np.eye(2), (2, 1, 1)), atol=1e-14)
    values, _ = tridiagonal_eigh(dec.tridiagonal)
    np.testing.assert_allclose(values, np.ones((2, 2)), atol=1e-12)


def test_lanczos_recovers_small_spectrum():
    op = dense_op(np.diag([3.0, 2.0, 1.0]))
    dec = lanczos(op, 3, seed=1)
    values, _ = tridiagonal_eigh(dec.tridiagonal)
    np.testing.assert_allclose(np.sort(values[0]), [1.0, 2.0, 3.0], atol=1e-8)


def test_lanczos_batch_determinism_identical_rows():
    m = rng.normal(size=(6, 6))
    m = m @ m.T
    op = dense_op(m, batch=2)
    v0 = rng.normal(size=(1, 6))
    v0 = np.tile(v0 / np.linalg.norm(v0), (2, 1))
    dec = lanczos(op, 4, seed=3, v0=v0)
    np.testing.assert_array_equal(dec.tridiagonal[0], dec.tridiagonal[1])
    np.testing.assert_array_equal(dec.basis[0], dec.basis[1])


def test_lanczos_decomposition_invariants():
    m = rng.normal(size=(32, 32))
    op = dense_op(m @ m.T, batch=3)
    dec = lanczos(op, 16, seed=4)
    # T strictly tridiagonal
    for b in range(3):
        t = dec.tridiagonal[b]
        off = t - np.diag(np.diag(t)) - np.diag(np.diag(t, 1), 1) - np.diag(np.diag(t, -1), -1)
        assert np.all(off == 0.0)
        assert np.max(np.abs(t - t.T)) == 0.0
    # unit rows; pairwise orthogonality within drift tolerance (no reortho)
    norms = np.linalg.norm(dec.basis, axis=2)
    np.testing.assert_allclose(norms, 1.0, atol=1e-9)
    for b in range(3):
        gram = dec.basis[b] @ dec.basis[b].T
        assert np.max(np.abs(gram - np.eye(16))) < 1e-6


def test_lanczos_contract_errors():
    op = dense_op(np.eye(3))
    with pytest.raises(ContractError):
        lanczos(op, 0, seed=0)
    with pytest.raises(ContractError):
        lanczos(op, 4, seed=0)
    flagless = linops.BatchedLinearOperator(3, 1, lambda v: v, symmetric=False)
    with pytest.raises(ContractError):
        lanczos(flagless, 2, seed=0)


def test_lanczos_nonfinite_operator_raises():
    bad = linops.BatchedLinearOperator(3, 1, lambda v: v * np.inf, symmetric=True)
    with pytest.raises(NumericError):
        lanczos(bad, 2, seed=0)


# ---------------------------------------------------------- tridiagonal_eigh


def test_tridiagonal_eigh_diagonal():
    values, vectors = tridiagonal_eigh(np.diag([5.0, 1.0]))
    np.testing.assert_allclose(values, [5.0, 1.0])
    np.testing.assert_allclose(np.abs(vectors), np.eye(2), atol=1e-14)


def test_tridiagonal_eigh_closed_form_2x2():
    t = np.array([[2.0, 1.0], [1.0, 2.0]])
    values, _ = tridiagonal_eigh(t)
    np.testing.assert_allclose(values, [3.0, 1.0], atol=1e-12)


def test_tridiagonal_eigh_reconstruction_random():
    d = rng.normal(size=8)
    e = rng.normal(size=7)
    t = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    values, vectors = tridiagonal_eigh(t)
    rec = vectors @ np.diag(values) @ vectors.T
    assert np.linalg.norm(rec - t) < 1e-9
    assert np.max(np.abs(vectors.T @ vectors - np.eye(8))) < 1e-9


def test_tridiagonal_eigh_rejects_nonsymmetric():
    t = np.array([[1.0, 2.0], [0.5, 1.0]])
    with pytest.raises(ContractError):
        tridiagonal_eigh(t)


def test_tridiagonal_eigh_rejects_full_matrix():
    t = np.ones((4, 4))
    with pytest.raises(ContractError):
        tridiagonal_eigh(t)


# --------------------------------------------------------- extremal_eigenpair


def test_extremal_eigenpair_small_diagonal():
    op = dense_op(np.diag([1.0, 2.0, 3.0]))
    pair = extremal_eigenpair(op, 3, seed=5)
    np.testing.assert_allclose(pair.lambda_max, [3.0], atol=1e-8)
    np.testing.assert_allclose(np.abs(pair.v_m), [[0.0, 0.0, 1.0]], atol=1e-8)
    assert pair.residual[0] < 1e-8


def test_extremal_eigenpair_gram_64():
    g = np.random.default_rng(0).normal(size=(64, 64))
    m = g @ g.T
    op = dense_op(m, batch=2)
    pair = extremal_eigenpair(op, 16, seed=6)
    lam_true = dense_symm_eig(m)[0][0]
    np.testing.assert_allclose(pair.lambda_max, lam_true, rtol=1e-6)
    np.testing.assert_allclose(pair.sigma_max, np.sqrt(lam_true), rtol=1e-6)


def test_extremal_eigenpair_zero_operator():
    op = dense_op(np.zeros((4, 4)))
    pair = extremal_eigenpair(op, 2, seed=7)
    np.testing.assert_allclose(pair.lambda_max, [0.0], atol=1e-14)
    np.testing.assert_allclose(pair.residual, [0.0], atol=1e-14)
    np.testing.assert_allclose(np.linalg.norm(pair.v_m, axis=1), [1.0], atol=1e-9)


# ------------------------------------------------------------ power_iteration


def test_power_iteration_well_gapped():
    op = dense_op(np.diag([9.0, 1.0]))
    pair = power_iteration(op, 5, seed=8)
    np.testing.assert_allclose(pair.lambda_max, [9.0], rtol=1e-6)


def test_power_iteration_identity_one_step():
    op = dense_op(np.eye(5))
    pair = power_iteration(op, 1, seed=9)
    np.testing.assert_allclose(pair.lambda_max, [1.0], atol=1e-12)
    assert pair.residual[0] < 1e-12


def test_lanczos_beats_power_on_tight_spectrum():
    # eigenvalues 1.0, 0.99, 0.98, ... : the classic hard case for power iteration
    d = 32
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    lam = 1.0 - 0.01 * np.arange(d)
    m = (q * lam) @ q.T
    op = dense_op(0.5 * (m + m.T))
    lam_true = dense_symm_eig(m)[0][0]
    err_lanczos = abs(extremal_eigenpair(op, 16, seed=10).lambda_max[0] - lam_true)
    err_power = abs(power_iteration(op, 16, seed=10).lambda_max[0] - lam_true)
    assert err_lanczos < err_power


# ------------------------------------------------------------ gradient ascent


def test_gradient_ascent_dominant_direction():
    a = linops.dense_pair(np.diag([3.0, 1.0]), batch=1)
    pair = gradient_ascent_spectral(a, alpha=27.0, n=40, seed=11)
    np.testing.assert_allclose(pair.lambda_max, [9.0], rtol=1e-6)  # lambda of A'A
    np.testing.assert_allclose(np.abs(pair.v_m), [[1.0, 0.0]], atol=1e-4)


def test_gradient_ascent_orthogonal_matrix_flat():
    q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    a = linops.dense_pair(q, batch=1)
    for n in (1, 2, 4):
        pair = gradient_ascent_spectral(a, alpha=9.0, n=n, seed=12)
        np.testing.assert_allclose(pair.lambda_max, [1.0], atol=1e-12)


def test_gradient_ascent_tracks_power_iteration():
    # with a large step the normalized iterate stays close to the power image
    a_mat = rng.normal(size=(8, 8))
    sigma = np.linalg.svd(a_mat, compute_uv=False)[0]
    a = linops.dense_pair(a_mat, batch=1)
    ata = a_mat.T @ a_mat
    for i in range(1, 8):
        v_prev = gradient_ascent_spectral(a, 9.0 * sigma, i, seed=13).v_m[0] if i > 1 else None
        v_next = gradient_ascent_spectral(a, 9.0 * sigma, i, seed=13).v_m[0]
        if v_prev is None:
            continue
        image = ata @ v_prev
        image /= np.linalg.norm(image)
        assert abs(np.dot(v_next, image)) > 0.9


def test_gradient_ascent_restarts_on_null_rows():
    a = linops.dense_pair(np.zeros((3, 3)), batch=2)
    pair = gradient_ascent_spectral(a, alpha=1.0, n=3, seed=14)
    np.testing.assert_allclose(pair.lambda_max, [0.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(np.linalg.norm(pair.v_m, axis=1), 1.0, atol=1e-9)


def test_gradient_ascent_rejects_bad_alpha():
    a = linops.dense_pair(np.eye(2), batch=1)
    with pytest.raises(ContractError):
        gradient_ascent_spectral(a, alpha=-1.0, n=2, seed=0)


# ------------------------------------------------------------------ invariants


def test_ritz_value_monotonicity():
    g = rng.normal(size=(24, 24))
    op = dense_op(g @ g.T)
    estimates = [extremal_eigenpair(op, n, seed=15).lambda_max[0] for n in (2, 4, 8, 16)]
    for a, b in zip(estimates, estimates[1:]):
        assert b >= a - 1e-10


def test_full_iteration_matches_dense_oracle():
    for d in (8, 16, 48):
        g = rng.normal(size=(d, d))
        m = g @ g.T
        pair = extremal_eigenpair(dense_op(m), d, seed=16)
        lam_true = dense_symm_eig(m)[0][0]
        assert abs(pair.lambda_max[0] - lam_true) <= 1e-8 * abs(lam_true)


def test_residual_contract_recompute():
    g = rng.normal(size=(12, 12))
    m = g @ g.T
    op = dense_op(m, batch=2)
    for solver in (extremal_eigenpair, power_iteration):
        pair = solver(op, 6, seed=17)
        recomputed = np.linalg.norm(
            op(pair.v_m) - pair.lambda_max[:, None] * pair.v_m, axis=1
        )
        np.testing.assert_allclose(pair.residual, recomputed, atol=1e-12)


def test_power_iteration_scale_invariance():
    g = rng.normal(size=(10, 10))
    m = g @ g.T
    p1 = power_iteration(dense_op(m), 12, seed=18)
    p2 = power_iteration(dense_op(3.0 * m), 12, seed=18)
    np.testing.assert_allclose(p2.lambda_max, 3.0 * p1.lambda_max, rtol=1e-8)
    sign = np.sign(np.sum(p1.v_m * p2.v_m, axis=1))
    np.testing.assert_allclose(p2.v_m, sign[:, None] * p1.v_m, atol=1e-8)


def test_one_step_iterates_share_krylov_plane():
    g = rng.normal(size=(9, 9))
    m = g @ g.T
    op = dense_op(m)
    v0 = rng.normal(size=(1, 9))
    v0 /= np.linalg.norm(v0)
    dec = lanczos(op, 2, seed=19, v0=v0.copy())
    power = power_iteration(op, 1, seed=19, v0=v0.copy())
    basis = np.stack([v0[0], (v0 @ m.T)[0]])  # span{v0, M v0}
    for iterate in (dec.basis[0, 1], power.v_m[0]):
        # residual after projecting onto the plane must vanish
        coeffs, *_ = np.linalg.lstsq(basis.T, iterate, rcond=None)
        assert np.linalg.norm(basis.T @ coeffs - iterate) < 1e-10


def test_convergence_trace_budget_rows():
    g = rng.normal(size=(8, 8))
    op = dense_op(g @ g.T)
    rows = convergence_trace("lanczos", op, budget=5, seed=20)
    assert [r[0] for r in rows] == [1, 2, 3, 4, 5]
    # fixed seed means each rerun extends the same trajectory: estimates rise
    lams = [r[1][0] for r in rows]
    assert all(b >= a - 1e-10 for a, b in zip(lams, lams[1:]))
