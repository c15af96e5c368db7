import math

import numpy as np
import pytest
import scipy.sparse as sp

from arcipm.lp_model import StandardFormLP, make_iterate
from arcipm.newton_system import (
    FirstDerivative,
    NewtonSystem,
    NormalSolve,
    ScalingState,
    compute_directions,
    first_from_dual,
    first_rhs_mnes,
    first_rhs_nes,
    second_rhs,
    select_basis,
    solve_first_direction,
    solve_second_direction,
)
from helpers import at_bound, injected_mnes_directions, random_instance, recovery_defects
from oracles import exact_first_derivative, exact_second_derivative


def _identity_lp(n=3):
    lp = StandardFormLP(sp.identity(n, format="csr"), np.zeros(n), np.zeros(n))
    return lp, make_iterate(lp, np.ones(n), np.zeros(n), np.ones(n))


def test_scaling_state():
    lp, it, _ = random_instance(3, 6, 0)
    sc = ScalingState.from_iterate(it)
    assert np.all(sc.d2 > 0)
    np.testing.assert_allclose(sc.d ** 2, sc.d2, rtol=1e-14)
    with pytest.raises(ValueError):
        ScalingState.from_iterate(make_iterate(lp, -it.x, it.y, it.s))


def test_first_rhs_identity_example():
    # sigma*mu*A S^-1 e = e and A x - b = e; the remaining terms vanish
    lp, it = _identity_lp()
    np.testing.assert_array_equal(first_rhs_nes(lp, it, 1.0), 2.0 * np.ones(3))


def test_first_rhs_forms_agree():
    lp, it, A = random_instance(4, 7, 1)
    x, y, s, c, b = it.x, it.y, it.s, lp.c, lp.b
    sigma = 0.4
    d2 = x / s
    textbook = A @ (d2 * (A.T @ y)) - A @ (d2 * c) + sigma * it.mu * A @ (1 / s) + A @ x - b
    residual_form = A @ (d2 * it.rc) + it.rb - A @ ((x * s - sigma * it.mu) / s)
    got = first_rhs_nes(lp, it, sigma)
    for ref in (textbook, residual_form):
        assert np.linalg.norm(got - ref) <= 1e-12 * max(1.0, np.linalg.norm(ref))


def test_first_rhs_requires_positive_iterate():
    lp, it, _ = random_instance(2, 4, 2)
    bad = make_iterate(lp, np.r_[0.0, it.x[1:]], it.y, it.s)
    with pytest.raises(ValueError):
        first_rhs_nes(lp, bad, 0.4)


@pytest.mark.parametrize("sigma", [0.4, 1e-6])
def test_exact_first_direction_matches_full_system(sigma):
    lp, it, A = random_instance(5, 12, 3)
    if sigma < 1e-3:
        # feasible iterate: affine-limit direction
        b = A @ it.x
        c = A.T @ it.y + it.s
        lp = StandardFormLP(sp.csr_matrix(A), b, c)
        it = make_iterate(lp, it.x, it.y, it.s)
    first = solve_first_direction(lp, it, sigma, backend="cholesky")
    ref = exact_first_derivative(A, lp.b, lp.c, it.x, it.y, it.s, sigma)
    for got, want in zip((first.dx, first.dy, first.ds), ref):
        assert np.linalg.norm(got - want) <= 1e-8 * max(1.0, np.linalg.norm(want))
    assert not np.any(first.v)


def test_exact_backend_recovery_equations_hold():
    for seed in range(5):
        lp, it, A = random_instance(4, 9, 10 + seed)
        pair = compute_directions(lp, it, 0.4, 0.3, backend="cholesky")
        f, s2 = pair.first, pair.second
        defects = recovery_defects(A, it, 0.4, (f.dx, f.dy, f.ds, f.v), (s2.ddx, s2.ddy, s2.dds, s2.v))
        assert max(defects) <= 1e-9


def test_exact_second_direction_matches_full_system():
    lp, it, A = random_instance(3, 5, 4)
    pair = compute_directions(lp, it, 0.4, 0.3, backend="cholesky")
    f, s2 = pair.first, pair.second
    ref = exact_second_derivative(A, it.x, it.s, f.dx, f.ds)
    for got, want in zip((s2.ddx, s2.ddy, s2.dds), ref):
        assert np.linalg.norm(got - want) <= 1e-8 * max(1.0, np.linalg.norm(want))
    assert np.linalg.norm(A @ s2.ddx) <= 1e-10 * (1 + np.linalg.norm(s2.ddx))
    assert np.linalg.norm(A.T @ s2.ddy + s2.dds) <= 1e-10 * (1 + np.linalg.norm(s2.ddy))
    assert abs(s2.ddx @ s2.dds) <= 1e-9 * np.linalg.norm(s2.ddx) * np.linalg.norm(s2.dds)


def test_select_basis_prefers_identity_block():
    rng = np.random.default_rng(5)
    m = 4
    F = rng.uniform(-0.9, 0.9, (m, 6))
    basis = select_basis(np.hstack([np.eye(m), F]))
    assert sorted(basis.indices.tolist()) == list(range(m))


def test_select_basis_avoids_ill_conditioned_block():
    F = 0.5 * np.array([[1.0, 1.0], [1.0, 1.0 + 1e-9], [1.0, 1.0]])
    A = np.hstack([F, np.eye(3)])
    basis = select_basis(A)
    assert sorted(basis.indices.tolist()) == [2, 3, 4]
    assert np.linalg.cond(A[:, basis.indices]) < 10


def test_select_basis_is_relabelling_invariant():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((4, 9))
    perm = rng.permutation(9)
    base = select_basis(A).indices
    permuted = select_basis(A[:, perm]).indices
    # column j of A[:, perm] is column perm[j] of A
    assert sorted(perm[permuted].tolist()) == sorted(base.tolist())


def test_select_basis_rejects_rank_deficiency():
    A = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
    with pytest.raises(ValueError):
        select_basis(A)


def test_basis_solves():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((3, 7))
    basis = select_basis(A)
    AB = A[:, basis.indices]
    v = rng.standard_normal(3)
    np.testing.assert_allclose(AB @ basis.solve(v), v, atol=1e-12)
    np.testing.assert_allclose(AB.T @ basis.solve_t(v), v, atol=1e-12)


def test_mnes_identity_example():
    lp, it = _identity_lp(4)
    system = NewtonSystem(lp, it, mode="MNES")
    rho = np.arange(1.0, 5.0)
    rho_hat, op = first_rhs_mnes(rho, system.basis, system.scaling, system.M)
    np.testing.assert_array_equal(op.dense(), np.eye(4))
    np.testing.assert_array_equal(rho_hat, rho)


def test_mnes_operator_dense_matches_composition_and_is_spd():
    lp, it, A = random_instance(3, 5, 8)
    system = NewtonSystem(lp, it, mode="MNES")
    _, op = first_rhs_mnes(np.zeros(3), system.basis, system.scaling, system.M)
    dense = op.dense()
    AB = A[:, system.basis.indices]
    W = np.diag(1.0 / system.scaling.d[system.basis.indices]) @ np.linalg.inv(AB)
    ref = W @ (A @ np.diag(it.x / it.s) @ A.T) @ W.T
    np.testing.assert_allclose(dense, ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())
    rng = np.random.default_rng(9)
    op._dense = None  # force the composition path
    for _ in range(10):
        z = rng.standard_normal(3)
        assert np.linalg.norm(op.matvec(z) - dense @ z) <= 1e-12 * np.linalg.norm(dense @ z)
    for _ in range(20):
        z = rng.standard_normal(3)
        assert z @ dense @ z > 0


def test_mnes_injected_first_error_example():
    lp, it, A = random_instance(3, 5, 11)
    r1 = 1e-3 * np.ones(3)
    system, first, second = injected_mnes_directions(lp, it, 0.4, r1, np.zeros(3))
    dx, dy, ds, v1 = first
    B = system.basis.indices
    expected_v = np.zeros(5)
    expected_v[B] = system.scaling.d[B] * r1
    np.testing.assert_allclose(v1, expected_v, rtol=1e-9, atol=1e-15)
    assert np.linalg.norm(A @ dx - it.rb) <= 1e-9 * (1 + np.linalg.norm(it.rb))
    comp = it.s * dx + it.x * ds - (it.x * it.s - 0.4 * it.mu)
    assert np.linalg.norm(comp + it.s * v1) <= 1e-9 * (1 + np.linalg.norm(comp))
    assert not np.any(np.delete(v1, B))


@pytest.mark.parametrize("seed", range(5))
def test_mnes_recovery_with_errors_at_bound(seed):
    lp, it, A = random_instance(4, 9, 100 + seed)
    eta = 0.3
    radius = eta * math.sqrt(it.mu / lp.n)
    rng = np.random.default_rng(seed)
    r1, r2 = at_bound(rng, 4, radius), at_bound(rng, 4, radius)
    _, first, second = injected_mnes_directions(lp, it, 0.4, r1, r2, eta)
    assert max(recovery_defects(A, it, 0.4, first, second)) <= 1e-9
    for v in (first[3], second[3]):
        assert np.max(np.abs(it.s * v)) <= eta * it.mu * (1 + 1e-12)


def test_nes_injected_residual_identity():
    lp, it, A = random_instance(4, 9, 12)
    system = NewtonSystem(lp, it, mode="NES")
    rho1 = first_rhs_nes(lp, it, 0.4)
    r1 = 1e-2 * np.random.default_rng(0).standard_normal(4)
    dy = np.linalg.solve(system.M.toarray(), rho1 + r1)
    dx, dy, ds = first_from_dual(lp, it, 0.4, dy)
    assert np.linalg.norm(A @ dx - it.rb - r1) <= 1e-10
    assert np.linalg.norm(A.T @ dy + ds - it.rc) <= 1e-10 * (1 + np.linalg.norm(it.rc))


@pytest.mark.parametrize("mode", ["NES", "MNES"])
def test_dual_rows_exact_for_cg_directions(mode):
    lp, it, A = random_instance(6, 15, 13)
    pair = compute_directions(lp, it, 0.4, 0.3, backend="cg", mode=mode)
    f, s2 = pair.first, pair.second
    assert np.linalg.norm(A.T @ f.dy + f.ds - it.rc) <= 1e-10 * (1 + np.linalg.norm(it.rc))
    assert np.linalg.norm(A.T @ s2.ddy + s2.dds) <= 1e-10 * (1 + np.linalg.norm(s2.ddy))
    if mode == "NES":
        assert not np.any(f.v) and not np.any(s2.v)
        # the primal row carries exactly the normal-equation residual
        assert np.linalg.norm(A @ f.dx - it.rb) == pytest.approx(f.residual, rel=1e-6, abs=1e-10)


def test_second_rhs_examples():
    lp, it = _identity_lp(3)
    np.testing.assert_array_equal(second_rhs(lp, it, np.ones(3), np.ones(3)), 2.0 * np.ones(3))
    np.testing.assert_array_equal(second_rhs(lp, it, np.r_[1.0, 0, 2], np.r_[0.0, 3, 0]), np.zeros(3))
    lp, it, A = random_instance(4, 6, 14)
    rng = np.random.default_rng(1)
    dx, ds = rng.standard_normal(6), rng.standard_normal(6)
    ref = 2.0 * A @ np.diag(1.0 / it.s) @ (dx * ds)
    assert np.linalg.norm(second_rhs(lp, it, dx, ds) - ref) <= 1e-13 * max(1.0, np.linalg.norm(ref))


def _first_with_product(n, value):
    dx = np.zeros(n)
    ds = np.zeros(n)
    dx[0], ds[0] = 1.0, value / 2.0
    return FirstDerivative(dx, np.zeros(n), ds, np.zeros(n), None)


def test_skip_rule_example():
    lp, it = _identity_lp(3)
    assert it.mu == 1.0
    first = _first_with_product(3, 0.2)
    sec = solve_second_direction(lp, it, first, eta=0.3)
    assert sec.skipped and not sec.zeroed
    for v in (sec.ddx, sec.ddy, sec.dds, sec.v):
        assert not np.any(v)
    sec = solve_second_direction(lp, it, _first_with_product(3, 0.4), eta=0.3)
    assert not sec.skipped


def test_exact_backend_never_skips_nonzero_product():
    lp, it = _identity_lp(3)
    sec = solve_second_direction(lp, it, _first_with_product(3, 1e-6), backend="cholesky")
    assert not sec.skipped


@pytest.mark.parametrize("mode", ["NES", "MNES"])
def test_zero_fallback_on_bad_solve(mode):
    lp, it, A = random_instance(4, 9, 15)
    system = NewtonSystem(lp, it, mode=mode)
    first = solve_first_direction(lp, it, 0.4, system=system)
    M = system.M.toarray()
    e0 = np.eye(4)[0]
    honest = system.solve_full

    # residual of twice the right-hand side norm, in the system being solved
    def injected(rho):
        if mode == "NES":
            bad = np.linalg.solve(M, rho + 2.0 * np.linalg.norm(rho) * e0)
            res = float(np.linalg.norm(M @ bad - rho))
            return NormalSolve(bad, np.zeros(9), None, res, res, float(np.linalg.norm(rho)))
        op = system.mnes
        rho_hat = op.W(rho)
        z = np.linalg.solve(op.dense(), rho_hat + 2.0 * np.linalg.norm(rho_hat) * e0)
        return system.recover_mnes(z, rho)

    system.solve_full = injected
    sec = solve_second_direction(lp, it, first, system=system)
    system.solve_full = honest
    assert sec.zeroed and not sec.skipped
    assert not np.any(sec.ddy) and not np.any(sec.dds)
    if mode == "NES":
        np.testing.assert_allclose(sec.ddx, -2.0 * first.dx * first.ds / it.s)
        assert not np.any(sec.v)
    else:
        assert np.linalg.norm(A @ sec.ddx) <= 1e-10 * (1 + np.linalg.norm(sec.ddx))
        assert not np.any(np.delete(sec.v, system.basis.indices))


def test_fallback_not_engaged_by_good_solve():
    lp, it, _ = random_instance(4, 9, 16)
    pair = compute_directions(lp, it, 0.4, 0.3)
    assert not pair.second_zeroed


def test_mnes_second_orthogonality():
    lp, it, A = random_instance(3, 7, 17)
    pair = compute_directions(lp, it, 0.4, 0.3, mode="MNES")
    s2 = pair.second
    if not (s2.skipped or s2.zeroed):
        assert abs(s2.ddx @ s2.dds) <= 1e-9 * np.linalg.norm(s2.ddx) * np.linalg.norm(s2.dds)


def test_unknown_backend_and_mode():
    lp, it, _ = random_instance(2, 4, 18)
    with pytest.raises(ValueError):
        NewtonSystem(lp, it, backend="lsqr")
    with pytest.raises(ValueError):
        NewtonSystem(lp, it, mode="augmented")
