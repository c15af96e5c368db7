import math

import numpy as np
import pytest
import scipy.sparse as sp

from arcipm.lp_model import StandardFormLP, make_iterate
from arcipm.random_lp import random_feasible_lp
from arcipm.solver import (
    LOG_FIELDS,
    METHODS,
    SolverConfig,
    Status,
    check_termination,
    in_neighborhood,
    read_log,
    relative_optimality,
    solve,
    write_log,
)
from oracles import enumerate_vertices


def _tiny():
    return StandardFormLP(sp.csr_matrix([[1.0, 1.0]]), [1.0], [1.0, 0.0], name="tiny")


def test_defaults():
    cfg = SolverConfig()
    assert (cfg.sigma, cfg.eta, cfg.gamma1, cfg.gamma2, cfg.beta) == (0.4, 0.3, 0.1, 1.0, 0.9)
    assert (cfg.zeta, cfg.eps, cfg.alpha_floor, cfg.max_iterations) == (1e-2, 1e-7, 1e-7, 500)
    assert cfg.effective_backend == "cg" and cfg.uses_arc
    assert SolverConfig(method="ei-line").effective_backend == "cholesky"
    assert not SolverConfig(method="ii-line").uses_arc


@pytest.mark.parametrize("bad", [
    {"sigma": 0.0}, {"sigma": 1.5}, {"eta": 1.0}, {"gamma1": 0.0}, {"gamma2": 0.5},
    {"beta": 1.0}, {"zeta": 0.0}, {"eps": -1.0}, {"method": "simplex"}, {"backend": "lu"},
    {"mode": "full"}, {"zeta_gate": "never"}, {"max_iterations": -1},
])
def test_config_rejects_out_of_range(bad):
    with pytest.raises(ValueError):
        SolverConfig(**bad)


def test_parameter_conditions_for_inexact_methods():
    # (1 - gamma1) sigma - (1 + gamma1) eta = 0.9*0.3 - 1.1*0.3 < 0
    with pytest.raises(ValueError, match="gamma1"):
        SolverConfig(sigma=0.3, eta=0.3)
    with pytest.raises(ValueError, match="beta"):
        SolverConfig(sigma=0.6, eta=0.1, beta=0.65)
    SolverConfig(sigma=0.3, eta=0.3, method="ei-arc")  # exact methods do not need them
    SolverConfig(sigma=0.3, eta=0.3, check_parameters=False)


def _iterate(lp, x, y, s):
    return make_iterate(lp, np.asarray(x, float), np.asarray(y, float), np.asarray(s, float))


def test_termination_zeta_example():
    lp = StandardFormLP(sp.csr_matrix([[1.0, 1.0]]), [2.0], [1.0, 1.0])
    # r_b = 1e-3, r_c = 0, mu = 1e-3
    it = _iterate(lp, [1.0005, 1.0005], [1.0 - 1e-3], [1e-3, 1e-3])
    assert it.mu == pytest.approx(1e-3, rel=1e-3)
    assert it.residual_norm == pytest.approx(1e-3, rel=1e-9)
    cfg = SolverConfig(zeta_gate="eager")
    assert check_termination(lp, it, cfg, 3) is Status.ZETA_OPTIMAL
    stall = SolverConfig()
    assert check_termination(lp, it, stall, 3) is None
    assert check_termination(lp, it, stall, 3, last_alpha=1e-8) is Status.ZETA_OPTIMAL
    assert check_termination(lp, it, stall, 500) is Status.ZETA_OPTIMAL
    assert check_termination(lp, it, stall, 3, timed_out=True) is Status.ZETA_OPTIMAL


def test_termination_relative_without_zeta():
    # large objective: mu = 1e-9 |c^T x| is far above zeta yet relatively tiny
    lp = StandardFormLP(sp.csr_matrix([[1.0, 1.0]]), [2e9], [1e9, 1e9])
    x = np.array([1e9, 1e9])
    s = np.array([1.0, 1.0])
    y = np.array([1e9 - 1.0])
    it = _iterate(lp, x, y, s)
    assert it.mu > 1e-2
    assert relative_optimality(lp, it) < 1e-7
    assert check_termination(lp, it, SolverConfig(), 0) is Status.RELATIVE_OPTIMAL


def test_termination_step_floor_and_cap():
    lp = _tiny()
    it = _iterate(lp, [1.0, 1.0], [0.0], [1.0, 1.0])
    cfg = SolverConfig()
    assert check_termination(lp, it, cfg, 0, last_alpha=1e-8) is Status.STEP_TOO_SMALL
    assert check_termination(lp, it, cfg, 0, last_alpha=1e-6) is None
    assert check_termination(lp, it, cfg, 500) is Status.ITERATION_CAP
    assert check_termination(lp, it, cfg, 10, timed_out=True) is Status.TIME_LIMIT


def test_tiny_lp():
    res = solve(_tiny())
    assert res.status is Status.RELATIVE_OPTIMAL
    assert res.objective == pytest.approx(0.0, abs=1e-6)
    np.testing.assert_allclose(res.x, [0.0, 1.0], atol=1e-6)


@pytest.mark.parametrize("method", METHODS)
def test_methods_match_vertex_enumeration(method):
    lp = random_feasible_lp(6, 10, seed=42)
    opt, _ = enumerate_vertices(lp.A.toarray(), lp.b, lp.c)
    res = solve(lp, method=method)
    assert res.status is Status.RELATIVE_OPTIMAL, res.message
    assert abs(res.objective - opt) <= 1e-5 * max(1.0, abs(opt))


def test_neighborhood_report():
    lp = random_feasible_lp(4, 8, seed=7)
    res = solve(lp, record_iterates=True, mode="MNES")
    flags = in_neighborhood(res, SolverConfig(mode="MNES"))
    assert len(flags) == len(res.iterates) and all(flags)


def test_mnes_mode_solves():
    lp = random_feasible_lp(4, 9, seed=5)
    opt, _ = enumerate_vertices(lp.A.toarray(), lp.b, lp.c)
    res = solve(lp, mode="MNES")
    assert res.status is Status.RELATIVE_OPTIMAL
    assert abs(res.objective - opt) <= 1e-5 * max(1.0, abs(opt))


def test_log_records_and_nu():
    lp = random_feasible_lp(4, 8, seed=7)
    res = solve(lp, record_iterates=True)
    log = res.log
    assert [r.k for r in log] == list(range(len(log)))
    assert log[-1].alpha is None and all(r.alpha is not None for r in log[:-1])
    assert log[0].nu == 1.0
    rc0 = np.linalg.norm(res.iterates[0].rc)
    for prev, cur, it in zip(log, log[1:], res.iterates[1:]):
        assert cur.nu == pytest.approx(prev.nu * (1 - math.sin(prev.alpha)), rel=1e-15)
        assert cur.mu == it.mu
        assert cur.rc_norm == pytest.approx(cur.nu * rc0, rel=1e-7, abs=1e-12 * rc0)
    assert set(log[0].to_dict()) == set(LOG_FIELDS)


def test_deterministic_replay():
    lp = random_feasible_lp(5, 12, seed=8)
    a, b = solve(lp), solve(lp)
    strip = lambda res: [{k: v for k, v in r.to_dict().items() if k != "ms"} for r in res.log]
    assert strip(a) == strip(b)
    assert np.array_equal(a.iterate.x, b.iterate.x)


def test_eager_gate_stops_earlier():
    lp = random_feasible_lp(4, 10, seed=9)
    stall = solve(lp)
    eager = solve(lp, zeta_gate="eager", zeta=1e-1)
    assert stall.status is Status.RELATIVE_OPTIMAL
    assert eager.status is Status.ZETA_OPTIMAL
    assert eager.iterations < stall.iterations
    assert eager.iterate.mu <= 1e-1 and eager.iterate.residual_norm <= 1e-1


def test_iteration_cap():
    res = solve(random_feasible_lp(4, 10, seed=10), max_iterations=3)
    assert res.status is Status.ITERATION_CAP
    assert res.iterations == 3


def test_time_limit():
    res = solve(random_feasible_lp(4, 10, seed=10), time_limit=0.0)
    assert res.status is Status.TIME_LIMIT
    assert res.iterations == 0


def test_infeasible_problem_does_not_claim_optimality():
    # x1 + x2 = -1 with x >= 0 has no solution
    lp = StandardFormLP(sp.csr_matrix([[1.0, 1.0]]), [-1.0], [1.0, 1.0])
    res = solve(lp, max_iterations=200)
    assert not res.status.optimal


@pytest.mark.parametrize("suffix", [".csv", ".jsonl"])
def test_log_round_trip(tmp_path, suffix):
    res = solve(random_feasible_lp(3, 6, seed=12))
    path = tmp_path / f"log{suffix}"
    write_log(res.log, path)
    rows = read_log(path)
    assert len(rows) == len(res.log)
    assert list(rows[0]) == list(LOG_FIELDS)
    assert float(rows[1]["mu"]) == res.log[1].mu
    assert float(rows[0]["alpha"]) == res.log[0].alpha


def test_status_strings():
    assert str(Status.RELATIVE_OPTIMAL) == "RelativeOptimal"
    assert Status.ZETA_OPTIMAL.optimal and not Status.STEP_TOO_SMALL.optimal
