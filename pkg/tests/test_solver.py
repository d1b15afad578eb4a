import numpy as np
import pytest

from conftest import planted, random_dense, scalar_toy
from wccp.initialization import InitConfig, spectral_init
from wccp.penalties import Family, PenaltySpec, UnsupportedPenaltyError, penalty_mu
from wccp.solver import (
    BacktrackFailure,
    NotApplicableError,
    SolverConfig,
    Termination,
    _Point,
    armijo_step,
    fixed_point_residual,
    local_min_check,
    objective,
    oracle_solve,
    solve,
    solve_irl1,
    solve_pga,
)
from wccp.tuning import lambda_rule, relative_error

# stands in for lambda = 0 (levels must be positive)
NO_PENALTY = PenaltySpec(Family.L1, 1e-300)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(gamma0=1.0)
    with pytest.raises(ValueError):
        SolverConfig(gamma1=0.0)
    with pytest.raises(ValueError):
        SolverConfig(delta=0.0)
    with pytest.raises(ValueError):
        SolverConfig(algorithm="newton")
    assert SolverConfig(algorithm="irl1").algorithm.value == "irl1"


# ------------------------------------------------------------------ armijo


def test_armijo_zero_move_accepted_immediately():
    data = scalar_toy(1.0)
    beta = np.array([1.0])
    tau, nxt, j = armijo_step(data, NO_PENALTY, SolverConfig(), beta, lambda t: beta.copy())
    assert (tau, j) == (1.0, 0)
    assert np.array_equal(nxt, beta)


def test_armijo_small_initial_step_on_quartic():
    data = scalar_toy(1.0)
    beta = np.array([2.0])
    cfg = SolverConfig(gamma1=0.05)
    g = 2.0 * (4.0 - 1.0)
    tau, nxt, j = armijo_step(data, NO_PENALTY, cfg, beta, lambda t: beta - t * g)
    assert j == 0 and tau == 0.05
    assert objective(data, NO_PENALTY, nxt) < objective(data, NO_PENALTY, beta)


def test_armijo_backtracks_from_large_step():
    data = scalar_toy(1.0)
    beta = np.array([2.0])
    g = 6.0
    tau, nxt, j = armijo_step(data, NO_PENALTY, SolverConfig(), beta, lambda t: beta - t * g)
    assert j > 0
    f0, f1 = objective(data, NO_PENALTY, beta), objective(data, NO_PENALTY, nxt)
    assert f0 - f1 >= 1e-4 * float((nxt - beta) @ (nxt - beta))


def test_armijo_exhaustion():
    data = scalar_toy(1.0)
    beta = np.array([1.0])
    # every proposal moves uphill by a fixed amount
    with pytest.raises(BacktrackFailure):
        armijo_step(data, NO_PENALTY, SolverConfig(max_backtracks=5), beta, lambda t: beta + 1.0)


def test_armijo_skips_steps_violating_prox_safety():
    spec = PenaltySpec(Family.MCP, 0.1, 0.6)  # mu = 1/0.6
    data = scalar_toy(1.0)
    beta = np.array([1.0])
    seen = []

    def propose(t):
        seen.append(t)
        return beta.copy()

    armijo_step(data, spec, SolverConfig(), beta, propose, mu=penalty_mu(spec))
    assert all(t * penalty_mu(spec) < 0.999 for t in seen)
    assert seen[0] == 0.5


# ------------------------------------------------------------------- solvers


def test_pga_scalar_quartic():
    res = solve_pga(scalar_toy(1.0), NO_PENALTY, SolverConfig(), np.array([0.5]))
    assert res.termination is Termination.TOLERANCE_MET
    assert abs(res.beta_hat[0] - 1.0) <= 1e-6


def test_pga_fixed_point_start_stops():
    res = solve_pga(scalar_toy(1.0), NO_PENALTY, SolverConfig(), np.array([1.0]))
    assert res.iterations <= 1
    assert res.beta_hat[0] == 1.0


def test_exp_requires_irl1():
    with pytest.raises(UnsupportedPenaltyError):
        solve_pga(scalar_toy(), PenaltySpec(Family.EXP, 0.1), SolverConfig(), np.array([0.5]))


def test_lhalf_rejected_by_irl1():
    with pytest.raises(UnsupportedPenaltyError):
        solve_irl1(scalar_toy(), PenaltySpec(Family.LHALF, 0.1), SolverConfig(), np.array([0.5]))


def test_dimension_checked():
    with pytest.raises(ValueError):
        solve_pga(scalar_toy(), NO_PENALTY, SolverConfig(), np.zeros(2))


def test_pga_noiseless_recovery():
    ok = 0
    for t in range(20):
        rng = np.random.default_rng([3, t])
        data, beta = planted(rng, 64, 32, 4)
        beta0 = spectral_init(data, InitConfig(rng_seed=t))
        spec = PenaltySpec(Family.SCAD, lambda_rule(data, beta0, 1e-4))
        res = solve_pga(data, spec, SolverConfig(), beta0)
        ok += relative_error(res.beta_hat, beta) <= 1e-4
    assert ok >= 18


def test_irl1_matches_pga_for_l1(rng):
    data, _ = planted(rng, 40, 12, 3)
    spec = PenaltySpec(Family.L1, 0.05)
    beta0 = spectral_init(data)
    cfg = SolverConfig(max_iters=200)
    a, b = solve_pga(data, spec, cfg, beta0), solve_irl1(data, spec, cfg, beta0)
    assert np.array_equal(a.step_trace, b.step_trace)
    assert np.max(np.abs(a.beta_hat - b.beta_hat)) <= 1e-12
    assert np.allclose(a.objective_trace, b.objective_trace, rtol=1e-12, atol=0)


def test_exp_irl1_scalar_toy():
    data = scalar_toy(1.0)
    spec = PenaltySpec(Family.EXP, 0.01, 1.0)
    res = solve_irl1(data, spec, SolverConfig(tol=1e-10), np.array([0.5]))
    # brute-force minimization of F on a 1-D grid near the start's basin
    grid = np.linspace(0.0, 2.0, 2_000_001)
    F = (grid**2 - 1) ** 2 / 4 + 0.01 * (1 - np.exp(-grid))
    assert abs(res.beta_hat[0] - grid[np.argmin(F)]) <= 1e-4


def test_solve_dispatch(rng):
    data, _ = planted(rng, 30, 8, 2)
    beta0 = spectral_init(data)
    spec = PenaltySpec(Family.LOG, 0.01, 1.0)
    a = solve(data, spec, SolverConfig(algorithm="irl1"), beta0)
    b = solve_irl1(data, spec, SolverConfig(), beta0)
    assert np.array_equal(a.beta_hat, b.beta_hat)


@pytest.mark.parametrize("family", [f for f in Family])
def test_descent_and_residual(family):
    rng = np.random.default_rng(hash(family.value) % 2**32)
    spec = PenaltySpec(family, 0.02)
    algos = ["pga", "irl1"]
    if family is Family.EXP:
        algos = ["irl1"]
    if family is Family.LHALF:
        algos = ["pga"]
    for algo in algos:
        data, _ = planted(rng, 48, 16, 3, sigma=0.01)
        beta0 = spectral_init(data)
        cfg = SolverConfig(algorithm=algo)
        res = solve(data, spec, cfg, beta0)
        F = res.objective_trace
        assert np.all(np.diff(F) <= 0)
        assert np.all(F[:-1] - F[1:] >= cfg.delta * res.move_trace**2 - 1e-12)
        if res.converged:
            bound = 10 * cfg.tol * max(1.0, np.linalg.norm(res.beta_hat))
            assert res.fp_residual <= bound


def test_determinism(rng):
    data, _ = planted(rng, 40, 10, 3, sigma=0.01)
    beta0 = spectral_init(data)
    spec = PenaltySpec(Family.MCP, 0.05)
    a = solve_pga(data, spec, SolverConfig(), beta0)
    b = solve_pga(data, spec, SolverConfig(), beta0)
    assert np.array_equal(a.objective_trace, b.objective_trace)
    assert np.array_equal(a.step_trace, b.step_trace)
    assert np.array_equal(a.beta_hat, b.beta_hat)


def test_step_decay(rng):
    for _ in range(10):
        data, _ = planted(rng, 48, 16, 3, sigma=0.01)
        res = solve_pga(data, PenaltySpec(Family.SCAD, 0.05), SolverConfig(), spectral_init(data))
        if res.converged and res.iterations >= 20:
            assert res.move_trace[-10:].mean() <= res.move_trace[:10].mean()
        drop = res.objective_trace[0] - res.objective_trace[-1]
        assert np.sum(res.move_trace**2) <= drop / 1e-4 + 1e-12


def test_iteration_cap(rng):
    data, _ = planted(rng, 30, 10, 3)
    res = solve_pga(data, PenaltySpec(Family.SCAD, 1e-3), SolverConfig(max_iters=2), spectral_init(data))
    assert res.termination is Termination.ITER_CAP
    assert res.iterations == 2
    assert len(res.objective_trace) == 3


def test_result_dict(rng):
    data, _ = planted(rng, 20, 6, 2)
    res = solve_pga(data, PenaltySpec(Family.SCAD, 0.01), SolverConfig(), spectral_init(data))
    doc = res.to_dict()
    assert set(doc) >= {"beta", "objective_trace", "iterations", "termination", "fp_residual"}
    assert doc["termination"] in {t.value for t in Termination}


# ------------------------------------------------------- fixed-point residual


def test_residual_zero_at_stationary_point():
    data = random_dense(np.random.default_rng(1), 8, 4)
    assert fixed_point_residual(data, NO_PENALTY, np.zeros(4), 0.5) == 0.0


def test_residual_discriminates(rng):
    for _ in range(10):
        data, _ = planted(rng, 30, 10, 3)
        spec = PenaltySpec(Family.SCAD, 0.05)
        beta = rng.standard_normal(10)
        assert fixed_point_residual(data, spec, beta, 0.01) > 1e-3


def test_residual_weighted_form_for_exp(rng):
    data, _ = planted(rng, 30, 8, 2)
    spec = PenaltySpec(Family.EXP, 0.01)
    beta = rng.standard_normal(8)
    assert fixed_point_residual(data, spec, beta, 0.01) == fixed_point_residual(
        data, spec, beta, 0.01, form="weighted"
    )


# ---------------------------------------------------------------- oracle


def test_oracle_full_support_equals_pga(rng):
    data, _ = planted(rng, 40, 8, 2)
    beta0 = spectral_init(data)
    spec = PenaltySpec(Family.SCAD, 0.01)
    full = solve_pga(data, spec, SolverConfig(), beta0)
    orc = oracle_solve(data, spec, SolverConfig(), range(8), beta0)
    assert np.array_equal(full.beta_hat, orc.beta_hat)
    assert np.array_equal(full.objective_trace, orc.objective_trace)


def test_oracle_recovers_on_true_support():
    for t in range(5):
        rng = np.random.default_rng([5, t])
        data, beta = planted(rng, 64, 16, 3)
        res = oracle_solve(data, PenaltySpec(Family.SCAD, 1e-6), SolverConfig(), np.flatnonzero(beta))
        assert relative_error(res.beta_hat, beta) <= 1e-4
        assert np.all(res.beta_hat[beta == 0] == 0)


def test_oracle_wrong_support_fails(rng):
    data, beta = planted(rng, 64, 16, 3)
    off = np.setdiff1d(np.arange(16), np.flatnonzero(beta))[:3]
    res = oracle_solve(data, PenaltySpec(Family.SCAD, 1e-6), SolverConfig(), off)
    assert relative_error(res.beta_hat, beta) >= 0.5


def test_oracle_rejects_empty_support(rng):
    data, _ = planted(rng, 10, 4, 1)
    with pytest.raises(ValueError):
        oracle_solve(data, NO_PENALTY, SolverConfig(), [])


# ------------------------------------------------------ second-order check


def test_local_min_at_quartic_minimizer():
    ok, lo = local_min_check(scalar_toy(1.0), NO_PENALTY, np.array([1.0]))
    assert ok and lo == pytest.approx(2.0)


def test_saddle_at_origin():
    ok, lo = local_min_check(scalar_toy(1.0), NO_PENALTY, np.array([0.0]), support=[0])
    assert not ok and lo == pytest.approx(-1.0)


def test_local_min_empty_support():
    with pytest.raises(NotApplicableError):
        local_min_check(scalar_toy(1.0), NO_PENALTY, np.array([0.0]))


def test_penalty_curvature_enters_certificate():
    # MCP curvature -1/gamma lowers the scalar second derivative 3b^2 - 1 = 2
    spec = PenaltySpec(Family.MCP, 10.0, 0.5)
    _, lo = local_min_check(scalar_toy(1.0), spec, np.array([1.0]))
    assert lo == pytest.approx(2.0 - 2.0)


def test_certification_rate_on_converged_scad():
    certified = total = 0
    for t in range(40):
        rng = np.random.default_rng([8, t])
        data, _ = planted(rng, 64, 24, 3, sigma=0.01)
        beta0 = spectral_init(data, InitConfig(rng_seed=t))
        spec = PenaltySpec(Family.SCAD, lambda_rule(data, beta0, 1e-3))
        res = solve_pga(data, spec, SolverConfig(), beta0)
        if res.converged and np.any(res.beta_hat):
            total += 1
            certified += local_min_check(data, spec, res.beta_hat)[0]
    assert total >= 30
    assert certified >= 0.95 * total


def test_point_cache_matches_functions(rng):
    from wccp import model

    data, _ = planted(rng, 12, 5, 2)
    spec = PenaltySpec(Family.SCAD, 0.1)
    b = rng.standard_normal(5)
    pt = _Point(data, spec, b)
    assert pt.F == pytest.approx(objective(data, spec, b), rel=1e-14)
    assert np.allclose(pt.grad, model.gradient(data, b), rtol=1e-14, atol=0)
