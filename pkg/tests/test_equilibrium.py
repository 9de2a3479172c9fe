"""Nash tests, the equilibria-set report, mass bound, oracle, saddle check."""

import numpy as np
import pytest

import popdyn as pd

from conftest import null_dual, random_simplex


def zero_potential_game(n=3):
    # fitness identically zero: every state is an equilibrium
    return pd.build_quadratic_potential(np.zeros((n, n)), np.zeros(n))


# --- support-optimality tests ---


def test_equalized_payoffs_are_primal_nash(rps):
    x = pd.PrimalState(np.full(3, 1.0 / 3.0), mass=1.0)
    check = pd.is_primal_nash(rps, x, null_dual(rps))
    assert check.ok
    assert check.residual == 0.0


def test_uniform_profile_is_not_primal_nash(congestion):
    x = pd.PrimalState(np.full(4, 0.25), mass=1.0)
    check = pd.is_primal_nash(congestion, x, null_dual(congestion))
    assert not check.ok
    assert check.residual > 1.0


def test_null_prices_are_dual_nash_when_feasible(congestion):
    # strictly feasible profile: the null strategy is the unique best reply
    x = pd.PrimalState(np.full(4, 0.25), mass=1.0)
    check = pd.is_dual_nash(congestion, null_dual(congestion), x)
    assert check.ok
    assert check.residual == 0.0


def test_null_prices_are_not_dual_nash_when_violated(rps):
    x = pd.PrimalState(np.full(3, 1.0 / 3.0), mass=1.0)
    check = pd.is_dual_nash(rps, null_dual(rps), x)
    assert not check.ok
    assert check.residual == pytest.approx(11.0 / 90.0, abs=1e-12)


def test_nash_tests_reject_nonpositive_tolerance(rps):
    x = pd.PrimalState(np.full(3, 1.0 / 3.0), mass=1.0)
    with pytest.raises(pd.ConfigurationError):
        pd.is_primal_nash(rps, x, null_dual(rps), tol=0.0)


# --- equilibria-set membership ---


def test_converged_endpoint_is_in_the_set(congestion, congestion_run):
    report = pd.in_equilibria_set(
        congestion, congestion_run.final_primal, congestion_run.final_dual, tol=1e-3
    )
    assert report.verdict == "in_E"
    assert report.in_set
    assert report.primal_nash_residual <= 1e-3
    assert report.dual_nash_residual <= 1e-3
    assert report.feasibility_residual <= 1e-3
    assert report.complementarity_residual <= 1e-3
    assert report.saddle_violation is None


def test_random_state_is_not_in_the_set(congestion):
    rng = np.random.default_rng(6)
    x = pd.PrimalState(random_simplex(rng, 4, 1.0), mass=1.0)
    mu = pd.DualState(random_simplex(rng, 9, 122.0), mass=122.0)
    report = pd.in_equilibria_set(congestion, x, mu)
    assert report.verdict == "not_in_E"
    assert not report.in_set


def test_every_state_of_a_zero_game_is_in_the_set():
    game = zero_potential_game()
    rng = np.random.default_rng(7)
    for _ in range(20):
        x = pd.PrimalState(random_simplex(rng, 3, 1.0), mass=1.0)
        mu = pd.DualState(np.array([1.0]), mass=1.0)
        report = pd.in_equilibria_set(game, x, mu)
        assert report.verdict == "in_E"
        assert report.primal_nash_residual == 0.0
        assert report.dual_nash_residual == 0.0
        assert report.feasibility_residual == 0.0
        assert report.complementarity_residual == 0.0


def test_report_serializes_in_stable_order(congestion, congestion_run):
    report = pd.in_equilibria_set(
        congestion, congestion_run.final_primal, congestion_run.final_dual, tol=1e-3
    )
    assert list(report.as_dict()) == [
        "primal_nash_residual",
        "dual_nash_residual",
        "feasibility_residual",
        "complementarity_residual",
        "saddle_violation",
        "verdict",
    ]


# --- interior points and the dual mass bound ---


def test_slater_point_certifies_uniform_profile(congestion):
    sp = pd.slater_point(congestion, pd.PrimalState(np.full(4, 0.25), mass=1.0))
    assert sp.margin == pytest.approx(0.1, abs=1e-15)


def test_slater_point_rejects_boundary_points(congestion):
    x = pd.PrimalState(np.array([0.5, 0.5, 0.0, 0.0]), mass=1.0)
    with pytest.raises(pd.SlaterViolationError):
        pd.slater_point(congestion, x)


def test_slater_point_rejects_infeasible_points_with_index(rps):
    x = pd.PrimalState(np.array([0.8, 0.1, 0.1]), mass=1.0)
    with pytest.raises(pd.SlaterViolationError) as err:
        pd.slater_point(rps, x)
    assert err.value.index == 1


def test_dual_mass_bound_on_uniform_interior_point(congestion):
    sp = pd.slater_point(congestion, pd.PrimalState(np.full(4, 0.25), mass=1.0))
    bound = pd.dual_mass_bound(congestion, sp, p_star_upper=0.0)
    assert bound == pytest.approx(121.875, abs=1e-9)
    assert congestion.dual_mass >= bound


def test_dual_mass_bound_rejects_underestimated_optimum(congestion):
    sp = pd.slater_point(congestion, pd.PrimalState(np.full(4, 0.25), mass=1.0))
    # p at the interior point is -12.1875; any smaller upper bound is absurd
    with pytest.raises(pd.ConfigurationError):
        pd.dual_mass_bound(congestion, sp, p_star_upper=-13.0)


def test_dual_mass_bound_is_zero_without_constraints():
    game = zero_potential_game()
    sp = pd.slater_point(game, pd.PrimalState(np.full(3, 1.0 / 3.0), mass=1.0))
    assert sp.margin == np.inf
    assert pd.dual_mass_bound(game, sp, p_star_upper=0.0) == 0.0


# --- grid oracle ---


def test_oracle_recovers_known_quadratic_optimum():
    game = pd.build_quadratic_potential(-2.0 * np.eye(2), np.zeros(2))
    sol = pd.oracle_solve(game, resolution=100, refine_iters=200, seed=0)
    assert sol.value == pytest.approx(-0.5, abs=1e-12)
    assert np.allclose(sol.point.x, [0.5, 0.5], atol=1e-6)
    assert sol.gap <= 1e-6


def test_oracle_recovers_interior_target():
    # p = -|x|^2 + 2 target . x peaks exactly at the target point
    target = np.array([0.3, 0.7])
    game = pd.build_quadratic_potential(-2.0 * np.eye(2), 2.0 * target)
    sol = pd.oracle_solve(game, resolution=100, refine_iters=200, seed=0)
    assert np.allclose(sol.point.x, target, atol=1e-6)
    assert sol.value == pytest.approx(float(target @ target), abs=1e-12)


def test_oracle_solves_the_congestion_benchmark(congestion, congestion_oracle):
    sol = congestion_oracle
    assert sol.value == pytest.approx(-8.9090625, abs=1e-4)
    assert np.allclose(sol.point.x, [0.4, 0.075, 0.125, 0.4], atol=1e-3)
    assert sol.gap <= 1e-4
    g = pd.constraint_values(congestion, sol.point)
    assert g.max() <= 1e-9


def test_oracle_is_deterministic(congestion):
    a = pd.oracle_solve(congestion, resolution=40, refine_iters=100, seed=3)
    b = pd.oracle_solve(congestion, resolution=40, refine_iters=100, seed=3)
    assert np.array_equal(a.point.x, b.point.x)
    assert a.value == b.value
    assert a.gap == b.gap


def test_oracle_requires_a_potential(rps):
    with pytest.raises(pd.UnsupportedOperationError):
        pd.oracle_solve(rps)


def test_oracle_rejects_oversized_grids():
    game = pd.build_quadratic_potential(-np.eye(6), np.zeros(6))
    with pytest.raises(pd.ConfigurationError):
        pd.oracle_solve(game, resolution=200)
    # a coarse grid on the same game is fine
    sol = pd.oracle_solve(game, resolution=12, refine_iters=50, seed=0)
    assert sol.value <= 0.0


def test_oracle_reports_infeasible_instances():
    con = pd.AffineConstraint(np.zeros(2), -1.0)  # g = 1 > 0 everywhere
    game = pd.build_quadratic_potential(-np.eye(2), np.zeros(2), constraints=(con,))
    with pytest.raises(pd.InfeasibleInstanceError):
        pd.oracle_solve(game, resolution=20, refine_iters=0)


# --- saddle check ---


def test_saddle_check_holds_at_converged_endpoint(congestion, congestion_run):
    check = pd.saddle_check(
        congestion,
        congestion_run.final_primal,
        congestion_run.final_dual,
        samples=200,
        seed=0,
    )
    assert check.primal_violation <= 1e-6
    assert check.dual_violation <= 1e-6


def test_saddle_check_flags_a_non_saddle(congestion):
    # the uniform profile maximizes nothing: random rivals beat it
    x = pd.PrimalState(np.full(4, 0.25), mass=1.0)
    check = pd.saddle_check(congestion, x, null_dual(congestion), samples=200, seed=0)
    assert check.primal_violation > 1.0


def test_saddle_check_with_no_samples_warns(congestion, congestion_run):
    with pytest.warns(UserWarning):
        check = pd.saddle_check(
            congestion, congestion_run.final_primal, congestion_run.final_dual, samples=0
        )
    assert check == pd.SaddleCheck(0.0, 0.0)


def test_saddle_check_requires_a_potential(rps):
    x = pd.PrimalState(np.full(3, 1.0 / 3.0), mass=1.0)
    with pytest.raises(pd.UnsupportedOperationError):
        pd.saddle_check(rps, x, null_dual(rps), samples=10)
