"""Road networks and the prebuilt game instances."""

import numpy as np
import pytest

import popdyn as pd


def two_road_network():
    return pd.RoadNetwork(
        roads=(pd.Road("a", 1.0, 0.5), pd.Road("b", 2.0, 0.8)),
        strategies=(("a",), ("b",), ("a", "b")),
    )


# --- network validation ---


def test_network_builds_incidence_matrix():
    net = two_road_network()
    assert np.array_equal(net.incidence(), np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]))


def test_network_rejects_duplicate_road_names():
    with pytest.raises(pd.ConfigurationError):
        pd.RoadNetwork(
            roads=(pd.Road("a", 1.0, 0.5), pd.Road("a", 2.0, 0.8)),
            strategies=(("a",), ("a",)),
        )


def test_network_rejects_unknown_road_references():
    with pytest.raises(pd.ConfigurationError):
        pd.RoadNetwork(roads=(pd.Road("a", 1.0, 0.5),), strategies=(("a",), ("ghost",)))


def test_network_rejects_unused_roads():
    with pytest.raises(pd.ConfigurationError):
        pd.RoadNetwork(
            roads=(pd.Road("a", 1.0, 0.5), pd.Road("b", 1.0, 0.5)),
            strategies=(("a",), ("a",)),
        )


def test_network_rejects_single_strategy():
    with pytest.raises(pd.ConfigurationError):
        pd.RoadNetwork(roads=(pd.Road("a", 1.0, 0.5),), strategies=(("a",),))


def test_network_rejects_nonpositive_weights_and_capacities():
    with pytest.raises(pd.ConfigurationError):
        pd.RoadNetwork(roads=(pd.Road("a", 0.0, 0.5),), strategies=(("a",), ("a",)))
    with pytest.raises(pd.ConfigurationError):
        pd.RoadNetwork(roads=(pd.Road("a", 1.0, -0.1),), strategies=(("a",), ("a",)))


# --- congestion builder ---


def test_build_congestion_wires_constraints_in_road_order():
    net = two_road_network()
    game = pd.build_congestion(net, primal_mass=1.0, dual_mass=3.0, name="toy")
    assert game.n == 3
    assert game.q == 2
    assert game.name == "toy"
    x = pd.PrimalState(np.array([0.2, 0.3, 0.5]), mass=1.0)
    g = pd.constraint_values(game, x)
    # loads: road a carries strategies 1 and 3, road b carries 2 and 3
    assert g[1] == pytest.approx(0.7 - 0.5, abs=1e-12)
    assert g[2] == pytest.approx(0.8 - 0.8, abs=1e-12)


def test_build_congestion_potential_drives_fitness():
    game = pd.build_congestion(two_road_network(), primal_mass=1.0, dual_mass=3.0)
    x = pd.PrimalState(np.array([0.2, 0.3, 0.5]), mass=1.0)
    # p = -(w_a l_a^2 + w_b l_b^2)/2, f = -incidence^T (w * load)
    assert pd.potential(game, x) == pytest.approx(-(0.7**2 + 2 * 0.8**2) / 2, abs=1e-12)
    assert np.allclose(pd.fitness(game, x), [-0.7, -1.6, -2.3], atol=1e-12)


# --- benchmark instances ---


def test_benchmark_congestion_shape(congestion):
    assert congestion.name == "paper-congestion"
    assert congestion.n == 4
    assert congestion.q == 8
    assert congestion.primal_mass == 1.0
    assert congestion.dual_mass == 122.0


def test_benchmark_congestion_constraint_pattern(congestion):
    # per-strategy caps of 0.4 first, then the pairwise 0.6 caps, then the
    # three-strategy 0.9 cap
    x = pd.PrimalState(np.array([1.0, 0.0, 0.0, 0.0]), mass=1.0)
    g = pd.constraint_values(congestion, x)
    assert np.allclose(g[1:], [0.6, -0.4, -0.4, -0.4, 0.4, -0.6, -0.6, -0.9], atol=1e-12)


def test_benchmark_rps_shape(rps):
    assert rps.name == "paper-rps"
    assert rps.n == 3
    assert rps.q == 1
    assert rps.dual_mass == 4.0
    assert rps.potential is None
    assert np.array_equal(
        rps.fitness.matrix, np.array([[0.0, -1.0, 2.0], [2.0, 0.0, -1.0], [-1.0, 2.0, 0.0]])
    )


def test_benchmark_rps_cap_constraint(rps):
    x = pd.PrimalState(np.array([0.3, 0.4, 0.3]), mass=1.0)
    g = pd.constraint_values(rps, x)
    assert g[1] == pytest.approx(0.09 + 0.16 - 0.1, abs=1e-12)


def test_benchmark_rps_corner_payoffs(rps):
    x = pd.PrimalState(np.array([1.0, 0.0, 0.0]), mass=1.0)
    assert np.array_equal(pd.fitness(rps, x), np.array([0.0, 2.0, -1.0]))


def test_congestion_matches_its_quadratic_expansion(congestion):
    # expanding the load-weighted squares gives H = -inc^T diag(w) inc, c = 0
    net = pd.RoadNetwork(
        roads=(
            pd.Road("r1", 15.0, 0.4),
            pd.Road("r3", 11.0, 0.4),
            pd.Road("r5", 13.0, 0.4),
            pd.Road("r6", 5.0, 0.4),
            pd.Road("r2", 16.0, 0.6),
            pd.Road("r7", 17.0, 0.6),
            pd.Road("r4", 13.0, 0.6),
            pd.Road("r8", 18.0, 0.9),
        ),
        strategies=(
            ("r1", "r2"),
            ("r8", "r7", "r3", "r2"),
            ("r8", "r7", "r5", "r4"),
            ("r8", "r6", "r4"),
        ),
    )
    inc = net.incidence()
    weights = np.array([15.0, 11.0, 13.0, 5.0, 16.0, 17.0, 13.0, 18.0])
    H = -inc.T @ (weights[:, None] * inc)
    quad = pd.build_quadratic_potential(H, np.zeros(4), dual_mass=122.0)
    rng = np.random.default_rng(12)
    for _ in range(20):
        xv = rng.random(4)
        xv /= xv.sum()
        x = pd.PrimalState(xv, mass=1.0)
        assert pd.potential(quad, x) == pytest.approx(pd.potential(congestion, x), abs=1e-12)
        assert np.allclose(pd.fitness(quad, x), pd.fitness(congestion, x), atol=1e-12)


# --- quadratic builder ---


def test_build_quadratic_potential_game():
    game = pd.build_quadratic_potential(-np.eye(2), np.array([1.0, 0.0]), name="bowl")
    x = pd.PrimalState(np.array([0.4, 0.6]), mass=1.0)
    assert pd.potential(game, x) == pytest.approx(-0.5 * (0.16 + 0.36) + 0.4, abs=1e-12)
    assert np.allclose(pd.fitness(game, x), [-0.4 + 1.0, -0.6], atol=1e-12)


def test_build_quadratic_potential_rejects_convex_directions():
    H = np.diag([1.0, -1.0])  # positive curvature along the first axis
    with pytest.raises(pd.ConfigurationError):
        pd.build_quadratic_potential(H, np.zeros(2))


# --- registry ---


def test_builtin_registry_resolves_names():
    assert set(pd.BUILTIN_GAMES) == {"paper-congestion", "paper-rps"}
    assert pd.builtin_game("paper-rps").name == "paper-rps"
    assert pd.builtin_game("paper-congestion").q == 8


def test_builtin_registry_reports_known_names():
    with pytest.raises(pd.ConfigurationError) as err:
        pd.builtin_game("nope")
    assert "paper-congestion" in str(err.value)
