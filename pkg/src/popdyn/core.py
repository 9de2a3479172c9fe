"""Problem instances and payoff algebra for constrained population games.

A game couples a strategy-playing population living on the mass-``m_P``
simplex with a constraint-pricing population living on the mass-``m_D``
simplex.  The pricing population's strategies index the inequality
constraints ``g_k(x) <= 0`` for ``k = 1..q`` plus a null strategy ``0``
whose payoff is identically zero.  This module holds the instance data
(fitness rules, potentials, constraints, population states) and the pure
evaluation operations that the dynamics, Lyapunov, and equilibrium layers
build on.

Conventions used throughout:

* states are 1-d float arrays; batch variants take one row per state;
* the dual vector has length ``q + 1`` and index 0 is the null strategy;
* a constraint is satisfied when its value is ``<= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

SIMPLEX_MASS_TOL = 1e-9
FD_STEP = 1e-6
STABLE_TOL = 1e-9
# slack when checking that a quadratic constraint's matrix is PSD
PSD_TOL = 1e-10


class ConfigurationError(ValueError):
    """Raised when instance data or arguments are malformed or inconsistent."""


class UnsupportedOperationError(RuntimeError):
    """Raised when an operation needs structure the instance does not carry."""


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


def _uniform_simplex(rng: np.random.Generator, dim: int, mass: float) -> np.ndarray:
    """Uniform draw from the mass-``mass`` simplex via normalized exponentials."""
    e = rng.exponential(size=dim)
    return mass * (e / e.sum())


# ---------------------------------------------------------------------------
# population states


@dataclass(frozen=True, eq=False)
class PrimalState:
    """Strategy distribution of the playing population.

    ``x`` must be entrywise nonnegative and sum to ``mass`` within
    ``SIMPLEX_MASS_TOL``.
    """

    x: np.ndarray
    mass: float = 1.0

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim != 1 or x.size == 0:
            raise ConfigurationError("primal state must be a nonempty vector")
        if not self.mass > 0:
            raise ConfigurationError("primal mass must be positive")
        if not np.all(np.isfinite(x)):
            raise ConfigurationError("primal state has non-finite entries")
        if np.any(x < 0):
            raise ConfigurationError("primal state has negative entries")
        if abs(float(x.sum()) - self.mass) > SIMPLEX_MASS_TOL:
            raise ConfigurationError(
                f"primal state sums to {x.sum():.12g}, expected mass {self.mass:.12g}"
            )
        x.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "mass", float(self.mass))

    @property
    def n(self) -> int:
        return self.x.size


@dataclass(frozen=True, eq=False)
class DualState:
    """Price distribution of the constraint population over ``{0, 1, .., q}``.

    Index 0 is the null strategy.  ``mu`` must be entrywise nonnegative and
    sum to ``mass`` within ``SIMPLEX_MASS_TOL``.
    """

    mu: np.ndarray
    mass: float

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        if mu.ndim != 1 or mu.size == 0:
            raise ConfigurationError("dual state must be a nonempty vector")
        if not self.mass > 0:
            raise ConfigurationError("dual mass must be positive")
        if not np.all(np.isfinite(mu)):
            raise ConfigurationError("dual state has non-finite entries")
        if np.any(mu < 0):
            raise ConfigurationError("dual state has negative entries")
        if abs(float(mu.sum()) - self.mass) > SIMPLEX_MASS_TOL:
            raise ConfigurationError(
                f"dual state sums to {mu.sum():.12g}, expected mass {self.mass:.12g}"
            )
        mu.flags.writeable = False
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "mass", float(self.mass))

    @property
    def q(self) -> int:
        """Number of priced constraints (excludes the null strategy)."""
        return self.mu.size - 1


# ---------------------------------------------------------------------------
# constraints


@dataclass(frozen=True, eq=False)
class AffineConstraint:
    """Inequality ``a . x - b <= 0``."""

    a: np.ndarray
    b: float

    def __post_init__(self):
        a = _frozen_array(self.a)
        if a.ndim != 1 or a.size == 0:
            raise ConfigurationError("affine constraint coefficient must be a vector")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    @property
    def dimension(self) -> int:
        return self.a.size

    def value(self, x: np.ndarray) -> float:
        return float(self.a @ x - self.b)

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        return X @ self.a - self.b

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.array(self.a)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return np.zeros((self.a.size, self.a.size))


@dataclass(frozen=True, eq=False)
class QuadraticConstraint:
    """Inequality ``x . Q x + a . x - c <= 0`` with ``Q`` symmetric PSD.

    Convexity of the feasible region needs ``Q >= 0``; both symmetry and
    positive semidefiniteness are validated on construction.
    """

    Q: np.ndarray
    a: np.ndarray
    c: float

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        a = _frozen_array(self.a)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ConfigurationError("quadratic constraint matrix must be square")
        if a.ndim != 1 or a.size != Q.shape[0]:
            raise ConfigurationError("quadratic constraint vector/matrix size mismatch")
        if not np.allclose(Q, Q.T, atol=1e-12, rtol=0.0):
            raise ConfigurationError("quadratic constraint matrix must be symmetric")
        eigs = np.linalg.eigvalsh(Q)
        if eigs.min() < -PSD_TOL:
            raise ConfigurationError(
                f"quadratic constraint matrix has negative eigenvalue {eigs.min():.3g}"
            )
        Q.flags.writeable = False
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c", float(self.c))

    @property
    def dimension(self) -> int:
        return self.a.size

    def value(self, x: np.ndarray) -> float:
        return float(x @ self.Q @ x + self.a @ x - self.c)

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        return np.einsum("ri,ij,rj->r", X, self.Q, X) + X @ self.a - self.c

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * (self.Q @ x) + self.a

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * np.array(self.Q)


Constraint = Union[AffineConstraint, QuadraticConstraint]


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True, eq=False)
class QuadraticPotential:
    """Potential ``p(x) = 0.5 x . H x + c . x`` with symmetric ``H``."""

    quad: np.ndarray
    linear: np.ndarray

    def __post_init__(self):
        H = np.array(self.quad, dtype=float)
        c = _frozen_array(self.linear)
        if H.ndim != 2 or H.shape[0] != H.shape[1] or c.size != H.shape[0]:
            raise ConfigurationError("potential matrix/vector shapes are inconsistent")
        if not np.allclose(H, H.T, atol=1e-12, rtol=0.0):
            raise ConfigurationError("potential matrix must be symmetric")
        H.flags.writeable = False
        object.__setattr__(self, "quad", H)
        object.__setattr__(self, "linear", c)

    def value(self, x: np.ndarray) -> float:
        return float(0.5 * (x @ self.quad @ x) + self.linear @ x)

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        return 0.5 * np.einsum("ri,ij,rj->r", X, self.quad, X) + X @ self.linear

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.quad @ x + self.linear

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return np.array(self.quad)


@dataclass(frozen=True, eq=False)
class CongestionPotential:
    """Potential of a congestion game with affine edge costs.

    ``incidence`` maps strategies to edges (``incidence[e, i] = 1`` when
    strategy ``i`` uses edge ``e``) and ``weights[e] > 0`` scales the linear
    growth of the cost of edge ``e`` with its load.  Fitness is the negative
    strategy cost, so ``p(x) = -0.5 * sum_e w_e * load_e(x)^2`` with
    ``load = incidence @ x`` makes ``grad p`` the fitness vector.
    """

    incidence: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        inc = np.array(self.incidence, dtype=float)
        w = _frozen_array(self.weights)
        if inc.ndim != 2 or w.ndim != 1 or inc.shape[0] != w.size:
            raise ConfigurationError("incidence/weight shapes are inconsistent")
        if np.any(w <= 0):
            raise ConfigurationError("edge weights must be positive")
        inc.flags.writeable = False
        object.__setattr__(self, "incidence", inc)
        object.__setattr__(self, "weights", w)

    def value(self, x: np.ndarray) -> float:
        load = self.incidence @ x
        return float(-0.5 * (self.weights @ (load * load)))

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        load = X @ self.incidence.T
        return -0.5 * (load * load) @ self.weights

    def gradient(self, x: np.ndarray) -> np.ndarray:
        load = self.incidence @ x
        return -(self.incidence.T @ (self.weights * load))

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return -(self.incidence.T * self.weights) @ self.incidence


@dataclass(frozen=True, eq=False)
class CallablePotential:
    """Potential given by arbitrary callables; gradient is required."""

    func: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def value(self, x: np.ndarray) -> float:
        return float(self.func(x))

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.func(row) for row in X], dtype=float)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.grad(x), dtype=float)

    def hessian(self, x: np.ndarray) -> Optional[np.ndarray]:
        if self.hess is None:
            return None
        return np.asarray(self.hess(x), dtype=float)


PotentialRule = Union[QuadraticPotential, CongestionPotential, CallablePotential]


# ---------------------------------------------------------------------------
# fitness rules


@dataclass(frozen=True, eq=False)
class MatrixFitness:
    """Linear payoffs ``f(x) = A x``."""

    matrix: np.ndarray

    def __post_init__(self):
        A = np.array(self.matrix, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ConfigurationError("payoff matrix must be square")
        A.flags.writeable = False
        object.__setattr__(self, "matrix", A)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return np.array(self.matrix)


@dataclass(frozen=True, eq=False)
class PotentialFitness:
    """Payoffs given by the gradient of a scalar potential."""

    rule: PotentialRule

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.rule.gradient(x)

    def jacobian(self, x: np.ndarray) -> Optional[np.ndarray]:
        return self.rule.hessian(x)


@dataclass(frozen=True, eq=False)
class CallableFitness:
    """Payoffs from an arbitrary vector field, optionally with a Jacobian."""

    func: Callable[[np.ndarray], np.ndarray]
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.func(x), dtype=float)

    def jacobian(self, x: np.ndarray) -> Optional[np.ndarray]:
        if self.jac is None:
            return None
        return np.asarray(self.jac(x), dtype=float)


FitnessRule = Union[MatrixFitness, PotentialFitness, CallableFitness]


# ---------------------------------------------------------------------------
# game specification


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Full description of a constrained population game.

    Parameters
    ----------
    n : int
        Number of primal strategies, at least 2.
    primal_mass, dual_mass : float
        Total masses of the two populations, both positive.
    fitness : FitnessRule
        Payoff rule of the playing population.
    constraints : sequence of Constraint
        The inequality constraints ``g_k <= 0`` for ``k = 1..q`` in order.
        The null constraint ``g_0 == 0`` is implicit and never stored.
    potential : PotentialRule, optional
        Scalar potential whose gradient equals the fitness.  Required by
        the grid oracle and by potential reporting; when given it is
        cross-checked against the fitness at a few sampled states.
    name : str
        Optional label used in logs and CLI output.
    """

    n: int
    primal_mass: float
    dual_mass: float
    fitness: FitnessRule
    constraints: tuple = ()
    potential: Optional[PotentialRule] = None
    name: str = ""

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise ConfigurationError("need at least 2 primal strategies")
        if not (self.primal_mass > 0 and math.isfinite(self.primal_mass)):
            raise ConfigurationError("primal mass must be positive and finite")
        if not (self.dual_mass > 0 and math.isfinite(self.dual_mass)):
            raise ConfigurationError("dual mass must be positive and finite")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "primal_mass", float(self.primal_mass))
        object.__setattr__(self, "dual_mass", float(self.dual_mass))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        for k, con in enumerate(self.constraints, start=1):
            if con.dimension != self.n:
                raise ConfigurationError(
                    f"constraint {k} has dimension {con.dimension}, expected {self.n}"
                )
        self._build_constraint_cache()
        self._check_shapes_and_potential()

    def _build_constraint_cache(self):
        # split into a stacked affine block and a list of quadratics so the
        # per-step evaluations in the dynamics reduce to a few numpy calls
        aff_idx, aff_rows, aff_b = [], [], []
        quads = []
        for k, con in enumerate(self.constraints, start=1):
            if isinstance(con, AffineConstraint):
                aff_idx.append(k)
                aff_rows.append(con.a)
                aff_b.append(con.b)
            else:
                quads.append((k, con))
        object.__setattr__(self, "_aff_idx", np.array(aff_idx, dtype=int))
        object.__setattr__(
            self,
            "_aff_rows",
            np.array(aff_rows, dtype=float).reshape(len(aff_idx), self.n),
        )
        object.__setattr__(self, "_aff_b", np.array(aff_b, dtype=float))
        object.__setattr__(self, "_quads", tuple(quads))
        jac = np.zeros((self.q + 1, self.n))
        if aff_idx:
            jac[self._aff_idx] = self._aff_rows
        if not quads:
            jac.flags.writeable = False
        object.__setattr__(self, "_jac_static", jac)

    def _check_shapes_and_potential(self):
        rng = np.random.default_rng(0)
        probe = _uniform_simplex(rng, self.n, self.primal_mass)
        try:
            f = np.asarray(self.fitness(probe), dtype=float)
        except Exception as exc:
            raise ConfigurationError(
                f"fitness rule failed on an {self.n}-strategy probe state: {exc}"
            ) from exc
        if f.shape != (self.n,):
            raise ConfigurationError(
                f"fitness returned shape {f.shape}, expected ({self.n},)"
            )
        if self.potential is None:
            return
        # the potential must actually generate the fitness: compare grad p
        # with f at a few random states via central differences on p
        for _ in range(3):
            x = _uniform_simplex(rng, self.n, self.primal_mass)
            fx = np.asarray(self.fitness(x), dtype=float)
            num = _fd_gradient(self.potential.value, x)
            if np.max(np.abs(num - fx)) > 1e-4:
                raise ConfigurationError(
                    "potential gradient disagrees with fitness "
                    f"(max deviation {np.max(np.abs(num - fx)):.3g})"
                )

    @property
    def q(self) -> int:
        return len(self.constraints)


def _fd_gradient(func: Callable[[np.ndarray], float], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    grad = np.empty(x.size)
    for i in range(x.size):
        step = np.zeros(x.size)
        step[i] = h
        grad[i] = (func(x + step) - func(x - step)) / (2.0 * h)
    return grad


# ---------------------------------------------------------------------------
# state/game compatibility guards


def _check_primal(game: GameSpec, state: PrimalState) -> np.ndarray:
    if state.n != game.n:
        raise ConfigurationError(f"state has {state.n} strategies, game has {game.n}")
    if state.mass != game.primal_mass:
        raise ConfigurationError(
            f"state mass {state.mass:.12g} differs from game mass {game.primal_mass:.12g}"
        )
    return state.x


def _check_dual(game: GameSpec, state: DualState) -> np.ndarray:
    if state.q != game.q:
        raise ConfigurationError(f"state prices {state.q} constraints, game has {game.q}")
    if state.mass != game.dual_mass:
        raise ConfigurationError(
            f"state mass {state.mass:.12g} differs from game mass {game.dual_mass:.12g}"
        )
    return state.mu


# ---------------------------------------------------------------------------
# evaluation operations


def fitness(game: GameSpec, x: PrimalState) -> np.ndarray:
    """Payoff vector ``f(x)`` of the playing population."""
    return np.asarray(game.fitness(_check_primal(game, x)), dtype=float)


def potential(game: GameSpec, x: PrimalState) -> float:
    """Value of the scalar potential at ``x``.

    Raises ``UnsupportedOperationError`` when the game carries none.
    """
    xv = _check_primal(game, x)
    if game.potential is None:
        raise UnsupportedOperationError("game has no potential")
    return game.potential.value(xv)


def _constraint_values_raw(game: GameSpec, xv: np.ndarray) -> np.ndarray:
    vals = np.zeros(game.q + 1)
    if game._aff_idx.size:
        vals[game._aff_idx] = game._aff_rows @ xv - game._aff_b
    for k, con in game._quads:
        vals[k] = con.value(xv)
    return vals


def constraint_values(game: GameSpec, x: PrimalState) -> np.ndarray:
    """Vector ``(g_0(x), g_1(x), .., g_q(x))`` with ``g_0`` exactly zero."""
    return _constraint_values_raw(game, _check_primal(game, x))


def _constraint_jacobian_raw(game: GameSpec, xv: np.ndarray) -> np.ndarray:
    if not game._quads:
        return game._jac_static
    jac = np.array(game._jac_static)
    for k, con in game._quads:
        jac[k] = con.gradient(xv)
    return jac


def constraint_jacobian(game: GameSpec, x: PrimalState) -> np.ndarray:
    """Matrix of shape ``(q + 1, n)`` whose row ``k`` is ``grad g_k(x)``.

    Row 0 belongs to the null constraint and is identically zero.
    """
    jac = _constraint_jacobian_raw(game, _check_primal(game, x))
    return np.array(jac)


def _payoff_raw(game: GameSpec, xv: np.ndarray, muv: np.ndarray) -> np.ndarray:
    f = np.asarray(game.fitness(xv), dtype=float)
    if muv[1:].any():
        jac = _constraint_jacobian_raw(game, xv)
        return f - jac[1:].T @ muv[1:]
    return f


def primal_dual_payoff(game: GameSpec, x: PrimalState, mu: DualState) -> np.ndarray:
    """Constraint-discounted payoffs ``f_i(x) - sum_k mu_k dg_k/dx_i``.

    When all dual mass sits on the null strategy the result equals the raw
    fitness bitwise; no penalty arithmetic runs in that case.
    """
    return _payoff_raw(game, _check_primal(game, x), _check_dual(game, mu))


def fitness_jacobian(game: GameSpec, x: PrimalState) -> np.ndarray:
    """Jacobian ``Df(x)``, analytic when the rule has one, else central differences."""
    xv = _check_primal(game, x)
    return _fitness_jacobian_raw(game, xv)


def _fitness_jacobian_raw(game: GameSpec, xv: np.ndarray) -> np.ndarray:
    jac = game.fitness.jacobian(xv)
    if jac is not None:
        jac = np.asarray(jac, dtype=float)
        if jac.shape != (game.n, game.n):
            raise ConfigurationError(
                f"fitness jacobian has shape {jac.shape}, expected {(game.n, game.n)}"
            )
        return jac
    cols = np.empty((game.n, game.n))
    for i in range(game.n):
        step = np.zeros(game.n)
        step[i] = FD_STEP
        hi = np.asarray(game.fitness(xv + step), dtype=float)
        lo = np.asarray(game.fitness(xv - step), dtype=float)
        cols[:, i] = (hi - lo) / (2.0 * FD_STEP)
    return cols


def _payoff_jacobian_raw(game: GameSpec, xv: np.ndarray, muv: np.ndarray) -> np.ndarray:
    jac = _fitness_jacobian_raw(game, xv)
    if not game._quads or not muv[1:].any():
        return jac
    jac = np.array(jac)
    for k, con in game._quads:
        if muv[k] != 0.0:
            jac -= muv[k] * con.hessian(xv)
    return jac


def primal_dual_payoff_jacobian(game: GameSpec, x: PrimalState, mu: DualState) -> np.ndarray:
    """Jacobian of the constraint-discounted payoff, ``Df - sum_k mu_k Hess g_k``."""
    return _payoff_jacobian_raw(game, _check_primal(game, x), _check_dual(game, mu))


def lagrangian(game: GameSpec, x: PrimalState, mu: DualState) -> float:
    """Value ``p(x) - sum_{k>=1} mu_k g_k(x)``; needs a potential."""
    xv = _check_primal(game, x)
    muv = _check_dual(game, mu)
    if game.potential is None:
        raise UnsupportedOperationError("lagrangian needs a potential")
    g = _constraint_values_raw(game, xv)
    return game.potential.value(xv) - float(muv[1:] @ g[1:])


class StabilityCheck(NamedTuple):
    stable: bool
    worst: float


def check_stable_game(game: GameSpec, samples: int = 200, seed: int = 0) -> StabilityCheck:
    """Sampled test of the stable-game property ``z . Df(x) z <= 0``.

    Draws ``samples`` states uniformly from the simplex, pairs each with a
    unit vector ``z`` tangent to the simplex (``sum z = 0``), and records the
    largest quadratic form seen.  The game passes when that maximum stays at
    or below ``STABLE_TOL``.  A sampled check can only refute stability, not
    prove it.
    """
    if samples < 1:
        raise ConfigurationError("need at least one sample")
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for _ in range(samples):
        xv = _uniform_simplex(rng, game.n, game.primal_mass)
        jac = _fitness_jacobian_raw(game, xv)
        z = rng.standard_normal(game.n)
        z -= z.mean()
        nz = np.linalg.norm(z)
        if nz < 1e-12:
            continue
        z /= nz
        worst = max(worst, float(z @ jac @ z))
    return StabilityCheck(worst <= STABLE_TOL, worst)
