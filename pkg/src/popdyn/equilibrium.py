"""Equilibrium tests, the dual-mass bound, and an independent grid oracle.

Membership in the equilibria set is two coupled Nash conditions: every used
primal strategy earns the maximal constraint-discounted payoff, and every
carried constraint price sits on a maximal constraint value (the null
constraint's value 0 included).  The oracle solves the underlying program
``max p(x)  s.t.  g_k(x) <= 0`` by feasible-grid enumeration plus projected
random refinement, sharing no code path with the dynamics or the payoff
gradients it is used to validate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import core
from .core import (
    ConfigurationError,
    DualState,
    GameSpec,
    PrimalState,
    UnsupportedOperationError,
)

DEFAULT_NASH_TOL = 1e-9
# slack when classifying grid/search points as feasible
FEAS_EPS = 1e-12
# cap on the phase-1 grid size of the oracle
MAX_GRID_POINTS = 4_000_000


class SlaterViolationError(ValueError):
    """Raised when a candidate interior point fails strict feasibility.

    ``index`` is the 1-based constraint index that failed, or ``None`` when
    the point itself is not strictly positive.
    """

    def __init__(self, message: str, index: Optional[int] = None):
        self.index = index
        super().__init__(message)


class InfeasibleInstanceError(RuntimeError):
    """Raised when the oracle's grid contains no feasible point."""


class NashCheck(NamedTuple):
    ok: bool
    residual: float


class SaddleCheck(NamedTuple):
    primal_violation: float
    dual_violation: float


class OracleSolution(NamedTuple):
    point: PrimalState
    value: float
    gap: float


@dataclass(frozen=True, eq=False)
class EquilibriumReport:
    """Residual diagnostics for a candidate state pair.

    All residuals are nonnegative.  ``saddle_violation`` is ``None`` unless
    a saddle check was folded in.  The verdict depends on the two Nash
    residuals alone; feasibility and complementarity are diagnostics.
    """

    primal_nash_residual: float
    dual_nash_residual: float
    feasibility_residual: float
    complementarity_residual: float
    saddle_violation: Optional[float]
    verdict: str

    @property
    def in_set(self) -> bool:
        return self.verdict == "in_E"

    def as_dict(self) -> dict:
        return {
            "primal_nash_residual": self.primal_nash_residual,
            "dual_nash_residual": self.dual_nash_residual,
            "feasibility_residual": self.feasibility_residual,
            "complementarity_residual": self.complementarity_residual,
            "saddle_violation": self.saddle_violation,
            "verdict": self.verdict,
        }


@dataclass(frozen=True, eq=False)
class SlaterPoint:
    """Strictly feasible interior point with its constraint margin.

    ``margin`` is ``min_k |g_k(point)|`` over the real constraints; it is
    infinite when the game has none.
    """

    point: PrimalState
    margin: float


def is_primal_nash(
    game: GameSpec, x: PrimalState, mu: DualState, tol: float = DEFAULT_NASH_TOL
) -> NashCheck:
    """Support-optimality test for the playing population.

    The residual is the largest payoff shortfall over strategies carrying
    more than ``tol`` mass; the test passes when it is at most ``tol``.
    """
    payoff = core.primal_dual_payoff(game, x, mu)
    return _support_check(x.x, payoff, tol)


def is_dual_nash(
    game: GameSpec, mu: DualState, x: PrimalState, tol: float = DEFAULT_NASH_TOL
) -> NashCheck:
    """Support-optimality test for the pricing population on ``(g_0, .., g_q)``."""
    g = core.constraint_values(game, x)
    core._check_dual(game, mu)
    return _support_check(mu.mu, g, tol)


def _support_check(shares: np.ndarray, payoffs: np.ndarray, tol: float) -> NashCheck:
    if not tol > 0:
        raise ConfigurationError("tolerance must be positive")
    support = shares > tol
    if not support.any():
        return NashCheck(True, 0.0)
    residual = float(payoffs.max() - payoffs[support].min())
    return NashCheck(residual <= tol, max(residual, 0.0))


def in_equilibria_set(
    game: GameSpec, x: PrimalState, mu: DualState, tol: float = DEFAULT_NASH_TOL
) -> EquilibriumReport:
    """Combined membership test with feasibility/complementarity diagnostics."""
    primal = is_primal_nash(game, x, mu, tol)
    dual = is_dual_nash(game, mu, x, tol)
    g = core.constraint_values(game, x)
    feasibility = float(g.max())
    if game.q:
        comp = float(np.max(mu.mu[1:] * np.maximum(-g[1:], 0.0)))
    else:
        comp = 0.0
    verdict = "in_E" if (primal.ok and dual.ok) else "not_in_E"
    return EquilibriumReport(
        primal_nash_residual=primal.residual,
        dual_nash_residual=dual.residual,
        feasibility_residual=feasibility,
        complementarity_residual=comp,
        saddle_violation=None,
        verdict=verdict,
    )


def slater_point(game: GameSpec, x: PrimalState) -> SlaterPoint:
    """Certify ``x`` as strictly positive and strictly feasible.

    Raises ``SlaterViolationError`` naming the first failing constraint (or
    the positivity failure) otherwise.
    """
    xv = core._check_primal(game, x)
    if np.any(xv <= 0):
        bad = int(np.argmin(xv))
        raise SlaterViolationError(
            f"interior point required: coordinate {bad} is not strictly positive"
        )
    g = core.constraint_values(game, x)
    for k in range(1, game.q + 1):
        if g[k] >= 0:
            raise SlaterViolationError(
                f"constraint {k} is not strictly satisfied (g_{k} = {g[k]:.6g})", index=k
            )
    margin = float(np.min(np.abs(g[1:]))) if game.q else math.inf
    return SlaterPoint(point=x, margin=margin)


def dual_mass_bound(game: GameSpec, slater: SlaterPoint, p_star_upper: float) -> float:
    """Sufficient dual mass ``(p_star_upper - p(x_tilde)) / margin``.

    Any dual mass at or above the returned value keeps the optimal prices
    inside the dual simplex.  ``p_star_upper`` must be a certified upper
    bound on the constrained optimum, e.g. 0 for a nonpositive potential or
    the oracle's value plus its gap.
    """
    if not slater.margin > 0:
        raise SlaterViolationError("Slater margin must be positive")
    p_tilde = core.potential(game, slater.point)
    if p_star_upper < p_tilde:
        raise ConfigurationError(
            "p_star_upper is below the potential at the interior point; "
            "it cannot be an upper bound on the optimum"
        )
    if math.isinf(slater.margin):
        return 0.0
    return (p_star_upper - p_tilde) / slater.margin


# ---------------------------------------------------------------------------
# grid oracle


def _compositions(total: int, parts: int, _cache: dict) -> np.ndarray:
    """All nonnegative integer vectors of length ``parts`` summing to ``total``.

    Rows come out in ascending lexicographic order, which is what makes
    ``argmax``'s first-hit tie-break deterministic and reproducible.
    """
    key = (total, parts)
    hit = _cache.get(key)
    if hit is not None:
        return hit
    if parts == 1:
        out = np.array([[total]], dtype=np.int64)
    else:
        blocks = []
        for first in range(total + 1):
            rest = _compositions(total - first, parts - 1, _cache)
            block = np.empty((rest.shape[0], parts), dtype=np.int64)
            block[:, 0] = first
            block[:, 1:] = rest
            blocks.append(block)
        out = np.vstack(blocks)
    _cache[key] = out
    return out


def _feasible_point(game: GameSpec, y: np.ndarray) -> bool:
    return all(con.value(y) <= FEAS_EPS for con in game.constraints)


def oracle_solve(
    game: GameSpec, resolution: int = 200, refine_iters: int = 2000, seed: int = 0
) -> OracleSolution:
    """Solve ``max p(x)`` over the feasible simplex, independently of the dynamics.

    Phase 1 enumerates every composition of ``primal_mass`` into ``n`` parts
    of size ``primal_mass / resolution`` and keeps the feasible point with
    the largest potential (ties: lexicographically smallest grid vector).
    Phase 2 refines it by mass-preserving random perturbations with a
    geometrically shrinking step, accepting only feasible improvements.  The
    reported ``gap`` is the potential variation over the final search
    neighborhood, so ``value + gap`` serves as a locally certified upper
    bound for consumers such as the dual-mass bound.
    """
    if game.potential is None:
        raise UnsupportedOperationError("oracle needs a potential to maximize")
    if game.n > 6:
        raise ConfigurationError("grid oracle is limited to at most 6 strategies")
    if resolution < 1 or refine_iters < 0:
        raise ConfigurationError("resolution must be >= 1 and refine_iters >= 0")
    n_points = math.comb(resolution + game.n - 1, game.n - 1)
    if n_points > MAX_GRID_POINTS:
        raise ConfigurationError(
            f"grid would have {n_points} points (cap {MAX_GRID_POINTS}); lower the resolution"
        )

    counts = _compositions(resolution, game.n, {})
    X = counts * (game.primal_mass / resolution)
    feasible = np.ones(len(X), dtype=bool)
    for con in game.constraints:
        feasible &= con.value_batch(X) <= FEAS_EPS
    idx = np.flatnonzero(feasible)
    if idx.size == 0:
        raise InfeasibleInstanceError(
            f"no feasible point on the resolution-{resolution} grid; raise the resolution"
        )
    vals = game.potential.value_batch(X[idx])
    best = int(np.argmax(vals))
    x_best = np.array(X[idx[best]])
    p_best = float(vals[best])

    rng = np.random.default_rng(seed)
    step = game.primal_mass / resolution
    floor = 1e-6 * game.primal_mass
    decay = (floor / step) ** (1.0 / refine_iters) if (refine_iters and step > floor) else 1.0
    for _ in range(refine_iters):
        y = _perturb(rng, x_best, step, game.primal_mass)
        if y is not None and _feasible_point(game, y):
            p_y = game.potential.value(y)
            if p_y > p_best:
                x_best, p_best = y, p_y
        step *= decay

    gap = 0.0
    for _ in range(64):
        y = _perturb(rng, x_best, step, game.primal_mass)
        if y is not None and _feasible_point(game, y):
            gap = max(gap, abs(game.potential.value(y) - p_best))

    return OracleSolution(PrimalState(x_best, game.primal_mass), p_best, gap)


def _perturb(
    rng: np.random.Generator, x: np.ndarray, step: float, mass: float
) -> Optional[np.ndarray]:
    """Random mass-preserving move of size ``step``, clipped back onto the simplex."""
    z = rng.standard_normal(x.size)
    z -= z.mean()
    nz = np.linalg.norm(z)
    if nz < 1e-12:
        return None
    y = np.maximum(x + step * (z / nz), 0.0)
    total = y.sum()
    if total <= 0:
        return None
    return y * (mass / total)


def saddle_check(
    game: GameSpec,
    x_star: PrimalState,
    mu_star: DualState,
    samples: int = 1000,
    seed: int = 0,
) -> SaddleCheck:
    """Sampled test of ``L(x, mu*) <= L(x*, mu*) <= L(x*, mu)``.

    Returns the largest observed violation on each side (values can be
    negative when the inequality holds strictly at every sample).  With
    ``samples == 0`` both violations are reported as 0 with a warning.
    """
    if samples < 0:
        raise ConfigurationError("samples must be nonnegative")
    if samples == 0:
        warnings.warn("saddle_check called with samples=0: nothing was tested")
        return SaddleCheck(0.0, 0.0)
    l_star = core.lagrangian(game, x_star, mu_star)
    rng = np.random.default_rng(seed)
    primal_violation = -math.inf
    dual_violation = -math.inf
    for _ in range(samples):
        x = PrimalState(core._uniform_simplex(rng, game.n, game.primal_mass), game.primal_mass)
        mu = DualState(core._uniform_simplex(rng, game.q + 1, game.dual_mass), game.dual_mass)
        primal_violation = max(primal_violation, core.lagrangian(game, x, mu_star) - l_star)
        dual_violation = max(dual_violation, l_star - core.lagrangian(game, x_star, mu))
    return SaddleCheck(float(primal_violation), float(dual_violation))
