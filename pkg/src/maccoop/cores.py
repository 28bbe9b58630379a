"""Partition-form cores: demand construction, LP feasibility, certificates.

A coalition's demand is its equilibrium utility under an expectation
about how outsiders arrange themselves: rational (outsiders maximize
their own total), merging (one outside block), cautious (worst case over
outside arrangements), singleton (outsiders stay alone).  The core for a
model is the feasible set of

    sum_{i in S} x_i >= demand(S)  for every proper nonempty S,
    sum_i x_i = v(grand coalition),

checked with one LP that maximizes the minimum constraint slack.  The
same LP read the other way gives the least core (epsilon* = -max min
slack).  When the core is empty a balanced collection of weights whose
weighted demands exceed the grand-coalition value is extracted as an
emptiness certificate and validated before it is returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog

from ._exact_lp import exact_lp_max
from .equilibrium import SOLVER_TOL, UtilityTable, ne_utilities, utility_table
from .errors import InvalidArgument, NumericalFailure
from .model import Coalition, Partition, Scenario, enumerate_partitions

CORE_MAX_USERS = 10
RATIONAL_MAX_OUTSIDERS = 8  # Bell-number guard for outside enumerations

#: |max-min-slack| below which the exact-arithmetic cross-check runs (K <= 5).
_DEGENERACY_BAND = 1e-7
_EXACT_GRID = 10**12


class ExpectationModel(str, Enum):
    RATIONAL = "rational"
    MERGING = "merging"
    CAUTIOUS = "cautious"
    SINGLETON = "singleton"


@dataclass(frozen=True)
class BalancedCertificate:
    """Balanced weights proving core emptiness.

    ``weights[mask]`` is the weight on that coalition; for every player
    the weights of the coalitions containing them sum to one, and the
    weighted demand total exceeds the grand-coalition value by
    ``margin`` > 0.
    """

    weights: dict[int, float]
    margin: float


@dataclass(frozen=True)
class CoreResult:
    verdict: str  # "nonempty" | "empty"
    allocation: np.ndarray | None
    certificate: BalancedCertificate | None
    slack: float | None

    @property
    def nonempty(self) -> bool:
        return self.verdict == "nonempty"


@dataclass(frozen=True)
class LeastCoreResult:
    epsilon_star: float
    allocation: np.ndarray


# ---------------------------------------------------------------------------
# demands


def _partitions_of(members: tuple[int, ...]):
    """All partitions of an arbitrary user subset, canonical order."""
    if not members:
        yield ()
        return
    for part in enumerate_partitions(len(members)):
        yield tuple(
            Coalition.from_members(members[i - 1] for i in block) for block in part.blocks
        )


def _values_for(scenario: Scenario, partition: Partition,
                table: UtilityTable | None, solver_tol: float) -> dict[int, float]:
    if table is not None:
        return table.partition_values(partition)
    return ne_utilities(scenario, partition, solver_tol=solver_tol)


def coalition_demand(
    scenario: Scenario,
    coalition: Coalition,
    model: ExpectationModel,
    *,
    table: UtilityTable | None = None,
    solver_tol: float = SOLVER_TOL,
) -> float:
    """Equilibrium utility a deviating coalition expects, per the model.

    Rational enumerates every arrangement of the outsiders, keeps those
    maximizing the outsiders' total utility, and among ties returns the
    smallest value for the deviator (conservative, deterministic).
    Cautious takes the worst case over arrangements; merging and
    singleton fix one arrangement each.
    """
    k = scenario.k
    grand = (1 << k) - 1
    if coalition.mask == grand or not 0 < coalition.mask < grand:
        raise InvalidArgument("demands are defined for proper nonempty coalitions")
    outside = tuple(u for u in range(1, k + 1) if u not in coalition)
    model = ExpectationModel(model)

    if model is ExpectationModel.MERGING:
        part = Partition(k, (coalition, Coalition.from_members(outside)))
        return _values_for(scenario, part, table, solver_tol)[coalition.mask]
    if model is ExpectationModel.SINGLETON:
        blocks = (coalition,) + tuple(Coalition.from_members([u]) for u in outside)
        part = Partition(k, blocks)
        return _values_for(scenario, part, table, solver_tol)[coalition.mask]

    if len(outside) > RATIONAL_MAX_OUTSIDERS:
        raise InvalidArgument(
            f"{len(outside)} outsiders exceed the enumeration cap {RATIONAL_MAX_OUTSIDERS}"
        )
    best_external = -math.inf
    demand = math.inf
    for arrangement in _partitions_of(outside):
        part = Partition(k, (coalition,) + arrangement)
        values = _values_for(scenario, part, table, solver_tol)
        own = values[coalition.mask]
        if model is ExpectationModel.CAUTIOUS:
            demand = min(demand, own)
            continue
        external = sum(values[b.mask] for b in arrangement)
        tie_tol = 1e-12 * max(1.0, abs(external), abs(best_external))
        if best_external == -math.inf or external > best_external + tie_tol:
            best_external = external
            demand = own
        elif external >= best_external - tie_tol:
            demand = min(demand, own)
    return demand


def demand_vector(
    scenario: Scenario,
    model: ExpectationModel,
    *,
    table: UtilityTable | None = None,
    solver_tol: float = SOLVER_TOL,
) -> dict[int, float]:
    """Demand of every proper nonempty coalition, keyed by mask."""
    model = ExpectationModel(model)
    if table is None and model in (ExpectationModel.RATIONAL, ExpectationModel.CAUTIOUS):
        # every outside arrangement shows up as a full partition, so one
        # table pass is cheaper than per-coalition enumeration
        table = utility_table(scenario, solver_tol=solver_tol)
    grand = (1 << scenario.k) - 1
    return {
        mask: coalition_demand(scenario, Coalition(mask), model,
                               table=table, solver_tol=solver_tol)
        for mask in range(1, grand)
    }


def grand_value(scenario: Scenario, *, table: UtilityTable | None = None,
                solver_tol: float = SOLVER_TOL) -> float:
    """Utility of the grand coalition (its interference-free maximum rate)."""
    part = Partition.grand(scenario.k)
    grand = Coalition((1 << scenario.k) - 1)
    return _values_for(scenario, part, table, solver_tol)[grand.mask]


# ---------------------------------------------------------------------------
# the core LP


def _solve_slack_lp(demands: dict[int, float], v_k: float, k: int):
    """max t s.t. sum_{i in S} x_i - t >= d_S, sum x = v_k.

    Returns (x, t).  The allocation maximizes the minimum constraint
    slack, so a feasible core yields a strictly interior witness when
    one exists.
    """
    masks = sorted(demands)
    n = k + 1
    a_ub = np.zeros((len(masks), n))
    b_ub = np.zeros(len(masks))
    for r, mask in enumerate(masks):
        for i in range(k):
            if mask >> i & 1:
                a_ub[r, i] = -1.0
        a_ub[r, k] = 1.0
        b_ub[r] = -demands[mask]
    a_eq = np.zeros((1, n))
    a_eq[0, :k] = 1.0
    b_eq = [v_k]
    c = np.zeros(n)
    c[k] = -1.0
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                  bounds=[(None, None)] * n, method="highs")
    if res.status != 0:
        raise NumericalFailure(f"core LP failed: {res.message} (status {res.status})")
    return res.x[:k].copy(), float(res.x[k])


def _solve_balanced_lp(demands: dict[int, float], k: int):
    """max sum lambda_S d_S over balanced weights; returns (weights, value)."""
    masks = sorted(demands)
    a_eq = np.zeros((k, len(masks)))
    for c_idx, mask in enumerate(masks):
        for i in range(k):
            if mask >> i & 1:
                a_eq[i, c_idx] = 1.0
    c = -np.array([demands[m] for m in masks])
    res = linprog(c, A_eq=a_eq, b_eq=np.ones(k), bounds=[(0.0, 1.0)] * len(masks),
                  method="highs")
    if res.status != 0:
        raise NumericalFailure(f"balancedness LP failed: {res.message} (status {res.status})")
    weights = {m: float(w) for m, w in zip(masks, res.x) if w > 1e-15}
    return weights, float(-res.fun)


def _exact_nonempty(demands: dict[int, float], v_k: float, k: int, tol_lp: float) -> bool:
    """Exact-arithmetic verdict on demands rounded to a 1e-12 grid."""
    def grid(x: float) -> Fraction:
        return Fraction(round(x * _EXACT_GRID), _EXACT_GRID)

    masks = sorted(demands)
    a_ub = []
    b_ub = []
    for mask in masks:
        row = [Fraction(-1) if mask >> i & 1 else Fraction(0) for i in range(k)]
        row.append(Fraction(1))
        a_ub.append(row)
        b_ub.append(-grid(demands[mask]))
    a_eq = [[Fraction(1)] * k + [Fraction(0)]]
    c = [Fraction(0)] * k + [Fraction(1)]
    status, value, _ = exact_lp_max(c, a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=[grid(v_k)])
    if status != "optimal":
        raise NumericalFailure(f"exact cross-check LP returned {status}")
    return value >= -grid(tol_lp)


def validate_certificate(cert: BalancedCertificate, demands: dict[int, float],
                         v_k: float, k: int, tol: float = 1e-9) -> None:
    """Raise unless the weights are balanced and genuinely violating."""
    for i in range(k):
        cover = sum(w for m, w in cert.weights.items() if m >> i & 1)
        if abs(cover - 1.0) > tol:
            raise NumericalFailure(f"certificate not balanced at player {i + 1}: {cover}")
    if any(w < -tol or w > 1.0 + tol for w in cert.weights.values()):
        raise NumericalFailure("certificate weights outside [0, 1]")
    margin = sum(w * demands[m] for m, w in cert.weights.items()) - v_k
    if not margin > tol:
        raise NumericalFailure(f"certificate margin {margin} not positive")
    if abs(margin - cert.margin) > 1e-6 * max(1.0, abs(margin)):
        raise NumericalFailure("certificate margin inconsistent with weights")


def check_core_from_demands(demands: dict[int, float], v_k: float, k: int,
                            *, tol_lp: float = 1e-9) -> CoreResult:
    """Core feasibility from precomputed demands (order-independent)."""
    if set(demands) != set(range(1, (1 << k) - 1)):
        raise InvalidArgument("demands must cover every proper nonempty coalition")
    x, t = _solve_slack_lp(demands, v_k, k)
    nonempty = t >= -tol_lp
    if k <= 5 and abs(t) < _DEGENERACY_BAND:
        nonempty = _exact_nonempty(demands, v_k, k, tol_lp)
    if nonempty:
        worst = min(sum(x[i] for i in range(k) if m >> i & 1) - d for m, d in demands.items())
        if worst < -tol_lp or abs(x.sum() - v_k) > tol_lp * max(1.0, abs(v_k)):
            raise NumericalFailure("witness fails post-validation")
        return CoreResult("nonempty", x, None, float(t))
    weights, value = _solve_balanced_lp(demands, k)
    cert = BalancedCertificate(weights, float(value - v_k))
    validate_certificate(cert, demands, v_k, k, tol=max(tol_lp, 1e-9))
    return CoreResult("empty", None, cert, float(t))


def check_core(
    scenario: Scenario,
    model: ExpectationModel,
    *,
    tol_lp: float = 1e-9,
    table: UtilityTable | None = None,
    solver_tol: float = SOLVER_TOL,
) -> CoreResult:
    """Decide stability of full cooperation under an expectation model.

    Nonempty verdicts come with a witness allocation of the
    grand-coalition utility that meets every demand (maximizing the
    minimum slack); empty verdicts come with a validated balanced
    certificate.  Exactly one of the two is present.
    """
    if scenario.k > CORE_MAX_USERS:
        raise InvalidArgument(f"core checks are capped at {CORE_MAX_USERS} users")
    demands = demand_vector(scenario, model, table=table, solver_tol=solver_tol)
    v_k = grand_value(scenario, table=table, solver_tol=solver_tol)
    return check_core_from_demands(demands, v_k, scenario.k, tol_lp=tol_lp)


def least_core_from_demands(demands: dict[int, float], v_k: float, k: int) -> LeastCoreResult:
    x, t = _solve_slack_lp(demands, v_k, k)
    return LeastCoreResult(float(-t), x)


def least_core(
    scenario: Scenario,
    model: ExpectationModel,
    *,
    tol_lp: float = 1e-9,
    table: UtilityTable | None = None,
    solver_tol: float = SOLVER_TOL,
) -> LeastCoreResult:
    """Smallest uniform demand relaxation that admits an allocation.

    Solves min epsilon subject to sum_{i in S} x_i >= demand(S) - epsilon
    for every proper coalition and sum x = v(grand); epsilon* <= 0 means
    the unrelaxed core is nonempty.  The allocation returned attains the
    optimum.
    """
    if scenario.k > CORE_MAX_USERS:
        raise InvalidArgument(f"core checks are capped at {CORE_MAX_USERS} users")
    demands = demand_vector(scenario, model, table=table, solver_tol=solver_tol)
    v_k = grand_value(scenario, table=table, solver_tol=solver_tol)
    return least_core_from_demands(demands, v_k, scenario.k)


def balancedness_certificate(
    scenario: Scenario,
    model: ExpectationModel,
    *,
    tol_lp: float = 1e-9,
    table: UtilityTable | None = None,
    solver_tol: float = SOLVER_TOL,
) -> BalancedCertificate | None:
    """The emptiness certificate, or None when the core is nonempty."""
    result = check_core(scenario, model, tol_lp=tol_lp, table=table, solver_tol=solver_tol)
    return result.certificate


# ---------------------------------------------------------------------------
# 3-user core region


def region_from_demands(demands: dict[int, float], v_k: float,
                        *, tol: float = 1e-9) -> list[tuple[float, float, float]]:
    """Vertices of the 3-user core polygon on the plane x1+x2+x3 = v_k.

    Intersects the six proper-coalition half-planes with the efficiency
    plane, working in (x1, x2).  Vertices come back counterclockwise;
    an empty list means an empty core, a single entry a degenerate
    (point) core.
    """
    d1, d2, d3 = demands[0b001], demands[0b010], demands[0b100]
    d12, d13, d23 = demands[0b011], demands[0b101], demands[0b110]
    # (a, b, c, sense) encodes a*x1 + b*x2 <sense> c with sense +1 for >=
    lines = [
        (1.0, 0.0, d1, +1),
        (0.0, 1.0, d2, +1),
        (1.0, 1.0, v_k - d3, -1),
        (1.0, 1.0, d12, +1),
        (0.0, 1.0, v_k - d13, -1),
        (1.0, 0.0, v_k - d23, -1),
    ]

    def feasible(x1: float, x2: float) -> bool:
        for a, b, c, sense in lines:
            val = a * x1 + b * x2
            if sense > 0 and val < c - tol:
                return False
            if sense < 0 and val > c + tol:
                return False
        return True

    points: list[tuple[float, float]] = []
    for i in range(len(lines)):
        for j in range(i + 1, len(lines)):
            a1, b1, c1, _ = lines[i]
            a2, b2, c2, _ = lines[j]
            det = a1 * b2 - a2 * b1
            if abs(det) < 1e-12:
                continue
            x1 = (c1 * b2 - c2 * b1) / det
            x2 = (a1 * c2 - a2 * c1) / det
            if feasible(x1, x2):
                points.append((x1, x2))
    # dedupe
    unique: list[tuple[float, float]] = []
    for p in points:
        if all(abs(p[0] - q[0]) > 1e-9 or abs(p[1] - q[1]) > 1e-9 for q in unique):
            unique.append(p)
    if not unique:
        return []
    if len(unique) > 2:
        cx = sum(p[0] for p in unique) / len(unique)
        cy = sum(p[1] for p in unique) / len(unique)
        unique.sort(key=lambda p: math.atan2(p[1] - cy, p[0] - cx))
    return [(x1, x2, v_k - x1 - x2) for x1, x2 in unique]


def core_region_3user(
    scenario: Scenario,
    model: ExpectationModel,
    *,
    table: UtilityTable | None = None,
    solver_tol: float = SOLVER_TOL,
) -> list[tuple[float, float, float]]:
    """Core polygon of a 3-user game (empty list when the core is empty)."""
    if scenario.k != 3:
        raise InvalidArgument("the core region is defined for exactly 3 users")
    demands = demand_vector(scenario, model, table=table, solver_tol=solver_tol)
    v_k = grand_value(scenario, table=table, solver_tol=solver_tol)
    return region_from_demands(demands, v_k)
