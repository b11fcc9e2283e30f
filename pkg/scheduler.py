"""Cost evaluation and per-customer DSM optimization."""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import comb

import config
from model import (
    Appliance,
    Customer,
    DimensionMismatchError,
    Flexibility,
    PenaltySchedule,
    Schedule,
    Tariff,
    TimeGrid,
    ValidationError,
    check_feasibility,
    gross_load_profile,
    net_load_profile,
    on_slot_vector,
)

logger = logging.getLogger(__name__)


class InfeasibleBaselineError(ValueError):
    """The customer's baseline schedule violates its own constraints."""


class SearchSpaceTooLargeError(ValueError):
    """Exhaustive enumeration would exceed the configured cap."""


class OptimizerError(RuntimeError):
    """Internal optimizer invariant broken (e.g. objective increased)."""


@dataclass(frozen=True)
class CostBreakdown:
    electricity_cents: float
    penalty_cents: float
    per_appliance_shift_slots: Dict[str, int] = field(default_factory=dict)

    @property
    def total_cents(self) -> float:
        return self.electricity_cents + self.penalty_cents


@dataclass(frozen=True)
class OptimizerConfig:
    """
    Block-coordinate descent settings.

    Flexible appliances are visited by descending rating, ties by id.
    """

    max_passes: int = config.OPTIMIZER_MAX_PASSES
    improvement_epsilon: float = config.OPTIMIZER_EPSILON
    tie_tolerance: float = config.COST_TIE_TOLERANCE

    def __post_init__(self):
        if self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")
        if self.improvement_epsilon <= 0:
            raise ValueError("improvement_epsilon must be > 0")

    @staticmethod
    def appliance_order(appliances: Sequence[Appliance]) -> List[int]:
        """Flexible appliance indices, largest rating first."""
        flexible = [i for i, a in enumerate(appliances) if a.is_flexible]
        return sorted(flexible, key=lambda i: (-appliances[i].rating_kw, appliances[i].id))


def _check_tariff(tariff: Tariff, num_slots: int) -> None:
    if len(tariff) != num_slots:
        raise DimensionMismatchError(f"Tariff has {len(tariff)} slots, schedule has {num_slots}")


def electricity_cost(schedule: Schedule, customer: Customer, tariff: Tariff,
                     slot_hours: float = config.SLOT_HOURS) -> float:
    """slot_hours * sum_t net_load(t) * price(t), in cents."""
    _check_tariff(tariff, schedule.num_slots)
    net = net_load_profile(schedule, customer)
    return float(slot_hours * np.dot(net, tariff.price_cents_per_kwh))


def shift_duration(appliance: Appliance, new_on_slots: Sequence[int]) -> int:
    """Sum of |new - baseline| over rank-paired on-slots."""
    new = np.asarray(new_on_slots, dtype=int)
    if len(new) != appliance.duration_slots:
        raise ValidationError(
            f"Appliance {appliance.id}: {len(new)} on-slots given, expected {appliance.duration_slots}",
            entity=appliance.id, field='schedule')
    return int(np.abs(new - np.asarray(appliance.baseline_on_slots)).sum())


def shift_durations(schedule: Schedule, customer: Customer) -> Dict[str, int]:
    """Shift duration of every appliance in the schedule, by appliance id."""
    return {
        appliance.id: shift_duration(appliance, on_slot_vector(schedule, index, appliance))
        for index, appliance in enumerate(customer.appliances)
    }


def _penalty_for_shifts(customer: Customer, shifts: Dict[str, int], penalties: PenaltySchedule,
                        slot_hours: float) -> float:
    return float(sum(
        slot_hours * penalties.price_for(a.criticality) * a.rating_kw * shifts[a.id]
        for a in customer.appliances
    ))


def penalty_cost(schedule: Schedule, customer: Customer, penalties: PenaltySchedule,
                 slot_hours: float = config.SLOT_HOURS) -> float:
    """Discomfort cost of the shifts in the schedule, in cents."""
    return _penalty_for_shifts(customer, shift_durations(schedule, customer), penalties, slot_hours)


def total_cost(schedule: Schedule, customer: Customer, tariff: Tariff,
               penalties: PenaltySchedule, slot_hours: float = config.SLOT_HOURS) -> CostBreakdown:
    """Electricity and penalty cost of the schedule, with the per-appliance shifts."""
    shifts = shift_durations(schedule, customer)
    return CostBreakdown(
        electricity_cents=electricity_cost(schedule, customer, tariff, slot_hours),
        penalty_cents=_penalty_for_shifts(customer, shifts, penalties, slot_hours),
        per_appliance_shift_slots=shifts,
    )


def _earliest_min(costs: np.ndarray, tolerance: float) -> Optional[int]:
    finite = np.isfinite(costs)
    if not finite.any():
        return None
    best = costs[finite].min()
    return int(np.flatnonzero(finite & (costs <= best + tolerance))[0])


class DSMOptimizer:
    """
    Per-customer block-coordinate descent over appliance placements.

    Each step holds every other appliance fixed and places one appliance
    exactly: uninterruptible appliances by enumerating starts, interruptible
    ones by a dynamic program over (slot, rank).
    """

    def __init__(self, customer: Customer, tariff: Tariff, penalties: PenaltySchedule,
                 optimizer_config: Optional[OptimizerConfig] = None,
                 slot_hours: float = config.SLOT_HOURS):
        self.customer = customer
        self.tariff = tariff
        self.penalties = penalties
        self.config = optimizer_config or OptimizerConfig()
        self.slot_hours = slot_hours
        self.num_slots = len(tariff)
        self.price = tariff.price_cents_per_kwh
        self.pv = customer.pv_output_kw(self.num_slots)
        self.ratings = customer.ratings_kw

    def marginal_costs(self, others_gross: np.ndarray, rating_kw: float) -> np.ndarray:
        """
        Exact electricity cost of adding rating_kw at each slot given the
        rest of the load; infeasible slots (MD) are +inf.
        """
        with_appliance = np.maximum(others_gross + rating_kw - self.pv, 0.0)
        without = np.maximum(others_gross - self.pv, 0.0)
        marginal = self.slot_hours * self.price * (with_appliance - without)
        over_md = others_gross + rating_kw > self.customer.max_demand_kw + config.FEASIBILITY_TOLERANCE_KW
        return np.where(over_md, np.inf, marginal)

    def _shift_price(self, appliance: Appliance) -> float:
        return self.slot_hours * self.penalties.price_for(appliance.criticality) * appliance.rating_kw

    def place_uninterruptible(self, appliance: Appliance, marginal: np.ndarray) -> Tuple[int, ...]:
        D = appliance.duration_slots
        starts = np.arange(appliance.window_start, appliance.window_end - D + 2)
        window = marginal[appliance.window_start - 1:appliance.window_end]
        # Sliding sum of D consecutive marginals; inf propagates.
        block = np.lib.stride_tricks.sliding_window_view(window, D).sum(axis=1)
        shift = D * np.abs(starts - appliance.baseline_on_slots[0])
        costs = block + self._shift_price(appliance) * shift
        best = _earliest_min(costs, self.config.tie_tolerance)
        if best is None:
            raise OptimizerError(f"Customer {self.customer.id}: no feasible placement for appliance {appliance.id}")
        start = int(starts[best])
        return tuple(range(start, start + D))

    def place_interruptible(self, appliance: Appliance, marginal: np.ndarray) -> Tuple[int, ...]:
        D = appliance.duration_slots
        slots = np.arange(appliance.window_start, appliance.window_end + 1)
        window = marginal[appliance.window_start - 1:appliance.window_end]
        baseline = np.asarray(appliance.baseline_on_slots)
        # cost[k, i]: slot i taken as the k-th on-slot
        cost = window[None, :] + self._shift_price(appliance) * np.abs(slots[None, :] - baseline[:, None])

        # to_go[k, i]: best cost of ranks k..D-1 with rank k at slot i
        to_go = np.full_like(cost, np.inf)
        to_go[D - 1] = cost[D - 1]
        for k in range(D - 2, -1, -1):
            later = np.minimum.accumulate(to_go[k + 1][::-1])[::-1]
            best_after = np.append(later[1:], np.inf)
            to_go[k] = cost[k] + best_after

        chosen = []
        previous = -1
        for k in range(D):
            candidates = to_go[k].copy()
            candidates[:previous + 1] = np.inf
            index = _earliest_min(candidates, self.config.tie_tolerance)
            if index is None:
                raise OptimizerError(f"Customer {self.customer.id}: no feasible placement for appliance {appliance.id}")
            chosen.append(int(slots[index]))
            previous = index
        return tuple(chosen)

    def place(self, index: int, schedule: Schedule, gross: np.ndarray) -> Tuple[int, ...]:
        appliance = self.customer.appliances[index]
        others = gross - appliance.rating_kw * schedule.on[index]
        marginal = self.marginal_costs(others, appliance.rating_kw)
        if appliance.flexibility == Flexibility.SHIFTABLE_UNINTERRUPTIBLE:
            return self.place_uninterruptible(appliance, marginal)
        return self.place_interruptible(appliance, marginal)

    def cost(self, schedule: Schedule) -> CostBreakdown:
        """Cost of a schedule for this customer."""
        return total_cost(schedule, self.customer, self.tariff, self.penalties, self.slot_hours)

    def optimize(self) -> Tuple[Schedule, CostBreakdown]:
        schedule = self.customer.baseline_schedule(self.num_slots)
        violations = check_feasibility(schedule, self.customer)
        if violations:
            raise InfeasibleBaselineError(
                f"Customer {self.customer.id}: baseline infeasible ({violations[0].kind.value}"
                f" {violations[0].appliance_id or ''} {violations[0].detail})")

        order = self.config.appliance_order(self.customer.appliances)
        current = self.cost(schedule).total_cents
        for pass_number in range(1, self.config.max_passes + 1):
            before = current
            gross = gross_load_profile(schedule, self.customer)
            for index in order:
                slots = self.place(index, schedule, gross)
                schedule = schedule.with_row(index, slots)
                gross = gross_load_profile(schedule, self.customer)
            current = self.cost(schedule).total_cents
            # each exact step may accept a tie up to tie_tolerance worse
            if current > before + self.config.tie_tolerance * (len(order) + 1):
                raise OptimizerError(
                    f"Customer {self.customer.id}: objective rose from {before:.9f} to "
                    f"{current:.9f} in pass {pass_number}")
            logger.debug("Customer %s pass %d: %.6f -> %.6f cents",
                         self.customer.id, pass_number, before, current)
            if before - current < self.config.improvement_epsilon:
                break
        else:
            logger.warning("Customer %s: optimizer stopped at max_passes=%d",
                           self.customer.id, self.config.max_passes)

        return schedule, self.cost(schedule)


def optimize_customer(customer: Customer, tariff: Tariff, penalties: PenaltySchedule,
                      optimizer_config: Optional[OptimizerConfig] = None,
                      slot_hours: float = config.SLOT_HOURS) -> Tuple[Schedule, CostBreakdown]:
    return DSMOptimizer(customer, tariff, penalties, optimizer_config, slot_hours).optimize()


def candidate_placements(appliance: Appliance) -> List[Tuple[int, ...]]:
    """Every admissible on-slot tuple for the appliance, in lexicographic order."""
    if appliance.flexibility == Flexibility.FIXED:
        return [appliance.baseline_on_slots]
    window = range(appliance.window_start, appliance.window_end + 1)
    D = appliance.duration_slots
    if appliance.flexibility == Flexibility.SHIFTABLE_UNINTERRUPTIBLE:
        return [tuple(range(s, s + D)) for s in range(appliance.window_start, appliance.window_end - D + 2)]
    return list(itertools.combinations(window, D))


def placement_count(appliance: Appliance) -> int:
    if appliance.flexibility == Flexibility.FIXED:
        return 1
    if appliance.flexibility == Flexibility.SHIFTABLE_UNINTERRUPTIBLE:
        return appliance.window_width - appliance.duration_slots + 1
    return int(comb(appliance.window_width, appliance.duration_slots, exact=True))


def search_space_size(customer: Customer) -> int:
    size = 1
    for appliance in customer.appliances:
        size *= placement_count(appliance)
    return size


def brute_force_optimal(customer: Customer, tariff: Tariff, penalties: PenaltySchedule,
                        search_cap: int = config.BRUTE_FORCE_SEARCH_CAP,
                        slot_hours: float = config.SLOT_HOURS) -> Tuple[Schedule, CostBreakdown]:
    """
    Globally optimal schedule by exhaustive enumeration; ties go to the
    lexicographically first joint placement.
    """
    size = search_space_size(customer)
    if size > search_cap:
        raise SearchSpaceTooLargeError(
            f"Customer {customer.id}: {size} joint placements exceed cap {search_cap}")

    T = len(tariff)
    price = tariff.price_cents_per_kwh
    pv = customer.pv_output_kw(T)
    appliances = customer.appliances
    if not appliances:
        schedule = Schedule(np.zeros((0, T), dtype=np.int8))
        return schedule, total_cost(schedule, customer, tariff, penalties, slot_hours)

    # Per appliance: candidate on-slot tuples, their load rows and penalties.
    candidates, loads, penalties_by_candidate = [], [], []
    for appliance in appliances:
        options = candidate_placements(appliance)
        matrix = np.zeros((len(options), T))
        for row, slots in enumerate(options):
            matrix[row, np.asarray(slots) - 1] = appliance.rating_kw
        shift = np.array([np.abs(np.asarray(s) - np.asarray(appliance.baseline_on_slots)).sum()
                          for s in options])
        candidates.append(options)
        loads.append(matrix)
        penalties_by_candidate.append(
            slot_hours * penalties.price_for(appliance.criticality) * appliance.rating_kw * shift)

    limit = customer.max_demand_kw + config.FEASIBILITY_TOLERANCE_KW
    best_cost, best_choice = np.inf, None
    head_ranges = [range(len(c)) for c in candidates[:-1]]
    for head in itertools.product(*head_ranges):
        partial = np.zeros(T)
        partial_penalty = 0.0
        for a, choice in enumerate(head):
            partial = partial + loads[a][choice]
            partial_penalty += penalties_by_candidate[a][choice]
        if (partial > limit).any():
            continue
        # The last appliance is evaluated for all its candidates at once.
        gross = partial[None, :] + loads[-1]
        feasible = (gross <= limit).all(axis=1)
        net = np.maximum(gross - pv[None, :], 0.0)
        costs = slot_hours * net @ price + penalties_by_candidate[-1] + partial_penalty
        costs = np.where(feasible, costs, np.inf)
        tail = int(np.argmin(costs))
        if costs[tail] < best_cost - config.COST_TIE_TOLERANCE:
            best_cost, best_choice = costs[tail], head + (tail,)

    if best_choice is None:
        raise InfeasibleBaselineError(f"Customer {customer.id}: no feasible joint placement")
    schedule = Schedule.from_on_slots(
        [candidates[a][c] for a, c in enumerate(best_choice)], T)
    return schedule, total_cost(schedule, customer, tariff, penalties, slot_hours)


def optimality_gap(heuristic_total: float, optimal_total: float) -> float:
    """Relative excess of a descent total over the oracle total."""
    if optimal_total <= 0:
        return 0.0 if heuristic_total <= optimal_total + config.COST_TIE_TOLERANCE else float('inf')
    return (heuristic_total - optimal_total) / optimal_total


def schedule_customers(customers: Sequence[Customer], tariffs, penalties,
                       time_grid: TimeGrid, participants,
                       optimizer_config: Optional[OptimizerConfig] = None):
    """
    Optimize every participating customer; others keep their baselines.

    tariffs/penalties map CustomerKind to Tariff/PenaltySchedule.
    Returns {customer_id: (baseline, optimized, baseline_cost, optimized_cost)}.
    """
    results = {}
    T = time_grid.slots_per_day
    for customer in customers:
        tariff = tariffs[customer.kind]
        penalty = penalties[customer.kind]
        baseline = customer.baseline_schedule(T)
        baseline_cost = total_cost(baseline, customer, tariff, penalty, time_grid.slot_hours)
        if customer.id in participants:
            optimized, optimized_cost = optimize_customer(
                customer, tariff, penalty, optimizer_config, time_grid.slot_hours)
        else:
            optimized, optimized_cost = baseline, baseline_cost
        results[customer.id] = (baseline, optimized, baseline_cost, optimized_cost)
    return results
