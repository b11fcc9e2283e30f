"""Study metrics: PV utilization, voltage deviation, cost savings and losses."""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import config
from model import (
    Criticality,
    Customer,
    CustomerKind,
    PenaltySchedule,
    Schedule,
    Tariff,
    area_customers,
    gross_load_profile,
)
from powerflow import LoadFlowSolution, daily_energy_loss_kwh
from scheduler import CostBreakdown, shift_duration

logger = logging.getLogger(__name__)


class UndefinedMetricError(ValueError):
    """The metric has no meaningful value for the given inputs."""


@dataclass(frozen=True)
class VoltageDeviation:
    sum_abs_dev: float
    max_v: float
    max_location: Tuple[int, int]  # (bus, slot)
    min_v: float
    min_location: Tuple[int, int]


@dataclass
class MetricsSummary:
    pv_utilization_pct: Dict[str, Optional[float]]
    total_cost_cents: Dict[str, float]
    area_cost_cents: Dict[str, float]
    cost_reduction_pct: Dict[str, Optional[float]]
    area_cost_reduction_pct: Dict[str, Optional[float]]
    daily_loss_kwh: float
    baseline_daily_loss_kwh: float
    loss_reduction_pct: Optional[float]
    max_voltage_pu: float
    max_voltage_location: Tuple[int, int]
    min_voltage_pu: float
    min_voltage_location: Tuple[int, int]
    voltage_deviation: float
    commercial_bus_peak_voltage_pu: Optional[float] = None
    no_pv_daily_loss_kwh: Optional[float] = None
    loss_reduction_vs_no_pv_pct: Optional[float] = None
    extra: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            'pv_utilization_pct': self.pv_utilization_pct,
            'total_cost_cents': self.total_cost_cents,
            'area_cost_cents': self.area_cost_cents,
            'cost_reduction_pct': self.cost_reduction_pct,
            'area_cost_reduction_pct': self.area_cost_reduction_pct,
            'daily_loss_kwh': self.daily_loss_kwh,
            'baseline_daily_loss_kwh': self.baseline_daily_loss_kwh,
            'loss_reduction_pct': self.loss_reduction_pct,
            'max_voltage_pu': self.max_voltage_pu,
            'max_voltage_location': {'bus': self.max_voltage_location[0], 'slot': self.max_voltage_location[1]},
            'min_voltage_pu': self.min_voltage_pu,
            'min_voltage_location': {'bus': self.min_voltage_location[0], 'slot': self.min_voltage_location[1]},
            'voltage_deviation': self.voltage_deviation,
            'commercial_bus_peak_voltage_pu': self.commercial_bus_peak_voltage_pu,
            'no_pv_daily_loss_kwh': self.no_pv_daily_loss_kwh,
            'loss_reduction_vs_no_pv_pct': self.loss_reduction_vs_no_pv_pct,
            **self.extra,
        }


def pv_energy_split(customers: Sequence[Customer], schedules: Mapping[str, Schedule]) -> Tuple[float, float]:
    """(locally consumed PV, generated PV), both in kW-slots."""
    used, generated = 0.0, 0.0
    for customer in customers:
        schedule = schedules[customer.id]
        pv = customer.pv_output_kw(schedule.num_slots)
        gross = gross_load_profile(schedule, customer)
        used += float(np.minimum(gross, pv).sum())
        generated += float(pv.sum())
    return used, generated


def pv_utilization(customers: Sequence[Customer], schedules: Mapping[str, Schedule]) -> float:
    """Share of generated PV energy consumed on site, in percent."""
    used, generated = pv_energy_split(customers, schedules)
    if generated <= 0:
        raise UndefinedMetricError("PV utilization is undefined: no PV generation")
    return 100.0 * used / generated


def pv_utilization_by_area(customers: Sequence[Customer],
                           schedules: Mapping[str, Schedule]) -> Dict[str, Optional[float]]:
    """PV utilization per customer kind and overall; None where no PV is generated."""
    areas = {kind.value: members for kind, members in area_customers(customers).items()}
    areas['overall'] = list(customers)
    result = {}
    for area, members in areas.items():
        try:
            result[area] = pv_utilization(members, schedules)
        except UndefinedMetricError:
            logger.warning("PV utilization undefined for area %s", area)
            result[area] = None
    return result


def voltage_deviation(day_solutions: Sequence[LoadFlowSolution],
                      slot_hours: float = config.SLOT_HOURS) -> VoltageDeviation:
    """Sum of |V - 1| * slot_hours over buses and slots, plus the extrema."""
    if not day_solutions:
        raise UndefinedMetricError("No load flow solutions")
    bad = [s.slot for s in day_solutions if not s.converged]
    if bad:
        raise UndefinedMetricError(f"Voltage deviation needs converged slots; slot {bad[0]} did not converge")

    total = 0.0
    max_v, min_v = -np.inf, np.inf
    max_at, min_at = (0, 0), (0, 0)
    for position, solution in enumerate(day_solutions):
        slot = solution.slot if solution.slot is not None else position + 1
        voltages = solution.bus_voltage_pu
        total += float(np.abs(voltages - config.SLACK_VOLTAGE_PU).sum() * slot_hours)
        hi, lo = int(np.argmax(voltages)), int(np.argmin(voltages))
        if voltages[hi] > max_v:
            max_v, max_at = float(voltages[hi]), (solution.bus_ids[hi], slot)
        if voltages[lo] < min_v:
            min_v, min_at = float(voltages[lo]), (solution.bus_ids[lo], slot)
    return VoltageDeviation(total, max_v, max_at, min_v, min_at)


def bus_voltage_series(day_solutions: Sequence[LoadFlowSolution], bus: int) -> np.ndarray:
    """Voltage magnitude at one bus, one entry per solved slot."""
    return np.array([s.voltage_at(bus) for s in day_solutions])


def peak_window_voltage(day_solutions: Sequence[LoadFlowSolution], bus: int, slots: Sequence[int]) -> float:
    """Highest voltage at bus over the given slots."""
    series = bus_voltage_series(day_solutions, bus)
    outside = [t for t in slots if t < 1 or t > len(series)]
    if not slots or outside:
        raise UndefinedMetricError(f"Peak window {list(slots)} does not fit {len(series)} solved slots")
    return float(max(series[t - 1] for t in slots))


def reduction_pct(baseline: float, new: float) -> Optional[float]:
    """Percentage drop from baseline to new; None when the baseline is not positive."""
    if baseline <= 0:
        return None
    return 100.0 * (baseline - new) / baseline


def cost_savings(baseline_costs: Mapping[str, CostBreakdown], optimized_costs: Mapping[str, CostBreakdown],
                 kinds: Mapping[str, CustomerKind]) -> Tuple[pd.DataFrame, Dict[str, Optional[float]]]:
    """
    Per-customer and per-area cost reductions.

    Area figures are computed from summed costs, not averaged percentages.
    A zero baseline gives a not-applicable (None) percentage.
    """
    rows = []
    for customer_id in baseline_costs:
        before = baseline_costs[customer_id].total_cents
        after = optimized_costs[customer_id].total_cents
        rows.append({
            'customer_id': customer_id,
            'kind': CustomerKind(kinds[customer_id]).value,
            'baseline_cents': before,
            'optimized_cents': after,
            'reduction_pct': reduction_pct(before, after),
            'penalty_cents': optimized_costs[customer_id].penalty_cents,
        })
    per_customer = pd.DataFrame(rows, columns=config.COSTS_COLUMNS)

    per_area = {}
    groups = {kind.value: per_customer[per_customer['kind'] == kind.value] for kind in CustomerKind}
    groups['overall'] = per_customer
    for area, group in groups.items():
        per_area[area] = reduction_pct(float(group['baseline_cents'].sum()), float(group['optimized_cents'].sum()))
    return per_customer, per_area


def area_costs(costs: Mapping[str, CostBreakdown], kinds: Mapping[str, CustomerKind]) -> Dict[str, float]:
    """Summed optimized cost per customer kind and overall, in cents."""
    totals = {kind.value: 0.0 for kind in CustomerKind}
    for customer_id, breakdown in costs.items():
        totals[CustomerKind(kinds[customer_id]).value] += breakdown.total_cents
    totals['overall'] = sum(totals[kind.value] for kind in CustomerKind)
    return totals


def loss_comparison(run_a_solutions: Sequence[LoadFlowSolution], run_b_solutions: Sequence[LoadFlowSolution],
                    slot_hours: float = config.SLOT_HOURS) -> float:
    """Percentage reduction of run b's daily energy loss relative to run a."""
    if len(run_a_solutions) != len(run_b_solutions):
        raise UndefinedMetricError("Runs have different slot counts")
    loss_a = daily_energy_loss_kwh(run_a_solutions, slot_hours)
    loss_b = daily_energy_loss_kwh(run_b_solutions, slot_hours)
    if loss_a <= 0:
        raise UndefinedMetricError("Reference run has zero loss")
    return 100.0 * (loss_a - loss_b) / loss_a


def criticality_breakdown(customer: Customer, baseline: Schedule, optimized: Schedule, tariff: Tariff,
                          penalties: PenaltySchedule, slot_hours: float = config.SLOT_HOURS) -> pd.DataFrame:
    """
    Shift activity per criticality tier.

    tariff_saving_cents prices each appliance on its own at the tariff,
    ignoring PV, so tiers can be compared.
    """
    price = tariff.price_cents_per_kwh
    rows = {tier: {'shifted_appliances': 0, 'shift_slots': 0, 'tariff_saving_cents': 0.0, 'penalty_cents': 0.0}
            for tier in Criticality}
    for index, appliance in enumerate(customer.appliances):
        if not appliance.is_flexible:
            continue
        before = np.flatnonzero(baseline.on[index]) + 1
        after = np.flatnonzero(optimized.on[index]) + 1
        delta = shift_duration(appliance, after)
        tier = rows[appliance.criticality]
        if delta > 0:
            tier['shifted_appliances'] += 1
        tier['shift_slots'] += delta
        tier['tariff_saving_cents'] += slot_hours * appliance.rating_kw * float(
            price[before - 1].sum() - price[after - 1].sum())
        tier['penalty_cents'] += slot_hours * penalties.price_for(appliance.criticality) * appliance.rating_kw * delta

    records = [
        {'customer_id': customer.id, 'criticality': tier.value,
         'penalty_cents_per_kwh': penalties.price_for(tier), **values}
        for tier, values in rows.items()
    ]
    return pd.DataFrame(records, columns=config.CRITICALITY_COLUMNS)


def summarize(customers: Sequence[Customer], baseline_schedules: Mapping[str, Schedule],
              optimized_schedules: Mapping[str, Schedule], baseline_costs: Mapping[str, CostBreakdown],
              optimized_costs: Mapping[str, CostBreakdown], baseline_solutions: Sequence[LoadFlowSolution],
              optimized_solutions: Sequence[LoadFlowSolution], slot_hours: float = config.SLOT_HOURS,
              commercial_bus: Optional[int] = None, peak_slots: Sequence[int] = (),
              no_pv_solutions: Optional[Sequence[LoadFlowSolution]] = None) -> MetricsSummary:
    """
    Headline figures for one run pair.

    The commercial-bus peak is reported only when a bus and a non-empty
    window of slots are given. no_pv_solutions, when given, is the optimized
    day of the same scenario without PV; the loss reduction of this run
    against it is reported alongside.
    """
    kinds = {c.id: c.kind for c in customers}
    _, per_area = cost_savings(baseline_costs, optimized_costs, kinds)
    deviation = voltage_deviation(optimized_solutions, slot_hours)
    baseline_loss = daily_energy_loss_kwh(baseline_solutions, slot_hours)
    optimized_loss = daily_energy_loss_kwh(optimized_solutions, slot_hours)

    commercial_peak = None
    if commercial_bus is not None and peak_slots and commercial_bus in optimized_solutions[0].bus_ids:
        commercial_peak = peak_window_voltage(optimized_solutions, commercial_bus, peak_slots)

    no_pv_loss, vs_no_pv = None, None
    if no_pv_solutions is not None:
        no_pv_loss = daily_energy_loss_kwh(no_pv_solutions, slot_hours)
        try:
            vs_no_pv = loss_comparison(no_pv_solutions, optimized_solutions, slot_hours)
        except UndefinedMetricError as e:
            logger.warning("Loss comparison against the no-PV run is undefined: %s", e)

    return MetricsSummary(
        pv_utilization_pct=pv_utilization_by_area(customers, optimized_schedules),
        total_cost_cents={cid: b.total_cents for cid, b in optimized_costs.items()},
        area_cost_cents=area_costs(optimized_costs, kinds),
        cost_reduction_pct={cid: reduction_pct(baseline_costs[cid].total_cents, optimized_costs[cid].total_cents)
                            for cid in baseline_costs},
        area_cost_reduction_pct=per_area,
        daily_loss_kwh=optimized_loss,
        baseline_daily_loss_kwh=baseline_loss,
        loss_reduction_pct=reduction_pct(baseline_loss, optimized_loss),
        max_voltage_pu=deviation.max_v,
        max_voltage_location=deviation.max_location,
        min_voltage_pu=deviation.min_v,
        min_voltage_location=deviation.min_location,
        voltage_deviation=deviation.sum_abs_dev,
        commercial_bus_peak_voltage_pu=commercial_peak,
        no_pv_daily_loss_kwh=no_pv_loss,
        loss_reduction_vs_no_pv_pct=vs_no_pv,
        extra={'baseline_pv_utilization_pct': pv_utilization_by_area(customers, baseline_schedules)},
    )
