"""Tests for PV utilization, voltage deviation, cost savings and loss metrics."""

import json
import math

import numpy as np
import pytest

from metrics import (
    UndefinedMetricError,
    area_costs,
    cost_savings,
    criticality_breakdown,
    loss_comparison,
    peak_window_voltage,
    pv_utilization,
    pv_utilization_by_area,
    reduction_pct,
    summarize,
    voltage_deviation,
)
from model import (
    Appliance,
    Criticality,
    Customer,
    CustomerKind,
    Flexibility,
    PenaltySchedule,
    PvProfile,
    Schedule,
    Tariff,
    TimeGrid,
)
from powerflow import Branch, Bus, FeederNetwork, LoadFlowSolution, daily_energy_loss_kwh, solve_day
from scheduler import CostBreakdown, schedule_customers

UNINT = Flexibility.SHIFTABLE_UNINTERRUPTIBLE


def stub_solution(voltages, slot, current=0.0, converged=True):
    """A solved slot on a chain 1-2-...-n with one unit-resistance branch per bus."""
    n = len(voltages)
    return LoadFlowSolution(
        bus_ids=tuple(range(1, n + 1)),
        voltage_pu=np.asarray(voltages, dtype=complex),
        branch_to_bus=tuple(range(2, n + 1)),
        branch_current_pu=np.array([current] + [0.0] * (n - 2), dtype=complex),
        branch_resistance_pu=np.ones(n - 1),
        s_base_kw=1.0,
        i_base_amp=1.0,
        converged=converged,
        iterations=1,
        root_branch_mask=np.array([True] + [False] * (n - 2)),
        slot=slot,
    )


def one_slot_customer(cid, gross_kw, pv_kw, kind='residential'):
    appliances = (Appliance('load', gross_kw, 1, 1, 1, Flexibility.FIXED, baseline_on_slots=(1,)),) if gross_kw else ()
    return Customer(id=cid, kind=kind, bus=2, appliances=appliances, max_demand_kw=10.0,
                    has_pv=True, pv=PvProfile([pv_kw]))


def baselines(customers, T=1):
    return {c.id: c.baseline_schedule(T) for c in customers}


# ------------------------------------------------------- PV utilization

def test_pv_utilization():
    half = one_slot_customer('half', 1.0, 2.0)
    assert pv_utilization([half], baselines([half])) == pytest.approx(50.0)

    covered = one_slot_customer('covered', 3.0, 2.0)
    assert pv_utilization([covered], baselines([covered])) == pytest.approx(100.0)

    idle = one_slot_customer('idle', 0.0, 2.0)
    assert pv_utilization([idle], baselines([idle])) == 0.0

    pooled = [half, covered]
    assert pv_utilization(pooled, baselines(pooled)) == pytest.approx(100.0 * 3.0 / 4.0)


def test_pv_utilization_undefined_without_generation():
    dark = one_slot_customer('dark', 1.0, 0.0)
    with pytest.raises(UndefinedMetricError):
        pv_utilization([dark], baselines([dark]))
    with pytest.raises(UndefinedMetricError):
        pv_utilization([dark.without_pv()], baselines([dark]))


def test_pv_utilization_ignores_common_scaling():
    appliances = (Appliance('a', 1.5, 2, 1, 4, Flexibility.FIXED, baseline_on_slots=(2, 3)),
                  Appliance('b', 0.7, 1, 1, 4, Flexibility.FIXED, baseline_on_slots=(3,)))
    home = Customer(id='home', kind='residential', bus=2, appliances=appliances, max_demand_kw=10.0,
                    has_pv=True, pv=PvProfile([0.0, 1.0, 2.0, 0.5]))
    lamp = Appliance('lamp', 0.4, 1, 1, 4, Flexibility.FIXED, baseline_on_slots=(1,))
    flat = Customer(id='flat', kind='residential', bus=3, appliances=(lamp,), max_demand_kw=10.0,
                    has_pv=True, pv=PvProfile([1.0, 1.0, 1.0, 1.0]))
    customers = [home, flat]
    doubled = [c.with_load_scale(2.0).with_pv_scale(2.0) for c in customers]

    share = pv_utilization(customers, baselines(customers, T=4))
    assert share == pytest.approx(100.0 * (3.0 + 0.4) / (3.5 + 4.0))
    assert pv_utilization(doubled, baselines(doubled, T=4)) == pytest.approx(share, rel=1e-12)


def test_pv_utilization_by_area():
    home = one_slot_customer('home', 1.0, 2.0)
    shop = one_slot_customer('shop', 1.0, 0.0, kind='commercial')
    by_area = pv_utilization_by_area([home, shop], baselines([home, shop]))
    assert by_area['residential'] == pytest.approx(50.0)
    assert by_area['commercial'] is None
    assert by_area['overall'] == pytest.approx(50.0)


# ------------------------------------------------------------- voltages

def test_voltage_deviation():
    flat = voltage_deviation([stub_solution([1.0, 1.0, 1.0], 1)])
    assert flat.sum_abs_dev == 0.0
    assert flat.max_v == 1.0 and flat.min_v == 1.0

    sagging = voltage_deviation([stub_solution([1.0, 1.0, 1.0], 1), stub_solution([1.0, 0.98, 1.0], 2)],
                                slot_hours=0.5)
    assert sagging.sum_abs_dev == pytest.approx(0.01)
    assert sagging.min_v == pytest.approx(0.98)
    assert sagging.min_location == (2, 2)
    assert sagging.max_location == (1, 1)


def test_voltage_deviation_finds_export_peak():
    day = [stub_solution([1.0, 0.99, 0.985], 1), stub_solution([1.0, 1.01, 1.02], 2),
           stub_solution([1.0, 1.004, 1.006], 3)]
    deviation = voltage_deviation(day)
    assert deviation.max_v == pytest.approx(1.02)
    assert deviation.max_location == (3, 2)


def test_voltage_deviation_rejects_bad_input():
    with pytest.raises(UndefinedMetricError):
        voltage_deviation([])
    with pytest.raises(UndefinedMetricError):
        voltage_deviation([stub_solution([1.0, 0.9], 1, converged=False)])


def test_peak_window_voltage():
    day = [stub_solution([1.0, v], t) for t, v in enumerate([0.99, 1.02, 1.01, 1.05], start=1)]
    assert peak_window_voltage(day, 2, slots=(2, 3)) == pytest.approx(1.02)
    assert peak_window_voltage(day, 2, slots=(1, 2, 3, 4)) == pytest.approx(1.05)
    assert peak_window_voltage(day, 2, TimeGrid(4, 6.0).slots_in_hours(12, 14)) == pytest.approx(1.01)
    with pytest.raises(UndefinedMetricError):
        peak_window_voltage(day, 2, slots=(25, 26, 27, 28))
    with pytest.raises(UndefinedMetricError):
        peak_window_voltage(day, 2, slots=())


# ---------------------------------------------------------------- costs

def test_reduction_pct():
    assert reduction_pct(10.0, 4.0) == pytest.approx(60.0)
    assert reduction_pct(10.0, 10.0) == 0.0
    assert reduction_pct(0.0, 0.0) is None


def test_cost_savings():
    baseline = {'h1': CostBreakdown(10.0, 0.0), 'h2': CostBreakdown(20.0, 0.0), 'h3': CostBreakdown(0.0, 0.0)}
    optimized = {'h1': CostBreakdown(3.0, 1.0), 'h2': CostBreakdown(20.0, 0.0), 'h3': CostBreakdown(0.0, 0.0)}
    kinds = {cid: CustomerKind.RESIDENTIAL for cid in baseline}

    per_customer, per_area = cost_savings(baseline, optimized, kinds)
    rows = per_customer.set_index('customer_id')
    assert rows.loc['h1', 'reduction_pct'] == pytest.approx(60.0)
    assert rows.loc['h1', 'penalty_cents'] == pytest.approx(1.0)
    assert rows.loc['h2', 'reduction_pct'] == 0.0
    assert math.isnan(rows.loc['h3', 'reduction_pct'])

    assert per_area['residential'] == pytest.approx(20.0)
    assert per_area['commercial'] is None
    assert per_area['overall'] == pytest.approx(20.0)


def test_area_costs():
    costs = {'h1': CostBreakdown(4.0, 1.0), 'h2': CostBreakdown(6.0, 0.0), 'c1': CostBreakdown(100.0, 5.0)}
    kinds = {'h1': 'residential', 'h2': 'residential', 'c1': 'commercial'}
    totals = area_costs(costs, kinds)
    assert totals == {'residential': pytest.approx(11.0), 'commercial': pytest.approx(105.0),
                      'overall': pytest.approx(116.0)}


def test_criticality_breakdown():
    T = 8
    appliances = (
        Appliance('fridge', 1.0, 8, 1, 8, Flexibility.FIXED, Criticality.HIGH, tuple(range(1, 9))),
        Appliance('oven', 2.0, 2, 1, 8, UNINT, Criticality.HIGH, (5, 6)),
        Appliance('washer', 1.0, 1, 1, 8, UNINT, Criticality.LOW, (7,)),
    )
    shop = Customer(id='shop', kind='commercial', bus=2, appliances=appliances, max_demand_kw=10.0)
    baseline = shop.baseline_schedule(T)
    optimized = Schedule.from_on_slots([tuple(range(1, 9)), (3, 4), (7,)], T)
    tariff = Tariff([5, 5, 5, 5, 20, 20, 10, 10])

    table = criticality_breakdown(shop, baseline, optimized, tariff, PenaltySchedule.commercial_default())
    rows = table.set_index('criticality')
    assert list(rows.index) == ['low', 'med', 'high']
    assert rows.loc['high', 'shifted_appliances'] == 1
    assert rows.loc['high', 'shift_slots'] == 4
    assert rows.loc['high', 'tariff_saving_cents'] == pytest.approx(0.5 * 2.0 * (40 - 10))
    assert rows.loc['high', 'penalty_cents'] == pytest.approx(0.5 * 3.0 * 2.0 * 4)
    assert rows.loc['low', 'shifted_appliances'] == 0
    assert rows.loc['med', 'shift_slots'] == 0


# ---------------------------------------------------------------- losses

def test_loss_comparison():
    # One slot of 0.5 h on a unit-resistance branch: loss kWh = 0.5 * |I|^2.
    before = [stub_solution([1.0, 0.99], 1, current=math.sqrt(400.0))]
    after = [stub_solution([1.0, 0.99], 1, current=math.sqrt(296.0))]
    assert loss_comparison(before, after, slot_hours=0.5) == pytest.approx(26.0)
    assert loss_comparison(before, before, slot_hours=0.5) == 0.0


def test_loss_comparison_rejects_bad_input():
    idle = [stub_solution([1.0, 1.0], 1)]
    with pytest.raises(UndefinedMetricError):
        loss_comparison(idle, idle)
    with pytest.raises(UndefinedMetricError):
        loss_comparison(idle, idle + idle)


# -------------------------------------------------------------- summary

def test_summarize_small_feeder():
    grid = TimeGrid(4, 6.0)
    tariff = Tariff([10.0, 30.0, 10.0, 10.0])
    washer = Appliance('washer', 2.0, 1, 1, 4, UNINT, baseline_on_slots=(2,))
    home = Customer(id='home', kind='residential', bus=2, appliances=(washer,), max_demand_kw=5.0,
                    has_pv=True, pv=PvProfile([0.0, 0.0, 1.0, 0.0]))
    network = FeederNetwork([Bus(1), Bus(2, ('home',))], [Branch(1, 2, 0.01)], base_kv=0.4, base_mva=0.1)

    scheduled = schedule_customers([home], {CustomerKind.RESIDENTIAL: tariff},
                                   {CustomerKind.RESIDENTIAL: PenaltySchedule.uniform(0.0)}, grid, {'home'})
    baseline, optimized, baseline_cost, optimized_cost = scheduled['home']
    base_day = solve_day(network, [home], {'home': baseline}, 4)
    opt_day = solve_day(network, [home], {'home': optimized}, 4)

    summary = summarize([home], {'home': baseline}, {'home': optimized}, {'home': baseline_cost},
                        {'home': optimized_cost}, base_day, opt_day, grid.slot_hours, commercial_bus=None)

    assert optimized.rows_on_slots() == [(3,)]
    assert summary.cost_reduction_pct['home'] == pytest.approx(100.0 * (360.0 - 60.0) / 360.0)
    assert summary.area_cost_reduction_pct['commercial'] is None
    assert summary.pv_utilization_pct['residential'] == pytest.approx(100.0)
    assert summary.extra['baseline_pv_utilization_pct']['residential'] == 0.0
    assert summary.min_voltage_location == (2, 3)
    assert summary.commercial_bus_peak_voltage_pu is None
    assert summary.daily_loss_kwh == pytest.approx(6.0 * opt_day[2].total_loss_kw)
    assert summary.loss_reduction_pct is not None and summary.loss_reduction_pct > 0
    assert summary.no_pv_daily_loss_kwh is None and summary.loss_reduction_vs_no_pv_pct is None
    json.dumps(summary.to_dict())


def test_summarize_reports_no_pv_comparison_and_commercial_peak():
    grid = TimeGrid(4, 6.0)
    heater = Appliance('heater', 2.0, 1, 3, 3, Flexibility.FIXED, baseline_on_slots=(3,))
    shop = Customer(id='shop', kind='commercial', bus=2, appliances=(heater,), max_demand_kw=5.0,
                    has_pv=True, pv=PvProfile([0.0, 0.0, 1.0, 0.0]))
    network = FeederNetwork([Bus(1), Bus(2, ('shop',))], [Branch(1, 2, 0.01)], base_kv=0.4, base_mva=0.1)
    schedules = {'shop': shop.baseline_schedule(4)}
    costs = {'shop': CostBreakdown(20.0, 0.0)}
    sunny = solve_day(network, [shop], schedules, 4)
    dark = solve_day(network, [shop.without_pv()], schedules, 4)

    summary = summarize([shop], schedules, schedules, costs, costs, sunny, sunny, grid.slot_hours,
                        commercial_bus=2, peak_slots=grid.slots_in_hours(12, 14), no_pv_solutions=dark)

    assert summary.commercial_bus_peak_voltage_pu == pytest.approx(sunny[2].voltage_at(2))
    assert summary.no_pv_daily_loss_kwh == pytest.approx(daily_energy_loss_kwh(dark, 6.0))
    assert summary.loss_reduction_vs_no_pv_pct == pytest.approx(loss_comparison(dark, sunny, 6.0))
    # Halving the slot-3 net load cuts its I^2 R loss to about a quarter.
    assert 70.0 < summary.loss_reduction_vs_no_pv_pct < 80.0


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
