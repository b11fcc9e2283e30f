"""Example usage of the DSM scheduling and feeder analysis system."""

import numpy as np

import config
from metrics import pv_utilization
from model import Appliance, Customer, Flexibility, PenaltySchedule, PvProfile, Tariff, TimeGrid, check_feasibility
from powerflow import Branch, Bus, FeederNetwork, SlotInjections, solve_slot
from runner import load_scenario, run_scenario, sweep, sweep_table, write_results
from scheduler import brute_force_optimal, optimality_gap, optimize_customer, total_cost


def example_single_household():
    """Example: optimize one household against a time-of-use tariff."""
    print("\n" + "=" * 60)
    print("EXAMPLE 1: Single Household")
    print("=" * 60 + "\n")

    T = config.SLOTS_PER_DAY
    tariff = Tariff(np.where((np.arange(1, T + 1) >= 35) & (np.arange(1, T + 1) <= 42), 22.0, 8.0))
    shape = np.clip(1 - np.abs(np.arange(1, T + 1) - 27) / 14, 0, None)
    household = Customer(
        id='demo', kind='residential', bus=2, max_demand_kw=4.0, has_pv=True, pv=PvProfile(0.8 * shape),
        appliances=(
            Appliance('base', 0.3, T, 1, T, Flexibility.FIXED, baseline_on_slots=tuple(range(1, T + 1))),
            Appliance('washer', 1.0, 2, 13, 46, Flexibility.SHIFTABLE_UNINTERRUPTIBLE, baseline_on_slots=(38, 39)),
            Appliance('water_heater', 0.5, 6, 1, 48, Flexibility.SHIFTABLE_INTERRUPTIBLE,
                      baseline_on_slots=tuple(range(35, 41))),
        ),
    )
    penalties = PenaltySchedule.uniform(0.0)
    baseline = household.baseline_schedule(T)
    schedule, cost = optimize_customer(household, tariff, penalties)

    before = total_cost(baseline, household, tariff, penalties).total_cents
    print(f"  Baseline cost:  {before:8.2f} ¢")
    print(f"  Optimized cost: {cost.total_cents:8.2f} ¢")
    for appliance, slots in zip(household.appliances[1:], schedule.rows_on_slots()[1:]):
        print(f"  {appliance.id:<14} -> slots {list(slots)}")
    print(f"  Violations: {len(check_feasibility(schedule, household))}")
    print(f"  PV utilization: {pv_utilization([household], {'demo': schedule}):.1f}%")


def example_oracle_check():
    """Example: compare the descent optimizer with exhaustive search."""
    print("\n" + "=" * 60)
    print("EXAMPLE 2: Optimizer vs Exhaustive Search")
    print("=" * 60 + "\n")

    grid = TimeGrid(12, 2.0)
    tariff = Tariff([10, 10, 10, 6, 6, 6, 6, 14, 14, 14, 20, 20])
    customer = Customer(
        id='small', kind='residential', bus=2, max_demand_kw=3.0,
        appliances=(
            Appliance('a', 1.5, 2, 1, 12, Flexibility.SHIFTABLE_UNINTERRUPTIBLE, baseline_on_slots=(9, 10)),
            Appliance('b', 1.0, 3, 2, 12, Flexibility.SHIFTABLE_INTERRUPTIBLE, baseline_on_slots=(10, 11, 12)),
        ),
    )
    penalties = PenaltySchedule.uniform(1.0)
    _, heuristic = optimize_customer(customer, tariff, penalties, slot_hours=grid.slot_hours)
    _, optimal = brute_force_optimal(customer, tariff, penalties, slot_hours=grid.slot_hours)
    print(f"  Descent:    {heuristic.total_cents:.4f} ¢")
    print(f"  Exhaustive: {optimal.total_cents:.4f} ¢")
    print(f"  Gap:        {100 * optimality_gap(heuristic.total_cents, optimal.total_cents):.4f}%")


def example_two_bus_load_flow():
    """Example: a single feeder branch with load and with export."""
    print("\n" + "=" * 60)
    print("EXAMPLE 3: Two-Bus Load Flow")
    print("=" * 60 + "\n")

    network = FeederNetwork([Bus(1), Bus(2)], [Branch(1, 2, 0.1)], slack_bus=1, base_kv=1.0, base_mva=1.0)
    for p_kw in (100.0, -100.0):
        solution = solve_slot(network, SlotInjections.from_mapping(network, {2: p_kw}))
        print(f"  P = {p_kw:+7.1f} kW: V2 = {solution.voltage_at(2):.5f} pu, "
              f"loss = {solution.total_loss_kw:.4f} kW, iterations = {solution.iterations}")


def example_reference_scenario():
    """Example: run the reference feeder and a penalty sweep."""
    print("\n" + "=" * 60)
    print("EXAMPLE 4: Reference Scenario")
    print("=" * 60 + "\n")

    scenario = load_scenario(config.REFERENCE_SCENARIO_PATH, verbose=True)
    result = run_scenario(scenario, verbose=True)
    m = result.metrics
    print(f"  Residential PV utilization: {m.pv_utilization_pct['residential']:.1f}%")
    print(f"  Daily loss: {m.baseline_daily_loss_kwh:.3f} -> {m.daily_loss_kwh:.3f} kWh")
    print(f"  Voltage range: {m.min_voltage_pu:.4f} .. {m.max_voltage_pu:.4f} pu")

    files = write_results(result, config.OUTPUT_DIR / "example_ref30")
    print(f"  Wrote {[f.name for f in files]} to {config.OUTPUT_DIR / 'example_ref30'}")

    results = sweep(scenario, 'penalty_residential', [0, 5, 10, 20])
    table = sweep_table('penalty_residential', results)
    print(table[['value', 'pv_utilization_residential_pct', 'daily_loss_kwh']].to_string(index=False))


def run_all_examples():
    """Run all examples."""
    example_single_household()
    example_oracle_check()
    example_two_bus_load_flow()
    example_reference_scenario()

    print("\n" + "=" * 60)
    print("All examples completed!")
    print("=" * 60 + "\n")


if __name__ == "__main__":
    run_all_examples()
