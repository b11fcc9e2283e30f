#!/usr/bin/env python3
"""Performance profiling of the reference scenario, stage by stage."""

import os
import tempfile
import time
import tracemalloc
from contextlib import contextmanager
from typing import Any, Callable, List

import pandas as pd
import psutil

import config
from data_loader import ScenarioLoader
from metrics import summarize
from model import CustomerKind
from powerflow import solve_day
from runner import Scenario, load_scenario, run_scenario, select_participants, write_results
from scheduler import schedule_customers

RUNTIME_BUDGET_SECONDS = 60.0


class StageTimer:
    """Wall time, RSS growth and traced peak memory of named study stages."""

    def __init__(self, budget_seconds: float = RUNTIME_BUDGET_SECONDS):
        self.budget_seconds = budget_seconds
        self.stages: List[dict] = []
        self.process = psutil.Process(os.getpid())

    def _rss_mb(self) -> float:
        return self.process.memory_info().rss / 2 ** 20

    @contextmanager
    def stage(self, name: str):
        record = {'stage': name, 'seconds': 0.0, 'rss_growth_mb': 0.0, 'traced_peak_mb': 0.0,
                  'ok': True, 'error': None}
        rss_before = self._rss_mb()
        tracemalloc.start()
        started = time.perf_counter()
        try:
            yield record
        except Exception as e:
            record['ok'] = False
            record['error'] = f"{type(e).__name__}: {e}"
        finally:
            record['seconds'] = time.perf_counter() - started
            record['traced_peak_mb'] = tracemalloc.get_traced_memory()[1] / 2 ** 20
            tracemalloc.stop()
            record['rss_growth_mb'] = self._rss_mb() - rss_before
            self.stages.append(record)

    def run(self, name: str, func: Callable, *args, **kwargs) -> Any:
        """Time func as one stage; returns None if it raised."""
        with self.stage(name) as record:
            record['result'] = func(*args, **kwargs)
        return self.stages[-1].pop('result', None)

    def seconds(self, *names: str) -> float:
        return sum(s['seconds'] for s in self.stages if s['stage'] in names)

    def table(self) -> pd.DataFrame:
        return pd.DataFrame(self.stages, columns=['stage', 'seconds', 'rss_growth_mb', 'traced_peak_mb',
                                                  'ok', 'error'])

    def report(self) -> pd.DataFrame:
        df = self.table()
        print("\n" + "=" * 100)
        print("STAGE TIMINGS")
        print("=" * 100)
        print(f"{'Stage':<45} {'Seconds':>10} {'RSS +MB':>12} {'Peak MB':>12}   Status")
        print("-" * 100)
        for row in df.itertuples():
            status = "✓" if row.ok else f"✗ {row.error[:40]}"
            print(f"{row.stage:<45} {row.seconds:>10.3f} {row.rss_growth_mb:>12.2f} "
                  f"{row.traced_peak_mb:>12.2f}   {status}")
        print("-" * 100)
        if not df.empty:
            slowest = df.loc[df['seconds'].idxmax()]
            print(f"\n📈 Slowest stage: {slowest['stage']} ({slowest['seconds']:.2f}s)")
        print(f"  Failed stages: {int((~df['ok']).sum())}")
        return df


def profile_stages(timer: StageTimer, scenario_path=config.REFERENCE_SCENARIO_PATH):
    """Time each stage of one reference run separately."""
    print(f"\n{'=' * 100}")
    print(f"PROFILING STAGES ({scenario_path})")
    print(f"{'=' * 100}")

    def parse():
        loader = ScenarioLoader(scenario_path)
        loader.load_data()
        return loader.preprocess_data()

    timer.run("1. Parse and validate scenario", parse)
    scenario: Scenario = timer.run("2. Build scenario", load_scenario, scenario_path)
    if scenario is None:
        return

    customers = scenario.effective_customers()
    grid = scenario.time_grid
    participants = {c.id for c in select_participants(customers, scenario.options.participation_pct)}
    scheduled = timer.run("3. Optimize all customers", schedule_customers,
                          customers, scenario.tariffs, scenario.effective_penalties(), grid, participants)
    if scheduled is None:
        return

    baseline = {cid: v[0] for cid, v in scheduled.items()}
    optimized = {cid: v[1] for cid, v in scheduled.items()}
    network = scenario.effective_network()
    base_day = timer.run("4. Load flow, baseline day", solve_day, network, customers, baseline, grid.slots_per_day)
    opt_day = timer.run("5. Load flow, optimized day", solve_day, network, customers, optimized, grid.slots_per_day)
    if base_day is None or opt_day is None:
        return

    timer.run("6. Metrics", summarize, customers, baseline, optimized,
              {cid: v[2] for cid, v in scheduled.items()}, {cid: v[3] for cid, v in scheduled.items()},
              base_day, opt_day, grid.slot_hours)


def profile_end_to_end(timer: StageTimer, scenario_path=config.REFERENCE_SCENARIO_PATH) -> bool:
    """Full run plus result files, checked against the runtime budget."""
    print(f"\n{'=' * 100}")
    print("PROFILING END TO END")
    print(f"{'=' * 100}")

    scenario = load_scenario(scenario_path)
    result = timer.run("7. run_scenario", run_scenario, scenario)
    if result is None:
        return False
    with tempfile.TemporaryDirectory() as out_dir:
        timer.run("8. write_results", write_results, result, out_dir)

    elapsed = timer.seconds("7. run_scenario", "8. write_results")
    n_residential = sum(1 for c in scenario.customers if c.kind == CustomerKind.RESIDENTIAL)
    n_appliances = sum(len(c.appliances) for c in scenario.customers)
    print(f"\n  {len(scenario.customers)} customers ({n_residential} residential), "
          f"{n_appliances} appliances, T={scenario.time_grid.slots_per_day}")
    within = elapsed < timer.budget_seconds
    if within:
        print(f"  ✓ Completed in {elapsed:.2f}s (budget {timer.budget_seconds:.0f}s)")
    else:
        print(f"  ⚠️  {elapsed:.2f}s exceeds the {timer.budget_seconds:.0f}s budget")
    return within


def main():
    print("\n" + "🔍" * 50)
    print("DSM FEEDER STUDY - PERFORMANCE PROFILER")
    print("🔍" * 50)

    timer = StageTimer()
    profile_stages(timer)
    within_budget = profile_end_to_end(timer)
    timer.report()

    print("\n" + "=" * 100)
    print("✅ PROFILING COMPLETE!" if within_budget else "⚠️  PROFILING COMPLETE, OVER BUDGET")
    print("=" * 100)


if __name__ == '__main__':
    main()
