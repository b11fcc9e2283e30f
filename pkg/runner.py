"""Scenario orchestration: participation, DSM and load-flow runs, sweeps and result files."""

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import pandas as pd

import config
import utils
from data_loader import load_scenario_parts, scenario_digest
from metrics import MetricsSummary, criticality_breakdown, summarize
from model import Customer, CustomerKind, PenaltySchedule, Schedule, Tariff, TimeGrid, ValidationError
from powerflow import ConvergenceError, FeederNetwork, LoadFlowSolution, solve_day
from scheduler import CostBreakdown, OptimizerConfig, schedule_customers, shift_duration

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScenarioOptions:
    """Per-run overrides applied on top of the scenario file."""

    participation_pct: float = 100.0
    pv_scale: float = 1.0
    dsm_enabled: bool = True
    pv_enabled: bool = True
    penalty_residential: Optional[float] = None
    commercial_pv: bool = True
    commercial_load_scale: float = 1.0
    resistance_scale: float = 1.0
    commercial_participates: Optional[bool] = None
    compare_no_pv: bool = False

    def __post_init__(self):
        if not 0 <= self.participation_pct <= 100:
            raise ValidationError(f"participation_pct must be in [0, 100], got {self.participation_pct}",
                                  field='options.participation_pct')
        if self.pv_scale < 0:
            raise ValidationError("pv_scale must be >= 0", field='options.pv_scale')
        if self.penalty_residential is not None and self.penalty_residential < 0:
            raise ValidationError("penalty_residential must be >= 0", field='options.penalty_residential')
        if self.commercial_load_scale <= 0:
            raise ValidationError("commercial_load_scale must be > 0", field='options.commercial_load_scale')
        if self.resistance_scale < 0:
            raise ValidationError("resistance_scale must be >= 0", field='options.resistance_scale')

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Scenario:
    name: str
    time_grid: TimeGrid
    tariffs: Mapping[CustomerKind, Tariff]
    penalties: Mapping[CustomerKind, PenaltySchedule]
    customers: Tuple[Customer, ...]
    network: FeederNetwork
    options: ScenarioOptions = field(default_factory=ScenarioOptions)
    synthesized: bool = False
    source_sha256: Optional[str] = None
    source_path: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'customers', tuple(self.customers))
        self.validate()

    def validate(self) -> None:
        T = self.time_grid.slots_per_day
        for kind in CustomerKind:
            if kind not in self.tariffs:
                raise ValidationError(f"No tariff for {kind.value} customers", field=f"tariffs.{kind.value}")
            if len(self.tariffs[kind]) != T:
                raise ValidationError(f"{kind.value} tariff has {len(self.tariffs[kind])} slots, expected T={T}",
                                      field=f"tariffs.{kind.value}")
        buses = set(self.network.non_slack_buses)
        for customer in self.customers:
            if customer.bus not in buses:
                raise ValidationError(f"Customer {customer.id} references unknown or slack bus {customer.bus}",
                                      entity=customer.id, field='bus')

    def with_options(self, **overrides) -> 'Scenario':
        """Copy of the scenario with some options replaced."""
        return replace(self, options=replace(self.options, **overrides))

    def commercial_bus(self) -> Optional[int]:
        """Bus of the commercial site (lowest id first); None without one."""
        commercial = sorted((c for c in self.customers if c.kind == CustomerKind.COMMERCIAL), key=lambda c: c.id)
        if not commercial:
            return None
        if len({c.bus for c in commercial}) > 1:
            logger.info("Commercial customers sit on several buses; reporting bus %s", commercial[0].bus)
        return commercial[0].bus

    def peak_slots(self) -> Tuple[int, ...]:
        """Slots of the PV peak window on this scenario's time grid."""
        return self.time_grid.slots_in_hours(*config.PV_PEAK_HOURS)

    def effective_customers(self) -> List[Customer]:
        """Customers after PV toggles, PV penetration and commercial load scaling."""
        options = self.options
        customers = []
        for customer in self.customers:
            if customer.kind == CustomerKind.COMMERCIAL and options.commercial_load_scale != 1.0:
                customer = customer.with_load_scale(options.commercial_load_scale)
            if not options.pv_enabled or (customer.kind == CustomerKind.COMMERCIAL and not options.commercial_pv):
                customer = customer.without_pv()
            elif customer.pv is not None:
                customer = customer.with_pv_scale(customer.pv.scale * options.pv_scale)
            customers.append(customer)
        return customers

    def effective_network(self) -> FeederNetwork:
        """Feeder with the resistance what-if applied."""
        if self.options.resistance_scale == self.network.resistance_scale:
            return self.network
        return self.network.with_resistance_scale(self.options.resistance_scale)

    def effective_penalties(self) -> Dict[CustomerKind, PenaltySchedule]:
        """Penalty prices after the residential override."""
        penalties = dict(self.penalties)
        if self.options.penalty_residential is not None:
            penalties[CustomerKind.RESIDENTIAL] = PenaltySchedule.uniform(self.options.penalty_residential)
        return penalties


@dataclass
class ScenarioResult:
    scenario: Scenario
    participants: Tuple[str, ...]
    customers: List[Customer]
    baseline_schedules: Dict[str, Schedule]
    optimized_schedules: Dict[str, Schedule]
    baseline_costs: Dict[str, CostBreakdown]
    optimized_costs: Dict[str, CostBreakdown]
    baseline_solutions: List[LoadFlowSolution]
    optimized_solutions: List[LoadFlowSolution]
    metrics: MetricsSummary
    criticality: pd.DataFrame
    provenance: dict

    @property
    def options(self) -> ScenarioOptions:
        return self.scenario.options


def load_scenario(path: Union[str, Path], options: Optional[ScenarioOptions] = None,
                  verbose: bool = False) -> Scenario:
    """Load, validate and fingerprint a scenario file."""
    parts = load_scenario_parts(path, verbose=verbose)
    digest, _ = scenario_digest(path)
    return Scenario(
        name=parts['name'],
        time_grid=parts['time_grid'],
        tariffs=parts['tariffs'],
        penalties=parts['penalties'],
        customers=tuple(parts['customers']),
        network=parts['network'],
        options=options or ScenarioOptions(),
        synthesized=parts['synthesized'],
        source_sha256=digest,
        source_path=str(path),
    )


def select_participants(customers: Sequence[Customer], participation_pct: float,
                        commercial_participates: Optional[bool] = None) -> List[Customer]:
    """
    Customers that run DSM.

    The first ceil(pct * N / 100) residential customers by ascending id take
    part. The commercial site takes part only at 100 % unless overridden.
    """
    if not 0 <= participation_pct <= 100:
        raise ValidationError(f"participation_pct must be in [0, 100], got {participation_pct}",
                              field='participation_pct')
    residential = sorted((c for c in customers if c.kind == CustomerKind.RESIDENTIAL), key=lambda c: c.id)
    count = math.ceil(round(participation_pct * len(residential) / 100.0, 9))
    chosen = residential[:count]

    if commercial_participates is None:
        commercial_participates = participation_pct == 100 if config.COMMERCIAL_FULL_PARTICIPATION_ONLY \
            else participation_pct > 0
    if commercial_participates:
        chosen += sorted((c for c in customers if c.kind == CustomerKind.COMMERCIAL), key=lambda c: c.id)
    return chosen


def _config_echo(scenario: Scenario) -> dict:
    grid = scenario.time_grid
    return {
        'slots_per_day': grid.slots_per_day,
        'slot_hours': grid.slot_hours,
        'optimizer_max_passes': config.OPTIMIZER_MAX_PASSES,
        'optimizer_epsilon': config.OPTIMIZER_EPSILON,
        'cost_tie_tolerance': config.COST_TIE_TOLERANCE,
        'loadflow_tolerance': config.LOADFLOW_TOLERANCE,
        'loadflow_max_iter': config.LOADFLOW_MAX_ITER,
        'load_power_factor': config.LOAD_POWER_FACTOR,
        'commercial_bus': scenario.commercial_bus(),
        'pv_peak_hours': list(config.PV_PEAK_HOURS),
        'pv_peak_slots': list(scenario.peak_slots()),
    }


def _solve(network: FeederNetwork, customers: Sequence[Customer], schedules: Mapping[str, Schedule],
           num_slots: int, run: str) -> List[LoadFlowSolution]:
    try:
        return solve_day(network, customers, schedules, num_slots)
    except ConvergenceError as e:
        logger.error("%s run: load flow failed at slot %s", run, e.slot)
        raise ConvergenceError(f"{run} run: {e}", slot=e.slot, solution=e.solution) from e


def run_scenario(scenario: Scenario, optimizer_config: Optional[OptimizerConfig] = None,
                 verbose: bool = False) -> ScenarioResult:
    """Optimize participants, solve both runs' load flows and compute metrics."""
    options = scenario.options
    grid = scenario.time_grid
    customers = scenario.effective_customers()
    network = scenario.effective_network()
    penalties = scenario.effective_penalties()

    participants = []
    if options.dsm_enabled:
        participants = [c.id for c in
                        select_participants(customers, options.participation_pct, options.commercial_participates)]
    if verbose:
        print(f"Running {scenario.name}: {len(participants)}/{len(customers)} customers in DSM")

    scheduled = schedule_customers(customers, scenario.tariffs, penalties, grid, set(participants),
                                   optimizer_config)
    baseline_schedules = {cid: v[0] for cid, v in scheduled.items()}
    optimized_schedules = {cid: v[1] for cid, v in scheduled.items()}
    baseline_costs = {cid: v[2] for cid, v in scheduled.items()}
    optimized_costs = {cid: v[3] for cid, v in scheduled.items()}
    if verbose:
        print(f"✓ Scheduled {len(scheduled)} customers")

    baseline_solutions = _solve(network, customers, baseline_schedules, grid.slots_per_day, 'baseline')
    optimized_solutions = _solve(network, customers, optimized_schedules, grid.slots_per_day, 'optimized')
    if verbose:
        print(f"✓ Solved {2 * grid.slots_per_day} load flows on {len(network.buses)} buses")

    no_pv_solutions = None
    if options.compare_no_pv:
        if options.pv_enabled:
            if verbose:
                print("Running the no-PV reference")
            reference = run_scenario(scenario.with_options(pv_enabled=False, compare_no_pv=False),
                                     optimizer_config)
            no_pv_solutions = reference.optimized_solutions
        else:
            logger.info("PV is disabled; skipping the no-PV loss comparison")

    summary = summarize(customers, baseline_schedules, optimized_schedules, baseline_costs, optimized_costs,
                        baseline_solutions, optimized_solutions, grid.slot_hours,
                        commercial_bus=scenario.commercial_bus(), peak_slots=scenario.peak_slots(),
                        no_pv_solutions=no_pv_solutions)

    frames = [criticality_breakdown(c, baseline_schedules[c.id], optimized_schedules[c.id],
                                    scenario.tariffs[c.kind], penalties[c.kind], grid.slot_hours)
              for c in customers if c.kind == CustomerKind.COMMERCIAL]
    criticality = (pd.concat(frames, ignore_index=True) if frames
                   else pd.DataFrame(columns=config.CRITICALITY_COLUMNS))

    provenance = {
        'scenario': scenario.name,
        'scenario_path': scenario.source_path,
        'scenario_sha256': scenario.source_sha256,
        'synthesized': scenario.synthesized,
        'options': options.to_dict(),
        'config': _config_echo(scenario),
        'version': config.PACKAGE_VERSION,
        'generated_at': datetime.now(timezone.utc).isoformat(timespec='seconds'),
    }
    return ScenarioResult(
        scenario=scenario,
        participants=tuple(participants),
        customers=customers,
        baseline_schedules=baseline_schedules,
        optimized_schedules=optimized_schedules,
        baseline_costs=baseline_costs,
        optimized_costs=optimized_costs,
        baseline_solutions=baseline_solutions,
        optimized_solutions=optimized_solutions,
        metrics=summary,
        criticality=criticality,
        provenance=provenance,
    )


def sweep(scenario: Scenario, axis: str, values: Sequence[float],
          optimizer_config: Optional[OptimizerConfig] = None, verbose: bool = False) -> List[ScenarioResult]:
    """One full run per value of a single option, all from the same base scenario."""
    if axis not in config.SWEEP_AXES:
        raise ValidationError(f"Unknown sweep axis '{axis}'. Choose from {config.SWEEP_AXES}", field='axis')
    if not values:
        raise ValidationError("Sweep needs at least one value", field='values')

    results = []
    for value in values:
        # options validate each value before any run starts
        scenario.with_options(**{axis: float(value)})
    for value in values:
        if verbose:
            print(f"\n--- {axis} = {value} ---")
        results.append(run_scenario(scenario.with_options(**{axis: float(value)}), optimizer_config, verbose))
    return results


def sweep_table(axis: str, results: Sequence[ScenarioResult]) -> pd.DataFrame:
    """Combined comparison table, one row per sweep value."""
    rows = []
    for result in results:
        m = result.metrics
        rows.append({
            'axis': axis,
            'value': getattr(result.options, axis),
            'pv_utilization_residential_pct': m.pv_utilization_pct.get(CustomerKind.RESIDENTIAL.value),
            'pv_utilization_commercial_pct': m.pv_utilization_pct.get(CustomerKind.COMMERCIAL.value),
            'pv_utilization_overall_pct': m.pv_utilization_pct.get('overall'),
            'cost_reduction_residential_pct': m.area_cost_reduction_pct.get(CustomerKind.RESIDENTIAL.value),
            'cost_reduction_commercial_pct': m.area_cost_reduction_pct.get(CustomerKind.COMMERCIAL.value),
            'daily_loss_kwh': m.daily_loss_kwh,
            'loss_reduction_pct': m.loss_reduction_pct,
            'no_pv_daily_loss_kwh': m.no_pv_daily_loss_kwh,
            'loss_reduction_vs_no_pv_pct': m.loss_reduction_vs_no_pv_pct,
            'max_voltage_pu': m.max_voltage_pu,
            'min_voltage_pu': m.min_voltage_pu,
            'commercial_bus_peak_voltage_pu': m.commercial_bus_peak_voltage_pu,
        })
    return pd.DataFrame(rows, columns=config.SWEEP_COLUMNS)


# Result tables

def costs_frame(result: ScenarioResult) -> pd.DataFrame:
    """Per-customer baseline and optimized costs."""
    rows = []
    for customer in result.customers:
        before = result.baseline_costs[customer.id]
        after = result.optimized_costs[customer.id]
        rows.append({
            'customer_id': customer.id,
            'kind': customer.kind.value,
            'baseline_cents': before.total_cents,
            'optimized_cents': after.total_cents,
            'reduction_pct': result.metrics.cost_reduction_pct.get(customer.id),
            'penalty_cents': after.penalty_cents,
        })
    return pd.DataFrame(rows, columns=config.COSTS_COLUMNS)


def voltages_frame(result: ScenarioResult) -> pd.DataFrame:
    """Slot x bus voltage magnitude matrix, baseline rows then optimized rows."""
    bus_ids = sorted(result.baseline_solutions[0].bus_ids)
    rows = []
    for run, solutions in (('baseline', result.baseline_solutions), ('optimized', result.optimized_solutions)):
        for solution in solutions:
            series = solution.voltage_series()
            rows.append({'run': run, 'slot': solution.slot, **{f"bus_{b}": series[b] for b in bus_ids}})
    return pd.DataFrame(rows, columns=['run', 'slot'] + [f"bus_{b}" for b in bus_ids])


def losses_frame(result: ScenarioResult) -> pd.DataFrame:
    """Per-slot feeder loss for both runs."""
    rows = [
        {'run': run, 'slot': s.slot, 'loss_kw': s.total_loss_kw}
        for run, solutions in (('baseline', result.baseline_solutions), ('optimized', result.optimized_solutions))
        for s in solutions
    ]
    return pd.DataFrame(rows, columns=config.LOSSES_COLUMNS)


def schedules_frame(result: ScenarioResult) -> pd.DataFrame:
    rows = []
    for customer in result.customers:
        before = result.baseline_schedules[customer.id].rows_on_slots()
        after = result.optimized_schedules[customer.id].rows_on_slots()
        for index, appliance in enumerate(customer.appliances):
            rows.append({
                'customer_id': customer.id,
                'appliance_id': appliance.id,
                'flexibility': appliance.flexibility.value,
                'criticality': appliance.criticality.value,
                'baseline_slots': utils.format_slots(before[index]),
                'optimized_slots': utils.format_slots(after[index]),
                'shift_slots': shift_duration(appliance, after[index]),
            })
    return pd.DataFrame(rows, columns=config.SCHEDULES_COLUMNS)


def summary_document(result: ScenarioResult) -> dict:
    """Metrics, participants, criticality table and provenance as one document."""
    document = result.metrics.to_dict()
    document['participants'] = list(result.participants)
    document['criticality'] = result.criticality.to_dict(orient='records')
    document['provenance'] = result.provenance
    return document


def _write_run(result: ScenarioResult, out_dir: Path) -> List[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    utils.export_to_json(summary_document(result), out_dir / config.SUMMARY_FILE)
    written.append(out_dir / config.SUMMARY_FILE)
    for name, frame in ((config.COSTS_FILE, costs_frame(result)),
                        (config.VOLTAGES_FILE, voltages_frame(result)),
                        (config.LOSSES_FILE, losses_frame(result)),
                        (config.SCHEDULES_FILE, schedules_frame(result)),
                        (config.CRITICALITY_FILE, result.criticality)):
        utils.export_to_csv(frame, out_dir / name)
        written.append(out_dir / name)
    return written


def write_results(results: Union[ScenarioResult, Sequence[ScenarioResult]], out_dir: Union[str, Path],
                  axis: Optional[str] = None, verbose: bool = False) -> List[Path]:
    """
    Write one run's files into out_dir, or for a sweep write sweep.csv into
    out_dir and each run's files into out_dir/<axis>=<value>/.
    """
    out_dir = Path(out_dir)
    try:
        if isinstance(results, ScenarioResult):
            written = _write_run(results, out_dir)
        else:
            if axis is None:
                raise ValueError("axis is required when writing sweep results")
            out_dir.mkdir(parents=True, exist_ok=True)
            written = []
            for result in results:
                value = utils.fmt_sig(getattr(result.options, axis))
                written += _write_run(result, out_dir / f"{axis}={value}")
            utils.export_to_csv(sweep_table(axis, results), out_dir / config.SWEEP_FILE)
            written.append(out_dir / config.SWEEP_FILE)
    except OSError as e:
        raise OSError(f"Cannot write results to {out_dir}: {e}") from e

    if verbose:
        print(f"✓ Wrote {len(written)} files to {out_dir}")
    return written
