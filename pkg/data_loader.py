"""Scenario file loading and validation module."""

import hashlib
import json
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

import config
from model import (Appliance, Customer, CustomerKind, PenaltySchedule, PvProfile, Tariff, TimeGrid,
                   ValidationError)
from powerflow import Branch, Bus, FeederNetwork

REQUIRED_SECTIONS = ['time', 'tariffs', 'penalties', 'network', 'customers']


class ScenarioFileError(ValueError):
    """The scenario file cannot be read or parsed."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        super().__init__(message)
        self.line = line
        self.column = column
        self.entity = None
        self.field = None


class ScenarioLoader:
    """
    Reads a scenario JSON document and turns it into validated model objects.

    Invalid data is rejected, never repaired. Errors name the JSON field path,
    the offending entity id, and the line where that entity first appears.
    """

    def __init__(self, file_path: Union[str, Path], verbose: bool = False):
        self.file_path = Path(file_path)
        self.verbose = verbose
        self.raw_text: Optional[str] = None
        self.raw_data: Optional[Dict[str, Any]] = None
        self.processed: Optional[Dict[str, Any]] = None

    def load_data(self) -> Dict[str, Any]:
        """Read and parse the file."""
        if self.file_path.suffix.lower() != '.json':
            raise ScenarioFileError(f"Unsupported scenario format '{self.file_path.suffix}'. Use JSON.")
        try:
            self.raw_text = self.file_path.read_text(encoding='utf-8')
        except OSError as e:
            raise ScenarioFileError(f"Cannot read scenario {self.file_path}: {e}")
        try:
            self.raw_data = json.loads(self.raw_text)
        except json.JSONDecodeError as e:
            raise ScenarioFileError(f"{self.file_path}:{e.lineno}:{e.colno}: {e.msg}", line=e.lineno,
                                    column=e.colno)
        if not isinstance(self.raw_data, dict):
            raise ScenarioFileError(f"{self.file_path}: top level must be a JSON object", line=1, column=1)

        if self.verbose:
            print(f"✓ Loaded scenario {self.raw_data.get('name', self.file_path.stem)} from {self.file_path}")
        return self.raw_data

    def preprocess_data(self) -> Dict[str, Any]:
        """
        Validate every section and build the model objects.

        Returns a dict with name, synthesized, time_grid, tariffs, penalties,
        customers and network.
        """
        if self.raw_data is None:
            raise ValueError("No scenario loaded. Call load_data() first.")
        data = self.raw_data

        missing = [s for s in REQUIRED_SECTIONS if s not in data]
        if missing:
            raise ValidationError(f"Missing required sections: {missing}", field=missing[0], line=1)

        time_grid = self._parse_time(data['time'])
        T = time_grid.slots_per_day
        tariffs = self._parse_tariffs(data['tariffs'], T)
        penalties = self._parse_penalties(data['penalties'])
        pv_profiles = self._parse_pv_profiles(data.get('pv_profiles', {}), T)
        templates = data.get('appliance_templates', {})
        customers = self._parse_customers(data['customers'], templates, pv_profiles, time_grid)
        network = self._parse_network(data['network'], customers)

        self.processed = {
            'name': str(data.get('name', self.file_path.stem)),
            'synthesized': bool(data.get('synthesized', False)),
            'time_grid': time_grid,
            'tariffs': tariffs,
            'penalties': penalties,
            'customers': customers,
            'network': network,
        }
        if self.verbose:
            n_appliances = sum(len(c.appliances) for c in customers)
            print(f"✓ Validated {len(customers)} customers, {n_appliances} appliances, "
                  f"{len(network.buses)} buses, T={T}")
        return self.processed

    # Diagnostics

    def _line_of(self, entity: Optional[str]) -> Optional[int]:
        """First line mentioning the quoted entity id."""
        if not entity or self.raw_text is None:
            return None
        pattern = re.compile(r'"' + re.escape(str(entity)) + r'"')
        for number, text in enumerate(self.raw_text.splitlines(), start=1):
            if pattern.search(text):
                return number
        return None

    def _fail(self, message: str, path: str, entity: Optional[str] = None):
        line = self._line_of(entity)
        where = f" (line {line})" if line else ""
        raise ValidationError(f"{path}: {message}{where}", entity=entity, field=path, line=line)

    def _wrap(self, error: ValidationError, path: str, entity: Optional[str] = None):
        entity = error.entity or entity
        field = f"{path}.{error.field}" if error.field and not error.field.startswith(path) else (error.field or path)
        line = self._line_of(entity)
        where = f" (line {line})" if line else ""
        return ValidationError(f"{field}: {error}{where}", entity=entity, field=field, line=line)

    def _require(self, section: Dict[str, Any], key: str, path: str, entity: Optional[str] = None):
        if not isinstance(section, dict):
            self._fail("expected an object", path, entity)
        if key not in section:
            self._fail(f"missing required field '{key}'", f"{path}.{key}", entity)
        return section[key]

    def _number(self, value, path: str, entity: Optional[str] = None) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self._fail(f"expected a number, got {value!r}", path, entity)
        return float(value)

    def _integer(self, value, path: str, entity: Optional[str] = None) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            self._fail(f"expected an integer, got {value!r}", path, entity)
        return int(value)

    # Sections

    def _parse_time(self, section) -> TimeGrid:
        slots = self._integer(self._require(section, 'slots_per_day', 'time'), 'time.slots_per_day')
        hours = self._number(self._require(section, 'slot_hours', 'time'), 'time.slot_hours')
        try:
            return TimeGrid(slots, hours)
        except ValidationError as e:
            raise self._wrap(e, 'time')

    def _series(self, spec, T: int, path: str) -> np.ndarray:
        """
        A per-slot series, either a plain list of T numbers or
        {"periods": [{"start": s, "end": e, "value": v}, ...]} covering 1..T.
        """
        if isinstance(spec, list):
            if len(spec) != T:
                self._fail(f"series has {len(spec)} entries, expected T={T}", path)
            return np.array([self._number(v, f"{path}[{i}]") for i, v in enumerate(spec)])
        periods = self._require(spec, 'periods', path)
        values = np.full(T, np.nan)
        for i, period in enumerate(periods):
            where = f"{path}.periods[{i}]"
            start = self._integer(self._require(period, 'start', where), f"{where}.start")
            end = self._integer(self._require(period, 'end', where), f"{where}.end")
            value = self._number(self._require(period, 'value', where), f"{where}.value")
            if not 1 <= start <= end <= T:
                self._fail(f"period [{start}, {end}] outside 1..{T}", where)
            if not np.isnan(values[start - 1:end]).all():
                self._fail(f"period [{start}, {end}] overlaps an earlier period", where)
            values[start - 1:end] = value
        if np.isnan(values).any():
            gap = int(np.flatnonzero(np.isnan(values))[0]) + 1
            self._fail(f"periods leave slot {gap} uncovered", path)
        return values

    def _parse_tariffs(self, section, T: int) -> Dict[CustomerKind, Tariff]:
        tariffs = {}
        for kind in CustomerKind:
            path = f"tariffs.{kind.value}"
            try:
                tariffs[kind] = Tariff(self._series(self._require(section, kind.value, 'tariffs'), T, path))
            except ValidationError as e:
                if e.field and e.field.startswith(path):
                    raise
                raise self._wrap(e, path)
        return tariffs

    def _parse_penalties(self, section) -> Dict[CustomerKind, PenaltySchedule]:
        defaults = {
            CustomerKind.RESIDENTIAL: PenaltySchedule.uniform(config.DEFAULT_RESIDENTIAL_PENALTY),
            CustomerKind.COMMERCIAL: PenaltySchedule.commercial_default(),
        }
        if not isinstance(section, dict):
            self._fail("expected an object", 'penalties')
        penalties = {}
        for kind in CustomerKind:
            path = f"penalties.{kind.value}"
            spec = section.get(kind.value)
            try:
                if spec is None:
                    penalties[kind] = defaults[kind]
                elif isinstance(spec, dict):
                    unknown = [k for k in spec if k not in ('low', 'med', 'high')]
                    if unknown:
                        self._fail(f"unknown criticality tier '{unknown[0]}'", f"{path}.{unknown[0]}")
                    penalties[kind] = PenaltySchedule({k: self._number(v, f"{path}.{k}") for k, v in spec.items()})
                else:
                    penalties[kind] = PenaltySchedule.uniform(self._number(spec, path))
            except ValidationError as e:
                if e.field and e.field.startswith(path):
                    raise
                raise self._wrap(e, path)
        return penalties

    def _parse_pv_profiles(self, section, T: int) -> Dict[str, np.ndarray]:
        """Named PV shapes, normalized so that 1.0 means the customer's peak_kw."""
        if not isinstance(section, dict):
            self._fail("expected an object of named profiles", 'pv_profiles')
        profiles = {}
        for name, spec in section.items():
            shape = self._series(spec, T, f"pv_profiles.{name}")
            if (shape < 0).any():
                self._fail("PV shape entries must be >= 0", f"pv_profiles.{name}", name)
            profiles[name] = shape
        return profiles

    def _parse_appliance(self, spec, path: str, owner: str) -> Appliance:
        appliance_id = str(self._require(spec, 'id', path, owner))
        window = self._require(spec, 'window', path, appliance_id)
        if not isinstance(window, list) or len(window) != 2:
            self._fail("window must be [start, end]", f"{path}.window", appliance_id)
        duration = self._integer(self._require(spec, 'duration_slots', path, appliance_id),
                                 f"{path}.duration_slots", appliance_id)
        if 'baseline_on_slots' in spec:
            if not isinstance(spec['baseline_on_slots'], list):
                self._fail("baseline_on_slots must be a list of slots", f"{path}.baseline_on_slots", appliance_id)
            baseline = [self._integer(t, f"{path}.baseline_on_slots", appliance_id)
                        for t in spec['baseline_on_slots']]
        elif 'baseline_start' in spec:
            start = self._integer(spec['baseline_start'], f"{path}.baseline_start", appliance_id)
            baseline = list(range(start, start + duration))
        else:
            self._fail("missing 'baseline_on_slots' or 'baseline_start'", f"{path}.baseline_on_slots", appliance_id)
        try:
            return Appliance(
                id=appliance_id,
                rating_kw=self._number(self._require(spec, 'rating_kw', path, appliance_id),
                                       f"{path}.rating_kw", appliance_id),
                duration_slots=duration,
                window_start=self._integer(window[0], f"{path}.window[0]", appliance_id),
                window_end=self._integer(window[1], f"{path}.window[1]", appliance_id),
                flexibility=self._require(spec, 'flexibility', path, appliance_id),
                criticality=spec.get('criticality', 'low'),
                baseline_on_slots=tuple(baseline),
            )
        except ValidationError as e:
            raise self._wrap(e, path, appliance_id)
        except ValueError as e:
            # Unknown enum values
            self._fail(str(e), path, appliance_id)

    def _parse_customers(self, section, templates, pv_profiles, time_grid: TimeGrid) -> List[Customer]:
        if not isinstance(section, list) or not section:
            self._fail("expected a non-empty list", 'customers')
        T = time_grid.slots_per_day
        customers, seen = [], set()
        for i, spec in enumerate(section):
            path = f"customers[{i}]"
            customer_id = str(self._require(spec, 'id', path))
            if customer_id in seen:
                self._fail(f"duplicate customer id '{customer_id}'", f"{path}.id", customer_id)
            seen.add(customer_id)

            if 'template' in spec:
                name = spec['template']
                if name not in templates:
                    self._fail(f"unknown appliance template '{name}'", f"{path}.template", customer_id)
                appliance_specs, appliance_path = templates[name], f"appliance_templates.{name}"
            else:
                appliance_specs = self._require(spec, 'appliances', path, customer_id)
                appliance_path = f"{path}.appliances"
            appliances = [self._parse_appliance(a, f"{appliance_path}[{j}]", customer_id)
                          for j, a in enumerate(appliance_specs)]

            pv = None
            if spec.get('pv') is not None:
                pv = self._parse_customer_pv(spec['pv'], pv_profiles, f"{path}.pv", customer_id, T)
            kind_value = self._require(spec, "kind", path, customer_id)
            try:
                kind = CustomerKind(kind_value)
            except ValueError:
                self._fail(f"unknown customer kind {kind_value!r}", f"{path}.kind", customer_id)
            try:
                customer = Customer(
                    id=customer_id,
                    kind=kind,
                    bus=self._integer(self._require(spec, 'bus', path, customer_id), f"{path}.bus", customer_id),
                    appliances=tuple(appliances),
                    max_demand_kw=self._number(self._require(spec, 'max_demand_kw', path, customer_id),
                                               f"{path}.max_demand_kw", customer_id),
                    has_pv=pv is not None,
                    pv=pv,
                )
                customer.validate(time_grid)
            except ValidationError as e:
                raise self._wrap(e, path, customer_id)
            customers.append(customer)
        return customers

    def _parse_customer_pv(self, spec, pv_profiles, path: str, customer_id: str, T: int) -> PvProfile:
        if isinstance(spec, list):
            generation = self._series(spec, T, path)
        else:
            name = self._require(spec, 'profile', path, customer_id)
            if name not in pv_profiles:
                self._fail(f"unknown PV profile '{name}'", f"{path}.profile", customer_id)
            peak = self._number(self._require(spec, 'peak_kw', path, customer_id), f"{path}.peak_kw", customer_id)
            if peak < 0:
                self._fail("peak_kw must be >= 0", f"{path}.peak_kw", customer_id)
            generation = peak * pv_profiles[name]
        scale = 1.0
        if isinstance(spec, dict) and 'scale' in spec:
            scale = self._number(spec['scale'], f"{path}.scale", customer_id)
        try:
            return PvProfile(generation, scale)
        except ValidationError as e:
            raise self._wrap(e, path, customer_id)

    def _parse_network(self, section, customers: List[Customer]) -> FeederNetwork:
        bus_specs = self._require(section, 'buses', 'network')
        branch_specs = self._require(section, 'branches', 'network')
        if not isinstance(bus_specs, list) or not isinstance(branch_specs, list):
            self._fail("buses and branches must be lists", 'network')

        bus_ids = [self._integer(b if not isinstance(b, dict) else self._require(b, 'id', f"network.buses[{i}]"),
                                 f"network.buses[{i}]") for i, b in enumerate(bus_specs)]
        attached: Dict[int, List[str]] = {bus: [] for bus in bus_ids}
        for customer in customers:
            if customer.bus not in attached:
                self._fail(f"customer {customer.id} references unknown bus {customer.bus}",
                           f"customers.{customer.id}.bus", customer.id)
            attached[customer.bus].append(customer.id)

        branches = []
        for i, spec in enumerate(branch_specs):
            path = f"network.branches[{i}]"
            branches.append(Branch(
                from_bus=self._integer(self._require(spec, 'from', path), f"{path}.from"),
                to_bus=self._integer(self._require(spec, 'to', path), f"{path}.to"),
                resistance_ohm=self._number(self._require(spec, 'r_ohm', path), f"{path}.r_ohm"),
                reactance_ohm=self._number(spec.get('x_ohm', 0.0), f"{path}.x_ohm"),
            ))

        slack = self._integer(section.get('slack_bus', 1), 'network.slack_bus')
        if attached.get(slack):
            self._fail(f"customers cannot attach to the slack bus {slack}", 'network.slack_bus',
                       attached[slack][0])
        try:
            return FeederNetwork(
                buses=[Bus(bus, tuple(attached[bus])) for bus in bus_ids],
                branches=branches,
                slack_bus=slack,
                base_kv=self._number(section.get('base_kv', config.DEFAULT_BASE_KV), 'network.base_kv'),
                base_mva=self._number(section.get('base_mva', config.DEFAULT_BASE_MVA), 'network.base_mva'),
            )
        except ValidationError as e:
            if e.field and e.field.startswith('network'):
                line = self._line_of(e.entity)
                e.line = line
                raise
            raise self._wrap(e, 'network')


def load_scenario_parts(file_path: Union[str, Path], verbose: bool = False) -> Dict[str, Any]:
    """Load and validate a scenario file in one call."""
    loader = ScenarioLoader(file_path, verbose=verbose)
    loader.load_data()
    return loader.preprocess_data()


def scenario_digest(file_path: Union[str, Path]) -> Tuple[str, int]:
    """sha256 of the raw scenario bytes and their length."""
    raw = Path(file_path).read_bytes()
    return hashlib.sha256(raw).hexdigest(), len(raw)
