"""Domain model: appliances, schedules, tariffs, PV profiles and customers."""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

import config

logger = logging.getLogger(__name__)


class ValidationError(ValueError):
    """An input entity violates a model invariant."""

    def __init__(self, message: str, entity: Optional[str] = None, field: Optional[str] = None,
                 line: Optional[int] = None):
        super().__init__(message)
        self.entity = entity
        self.field = field
        self.line = line


class DimensionMismatchError(ValueError):
    """Schedule, tariff or profile shapes do not line up."""


class Flexibility(str, Enum):
    FIXED = 'fixed'
    SHIFTABLE_UNINTERRUPTIBLE = 'uninterruptible'
    SHIFTABLE_INTERRUPTIBLE = 'interruptible'


class Criticality(str, Enum):
    LOW = 'low'
    MED = 'med'
    HIGH = 'high'


class CustomerKind(str, Enum):
    RESIDENTIAL = 'residential'
    COMMERCIAL = 'commercial'


class ViolationKind(str, Enum):
    MAX_DEMAND = 'MaxDemand'
    DURATION = 'Duration'
    WINDOW = 'Window'
    CONTIGUITY = 'Contiguity'
    FIXED_MOVED = 'FixedMoved'


@dataclass(frozen=True)
class TimeGrid:
    """Day-ahead horizon split into equal slots, indexed 1..slots_per_day."""

    slots_per_day: int = config.SLOTS_PER_DAY
    slot_hours: float = config.SLOT_HOURS

    def __post_init__(self):
        if int(self.slots_per_day) != self.slots_per_day or self.slots_per_day < 1:
            raise ValidationError(
                f"slots_per_day must be a positive integer, got {self.slots_per_day}",
                field='time.slots_per_day')
        if self.slot_hours <= 0 or abs(self.slots_per_day * self.slot_hours - 24.0) > 1e-9:
            raise ValidationError(
                f"slots_per_day x slot_hours must equal 24, got "
                f"{self.slots_per_day} x {self.slot_hours}",
                field='time.slot_hours')

    @property
    def slots(self) -> range:
        """Slot numbers 1..slots_per_day."""
        return range(1, self.slots_per_day + 1)

    def slots_in_hours(self, start_hour: float, end_hour: float) -> Tuple[int, ...]:
        """Slots that overlap the clock window [start_hour, end_hour)."""
        if not 0 <= start_hour < end_hour <= 24:
            raise ValidationError(f"Clock window [{start_hour}, {end_hour}) is not inside one day",
                                  field='hours')
        eps = 1e-9
        return tuple(t for t in self.slots
                     if (t - 1) * self.slot_hours < end_hour - eps and t * self.slot_hours > start_hour + eps)

    def slot_label(self, t: int) -> str:
        """Clock time at which slot t starts, as HH:MM."""
        minutes = int(round((t - 1) * self.slot_hours * 60))
        return f"{minutes // 60:02d}:{minutes % 60:02d}"


@dataclass(frozen=True)
class Appliance:
    """
    One controllable or fixed load.

    Slots are 1-based. window_end is the last slot in which the appliance may
    be ON, so an uninterruptible appliance may start anywhere in
    [window_start, window_end - duration_slots + 1].
    """

    id: str
    rating_kw: float
    duration_slots: int
    window_start: int
    window_end: int
    flexibility: Flexibility
    criticality: Criticality = Criticality.LOW
    baseline_on_slots: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'baseline_on_slots', tuple(int(t) for t in self.baseline_on_slots))
        object.__setattr__(self, 'flexibility', Flexibility(self.flexibility))
        object.__setattr__(self, 'criticality', Criticality(self.criticality))

        if self.rating_kw <= 0:
            raise ValidationError(f"Appliance {self.id}: rating_kw must be > 0",
                                  entity=self.id, field='rating_kw')
        if self.window_start < 1 or self.window_start > self.window_end:
            raise ValidationError(
                f"Appliance {self.id}: window [{self.window_start}, {self.window_end}] is empty "
                f"or starts before slot 1",
                entity=self.id, field='window_end')
        width = self.window_end - self.window_start + 1
        if self.duration_slots < 1 or self.duration_slots > width:
            raise ValidationError(
                f"Appliance {self.id}: duration {self.duration_slots} does not fit window width {width}",
                entity=self.id, field='duration_slots')

        baseline = self.baseline_on_slots
        if len(baseline) != self.duration_slots:
            raise ValidationError(
                f"Appliance {self.id}: baseline has {len(baseline)} slots, expected {self.duration_slots}",
                entity=self.id, field='baseline_on_slots')
        if any(b <= a for a, b in zip(baseline, baseline[1:])):
            raise ValidationError(f"Appliance {self.id}: baseline slots must be strictly increasing",
                                  entity=self.id, field='baseline_on_slots')
        if baseline[0] < self.window_start or baseline[-1] > self.window_end:
            raise ValidationError(f"Appliance {self.id}: baseline slots fall outside the window",
                                  entity=self.id, field='baseline_on_slots')
        if self.is_contiguous and baseline[-1] - baseline[0] != self.duration_slots - 1:
            raise ValidationError(
                f"Appliance {self.id}: {self.flexibility.value} baseline must be one contiguous block",
                entity=self.id, field='baseline_on_slots')

    @property
    def is_flexible(self) -> bool:
        """True unless the appliance is fixed."""
        return self.flexibility != Flexibility.FIXED

    @property
    def is_contiguous(self) -> bool:
        """True when the on-slots must form one block."""
        return self.flexibility != Flexibility.SHIFTABLE_INTERRUPTIBLE

    @property
    def window_width(self) -> int:
        return self.window_end - self.window_start + 1

    def scaled(self, factor: float) -> 'Appliance':
        """Copy with the rating multiplied by factor."""
        return replace(self, rating_kw=self.rating_kw * factor)


@dataclass(frozen=True, eq=False)
class Schedule:
    """
    Binary on/off matrix for one customer: rows are appliances, columns are
    slots 1..T (stored 0-based).
    """

    on: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.on, dtype=np.int8)
        if matrix.ndim != 2:
            raise DimensionMismatchError(f"Schedule must be 2-D, got shape {matrix.shape}")
        if not np.isin(matrix, (0, 1)).all():
            raise ValidationError("Schedule entries must be 0 or 1")
        matrix.setflags(write=False)
        object.__setattr__(self, 'on', matrix)

    @classmethod
    def from_on_slots(cls, on_slots: Sequence[Sequence[int]], num_slots: int) -> 'Schedule':
        """Build a schedule from 1-based on-slot lists, one per appliance."""
        matrix = np.zeros((len(on_slots), num_slots), dtype=np.int8)
        for row, slots in enumerate(on_slots):
            for t in slots:
                if t < 1 or t > num_slots:
                    raise DimensionMismatchError(f"Slot {t} outside 1..{num_slots}")
                matrix[row, t - 1] = 1
        return cls(matrix)

    @property
    def num_appliances(self) -> int:
        return self.on.shape[0]

    @property
    def num_slots(self) -> int:
        return self.on.shape[1]

    def with_row(self, index: int, on_slots: Sequence[int]) -> 'Schedule':
        """Copy with one appliance row replaced by the given on-slots."""
        matrix = self.on.copy()
        matrix[index, :] = 0
        matrix[index, np.asarray(on_slots, dtype=int) - 1] = 1
        return Schedule(matrix)

    def rows_on_slots(self) -> List[Tuple[int, ...]]:
        """1-based on-slots of every row."""
        return [tuple(int(t) + 1 for t in np.flatnonzero(row)) for row in self.on]

    def equals(self, other: 'Schedule') -> bool:
        """Same shape and same entries."""
        return self.on.shape == other.on.shape and bool(np.array_equal(self.on, other.on))


def _frozen_array(values, name: str, entity: Optional[str] = None) -> np.ndarray:
    array = np.array(values, dtype=float)
    if array.ndim != 1:
        raise ValidationError(f"{name} must be a 1-D series", entity=entity, field=name)
    if not np.isfinite(array).all() or (array < 0).any():
        raise ValidationError(f"{name} entries must be finite and >= 0", entity=entity, field=name)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Tariff:
    """Time-of-use energy price per slot, in cents/kWh."""

    price_cents_per_kwh: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'price_cents_per_kwh',
                           _frozen_array(self.price_cents_per_kwh, 'price_cents_per_kwh'))

    def __len__(self) -> int:
        return len(self.price_cents_per_kwh)

    def price(self, t: int) -> float:
        """Price at slot t, in cents/kWh."""
        return float(self.price_cents_per_kwh[t - 1])


@dataclass(frozen=True)
class PenaltySchedule:
    """Penalty price pi_p (cents/kWh of shifted energy) per criticality tier."""

    by_criticality: Mapping[Criticality, float] = field(default_factory=dict)

    def __post_init__(self):
        values = {Criticality(k): float(v) for k, v in dict(self.by_criticality).items()}
        for tier in Criticality:
            values.setdefault(tier, 0.0)
        if any(v < 0 for v in values.values()):
            raise ValidationError("Penalty prices must be >= 0", field='penalties')
        object.__setattr__(self, 'by_criticality', values)

    @classmethod
    def uniform(cls, cents_per_kwh: float) -> 'PenaltySchedule':
        """The same price for every criticality tier."""
        return cls({tier: cents_per_kwh for tier in Criticality})

    @classmethod
    def commercial_default(cls) -> 'PenaltySchedule':
        """Default Low/Med/High commercial prices."""
        return cls(dict(config.DEFAULT_COMMERCIAL_PENALTIES))

    def price_for(self, criticality: Criticality) -> float:
        """Penalty price of one tier."""
        return self.by_criticality[Criticality(criticality)]


@dataclass(frozen=True, eq=False)
class PvProfile:
    """Rooftop PV output per slot in kW; scale is the penetration multiplier."""

    generation_kw: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, 'generation_kw', _frozen_array(self.generation_kw, 'generation_kw'))
        if self.scale < 0:
            raise ValidationError("PV scale must be >= 0", field='pv.scale')

    @property
    def effective_kw(self) -> np.ndarray:
        return self.scale * self.generation_kw

    def with_scale(self, scale: float) -> 'PvProfile':
        """Same shape with a new penetration multiplier."""
        return PvProfile(self.generation_kw, scale)


@dataclass(frozen=True)
class Customer:
    """A household or commercial site attached to one feeder bus."""

    id: str
    kind: CustomerKind
    bus: int
    appliances: Tuple[Appliance, ...]
    max_demand_kw: float
    has_pv: bool = False
    pv: Optional[PvProfile] = None

    def __post_init__(self):
        object.__setattr__(self, 'kind', CustomerKind(self.kind))
        object.__setattr__(self, 'appliances', tuple(self.appliances))
        ids = [a.id for a in self.appliances]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"Customer {self.id}: duplicate appliance ids", entity=self.id,
                                  field='appliances')
        if self.max_demand_kw < 0:
            raise ValidationError(f"Customer {self.id}: max_demand_kw must be >= 0", entity=self.id,
                                  field='max_demand_kw')
        if self.has_pv and self.pv is None:
            raise ValidationError(f"Customer {self.id}: has_pv requires a PV profile", entity=self.id,
                                  field='pv')

    @property
    def ratings_kw(self) -> np.ndarray:
        return np.array([a.rating_kw for a in self.appliances], dtype=float)

    def appliance_index(self, appliance_id: str) -> int:
        for index, appliance in enumerate(self.appliances):
            if appliance.id == appliance_id:
                return index
        raise KeyError(appliance_id)

    def pv_output_kw(self, num_slots: int) -> np.ndarray:
        """alpha * scale * P_pv(t) for every slot (zeros without PV)."""
        if not self.has_pv or self.pv is None:
            return np.zeros(num_slots)
        output = self.pv.effective_kw
        if len(output) != num_slots:
            raise DimensionMismatchError(
                f"Customer {self.id}: PV profile has {len(output)} slots, expected {num_slots}")
        return output

    def baseline_schedule(self, num_slots: int) -> Schedule:
        """Schedule holding every appliance at its baseline slots."""
        return Schedule.from_on_slots([a.baseline_on_slots for a in self.appliances], num_slots)

    def validate(self, time_grid: TimeGrid) -> None:
        """Check the invariants that depend on the horizon length."""
        T = time_grid.slots_per_day
        for appliance in self.appliances:
            if appliance.window_end > T:
                raise ValidationError(
                    f"Appliance {appliance.id} of {self.id}: window_end {appliance.window_end} > T={T}",
                    entity=appliance.id, field='window_end')
        if self.pv is not None and len(self.pv.generation_kw) != T:
            raise ValidationError(
                f"Customer {self.id}: PV profile length {len(self.pv.generation_kw)} != T={T}",
                entity=self.id, field='pv')
        baseline_peak = float(gross_load_profile(self.baseline_schedule(T), self).max(initial=0.0))
        if baseline_peak > self.max_demand_kw + config.FEASIBILITY_TOLERANCE_KW:
            raise ValidationError(
                f"Customer {self.id}: baseline peak {baseline_peak:.3f} kW exceeds MD "
                f"{self.max_demand_kw:.3f} kW",
                entity=self.id, field='max_demand_kw')

    def with_pv_scale(self, scale: float) -> 'Customer':
        """Copy with a new PV penetration multiplier; no-op without PV."""
        if self.pv is None:
            return self
        return replace(self, pv=self.pv.with_scale(scale))

    def without_pv(self) -> 'Customer':
        """Copy whose PV output is zero."""
        return replace(self, has_pv=False)

    def with_load_scale(self, factor: float) -> 'Customer':
        """Copy with every appliance rating and the MD multiplied by factor."""
        return replace(self,
                       appliances=tuple(a.scaled(factor) for a in self.appliances),
                       max_demand_kw=self.max_demand_kw * factor)


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    appliance_id: Optional[str]
    slot: Optional[int]
    detail: str = ''


def _check_dimensions(schedule: Schedule, customer: Customer) -> None:
    if schedule.num_appliances != len(customer.appliances):
        raise DimensionMismatchError(
            f"Schedule has {schedule.num_appliances} rows but customer {customer.id} "
            f"has {len(customer.appliances)} appliances")


def _check_slot(schedule: Schedule, t: int) -> None:
    if t < 1 or t > schedule.num_slots:
        raise DimensionMismatchError(f"Slot {t} outside 1..{schedule.num_slots}")


def gross_load_profile(schedule: Schedule, customer: Customer) -> np.ndarray:
    """Aggregate appliance power per slot, in kW."""
    _check_dimensions(schedule, customer)
    if schedule.num_appliances == 0:
        return np.zeros(schedule.num_slots)
    return customer.ratings_kw @ schedule.on


def net_load_profile(schedule: Schedule, customer: Customer) -> np.ndarray:
    """Grid import per slot: gross load minus PV, clamped at zero."""
    pv = customer.pv_output_kw(schedule.num_slots)
    return np.maximum(gross_load_profile(schedule, customer) - pv, 0.0)


def pv_surplus_profile(schedule: Schedule, customer: Customer) -> np.ndarray:
    """PV left over after local consumption per slot, in kW."""
    pv = customer.pv_output_kw(schedule.num_slots)
    return np.maximum(pv - gross_load_profile(schedule, customer), 0.0)


def gross_load(schedule: Schedule, customer: Customer, t: int) -> float:
    """Aggregate appliance power at slot t, in kW."""
    _check_slot(schedule, t)
    return float(gross_load_profile(schedule, customer)[t - 1])


def net_load(schedule: Schedule, customer: Customer, t: int) -> float:
    """Grid import at slot t, in kW."""
    _check_slot(schedule, t)
    return float(net_load_profile(schedule, customer)[t - 1])


def pv_surplus(schedule: Schedule, customer: Customer, t: int) -> float:
    """PV exported at slot t, in kW."""
    _check_slot(schedule, t)
    return float(pv_surplus_profile(schedule, customer)[t - 1])


def on_slot_vector(schedule: Schedule, appliance_index: int,
                   appliance: Optional[Appliance] = None) -> Tuple[int, ...]:
    """
    Ordered slots (1-based) in which the row is ON.

    When the appliance is given, the row must hold exactly duration_slots ones.
    """
    slots = tuple(int(t) + 1 for t in np.flatnonzero(schedule.on[appliance_index]))
    if appliance is not None and len(slots) != appliance.duration_slots:
        raise ValidationError(
            f"Appliance {appliance.id}: row has {len(slots)} on-slots, expected {appliance.duration_slots}",
            entity=appliance.id, field='schedule')
    return slots


def check_row(appliance: Appliance, row: np.ndarray) -> List[Violation]:
    """Constraints that can be decided from a single appliance row."""
    violations = []
    on = np.flatnonzero(row) + 1
    if len(on) != appliance.duration_slots:
        violations.append(Violation(ViolationKind.DURATION, appliance.id, None,
                                    f"{len(on)} on-slots, expected {appliance.duration_slots}"))
    for t in on:
        if t < appliance.window_start or t > appliance.window_end:
            violations.append(Violation(ViolationKind.WINDOW, appliance.id, int(t),
                                        f"outside [{appliance.window_start}, {appliance.window_end}]"))
    if appliance.is_contiguous and len(on) > 1 and on[-1] - on[0] != len(on) - 1:
        violations.append(Violation(ViolationKind.CONTIGUITY, appliance.id, int(on[0]),
                                    "on-slots are not one contiguous block"))
    if appliance.flexibility == Flexibility.FIXED and tuple(int(t) for t in on) != appliance.baseline_on_slots:
        violations.append(Violation(ViolationKind.FIXED_MOVED, appliance.id, None,
                                    "fixed appliance moved from its baseline"))
    return violations


def check_feasibility(schedule: Schedule, customer: Customer) -> List[Violation]:
    """Every violated constraint of the schedule; empty means feasible."""
    _check_dimensions(schedule, customer)
    violations = []
    for appliance, row in zip(customer.appliances, schedule.on):
        violations.extend(check_row(appliance, row))

    gross = gross_load_profile(schedule, customer)
    for t in np.flatnonzero(gross > customer.max_demand_kw + config.FEASIBILITY_TOLERANCE_KW):
        violations.append(Violation(ViolationKind.MAX_DEMAND, None, int(t) + 1,
                                    f"{gross[t]:.3f} kW > MD {customer.max_demand_kw:.3f} kW"))
    if violations:
        logger.debug("Customer %s: %d constraint violations", customer.id, len(violations))
    return violations


def area_customers(customers: Sequence[Customer]) -> Dict[CustomerKind, List[Customer]]:
    """Customers grouped by kind."""
    grouped = {kind: [] for kind in CustomerKind}
    for customer in customers:
        grouped[customer.kind].append(customer)
    return grouped
