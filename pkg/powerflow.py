"""Radial feeder model and backward/forward sweep load flow."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix

import config
from model import Customer, Schedule, ValidationError, net_load_profile, pv_surplus_profile

logger = logging.getLogger(__name__)


class NonRadialNetworkError(ValidationError):
    """Branch set is not a tree spanning every bus from the slack."""


class ConvergenceError(RuntimeError):
    """Load flow did not converge within the iteration cap."""

    def __init__(self, message: str, slot: Optional[int] = None, solution=None):
        super().__init__(message)
        self.slot = slot
        self.solution = solution


@dataclass(frozen=True)
class Bus:
    id: int
    customer_ids: Tuple[str, ...] = ()


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    resistance_ohm: float
    reactance_ohm: float = 0.0


class FeederNetwork:
    """
    Radial distribution feeder rooted at the slack (substation) bus.

    Impedances are given in ohm and converted to per-unit on
    (base_kv line-to-line, base_mva three-phase).
    """

    def __init__(self, buses: Sequence[Bus], branches: Sequence[Branch], slack_bus: int = 1,
                 base_kv: float = config.DEFAULT_BASE_KV, base_mva: float = config.DEFAULT_BASE_MVA,
                 resistance_scale: float = 1.0):
        self.buses = tuple(buses)
        self.branches = tuple(branches)
        self.slack_bus = slack_bus
        self.base_kv = float(base_kv)
        self.base_mva = float(base_mva)
        self.resistance_scale = float(resistance_scale)
        self._validate()
        self._build_topology()

    def _validate(self):
        if self.base_kv <= 0 or self.base_mva <= 0:
            raise ValidationError("base_kv and base_mva must be > 0", field='network')
        if self.resistance_scale < 0:
            raise ValidationError("resistance_scale must be >= 0", field='network.resistance_scale')
        ids = [bus.id for bus in self.buses]
        if len(set(ids)) != len(ids):
            raise ValidationError("Duplicate bus ids", field='network.buses')
        if self.slack_bus not in ids:
            raise ValidationError(f"Slack bus {self.slack_bus} is not a bus", entity=str(self.slack_bus),
                                  field='network.slack_bus')
        for branch in self.branches:
            for end in (branch.from_bus, branch.to_bus):
                if end not in ids:
                    raise ValidationError(f"Branch {branch.from_bus}-{branch.to_bus} references unknown bus {end}",
                                          entity=f"{branch.from_bus}-{branch.to_bus}", field='network.branches')
            if branch.resistance_ohm < 0:
                raise ValidationError(f"Branch {branch.from_bus}-{branch.to_bus} has negative resistance",
                                      entity=f"{branch.from_bus}-{branch.to_bus}", field='resistance_ohm')

        graph = nx.MultiGraph()
        graph.add_nodes_from(ids)
        graph.add_edges_from((b.from_bus, b.to_bus) for b in self.branches)
        if len(self.branches) != len(ids) - 1 or not nx.is_tree(graph):
            cycle = None
            try:
                cycle = nx.find_cycle(graph)
            except nx.NetworkXNoCycle:
                pass
            detail = f" (cycle through {[edge[:2] for edge in cycle]})" if cycle else ""
            raise NonRadialNetworkError(
                f"Network with {len(ids)} buses and {len(self.branches)} branches is not radial{detail}",
                entity=str(cycle[0][0]) if cycle else None, field='network.branches')
        self._graph = nx.Graph(graph)

    def _build_topology(self):
        # Non-slack buses in BFS order from the slack; each owns the branch feeding it.
        edge_data = {}
        for branch in self.branches:
            edge_data[(branch.from_bus, branch.to_bus)] = branch
            edge_data[(branch.to_bus, branch.from_bus)] = branch
        order, parent, feeding = [], {}, {}
        for upstream, downstream in nx.bfs_edges(self._graph, self.slack_bus):
            order.append(downstream)
            parent[downstream] = upstream
            feeding[downstream] = edge_data[(upstream, downstream)]

        self.bus_order: Tuple[int, ...] = tuple(order)
        self.parent: Dict[int, int] = parent
        self.feeding_branch: Dict[int, Branch] = feeding
        self.bus_position = {bus: i for i, bus in enumerate(order)}

        n = len(order)
        z_base = self.z_base_ohm
        self.z_pu = np.array([
            complex(feeding[bus].resistance_ohm * self.resistance_scale, feeding[bus].reactance_ohm) / z_base
            for bus in order
        ], dtype=complex)

        # path[i, j] = 1 when the branch feeding bus j lies on the slack -> bus i path
        rows, cols = [], []
        for i, bus in enumerate(order):
            node = bus
            while node != self.slack_bus:
                rows.append(i)
                cols.append(self.bus_position[node])
                node = parent[node]
        self.path = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        self.path_t = self.path.T.tocsr()
        self.root_branches = np.array([parent[bus] == self.slack_bus for bus in order], dtype=bool)

    @property
    def bus_ids(self) -> Tuple[int, ...]:
        """Bus ids in input order."""
        return tuple(bus.id for bus in self.buses)

    @property
    def non_slack_buses(self) -> Tuple[int, ...]:
        """Non-slack buses in BFS order from the slack."""
        return self.bus_order

    @property
    def z_base_ohm(self) -> float:
        """Impedance base from the voltage and power bases."""
        return self.base_kv ** 2 / self.base_mva

    @property
    def i_base_amp(self) -> float:
        """Line current base, in A."""
        return self.base_mva * 1e6 / (math.sqrt(3) * self.base_kv * 1e3)

    @property
    def s_base_kw(self) -> float:
        """Power base, in kW."""
        return self.base_mva * 1000.0

    def path_to_slack(self, bus: int) -> List[int]:
        """Buses from the slack down to bus, inclusive."""
        path = [bus]
        while path[-1] != self.slack_bus:
            path.append(self.parent[path[-1]])
        return path[::-1]

    def with_resistance_scale(self, factor: float) -> 'FeederNetwork':
        """Copy with every branch resistance multiplied by factor."""
        return FeederNetwork(self.buses, self.branches, self.slack_bus, self.base_kv, self.base_mva,
                             resistance_scale=factor)

    def bus_of_customer(self) -> Dict[str, int]:
        """Customer id to bus id."""
        return {cid: bus.id for bus in self.buses for cid in bus.customer_ids}


@dataclass(frozen=True, eq=False)
class SlotInjections:
    """Per non-slack bus: P in kW (+ consumption, - export) and Q in kVAr."""

    bus_ids: Tuple[int, ...]
    p_kw: np.ndarray
    q_kvar: np.ndarray

    @classmethod
    def zeros(cls, network: FeederNetwork) -> 'SlotInjections':
        """No injection at any bus."""
        n = len(network.non_slack_buses)
        return cls(network.non_slack_buses, np.zeros(n), np.zeros(n))

    @classmethod
    def from_mapping(cls, network: FeederNetwork, p_kw: Mapping[int, float],
                     q_kvar: Optional[Mapping[int, float]] = None) -> 'SlotInjections':
        """Injections from bus id to kW (and kVAr) maps; missing buses inject nothing."""
        q_kvar = q_kvar or {}
        buses = network.non_slack_buses
        return cls(buses,
                   np.array([p_kw.get(b, 0.0) for b in buses], dtype=float),
                   np.array([q_kvar.get(b, 0.0) for b in buses], dtype=float))


@dataclass(frozen=True, eq=False)
class LoadFlowSolution:
    bus_ids: Tuple[int, ...]  # slack first, then BFS order
    voltage_pu: np.ndarray  # complex
    branch_to_bus: Tuple[int, ...]  # branch identified by the bus it feeds
    branch_current_pu: np.ndarray  # complex
    branch_resistance_pu: np.ndarray
    s_base_kw: float
    i_base_amp: float
    converged: bool
    iterations: int
    root_branch_mask: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    slot: Optional[int] = None
    load_kw: float = 0.0
    export_kw: float = 0.0

    @property
    def bus_voltage_pu(self) -> np.ndarray:
        """Voltage magnitudes, slack first."""
        return np.abs(self.voltage_pu)

    @property
    def branch_current_amp(self) -> np.ndarray:
        """Branch current magnitudes, in A."""
        return np.abs(self.branch_current_pu) * self.i_base_amp

    @property
    def branch_loss_kw(self) -> np.ndarray:
        """I^2 R loss of every branch, in kW."""
        return np.abs(self.branch_current_pu) ** 2 * self.branch_resistance_pu * self.s_base_kw

    @property
    def total_loss_kw(self) -> float:
        """Feeder loss for the slot, in kW."""
        return float(self.branch_loss_kw.sum())

    @property
    def slack_injection_kw(self) -> float:
        """Real power drawn from the slack bus, in kW."""
        root_current = complex(self.branch_current_pu[self.root_branch_mask].sum())
        return float((self.voltage_pu[0] * np.conj(root_current)).real * self.s_base_kw)

    def voltage_at(self, bus: int) -> float:
        """Voltage magnitude at one bus."""
        return float(self.bus_voltage_pu[self.bus_ids.index(bus)])

    def voltage_series(self) -> Dict[int, float]:
        """Bus id to voltage magnitude."""
        return dict(zip(self.bus_ids, self.bus_voltage_pu.tolist()))


def build_injections(network: FeederNetwork, customers: Sequence[Customer],
                     schedules: Mapping[str, Schedule], t: int,
                     power_factor: float = config.LOAD_POWER_FACTOR) -> SlotInjections:
    """Signed per-bus net power at slot t; exports carry no reactive power."""
    positions = network.bus_position
    p = np.zeros(len(network.non_slack_buses))
    q = np.zeros_like(p)
    tan_phi = math.tan(math.acos(power_factor))
    for customer in customers:
        if customer.bus not in positions:
            raise ValidationError(f"Customer {customer.id} references unknown or slack bus {customer.bus}",
                                  entity=customer.id, field='bus')
        schedule = schedules[customer.id]
        consumption = float(net_load_profile(schedule, customer)[t - 1])
        export = float(pv_surplus_profile(schedule, customer)[t - 1])
        position = positions[customer.bus]
        p[position] += consumption - export
        q[position] += consumption * tan_phi
    return SlotInjections(network.non_slack_buses, p, q)


def solve_slot(network: FeederNetwork, injections: SlotInjections,
               tol: float = config.LOADFLOW_TOLERANCE, max_iter: int = config.LOADFLOW_MAX_ITER,
               slot: Optional[int] = None) -> LoadFlowSolution:
    """
    Backward/forward sweep with constant-power loads.

    Backward: bus currents conj(S/V) accumulated leaf-to-root along the
    path matrix. Forward: V = V_slack - path @ (z * I_branch).
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be > 0 and max_iter >= 1")
    if tuple(injections.bus_ids) != network.non_slack_buses:
        raise ValidationError("Injections are not aligned with the network's bus order", field='injections')

    s_pu = (injections.p_kw + 1j * injections.q_kvar) / network.s_base_kw
    v_slack = complex(config.SLACK_VOLTAGE_PU)
    v = np.full(len(network.non_slack_buses), v_slack, dtype=complex)
    i_branch = np.zeros_like(v)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        i_bus = np.conj(s_pu / v)
        i_branch = network.path_t @ i_bus
        v_new = v_slack - network.path @ (network.z_pu * i_branch)
        change = np.max(np.abs(np.abs(v_new) - np.abs(v)), initial=0.0)
        v = v_new
        if change < tol:
            converged = True
            break

    if not converged:
        logger.warning("Load flow did not converge in %d iterations (slot %s)", max_iter, slot)

    solution = LoadFlowSolution(
        bus_ids=(network.slack_bus,) + network.non_slack_buses,
        voltage_pu=np.concatenate([[v_slack], v]),
        branch_to_bus=network.non_slack_buses,
        branch_current_pu=i_branch,
        branch_resistance_pu=network.z_pu.real.copy(),
        s_base_kw=network.s_base_kw,
        i_base_amp=network.i_base_amp,
        converged=converged,
        iterations=iterations,
        root_branch_mask=network.root_branches,
        slot=slot,
        load_kw=float(injections.p_kw[injections.p_kw > 0].sum()),
        export_kw=float(-injections.p_kw[injections.p_kw < 0].sum()),
    )
    return solution


def solve_day(network: FeederNetwork, customers: Sequence[Customer], schedules: Mapping[str, Schedule],
              num_slots: int = config.SLOTS_PER_DAY, power_factor: float = config.LOAD_POWER_FACTOR,
              tol: float = config.LOADFLOW_TOLERANCE,
              max_iter: int = config.LOADFLOW_MAX_ITER) -> List[LoadFlowSolution]:
    """One independent load flow per slot; raises on the first non-converged slot."""
    solutions = []
    for t in range(1, num_slots + 1):
        injections = build_injections(network, customers, schedules, t, power_factor)
        solution = solve_slot(network, injections, tol, max_iter, slot=t)
        if not solution.converged:
            raise ConvergenceError(f"Load flow did not converge at slot {t}", slot=t, solution=solution)
        solutions.append(solution)
    return solutions


def daily_energy_loss_kwh(solutions: Sequence[LoadFlowSolution],
                          slot_hours: float = config.SLOT_HOURS) -> float:
    """Feeder energy loss over the solved slots, in kWh."""
    return float(slot_hours * sum(s.total_loss_kw for s in solutions))


def branch_flow_losses_kw(network: FeederNetwork, solution: LoadFlowSolution) -> np.ndarray:
    """Per-branch sent minus delivered real power, from solved voltages and currents."""
    v = solution.voltage_pu
    index = {bus: i for i, bus in enumerate(solution.bus_ids)}
    losses = []
    for position, bus in enumerate(network.non_slack_buses):
        current = solution.branch_current_pu[position]
        sent = v[index[network.parent[bus]]] * np.conj(current)
        delivered = v[index[bus]] * np.conj(current)
        losses.append((sent - delivered).real * network.s_base_kw)
    return np.array(losses)
