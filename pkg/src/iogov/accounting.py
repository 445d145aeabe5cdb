"""Cost-based utilization accounting and limit enforcement.

The cost of an I/O is the device time it consumes, normalized by the
device's rated capacity, so one normalized second on any device is the
same entitlement.  Each device therefore contributes one normalized
unit per second of availability, and an entity's utilization is its
consumed cost divided by the pool's available cost.

Enforcement runs on two clocks: 200ms quanta give responsive throttle
decisions, 1s intervals reconcile the five quanta as a single frame and
fold the actual-versus-budget delta into a clamped carry-forward credit
that biases the next second's enforcement.  Dispatch eligibility is a
cumulative check within the interval (consumed plus in-flight cost
against the budget earned so far), which keeps boundary-straddling I/O
from oscillating the throttle while still stopping a burst before it
lands, not after.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .hierarchy import ResourcePlan, effective_allocation

QUANTUM_US = 200_000
QUANTA_PER_INTERVAL = 5
CLAMP_PP = 3.0


class InfeasibleTarget(Exception):
    """Requested rate exceeds what the device set can deliver."""


@dataclass
class UtilizationReport:
    entity: str
    window_start_us: int
    window_end_us: int
    utilization: float
    effective_budget: float  # multiplicative limit cascade, 1.0 when uncapped
    throttled: bool
    carry_pp: float


@dataclass
class _EntityState:
    limit: Optional[float] = None  # effective multiplicative limit, None = uncapped
    interval_consumed: float = 0.0
    pending: float = 0.0
    quantum_start_consumed: float = 0.0
    carry_pp: float = 0.0
    allowance: float = 0.0  # budget through the end of the current quantum
    denied_in_quantum: bool = False
    denied_in_interval: bool = False
    denied_quanta: int = 0
    total_consumed: float = 0.0


class AccountingLedger:
    """Per-entity consumed cost, throttle state, and carry-forward credit."""

    def __init__(
        self,
        plan: ResourcePlan,
        n_devices: int,
        quantum_us: int = QUANTUM_US,
        quanta_per_interval: int = QUANTA_PER_INTERVAL,
        clamp_pp: float = CLAMP_PP,
    ):
        self.quantum_us = quantum_us
        self.quanta_per_interval = quanta_per_interval
        self.clamp_pp = clamp_pp
        self.available_per_quantum = float(n_devices * quantum_us)
        self.quantum_index = 1  # 1-based within the current interval
        self._entities: dict[str, _EntityState] = {}
        self._paths: dict[str, tuple[str, ...]] = {}
        self.rebind(plan)

    # -- plan binding ---------------------------------------------------

    def rebind(self, plan: ResourcePlan) -> None:
        """Attach to a plan snapshot, keeping state for surviving entities."""
        self.plan = plan
        keep = set(plan.nodes) - {plan.root_id}
        for nid in list(self._entities):
            if nid not in keep:
                del self._entities[nid]
        self._paths.clear()
        for nid in keep:
            st = self._entities.setdefault(nid, _EntityState())
            node = plan.node(nid)
            if node.limit is not None:
                st.limit = effective_allocation(plan, nid).effective_limit
            else:
                st.limit = None
                st.carry_pp = 0.0
            self._paths[nid] = tuple(plan.path(nid))
        self._recompute_allowances()

    def path(self, leaf: str) -> tuple[str, ...]:
        p = self._paths.get(leaf)
        if p is None:
            # work in flight for an entity dropped by a plan swap settles
            # against the untagged-default policy
            if leaf not in self.plan.nodes:
                leaf = self.plan.default_leaf_id
            p = self._paths.get(leaf)
            if p is None:
                p = tuple(self.plan.path(leaf))
                self._paths[leaf] = p
        return p

    # -- accumulation ---------------------------------------------------

    def reserve(self, leaf: str, cost: float) -> None:
        """Count dispatched-but-incomplete cost against the budget."""
        for nid in self.path(leaf):
            self._entities[nid].pending += cost

    def release(self, leaf: str, cost: float) -> None:
        for nid in self.path(leaf):
            st = self._entities[nid]
            st.pending = max(0.0, st.pending - cost)

    def record_completion(
        self, leaf: str, service_time_us: float, device, reserved: bool = False
    ) -> None:
        """Attribute a completed I/O's device time up the entity's path."""
        cost = service_time_us / device.model.rated_capacity
        for nid in self.path(leaf):
            st = self._entities[nid]
            st.interval_consumed += cost
            st.total_consumed += cost
            if reserved:
                st.pending = max(0.0, st.pending - cost)

    # -- enforcement ----------------------------------------------------

    def is_limit_blocked(self, node_id: str) -> bool:
        """True when the node has spent its budget through this quantum."""
        st = self._entities.get(node_id)
        if st is None or st.limit is None:
            return False
        return st.interval_consumed + st.pending >= st.allowance

    def path_blocked(self, leaf: str) -> bool:
        return any(self.is_limit_blocked(nid) for nid in self.path(leaf))

    def mark_denied(self, node_id: str) -> None:
        """Record that queued work was excluded by limit enforcement."""
        st = self._entities.get(node_id)
        if st is not None:
            st.denied_in_quantum = True
            st.denied_in_interval = True

    def _recompute_allowances(self) -> None:
        frame = self.available_per_quantum * self.quantum_index
        for st in self._entities.values():
            if st.limit is None:
                continue
            effective = st.limit + st.carry_pp / 100.0
            st.allowance = max(0.0, effective) * frame

    def quantum_boundary(self) -> dict[str, bool]:
        """Close out the ended quantum and return its throttle decisions.

        The decision for an entity with limit L and carry c is whether
        its utilization over the ended quantum exceeded L + c.  Entities
        without limits are never throttled by this path.
        """
        decisions: dict[str, bool] = {}
        for nid, st in self._entities.items():
            if st.limit is not None:
                used = st.interval_consumed - st.quantum_start_consumed
                util = used / self.available_per_quantum
                decisions[nid] = util > st.limit + st.carry_pp / 100.0
                if st.denied_in_quantum:
                    st.denied_quanta += 1
            st.denied_in_quantum = False
            st.quantum_start_consumed = st.interval_consumed
        if self.quantum_index < self.quanta_per_interval:
            self.quantum_index += 1
        else:
            self.quantum_index = self.quanta_per_interval + 1  # awaiting reconcile
        self._recompute_allowances()
        return decisions

    @property
    def interval_complete(self) -> bool:
        return self.quantum_index > self.quanta_per_interval

    def interval_reconcile(self) -> dict[str, float]:
        """Fold the interval's actual-versus-budget delta into clamped carry."""
        carries: dict[str, float] = {}
        frame = self.available_per_quantum * self.quanta_per_interval
        for nid, st in self._entities.items():
            if st.limit is not None:
                actual = st.interval_consumed / frame
                delta_pp = (st.limit - actual) * 100.0
                st.carry_pp = max(-self.clamp_pp, min(self.clamp_pp, st.carry_pp + delta_pp))
                carries[nid] = st.carry_pp
            st.interval_consumed = 0.0
            st.quantum_start_consumed = 0.0
            st.denied_in_interval = False
        self.quantum_index = 1
        self._recompute_allowances()
        return carries

    # -- reporting ------------------------------------------------------

    def interval_rows(self, window_start_us: int, window_end_us: int) -> list[UtilizationReport]:
        """Snapshot per-entity utilization for the interval now closing."""
        frame = self.available_per_quantum * self.quanta_per_interval
        rows = []
        for nid in sorted(self._entities):
            st = self._entities[nid]
            rows.append(
                UtilizationReport(
                    entity=nid,
                    window_start_us=window_start_us,
                    window_end_us=window_end_us,
                    utilization=st.interval_consumed / frame,
                    effective_budget=st.limit if st.limit is not None else 1.0,
                    throttled=st.denied_in_interval,
                    carry_pp=st.carry_pp,
                )
            )
        return rows

    def denied_quanta(self, node_id: str) -> int:
        return self._entities[node_id].denied_quanta

    def carry_pp(self, node_id: str) -> float:
        return self._entities[node_id].carry_pp

    def total_consumed(self, node_id: str) -> float:
        return self._entities[node_id].total_consumed


@dataclass
class IoProfile:
    """Size/direction mix used to translate IOPS to a utilization share."""

    size: int = 8192
    direction: str = "read"
    sequential: bool = False


def iops_to_percent(iops: float, profile: IoProfile, devices: list) -> float:
    """Fraction of pool capacity a sustained IOPS rate would consume.

    Costs are normalized per device, so each device offers one unit of
    capacity per second and the pool offers one per device.
    """
    if not devices:
        raise InfeasibleTarget("empty device set")
    if iops < 0:
        raise ValueError("iops must be non-negative")
    from .devices import mean_service_time

    mean_cost_s = sum(
        mean_service_time(d.model, profile.size, profile.direction, profile.sequential)
        / d.model.rated_capacity
        for d in devices
    ) / len(devices) / 1e6
    fraction = iops * mean_cost_s / len(devices)
    if fraction > 1.0:
        raise InfeasibleTarget(f"{iops} IOPS needs {fraction:.2%} of the pool")
    return fraction


def percent_to_iops(fraction: float, profile: IoProfile, devices: list) -> float:
    """Inverse of :func:`iops_to_percent`."""
    if not devices:
        raise InfeasibleTarget("empty device set")
    from .devices import mean_service_time

    mean_cost_s = sum(
        mean_service_time(d.model, profile.size, profile.direction, profile.sequential)
        / d.model.rated_capacity
        for d in devices
    ) / len(devices) / 1e6
    return fraction * len(devices) / mean_cost_s
