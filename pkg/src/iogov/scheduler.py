"""Per-device dispatcher: leaf queues, lottery, deadlines, adaptive modes.

Each device runs one dispatcher.  Requests queue FIFO per workload leaf;
when the device can accept work, a hierarchical lottery picks the next
leaf, drawing at each tree level among children that have queued work
and are not excluded by limit enforcement, with probability proportional
to shares.  Requests that wait past the deadline threshold move to a
starved list served ahead of the lottery, but never past a limit.

A governance-bypass flavor dispatches FIFO up to the raw device queue
bound with no lottery, limits or deadlines; it is the experimental
control, not a production configuration.
"""

from __future__ import annotations

import enum
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import devices as dev
from .accounting import AccountingLedger
from .hierarchy import PlanHandle, ResourcePlan
from .tags import CachePolicy, Category, Classification, Priority

DEADLINE_THRESHOLD_US = 1_000_000
DEADLINE_SCAN_PERIOD_US = 100_000
MODE_EVAL_PERIOD_US = 5_000_000
FRAGMENT_CHUNK = 128 * 1024
LS_LOW_PRIO_CAP = 2  # outstanding low-priority I/Os while protecting latency
PREDOMINANT_FRACTION = 0.7


class Mode(enum.Enum):
    SOLO = "solo"
    LATENCY_PRIORITY = "latency_priority"
    THROUGHPUT = "throughput"
    NORMAL = "normal"


_OBJECTIVE_MODE = {
    "low-latency": Mode.LATENCY_PRIORITY,
    "high-throughput": Mode.THROUGHPUT,
    "balanced": Mode.NORMAL,
}


@dataclass(slots=True)
class IoRequest:
    id: int
    leaf: str
    category: Category
    priority: Priority
    cache_policy: CachePolicy
    size: int
    direction: str  # "read" | "write"
    sequential: bool
    block_key: tuple
    arrival_us: int
    enqueue_us: int = -1
    dispatch_us: int = -1
    complete_us: int = -1
    service_us: int = 0
    device_id: str = ""
    parent: Optional["IoRequest"] = None
    fragments_remaining: int = 0
    promoted: bool = False
    plan_version: int = -1
    gen: str = ""
    session: int = -1
    cache_hit: bool = False

    @classmethod
    def from_classification(
        cls, rid: int, c: Classification, size, direction, sequential, block_key, now
    ) -> "IoRequest":
        return cls(
            id=rid,
            leaf=c.leaf,
            category=c.category,
            priority=c.priority,
            cache_policy=c.cache_policy,
            size=size,
            direction=direction,
            sequential=sequential,
            block_key=block_key,
            arrival_us=now,
        )


def fragment(
    request: IoRequest,
    chunk: int = FRAGMENT_CHUNK,
    id_alloc: Optional[Callable[[], int]] = None,
) -> list[IoRequest]:
    """Split a large request into chunk-sized pieces sharing its identity.

    Fragments dispatch independently; the parent completes when the last
    fragment completes.  Byte total is preserved and each fragment keeps
    the parent's enqueue timestamp so deadline age carries over.
    """
    if request.size <= chunk:
        return [request]
    pieces = []
    remaining = request.size
    offset = 0
    while remaining > 0:
        part = min(chunk, remaining)
        rid = id_alloc() if id_alloc else request.id
        frag = IoRequest(
            id=rid,
            leaf=request.leaf,
            category=request.category,
            priority=request.priority,
            cache_policy=request.cache_policy,
            size=part,
            direction=request.direction,
            sequential=True,
            block_key=(*request.block_key, offset),
            arrival_us=request.arrival_us,
            enqueue_us=request.enqueue_us,
            parent=request,
            gen=request.gen,
            session=request.session,
        )
        pieces.append(frag)
        offset += part
        remaining -= part
    request.fragments_remaining = len(pieces)
    return pieces


@dataclass
class _WindowStats:
    issued: dict[str, list] = field(default_factory=dict)  # leaf -> [small, large, high]

    def record(self, req: IoRequest) -> None:
        row = self.issued.setdefault(req.leaf, [0, 0, 0])
        if req.size <= dev.SMALL_SIZE_LIMIT:
            row[0] += 1
        else:
            row[1] += 1
        if req.priority is Priority.HIGH:
            row[2] += 1

    def reset(self) -> None:
        self.issued.clear()


def evaluate_mode(window: _WindowStats, objective: str) -> Mode:
    """Pick the scheduling posture from the last evaluation window.

    A non-auto objective forces its posture.  Otherwise: one active leaf
    runs solo; a high-priority leaf issuing mostly small I/O triggers
    latency protection; mostly-large traffic favors throughput.
    """
    if objective in _OBJECTIVE_MODE:
        return _OBJECTIVE_MODE[objective]
    active = [rows for rows in window.issued.values() if rows[0] + rows[1] > 0]
    if len(active) == 1:
        return Mode.SOLO
    if not active:
        return Mode.NORMAL
    for rows in active:
        small, large, high = rows
        total = small + large
        if high > 0 and small > PREDOMINANT_FRACTION * total:
            return Mode.LATENCY_PRIORITY
    total_small = sum(r[0] for r in active)
    total_large = sum(r[1] for r in active)
    if total_large > PREDOMINANT_FRACTION * (total_small + total_large):
        return Mode.THROUGHPUT
    return Mode.NORMAL


class DeviceScheduler:
    """Dispatch policy for one device.

    The engine owns the clock and the mechanics of starting service; the
    scheduler decides which request goes next.  ``dispatch_cb(request)``
    must sample the service time, charge accounting, and schedule the
    completion event.
    """

    def __init__(
        self,
        device: dev.Device,
        plan_handle: PlanHandle,
        ledger: AccountingLedger,
        rng: random.Random,
        dispatch_cb: Callable[[IoRequest], None],
        id_alloc: Callable[[], int],
        bypass: bool = False,
        deadline_threshold_us: int = DEADLINE_THRESHOLD_US,
    ):
        self.device = device
        self.plan_handle = plan_handle
        self.ledger = ledger
        self.rng = rng
        self.dispatch_cb = dispatch_cb
        self.id_alloc = id_alloc
        self.bypass = bypass
        self.deadline_threshold_us = deadline_threshold_us
        self.mode = Mode.NORMAL
        self.window = _WindowStats()
        self.queues: dict[str, deque[IoRequest]] = {}
        self.queued_below: dict[str, int] = {}
        self.total_queued = 0
        self.starved: deque[IoRequest] = deque()
        self.fifo: deque[IoRequest] = deque()  # bypass flavor only
        self.write_pressure = False
        self.promotions = 0
        self.promotions_by_leaf: dict[str, int] = {}
        self.lottery_draws = 0
        self.dispatched = 0

    # -- intake ----------------------------------------------------------

    def enqueue(self, req: IoRequest, now: int) -> None:
        """Queue a classified request and re-evaluate dispatch."""
        req.enqueue_us = now
        if self.bypass:
            self.fifo.append(req)
            self.pump(now)
            return
        plan = self.plan_handle.plan
        if req.leaf not in plan.nodes or not plan.is_leaf(req.leaf):
            req.leaf = plan.default_leaf_id
        self.window.record(req)
        # flash fast path: anything above low priority skips the queues
        if (
            self.device.model.kind is dev.DeviceKind.FLASH
            and req.priority is not Priority.LOW
            and self.mode is not Mode.SOLO
            and not self.ledger.path_blocked(req.leaf)
        ):
            dev.try_admit(
                self.device.inflight,
                self.device.targets,
                dev.classify_size(req.size, req.direction),
                dev.DeviceKind.FLASH,
                True,
                req.id,
            )
            self._dispatch(req, now)
            return
        q = self.queues.get(req.leaf)
        if q is None:
            q = self.queues[req.leaf] = deque()
        q.append(req)
        self._adjust_queued(req.leaf, 1)
        self.pump(now)

    def _adjust_queued(self, leaf: str, delta: int) -> None:
        self.total_queued += delta
        for nid in self.ledger.path(leaf):
            self.queued_below[nid] = self.queued_below.get(nid, 0) + delta

    # -- dispatch --------------------------------------------------------

    def pump(self, now: int) -> int:
        """Dispatch until admission rejects every candidate class."""
        if self.bypass:
            n = 0
            limit = self.device.model.raw_queue_limit
            while self.fifo and self.device.total_in_device() < limit:
                req = self.fifo.popleft()
                dev.raw_admit(
                    self.device.inflight,
                    dev.classify_size(req.size, req.direction),
                    req.priority is not Priority.LOW,
                    req.id,
                )
                self._dispatch(req, now)
                n += 1
            return n

        n = 0
        excluded: set[str] = set()
        excluded_below: dict[str, int] = {}
        while True:
            req, source = self._select(excluded, excluded_below)
            if req is None:
                break
            if (
                source != "starved"
                and self.mode is Mode.LATENCY_PRIORITY
                and req.priority is Priority.LOW
                and req.direction == "read"
                and req.size > FRAGMENT_CHUNK
                and self.device.model.kind is dev.DeviceKind.HDD
            ):
                req = self._fragment_head(req)
            if not self._admit(req):
                excluded.add(req.leaf)
                if source == "queue":
                    for nid in self.ledger.path(req.leaf):
                        excluded_below[nid] = excluded_below.get(nid, 0) + len(
                            self.queues[req.leaf]
                        )
                continue
            if source == "starved":
                self.starved.popleft()
            else:
                self.queues[req.leaf].popleft()
                self._adjust_queued(req.leaf, -1)
            self._dispatch(req, now)
            n += 1
        return n

    def _select(
        self, excluded: set[str], excluded_below: dict[str, int]
    ) -> tuple[Optional[IoRequest], str]:
        # starved list is served before any lottery draw; if its head was
        # already rejected this pass, other leaves may still dispatch
        if self.starved:
            head = self.starved[0]
            if head.leaf not in excluded and not self.ledger.path_blocked(head.leaf):
                return head, "starved"
        leaf = self._lottery(excluded_below)
        if leaf is None:
            return None, "none"
        return self.queues[leaf][0], "queue"

    def _lottery(self, excluded_below: dict[str, int]) -> Optional[str]:
        plan = self.plan_handle.plan
        if self.mode is Mode.SOLO:
            for leaf, q in self.queues.items():
                if q and not excluded_below.get(leaf) and not self.ledger.path_blocked(leaf):
                    return leaf
            return None
        ledger = self.ledger
        queued = self.queued_below
        node = plan.root_id
        while True:
            children = plan.children(node)
            if not children:
                return node
            eligible = []
            total = 0
            for c in children:
                avail = queued.get(c, 0) - excluded_below.get(c, 0)
                if avail <= 0:
                    continue
                if ledger.is_limit_blocked(c):
                    ledger.mark_denied(c)
                    continue
                eligible.append(c)
                total += plan.node(c).shares
            if not eligible:
                return None
            if len(eligible) == 1:
                node = eligible[0]
                continue
            pick = self.rng.randrange(total)
            self.lottery_draws += 1
            for c in eligible:
                pick -= plan.node(c).shares
                if pick < 0:
                    node = c
                    break

    def _fragment_head(self, req: IoRequest) -> IoRequest:
        q = self.queues[req.leaf]
        q.popleft()
        pieces = fragment(req, FRAGMENT_CHUNK, self.id_alloc)
        q.extendleft(reversed(pieces))
        self._adjust_queued(req.leaf, len(pieces) - 1)
        return pieces[0]

    def _admit(self, req: IoRequest) -> bool:
        klass = dev.classify_size(req.size, req.direction)
        high = req.priority is not Priority.LOW
        inflight = self.device.inflight
        if not high:
            if (
                self.mode is Mode.LATENCY_PRIORITY
                and self.device.model.kind is dev.DeviceKind.HDD
                and inflight.lowprio_count >= LS_LOW_PRIO_CAP
            ):
                return False
            if (
                req.direction == "write"
                and self.write_pressure
                and inflight.lowprio_write_count >= 1
            ):
                return False
        if self.mode is Mode.SOLO:
            if self.device.total_in_device() >= self.device.model.raw_queue_limit:
                return False
            dev.raw_admit(inflight, klass, high, req.id)
            return True
        return dev.try_admit(
            inflight, self.device.targets, klass, self.device.model.kind, high, req.id
        )

    def _dispatch(self, req: IoRequest, now: int) -> None:
        req.dispatch_us = now
        req.device_id = self.device.id
        req.plan_version = self.plan_handle.plan.version
        self.dispatched += 1
        self.dispatch_cb(req)

    # -- periodic work ----------------------------------------------------

    def deadline_scan(self, now: int) -> int:
        """Promote over-age requests of non-throttled entities; returns count."""
        if self.bypass:
            return 0
        threshold = self.deadline_threshold_us
        overdue: list[IoRequest] = []
        for leaf, q in self.queues.items():
            if not q or now - q[0].enqueue_us <= threshold:
                continue
            if self.ledger.path_blocked(leaf):
                continue  # limits outrank the deadline guard
            taken = 0
            while q and now - q[0].enqueue_us > threshold:
                r = q.popleft()
                r.promoted = True
                overdue.append(r)
                taken += 1
            self._adjust_queued(leaf, -taken)
        if not overdue:
            return 0
        overdue.sort(key=lambda r: (r.enqueue_us, r.id))
        self.starved.extend(overdue)
        self.promotions += len(overdue)
        for r in overdue:
            self.promotions_by_leaf[r.leaf] = self.promotions_by_leaf.get(r.leaf, 0) + 1
        self.pump(now)
        return len(overdue)

    def on_quantum_boundary(self, now: int) -> None:
        """Repair starved-list membership and adopt plan changes."""
        if self.bypass:
            return
        if self.starved:
            keep: deque[IoRequest] = deque()
            pushed_back: dict[str, list[IoRequest]] = {}
            for r in self.starved:
                if self.ledger.path_blocked(r.leaf):
                    pushed_back.setdefault(r.leaf, []).append(r)
                else:
                    keep.append(r)
            if pushed_back:
                self.starved = keep
                for leaf, group in pushed_back.items():
                    q = self.queues.setdefault(leaf, deque())
                    q.extendleft(reversed(group))
                    self._adjust_queued(leaf, len(group))
        self.pump(now)

    def rebind_plan(self, plan: ResourcePlan, now: int) -> None:
        """Migrate queued work for leaves absent from the new plan."""
        default = plan.default_leaf_id
        moved: list[IoRequest] = []
        for leaf in list(self.queues):
            if leaf in plan.nodes and plan.is_leaf(leaf):
                continue
            for r in self.queues.pop(leaf):
                r.leaf = default
                moved.append(r)
        for r in self.starved:
            if r.leaf not in plan.nodes or not plan.is_leaf(r.leaf):
                r.leaf = default
        self.queued_below.clear()
        self.total_queued = 0
        for leaf, q in self.queues.items():
            for _ in q:
                self._adjust_queued(leaf, 1)
        if moved:
            moved.sort(key=lambda r: (r.enqueue_us, r.id))
            q = self.queues.setdefault(default, deque())
            for r in moved:
                q.append(r)
                self._adjust_queued(default, 1)
        self.pump(now)

    def evaluate_mode_now(self, objective: str, now: int) -> Mode:
        new_mode = evaluate_mode(self.window, objective)
        self.window.reset()
        if new_mode is not self.mode:
            self.mode = new_mode
            if (
                new_mode is Mode.THROUGHPUT
                and self.device.model.kind is dev.DeviceKind.HDD
                and self.device.cache_available
            ):
                self.device.targets = dev.set_degraded_mode(self.device.targets, True)
            self.pump(now)
        return self.mode

    def queued_total(self) -> int:
        return self.total_queued + len(self.starved)

    def snapshot(self) -> dict:
        return {
            "device": self.device.id,
            "mode": self.mode.value if not self.bypass else "bypass",
            "queued": self.queued_total() if not self.bypass else len(self.fifo),
            "starved": len(self.starved),
            "promotions": self.promotions,
            "lottery_draws": self.lottery_draws,
            "dispatched": self.dispatched,
        }
