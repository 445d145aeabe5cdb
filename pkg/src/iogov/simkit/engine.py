"""Deterministic discrete-event engine wiring all components together.

Time is integer microseconds.  Events at equal times fire in insertion
order, so a (config, seed) pair always produces the same trace.  The
engine owns the clock, the devices, one dispatcher per device, the
accounting ledger, the flash cache, and the workload generators; every
other module is driven through callbacks from here.
"""

from __future__ import annotations

import heapq
import random
from hashlib import sha256
from typing import Callable, Optional
from zlib import crc32

from .. import devices as dev
from ..accounting import AccountingLedger
from ..cache import FlashCache, QuotaExhausted
from ..hierarchy import PlanHandle
from ..scheduler import (
    DEADLINE_SCAN_PERIOD_US,
    MODE_EVAL_PERIOD_US,
    DeviceScheduler,
    IoRequest,
)
from ..tags import CachePolicy, Classification, Priority

QUANTUM_US = 200_000
INTERVAL_US = 1_000_000


class InvariantViolation(Exception):
    """A conservation or consistency check failed during the run."""


class EventQueue:
    """Min-heap of (time, sequence, callback); ties fire in insertion order."""

    def __init__(self):
        self.now = 0
        self._heap: list = []
        self._seq = 0

    def at(self, time_us: int, fn: Callable[[], None]) -> None:
        if time_us < self.now:
            raise InvariantViolation(f"event scheduled in the past: {time_us} < {self.now}")
        heapq.heappush(self._heap, (time_us, self._seq, fn))
        self._seq += 1

    def after(self, delay_us: int, fn: Callable[[], None]) -> None:
        self.at(self.now + delay_us, fn)

    def run(self) -> None:
        heap = self._heap
        while heap:
            t, _, fn = heapq.heappop(heap)
            self.now = t
            fn()


def split_seed(root_seed: int, name: str) -> random.Random:
    """Component-local stream so unrelated components never share draws."""
    digest = sha256(f"{root_seed}:{name}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


class Engine:
    """One simulation run: devices, dispatchers, ledger, cache, generators."""

    def __init__(
        self,
        plan_handle: PlanHandle,
        devices: list[dev.Device],
        cache: Optional[FlashCache],
        metrics,
        seed: int,
        duration_us: int,
        scheduler_kind: str = "iorm",
        trace: Optional[Callable[[str], None]] = None,
        audit: bool = False,
    ):
        self.events = EventQueue()
        self.plan_handle = plan_handle
        self.devices = devices
        self.hdd = [d for d in devices if d.model.kind is dev.DeviceKind.HDD]
        self.flash = [d for d in devices if d.model.kind is dev.DeviceKind.FLASH]
        self.cache = cache
        self.metrics = metrics
        self.seed = seed
        self.duration_us = duration_us
        self.bypass = scheduler_kind == "bypass"
        self.trace = trace
        self.ledger = AccountingLedger(plan_handle.plan, len(devices))
        self._next_id = 0
        self.generated = 0
        self.completed = 0
        self.dispatch_events = 0
        self.inflight = 0
        self.residual_queued = 0
        self._svc_rng = {d.id: split_seed(seed, f"svc:{d.id}") for d in devices}
        self._route_salt = seed & 0xFFFF
        self.schedulers: dict[str, DeviceScheduler] = {}
        for d in devices:
            self.schedulers[d.id] = DeviceScheduler(
                device=d,
                plan_handle=plan_handle,
                ledger=self.ledger,
                rng=split_seed(seed, f"lottery:{d.id}"),
                dispatch_cb=self._make_dispatch_cb(d),
                id_alloc=self.alloc_id,
                bypass=self.bypass,
            )
        self._wc_last_tick = {d.id: 0 for d in self.hdd if d.model.write_cache}
        self._audit: Optional[dict[int, str]] = {} if audit else None
        self._completion_hooks: list[Callable[[IoRequest, int], None]] = []

    # -- identity and routing --------------------------------------------

    def alloc_id(self) -> int:
        self._next_id += 1
        return self._next_id

    def pick_device(self, pool: list[dev.Device], key: tuple) -> dev.Device:
        if len(pool) == 1:
            return pool[0]
        h = crc32(repr((self._route_salt, key)).encode())
        return pool[h % len(pool)]

    def route(self, req: IoRequest) -> dev.Device:
        """Cache-aware tier choice: hits and write-back go to flash."""
        if req.direction == "read":
            if self.cache is not None and self.flash and self.cache.lookup(
                req.block_key, req.leaf
            ):
                req.cache_hit = True
                return self.pick_device(self.flash, req.block_key)
            return self.pick_device(self.hdd or self.flash, req.block_key)
        if (
            req.cache_policy is CachePolicy.WRITE_BACK
            and self.flash
            and self.cache is not None
        ):
            return self.pick_device(self.flash, req.block_key)
        return self.pick_device(self.hdd or self.flash, req.block_key)

    # -- request lifecycle -------------------------------------------------

    def submit(self, req: IoRequest) -> None:
        """Entry point for generators: route and hand to the dispatcher."""
        self.generated += 1
        if self._audit is not None:
            self._audit[req.id] = "generated"
        device = self.route(req)
        if self.trace:
            self.trace(
                f"{self.events.now} enqueue req={req.id} ent={req.leaf} "
                f"dev={device.id} size={req.size} dir={req.direction}"
            )
        self.schedulers[device.id].enqueue(req, self.events.now)

    def _make_dispatch_cb(self, device: dev.Device) -> Callable[[IoRequest], None]:
        rng = self._svc_rng[device.id]

        def dispatch(req: IoRequest) -> None:
            now = self.events.now
            bypass_stage = False
            if (
                device.model.kind is dev.DeviceKind.HDD
                and req.direction == "write"
                and device.model.write_cache is not None
            ):
                wc = device.model.write_cache
                self._tick_write_cache(device, now)
                if wc.room_for(req.size):
                    wc.absorb(req.size)
                    svc = dev.sample_cached_write_time(device.model, rng)
                    bypass_stage = True
                else:
                    svc = dev.sample_service_time(
                        device.model, req.size, "write", req.sequential, rng
                    )
            else:
                svc = dev.sample_service_time(
                    device.model, req.size, req.direction, req.sequential, rng
                )
                if device.model.kind is dev.DeviceKind.FLASH:
                    bypass_stage = req.priority is not Priority.LOW
            req.service_us = svc
            self.ledger.reserve(req.leaf, svc / device.model.rated_capacity)
            self.inflight += 1
            self.dispatch_events += 1
            if self._audit is not None:
                prev = self._audit.get(req.id)
                if req.parent is None and prev != "generated":
                    raise InvariantViolation(
                        f"request {req.id} dispatched from state {prev!r}"
                    )
                self._audit[req.id] = "dispatched"
            if self.trace:
                self.trace(
                    f"{self.events.now} dispatch req={req.id} ent={req.leaf} "
                    f"dev={device.id} svc={svc} plan=v{req.plan_version}"
                )
            self.metrics.on_dispatch(req, now)
            if bypass_stage:
                self.events.after(svc, lambda: self._complete(device, req, staged=False))
            elif device.start_or_queue(req, svc):
                self.events.after(svc, lambda: self._complete(device, req, staged=True))

        return dispatch

    def _complete(self, device: dev.Device, req: IoRequest, staged: bool) -> None:
        now = self.events.now
        req.complete_us = now
        dev.complete_io(device.inflight, req.id)
        if staged:
            nxt = device.finish_service()
            if nxt is not None:
                nreq, nsvc = nxt
                self.events.after(nsvc, lambda: self._complete(device, nreq, staged=True))
        self.ledger.record_completion(req.leaf, req.service_us, device, reserved=True)
        self.inflight -= 1
        self.metrics.on_complete(req, now)
        if self.trace:
            self.trace(f"{now} complete req={req.id} ent={req.leaf} dev={device.id}")
        if self._audit is not None:
            if self._audit.get(req.id) == "completed":
                raise InvariantViolation(f"request {req.id} completed twice")
            self._audit[req.id] = "completed"
        finished = req
        if req.parent is not None:
            parent = req.parent
            parent.fragments_remaining -= 1
            if parent.fragments_remaining > 0:
                finished = None
            else:
                parent.complete_us = now
                parent.device_id = req.device_id
                self.metrics.on_parent_complete(parent, now)
                finished = parent
                if self._audit is not None:
                    self._audit[parent.id] = "completed"
        if finished is not None:
            self.completed += 1
            self._admit_to_cache(finished)
            for hook in self._completion_hooks:
                hook(finished, now)
        self.schedulers[device.id].pump(now)

    def _admit_to_cache(self, req: IoRequest) -> None:
        if self.cache is None:
            return
        if req.direction == "read" and req.cache_hit:
            return
        classification = Classification(
            leaf=req.leaf,
            category=req.category,
            priority=req.priority,
            cache_policy=req.cache_policy,
        )
        try:
            self.cache.admit(
                classification, req.block_key, req.size, dirty=req.direction == "write"
            )
        except QuotaExhausted:
            pass

    def add_completion_hook(self, hook: Callable[[IoRequest, int], None]) -> None:
        self._completion_hooks.append(hook)

    # -- periodic machinery -------------------------------------------------

    def _tick_write_cache(self, device: dev.Device, now: int) -> None:
        wc = device.model.write_cache
        last = self._wc_last_tick[device.id]
        if now > last:
            pressure = dev.write_cache_tick(wc, now - last)
            self._wc_last_tick[device.id] = now
            self.schedulers[device.id].write_pressure = pressure

    def start(self, scenario_events: list[tuple[int, Callable[[], None]]]) -> None:
        ev = self.events
        for t, fn in scenario_events:
            ev.at(t, fn)

        def quantum_tick():
            now = ev.now
            for d in self.hdd:
                if d.model.write_cache is not None:
                    self._tick_write_cache(d, now)
            decisions = self.ledger.quantum_boundary()
            if decisions:
                self.metrics.on_quantum(now, decisions)
            adopted = self.plan_handle.adopt_staged()
            if adopted is not None:
                self.ledger.rebind(adopted)
                for s in self.schedulers.values():
                    s.rebind_plan(adopted, now)
                if self.trace:
                    self.trace(f"{now} plan-adopt v{adopted.version}")
            if self.ledger.interval_complete:
                rows = self.ledger.interval_rows(now - INTERVAL_US, now)
                self.ledger.interval_reconcile()
                self.metrics.on_interval(
                    now, rows, [s.snapshot() for s in self.schedulers.values()]
                )
                if self.cache is not None:
                    self.metrics.on_cache_interval(now, self.cache.stats_snapshot())
            for s in self.schedulers.values():
                s.on_quantum_boundary(now)
            if now < self.duration_us:
                ev.after(QUANTUM_US, quantum_tick)

        def deadline_tick():
            now = ev.now
            for s in self.schedulers.values():
                s.deadline_scan(now)
            if now < self.duration_us:
                ev.after(DEADLINE_SCAN_PERIOD_US, deadline_tick)

        def mode_tick():
            now = ev.now
            objective = self.plan_handle.plan.objective
            for s in self.schedulers.values():
                s.evaluate_mode_now(objective, now)
            if now < self.duration_us:
                ev.after(MODE_EVAL_PERIOD_US, mode_tick)

        ev.at(QUANTUM_US, quantum_tick)
        # offset keeps deadline scans clear of quantum boundaries
        ev.at(DEADLINE_SCAN_PERIOD_US // 2, deadline_tick)
        if not self.bypass:
            ev.at(MODE_EVAL_PERIOD_US, mode_tick)

    def run(self) -> dict:
        self.events.run()
        # completions during the drain tail land after the last interval
        # boundary; flush them so interval series conserve ops and bytes
        self.metrics.on_interval(self.events.now, [], [])
        self.residual_queued = sum(s.queued_total() for s in self.schedulers.values())
        report = {
            "generated": self.generated,
            "completed": self.completed,
            "dispatch_events": self.dispatch_events,
            "residual_queued": self.residual_queued,
            "residual_inflight": self.inflight,
            "end_us": self.events.now,
        }
        if self.generated != self.completed + self.residual_queued + self.inflight:
            raise InvariantViolation(f"request conservation failed: {report}")
        if self.inflight != 0:
            raise InvariantViolation(f"in-flight requests at end of run: {report}")
        if self._audit is not None:
            leaked = sum(1 for state in self._audit.values() if state == "dispatched")
            report["audit_states"] = {
                s: sum(1 for v in self._audit.values() if v == s)
                for s in ("generated", "dispatched", "completed")
            }
            if leaked and self.residual_queued == 0:
                raise InvariantViolation(f"{leaked} dispatched requests never completed")
        return report
