"""Workload generators: tagged request streams with closed/open arrivals.

Each generator is bound to one tenant identity (database id plus
workload key) and emits requests through the real tag codec, so the
classification path is exercised end to end.  Closed-loop generators
model N concurrent sessions with think time and never exceed their
session count in outstanding requests; open-loop generators emit at a
configured rate, paced or Poisson.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from ..scheduler import IoRequest
from ..tags import (
    Category,
    ClassificationRegistry,
    IoTag,
    Priority,
    classify_bytes,
    encode_tag,
)

PATTERNS = ("point_read", "scan", "bulk_write", "backup", "mixed", "untagged")

_PRIORITY = {"high": Priority.HIGH, "medium": Priority.MEDIUM, "low": Priority.LOW}

# category name -> provisioned file-number band; generators emit file
# numbers inside the band and the registry maps the band back
CATEGORY_BAND = {cat: (1000 * i, 1000 * i + 999) for i, cat in enumerate(Category)}


@dataclass
class GeneratorConfig:
    name: str
    database_id: int
    pattern: str
    workload_key: int = 0
    category: Category = Category.BUFFER_CACHE_READ
    priority: Priority = Priority.MEDIUM
    size: int = 8192
    working_set_bytes: int = 1 << 30
    dataset_bytes: int = 0  # scans wrap here; defaults to working set
    arrival_kind: str = "closed"  # closed | open
    sessions: int = 1
    think_us: int = 0
    rate_per_s: float = 0.0
    poisson: bool = False
    tagged: bool = True
    start_us: int = 0
    stop_us: Optional[int] = None
    scan_fraction: float = 0.5  # mixed pattern: share of scan requests

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}")
        if self.dataset_bytes == 0:
            self.dataset_bytes = self.working_set_bytes


class WorkloadGenerator:
    """Produces classified requests; the engine owns scheduling them."""

    def __init__(self, config: GeneratorConfig, registry: ClassificationRegistry,
                 rng: random.Random):
        self.config = config
        self.registry = registry
        self.rng = rng
        self.scan_cursor = 0
        self.issued = 0
        file_lo, _ = CATEGORY_BAND[config.category]
        self.file_number = file_lo

    def _pattern_fields(self):
        """size, sequential, category, offset for the next request."""
        cfg = self.config
        pattern = cfg.pattern
        if pattern == "mixed":
            pattern = "scan" if self.rng.random() < cfg.scan_fraction else "point_read"
        if pattern in ("scan", "backup", "bulk_write"):
            offset = self.scan_cursor
            self.scan_cursor += cfg.size
            if self.scan_cursor >= cfg.dataset_bytes:
                self.scan_cursor = 0
            return cfg.size, True, offset
        # point reads: uniform over the working set, aligned to size
        blocks = max(1, cfg.working_set_bytes // cfg.size)
        offset = self.rng.randrange(blocks) * cfg.size
        return cfg.size, False, offset

    def next_request(self, rid: int, now: int) -> IoRequest:
        cfg = self.config
        size, sequential, offset = self._pattern_fields()
        direction = "write" if cfg.pattern == "bulk_write" else "read"
        raw = None
        if cfg.tagged:
            raw = encode_tag(
                IoTag(
                    database_id=cfg.database_id,
                    file_number=self.file_number,
                    block_offset=offset,
                    block_count=max(1, size // 512),
                    priority_hint=cfg.priority,
                    workload_key=cfg.workload_key,
                )
            )
        classification = classify_bytes(self.registry, raw)
        req = IoRequest.from_classification(
            rid,
            classification,
            size=size,
            direction=direction,
            sequential=sequential,
            block_key=(cfg.database_id, self.file_number, offset),
            now=now,
        )
        req.gen = cfg.name
        self.issued += 1
        return req

    def inter_arrival_us(self) -> int:
        """Open-loop spacing; a paced stream is exact, Poisson is seeded."""
        cfg = self.config
        mean = 1e6 / cfg.rate_per_s
        if cfg.poisson:
            return max(1, round(self.rng.expovariate(1.0) * mean))
        return max(1, round(mean))

    def think_delay_us(self) -> int:
        """Closed-loop think time with +-10% jitter to break lockstep."""
        think = self.config.think_us
        if think <= 0:
            return 0
        return max(0, round(think * self.rng.uniform(0.9, 1.1)))

    def working_set_keys(self, fraction: float = 1.0):
        """Block keys covering the first `fraction` of the working set."""
        cfg = self.config
        blocks = max(1, cfg.working_set_bytes // cfg.size)
        take = int(blocks * fraction)
        for i in range(take):
            yield (cfg.database_id, self.file_number, i * cfg.size)

    def classification_template(self):
        """Classification this generator's tagged requests resolve to."""
        cfg = self.config
        raw = None
        if cfg.tagged:
            raw = encode_tag(
                IoTag(
                    database_id=cfg.database_id,
                    file_number=self.file_number,
                    block_offset=0,
                    block_count=1,
                    priority_hint=cfg.priority,
                    workload_key=cfg.workload_key,
                )
            )
        return classify_bytes(self.registry, raw)


def registry_file_ranges(categories) -> list[tuple[int, int, Category]]:
    """Provisioning bands for the given categories."""
    out = []
    for cat in categories:
        lo, hi = CATEGORY_BAND[cat]
        out.append((lo, hi, cat))
    return out


def drive_generator(engine, gen: WorkloadGenerator) -> None:
    """Register a generator's arrival process on the engine's event queue."""
    cfg = gen.config
    events = engine.events
    stop_us = cfg.stop_us if cfg.stop_us is not None else engine.duration_us

    if cfg.arrival_kind == "closed":
        pending: set[int] = set()

        def session_issue():
            now = events.now
            if now >= stop_us:
                return
            req = gen.next_request(engine.alloc_id(), now)
            pending.add(req.id)
            engine.submit(req)

        def on_completion(finished, now):
            if finished.id in pending:
                pending.discard(finished.id)
                if now < stop_us:
                    events.after(gen.think_delay_us(), session_issue)

        engine.add_completion_hook(on_completion)
        for i in range(cfg.sessions):
            # stagger initial arrivals across one think period (or 1ms)
            spread = max(1000, cfg.think_us or 1000)
            events.at(cfg.start_us + (i * spread) // cfg.sessions, session_issue)
    else:
        if cfg.rate_per_s <= 0:
            raise ValueError(f"generator {cfg.name}: open arrivals need rate_per_s")

        def arrive():
            now = events.now
            if now >= stop_us:
                return
            engine.submit(gen.next_request(engine.alloc_id(), now))
            events.after(gen.inter_arrival_us(), arrive)

        events.at(cfg.start_us, arrive)
