"""Per-entity metrics: latency histograms, throughput, queue time.

Read latency histograms use the fixed bucket ladder (<512us, <1ms, <2ms,
<4ms, <8ms, <16ms, <32ms, >=32ms).  Alongside whole-run aggregates the
sink keeps per-interval series so reports and tests can slice windows,
and it carries the utilization rows the accounting ledger emits each
reconciliation interval.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

BUCKET_EDGES_US = (512, 1000, 2000, 4000, 8000, 16000, 32000)
BUCKET_LABELS = ("<512us", "<1ms", "<2ms", "<4ms", "<8ms", "<16ms", "<32ms", ">=32ms")


@dataclass
class _Agg:
    count: int = 0
    total_us: float = 0.0
    total_sq: float = 0.0
    max_us: int = 0
    hist: list[int] = field(default_factory=lambda: [0] * 8)

    def add(self, latency_us: int) -> None:
        self.count += 1
        self.total_us += latency_us
        self.total_sq += latency_us * latency_us
        if latency_us > self.max_us:
            self.max_us = latency_us
        # bucket b holds latencies in [edge[b-1], edge[b])
        self.hist[bisect_right(BUCKET_EDGES_US, latency_us)] += 1

    def mean(self) -> float:
        return self.total_us / self.count if self.count else 0.0

    def std(self) -> float:
        if self.count < 2:
            return 0.0
        m = self.mean()
        var = max(0.0, self.total_sq / self.count - m * m)
        return var**0.5


@dataclass
class _EntityStats:
    ops: int = 0
    bytes: int = 0
    reads: _Agg = field(default_factory=_Agg)
    writes: _Agg = field(default_factory=_Agg)
    qtime: _Agg = field(default_factory=_Agg)
    # rolling accumulators for the current interval
    iv_ops: int = 0
    iv_bytes: int = 0
    iv_read_total_us: float = 0.0
    iv_read_count: int = 0
    iv_qtime_total_us: float = 0.0
    iv_qtime_count: int = 0


class MetricsSink:
    """Collects completions and interval rows for one run.

    Whole-run aggregates (histograms, means) start at ``measure_from_us``
    so steady-state claims are not polluted by warmup; the per-interval
    series always covers the entire run.
    """

    def __init__(self, measure_from_us: int = 0):
        self.measure_from_us = measure_from_us
        self.entities: dict[str, _EntityStats] = {}
        self.intervals: list[dict] = []          # per-entity traffic rows
        self.util_series: list[dict] = []        # per-node utilization rows
        self.scheduler_series: list[dict] = []
        self.quantum_flags: list[dict] = []      # per-quantum throttle decisions
        self.cache_series: list[dict] = []

    def _ent(self, leaf: str) -> _EntityStats:
        st = self.entities.get(leaf)
        if st is None:
            st = self.entities[leaf] = _EntityStats()
        return st

    def on_dispatch(self, req, now: int) -> None:
        st = self._ent(req.leaf)
        wait = req.dispatch_us - req.enqueue_us
        st.iv_qtime_total_us += wait
        st.iv_qtime_count += 1
        if now >= self.measure_from_us:
            st.qtime.add(wait)

    def on_complete(self, req, now: int) -> None:
        """Every service completion: fragments count bytes, not ops."""
        st = self._ent(req.leaf)
        st.iv_bytes += req.size
        if now >= self.measure_from_us:
            st.bytes += req.size
        if req.parent is not None:
            return
        self._finish(st, req, now)

    def on_parent_complete(self, parent, now: int) -> None:
        st = self._ent(parent.leaf)
        self._finish(st, parent, now)

    def _finish(self, st: _EntityStats, req, now: int) -> None:
        st.iv_ops += 1
        latency = now - req.arrival_us
        if req.direction == "read":
            st.iv_read_total_us += latency
            st.iv_read_count += 1
        if now < self.measure_from_us:
            return
        st.ops += 1
        if req.direction == "read":
            st.reads.add(latency)
        else:
            st.writes.add(latency)

    def on_cache_interval(self, now: int, snapshot: dict) -> None:
        self.cache_series.append({"t_s": now / 1e6, **snapshot})

    def on_quantum(self, now: int, decisions: dict[str, bool]) -> None:
        t_s = now / 1e6
        for entity in sorted(decisions):
            self.quantum_flags.append(
                {"t_s": t_s, "entity": entity, "flagged": decisions[entity]}
            )

    def on_interval(self, now: int, util_rows, scheduler_snapshots) -> None:
        t_s = now / 1e6
        for leaf in sorted(self.entities):
            st = self.entities[leaf]
            self.intervals.append(
                {
                    "t_s": t_s,
                    "entity": leaf,
                    "ops": st.iv_ops,
                    "bytes": st.iv_bytes,
                    "read_mean_us": (
                        st.iv_read_total_us / st.iv_read_count if st.iv_read_count else 0.0
                    ),
                    "qtime_mean_us": (
                        st.iv_qtime_total_us / st.iv_qtime_count if st.iv_qtime_count else 0.0
                    ),
                }
            )
            st.iv_ops = 0
            st.iv_bytes = 0
            st.iv_read_total_us = 0.0
            st.iv_read_count = 0
            st.iv_qtime_total_us = 0.0
            st.iv_qtime_count = 0
        for row in util_rows:
            self.util_series.append(
                {
                    "t_s": t_s,
                    "entity": row.entity,
                    "utilization": row.utilization,
                    "effective_budget": row.effective_budget,
                    "throttled": row.throttled,
                    "carry_pp": row.carry_pp,
                }
            )
        for snap in scheduler_snapshots:
            self.scheduler_series.append({"t_s": t_s, **snap})

    def finalize(self, plan, promotions_by_leaf: dict[str, int]) -> dict:
        """Whole-run document; deterministic field ordering."""
        out_entities = {}
        for leaf in sorted(self.entities):
            st = self.entities[leaf]
            out_entities[leaf] = {
                "path": "/".join(plan.path(leaf)) if leaf in plan.nodes else leaf,
                "ops": st.ops,
                "bytes": st.bytes,
                "read_count": st.reads.count,
                "read_mean_us": round(st.reads.mean(), 3),
                "read_std_us": round(st.reads.std(), 3),
                "read_max_us": st.reads.max_us,
                "read_hist": list(st.reads.hist),
                "write_count": st.writes.count,
                "write_mean_us": round(st.writes.mean(), 3),
                "qtime_mean_us": round(st.qtime.mean(), 3),
                "qtime_max_us": st.qtime.max_us,
                "promotions": promotions_by_leaf.get(leaf, 0),
            }
        return {
            "entities": out_entities,
            "intervals": self.intervals,
            "utilization": self.util_series,
            "schedulers": self.scheduler_series,
            "quantum_flags": self.quantum_flags,
            "cache_intervals": self.cache_series,
        }


def entity_window_stats(metrics_doc: dict, entity: str, t0_s: float, t1_s: float) -> dict:
    """Aggregate an entity's interval rows over [t0, t1)."""
    ops = 0
    nbytes = 0
    lat_weighted = 0.0
    lat_ops = 0
    qt_weighted = 0.0
    qt_n = 0
    for row in metrics_doc["intervals"]:
        if row["entity"] != entity or not (t0_s <= row["t_s"] < t1_s):
            continue
        ops += row["ops"]
        nbytes += row["bytes"]
        if row["ops"]:
            lat_weighted += row["read_mean_us"] * row["ops"]
            lat_ops += row["ops"]
        qt_weighted += row["qtime_mean_us"]
        qt_n += 1
    return {
        "ops": ops,
        "bytes": nbytes,
        "read_mean_us": lat_weighted / lat_ops if lat_ops else 0.0,
        "qtime_mean_us": qt_weighted / qt_n if qt_n else 0.0,
    }


def mean_utilization(metrics_doc: dict, entity: str, t0_s: float, t1_s: float) -> float:
    vals = [
        row["utilization"]
        for row in metrics_doc["utilization"]
        if row["entity"] == entity and t0_s <= row["t_s"] < t1_s
    ]
    return sum(vals) / len(vals) if vals else 0.0
