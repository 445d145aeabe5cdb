"""Scenario configuration: validation, assembly, and single-run execution.

A scenario file is declarative YAML describing the resource plan, the
tenant provisioning that backs tag classification, the device fleet,
the flash cache, the workload generators, and optional timed actions
(live plan swaps, cache toggles).  The same dict structure is produced
by the built-in catalog, so file-driven and named runs share one path.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import yaml

from .. import devices as dev
from ..cache import FlashCache
from ..hierarchy import PlanHandle, ResourcePlan, build_plan
from ..tags import Category, ClassificationRegistry, Priority, make_fallback
from .engine import Engine, split_seed
from .metrics import MetricsSink
from .workload import (
    GeneratorConfig,
    WorkloadGenerator,
    drive_generator,
    registry_file_ranges,
)

MB = 1024 * 1024


class ConfigError(Exception):
    """Scenario configuration is invalid; message names the field."""


_PRIORITIES = {"high": Priority.HIGH, "medium": Priority.MEDIUM, "low": Priority.LOW}
_CATEGORIES = {c.value: c for c in Category}


def load_scenario_file(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return cfg


def save_scenario_file(cfg: dict, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)


def _need(cfg: dict, key: str, where: str):
    if key not in cfg:
        raise ConfigError(f"{where}: missing required field {key!r}")
    return cfg[key]


@dataclass
class RunResult:
    name: str
    seed: int
    doc: dict
    outdir: Optional[Path]


def _build_devices(cfg: dict) -> list[dev.Device]:
    out: list[dev.Device] = []
    for i, entry in enumerate(cfg.get("devices", [])):
        where = f"devices[{i}]"
        kind_name = _need(entry, "kind", where)
        try:
            kind = dev.DeviceKind(kind_name)
        except ValueError:
            raise ConfigError(f"{where}: unknown kind {kind_name!r}")
        count = int(entry.get("count", 1))
        prefix = entry.get("prefix", kind.value)
        servers = int(entry.get("servers", 8 if kind is dev.DeviceKind.FLASH else 1))
        capacity = float(entry.get("rated_capacity", servers))
        service = dev.ServiceParams(**entry.get("service", {}))
        targets_kw = entry.get("targets", {})
        try:
            targets = dev.DeviceQueueTargets(**targets_kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}.targets: {exc}")
        for n in range(count):
            wc = None
            if "write_cache" in entry and entry["write_cache"]:
                wcfg = entry["write_cache"]
                wc = dev.WriteCacheState(
                    capacity=int(wcfg.get("capacity_mb", 512) * MB),
                    flush_rate=float(wcfg.get("flush_mb_s", 150)) * MB,
                    pressure_threshold=float(wcfg.get("pressure_threshold", 0.75)),
                )
            model = dev.DeviceModel(
                kind=kind,
                service=service,
                rated_capacity=capacity,
                servers=servers,
                raw_queue_limit=int(entry.get("raw_queue_limit", 128)),
                write_cache=wc,
            )
            out.append(dev.Device(f"{prefix}{n}", model, targets))
    if not out:
        raise ConfigError("devices: at least one device is required")
    return out


def _build_registry(cfg: dict, plan: ResourcePlan) -> ClassificationRegistry:
    registry = ClassificationRegistry(make_fallback(plan.default_leaf_id))
    for i, tenant in enumerate(cfg.get("tenants", [])):
        where = f"tenants[{i}]"
        db = int(_need(tenant, "database_id", where))
        pdb = _need(tenant, "pdb", where)
        if pdb not in plan.nodes:
            raise ConfigError(f"{where}: pdb {pdb!r} not in plan")
        workloads = {int(k): str(v) for k, v in tenant.get("workloads", {}).items()}
        for leaf in workloads.values():
            if leaf not in plan.nodes or not plan.is_leaf(leaf):
                raise ConfigError(f"{where}: workload leaf {leaf!r} not in plan")
        default_leaf = tenant.get("default_workload")
        if default_leaf is None:
            implicit = pdb + ".default"
            if implicit in plan.nodes:
                default_leaf = implicit
            elif workloads:
                default_leaf = sorted(workloads.items())[0][1]
            else:
                kids = plan.children(pdb)
                default_leaf = kids[0] if kids else plan.default_leaf_id
        registry.provision_tenant(
            db,
            pdb=pdb,
            default_leaf=default_leaf,
            workloads=workloads,
            file_ranges=registry_file_ranges(Category),
        )
    return registry


def _build_generator_config(entry: dict, idx: int, duration_us: int) -> GeneratorConfig:
    where = f"generators[{idx}]"
    arrival = entry.get("arrival", {})
    kind = arrival.get("kind", "closed")
    if kind not in ("closed", "open"):
        raise ConfigError(f"{where}.arrival.kind: {kind!r}")
    cat_name = entry.get("category", "buffer_cache_read")
    if cat_name not in _CATEGORIES:
        raise ConfigError(f"{where}.category: unknown {cat_name!r}")
    prio_name = entry.get("priority", "medium")
    if prio_name not in _PRIORITIES:
        raise ConfigError(f"{where}.priority: unknown {prio_name!r}")
    stop_s = entry.get("stop_s")
    try:
        return GeneratorConfig(
            name=_need(entry, "name", where),
            database_id=int(_need(entry, "tenant", where)),
            pattern=entry.get("pattern", "point_read"),
            workload_key=int(entry.get("workload_key", 0)),
            category=_CATEGORIES[cat_name],
            priority=_PRIORITIES[prio_name],
            size=int(entry.get("size", 8192)),
            working_set_bytes=int(entry.get("working_set_mb", 1024) * MB),
            dataset_bytes=int(entry.get("dataset_mb", 0) * MB),
            arrival_kind=kind,
            sessions=int(arrival.get("sessions", 1)),
            think_us=int(arrival.get("think_ms", 0) * 1000),
            rate_per_s=float(arrival.get("rate_per_s", 0.0)),
            poisson=bool(arrival.get("poisson", False)),
            tagged=bool(entry.get("tagged", True)),
            start_us=int(entry.get("start_s", 0) * 1e6),
            stop_us=int(stop_s * 1e6) if stop_s is not None else None,
            scan_fraction=float(entry.get("scan_fraction", 0.5)),
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}")


def run_scenario(
    cfg: dict,
    seed: int,
    outdir: Optional[str | Path] = None,
    scheduler: Optional[str] = None,
    objective: Optional[str] = None,
    duration_s: Optional[float] = None,
    trace: bool = False,
    audit: bool = False,
    figures: bool = True,
) -> RunResult:
    """Execute one scenario configuration deterministically."""
    name = cfg.get("name", "scenario")
    duration = float(duration_s if duration_s is not None else _need(cfg, "duration_s", name))
    duration_us = int(duration * 1e6)
    sched_kind = scheduler or cfg.get("scheduler", "iorm")
    if sched_kind not in ("iorm", "bypass"):
        raise ConfigError(f"scheduler: {sched_kind!r} (want iorm or bypass)")

    plan_spec = dict(_need(cfg, "plan", name))
    if objective is not None:
        plan_spec["objective"] = objective
    try:
        plan = build_plan(plan_spec)
    except Exception as exc:
        raise ConfigError(f"plan: {exc}")
    handle = PlanHandle(plan)

    registry = _build_registry(cfg, plan)
    devices = _build_devices(cfg)

    cache = None
    cache_cfg = cfg.get("cache")
    if cache_cfg:
        mode = cache_cfg.get("scan_admission", "always")
        if mode not in ("always", "never"):
            raise ConfigError(f"cache.scan_admission: {mode!r}")
        admit_scans = mode == "always"
        cache = FlashCache(
            capacity=int(cache_cfg.get("capacity_mb", 1024) * MB),
            quotas={str(k): float(v) for k, v in (cache_cfg.get("quotas") or {}).items()},
            scan_admission=lambda entity, size, _a=admit_scans: _a,
        )
        cache.set_exclusion_enabled(bool(cache_cfg.get("exclusion", True)))

    metrics = MetricsSink(measure_from_us=int(cfg.get("measure_from_s", 0) * 1e6))
    trace_lines: Optional[list[str]] = [] if trace else None
    engine = Engine(
        plan_handle=handle,
        devices=devices,
        cache=cache,
        metrics=metrics,
        seed=seed,
        duration_us=duration_us,
        scheduler_kind=sched_kind,
        trace=trace_lines.append if trace_lines is not None else None,
        audit=audit,
    )

    generators = []
    for idx, entry in enumerate(cfg.get("generators", [])):
        gcfg = _build_generator_config(entry, idx, duration_us)
        gen = WorkloadGenerator(gcfg, registry, split_seed(seed, f"gen:{gcfg.name}"))
        generators.append(gen)
        drive_generator(engine, gen)

    if cache is not None and cache_cfg.get("prewarm"):
        for pw in cache_cfg["prewarm"]:
            gname = pw.get("generator")
            gen = next((g for g in generators if g.config.name == gname), None)
            if gen is None:
                raise ConfigError(f"cache.prewarm: unknown generator {gname!r}")
            cache.prewarm(
                gen.classification_template(),
                gen.working_set_keys(float(pw.get("fraction", 1.0))),
                gen.config.size,
            )

    timed: list = []
    for i, ev in enumerate(cfg.get("events", [])):
        where = f"events[{i}]"
        at_us = int(float(_need(ev, "at_s", where)) * 1e6)
        action = _need(ev, "action", where)
        if action == "swap_plan":
            next_spec = dict(_need(ev, "plan", where))
            if objective is not None:
                next_spec["objective"] = objective
            try:
                next_plan = build_plan(next_spec)
            except Exception as exc:
                raise ConfigError(f"{where}.plan: {exc}")
            timed.append((at_us, lambda p=next_plan: handle.swap(p)))
        elif action == "set_cache_exclusion":
            if cache is None:
                raise ConfigError(f"{where}: scenario has no cache")
            enabled = bool(_need(ev, "enabled", where))
            timed.append((at_us, lambda e=enabled: cache.set_exclusion_enabled(e)))
        elif action == "set_cache_available":
            available = bool(_need(ev, "available", where))
            prefix = ev.get("device_prefix", "")
            targets = [d for d in devices if d.id.startswith(prefix)]
            timed.append(
                (
                    at_us,
                    lambda ds=targets, a=available: [d.set_cache_available(a) for d in ds],
                )
            )
        else:
            raise ConfigError(f"{where}: unknown action {action!r}")

    engine.start(timed)
    audit_report = engine.run()

    promotions: dict[str, int] = {}
    for s in engine.schedulers.values():
        for leaf, n in s.promotions_by_leaf.items():
            promotions[leaf] = promotions.get(leaf, 0) + n

    doc = {
        "meta": {
            "name": name,
            "seed": seed,
            "duration_s": duration,
            "measure_from_s": float(cfg.get("measure_from_s", 0)),
            "scheduler": sched_kind,
            "objective": handle.plan.objective,
            "plan_version": handle.plan.version,
        },
        **metrics.finalize(handle.plan, promotions),
        "cache": cache.stats_snapshot() if cache is not None else None,
        "audit": audit_report,
    }

    out_path: Optional[Path] = None
    if outdir is not None:
        from . import reports

        out_path = Path(outdir)
        out_path.mkdir(parents=True, exist_ok=True)
        reports.emit_reports(doc, out_path, figures=figures)
        if trace_lines is not None:
            (out_path / "trace.log").write_text("\n".join(trace_lines) + "\n")
    return RunResult(name=name, seed=seed, doc=doc, outdir=out_path)
