"""Built-in scenario catalog reproducing the evaluation experiments.

Each entry is a named family of one or more runnable configurations
(variants).  Absolute throughput is desk-scale, not rack-scale: the
catalog reproduces ratios, distribution shapes, and enforcement
properties, never absolute rates.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

MB = 1024 * 1024


@dataclass
class ScenarioFamily:
    name: str
    description: str
    variants: list[tuple[str, dict]] = field(default_factory=list)

    def variant(self, label: str) -> dict:
        for lab, cfg in self.variants:
            if lab == label:
                return copy.deepcopy(cfg)
        raise KeyError(f"{self.name}: no variant {label!r}")


def _two_cdb_plan(shares_a: int, shares_b: int, version: int = 1) -> dict:
    return {
        "version": version,
        "objective": "auto",
        "nodes": [
            {"id": "cdbA", "level": "cdb", "shares": shares_a},
            {"id": "cdbB", "level": "cdb", "shares": shares_b},
            {"id": "pdbA", "level": "pdb", "parent": "cdbA"},
            {"id": "pdbB", "level": "pdb", "parent": "cdbB"},
            {"id": "wlA", "level": "workload", "parent": "pdbA"},
            {"id": "wlB", "level": "workload", "parent": "pdbB", "default": True},
        ],
    }


def _scan_generator(name, tenant, leaf_key, sessions, size_mb, priority="low"):
    return {
        "name": name,
        "tenant": tenant,
        "workload_key": leaf_key,
        "pattern": "scan",
        "category": "direct_path_read",
        "priority": priority,
        "size": int(size_mb * MB),
        "working_set_mb": 32768,
        "dataset_mb": 32768,
        "arrival": {"kind": "closed", "sessions": sessions, "think_ms": 0},
    }


def _noisy_neighbor(include_scan: bool, scheduler: str) -> dict:
    cfg = {
        "name": "noisy-neighbor",
        "description": "latency-sensitive point reads beside a bulk scan tenant",
        "duration_s": 30,
        "measure_from_s": 6,
        "scheduler": scheduler,
        "plan": {
            "version": 1,
            "objective": "auto",
            "nodes": [
                {"id": "cdbA", "level": "cdb"},
                {"id": "oltp_pdb", "level": "pdb", "parent": "cdbA"},
                {"id": "scan_pdb", "level": "pdb", "parent": "cdbA"},
                {"id": "oltp_pdb/interactive", "level": "workload", "parent": "oltp_pdb"},
                {
                    "id": "scan_pdb/batch",
                    "level": "workload",
                    "parent": "scan_pdb",
                    "default": True,
                },
            ],
        },
        "tenants": [
            {"database_id": 101, "pdb": "oltp_pdb", "workloads": {1: "oltp_pdb/interactive"}},
            {"database_id": 102, "pdb": "scan_pdb", "workloads": {1: "scan_pdb/batch"}},
        ],
        "devices": [
            {"prefix": "hdd", "kind": "hdd", "count": 4},
            {"prefix": "flash", "kind": "flash", "count": 2, "servers": 8},
        ],
        "cache": {
            "capacity_mb": 512,
            "scan_admission": "never",
            "exclusion": True,
            "prewarm": [{"generator": "oltp", "fraction": 0.9808}],
        },
        "generators": [
            {
                "name": "oltp",
                "tenant": 101,
                "workload_key": 1,
                "pattern": "point_read",
                "category": "buffer_cache_read",
                "priority": "high",
                "size": 8192,
                "working_set_mb": 522,
                "arrival": {"kind": "closed", "sessions": 128, "think_ms": 45},
            }
        ],
    }
    if include_scan:
        cfg["generators"].append(_scan_generator("scan", 102, 1, sessions=64, size_mb=1))
    return cfg


def _limit_case(label: str, limit_a, limit_p5, duration=60) -> dict:
    nodes = [
        {"id": "cdbA", "level": "cdb"},
        {"id": "cdbB", "level": "cdb"},
        {"id": "pdb1", "level": "pdb", "parent": "cdbA"},
        {"id": "pdb5", "level": "pdb", "parent": "cdbA"},
        {"id": "pdb8", "level": "pdb", "parent": "cdbB"},
        {"id": "pdb1/wl", "level": "workload", "parent": "pdb1"},
        {"id": "pdb5/wl", "level": "workload", "parent": "pdb5"},
        {"id": "pdb8/wl", "level": "workload", "parent": "pdb8", "default": True},
    ]
    if limit_a is not None:
        nodes[0]["limit"] = limit_a
    if limit_p5 is not None:
        nodes[3]["limit"] = limit_p5
    gens = []
    for gname, db, leaf_key in (("load1", 201, 1), ("load5", 205, 1), ("load8", 208, 1)):
        gens.append(
            {
                "name": gname,
                "tenant": db,
                "workload_key": leaf_key,
                "pattern": "point_read",
                "category": "buffer_cache_read",
                "priority": "medium",
                "size": 8192,
                "working_set_mb": 4096,
                "arrival": {"kind": "closed", "sessions": 6, "think_ms": 0},
            }
        )
    return {
        "name": f"limit-cases/{label}",
        "description": "hierarchical limit enforcement",
        "duration_s": duration,
        "measure_from_s": 5,
        "plan": {"version": 1, "objective": "auto", "nodes": nodes},
        "tenants": [
            {"database_id": 201, "pdb": "pdb1", "workloads": {1: "pdb1/wl"}},
            {"database_id": 205, "pdb": "pdb5", "workloads": {1: "pdb5/wl"}},
            {"database_id": 208, "pdb": "pdb8", "workloads": {1: "pdb8/wl"}},
        ],
        # single fast-seek spindle: deterministic ~0.54ms small reads keep
        # limit quantization fine-grained at desk scale
        "devices": [
            {
                "prefix": "hdd",
                "kind": "hdd",
                "count": 1,
                "service": {"hdd_position_us": 500.0},
            }
        ],
        "generators": gens,
    }


def _sequentialize(cfg: dict) -> dict:
    """Small reads issued sequentially: deterministic service times."""
    for g in cfg["generators"]:
        g["pattern"] = "scan"
        g["category"] = "buffer_cache_read"
        g["dataset_mb"] = g.pop("working_set_mb", 4096)
    return cfg


def _three_level_row(label, limit_a, limit_p5, wl_limit) -> dict:
    cfg = _limit_case(label, limit_a, limit_p5)
    cfg["name"] = f"three-level-limits/{label}"
    for node in cfg["plan"]["nodes"]:
        if node["id"] in ("pdb1/wl", "pdb5/wl") and wl_limit is not None:
            node["limit"] = wl_limit
    return _sequentialize(cfg)


def _share_ratio(label: str, shares_a: int, shares_b: int) -> dict:
    # sessions must exceed the in-flight capacity (2 devices x cap 4) so
    # both tenants stay backlogged and the lottery governs composition,
    # while the disfavored tenant's wait stays under the deadline
    return {
        "name": f"share-ratios/{label}",
        "description": "proportional throughput between two saturating tenants",
        "duration_s": 40,
        "measure_from_s": 5,
        "plan": _two_cdb_plan(shares_a, shares_b),
        "tenants": [
            {"database_id": 301, "pdb": "pdbA", "workloads": {1: "wlA"}},
            {"database_id": 302, "pdb": "pdbB", "workloads": {1: "wlB"}},
        ],
        "devices": [
            {
                "prefix": "hdd",
                "kind": "hdd",
                "count": 2,
                "service": {"hdd_position_us": 500.0},
                "targets": {"large_read_cap": 4},
            }
        ],
        "generators": [
            _scan_generator("loadA", 301, 1, sessions=24, size_mb=0.5),
            _scan_generator("loadB", 302, 1, sessions=24, size_mb=0.5),
        ],
    }


def _share_switch() -> dict:
    cfg = _share_ratio("switch", 2, 1)
    cfg["name"] = "share-switch"
    cfg["description"] = "live plan swap inverting a 2:1 share ratio mid-run"
    cfg["duration_s"] = 100
    cfg["measure_from_s"] = 10
    # just above the small/large boundary, on a fast transfer rate: many
    # lottery draws per window tighten the symmetric-throughput check
    for g in cfg["generators"]:
        g["size"] = 192 * 1024
    cfg["devices"][0]["service"]["hdd_transfer_us_per_mb"] = 2500.0
    cfg["events"] = [
        {"at_s": 50, "action": "swap_plan", "plan": _two_cdb_plan(1, 2, version=2)}
    ]
    return cfg


def _queue_sweep(target: int) -> dict:
    return {
        "name": f"queue-depth-sweep/{target}",
        "description": "flash queue-depth target sweep under mixed load",
        "duration_s": 25,
        "measure_from_s": 5,
        "plan": {
            "version": 1,
            "objective": "auto",
            "nodes": [
                {"id": "cdbA", "level": "cdb"},
                {"id": "oltp_pdb", "level": "pdb", "parent": "cdbA"},
                {"id": "scan_pdb", "level": "pdb", "parent": "cdbA"},
                {"id": "oltp_pdb/wl", "level": "workload", "parent": "oltp_pdb"},
                {"id": "scan_pdb/wl", "level": "workload", "parent": "scan_pdb", "default": True},
            ],
        },
        "tenants": [
            {"database_id": 401, "pdb": "oltp_pdb", "workloads": {1: "oltp_pdb/wl"}},
            {"database_id": 402, "pdb": "scan_pdb", "workloads": {1: "scan_pdb/wl"}},
        ],
        "devices": [
            {
                "prefix": "flash",
                "kind": "flash",
                "count": 2,
                "servers": 2,
                "targets": {"flash_lowprio_target": target},
            }
        ],
        "generators": [
            {
                "name": "oltp",
                "tenant": 401,
                "workload_key": 1,
                "pattern": "point_read",
                "category": "buffer_cache_read",
                "priority": "high",
                "size": 8192,
                "working_set_mb": 1024,
                "arrival": {"kind": "closed", "sessions": 8, "think_ms": 20},
            },
            _scan_generator("scan", 402, 1, sessions=130, size_mb=4),
        ],
    }


def _cache_governance(label: str, quota: float, backup: bool, exclusion: bool) -> dict:
    cfg = {
        "name": f"cache-governance/{label}",
        "description": "cache quota sweep and pollution comparison",
        "duration_s": 25,
        "measure_from_s": 5,
        "plan": {
            "version": 1,
            "objective": "auto",
            "nodes": [
                {"id": "cdbA", "level": "cdb"},
                {"id": "lat_pdb", "level": "pdb", "parent": "cdbA"},
                {"id": "bg_pdb", "level": "pdb", "parent": "cdbA"},
                {"id": "lat_pdb/wl", "level": "workload", "parent": "lat_pdb"},
                {"id": "bg_pdb/wl", "level": "workload", "parent": "bg_pdb", "default": True},
            ],
        },
        "tenants": [
            {"database_id": 501, "pdb": "lat_pdb", "workloads": {1: "lat_pdb/wl"}},
            {"database_id": 502, "pdb": "bg_pdb", "workloads": {1: "bg_pdb/wl"}},
        ],
        "devices": [
            {"prefix": "hdd", "kind": "hdd", "count": 2},
            {"prefix": "flash", "kind": "flash", "count": 2, "servers": 8},
        ],
        "cache": {
            "capacity_mb": 256,
            "quotas": {"lat_pdb/wl": quota},
            "scan_admission": "always",
            "exclusion": exclusion,
            "prewarm": [{"generator": "reader", "fraction": quota}],
        },
        "generators": [
            {
                "name": "reader",
                "tenant": 501,
                "workload_key": 1,
                "pattern": "point_read",
                "category": "buffer_cache_read",
                "priority": "high",
                "size": 8192,
                "working_set_mb": 256,
                "arrival": {"kind": "closed", "sessions": 12, "think_ms": 12},
            }
        ],
    }
    if backup:
        cfg["generators"].append(
            {
                "name": "backup",
                "tenant": 502,
                "workload_key": 1,
                "pattern": "backup",
                "category": "backup",
                "priority": "low",
                "size": MB,
                "working_set_mb": 16384,
                "dataset_mb": 16384,
                "arrival": {"kind": "closed", "sessions": 8, "think_ms": 0},
            }
        )
    return cfg


def _deadline_stress(adversarial: bool) -> dict:
    gens = [
        {
            "name": "flood",
            "tenant": 601,
            "workload_key": 1,
            "pattern": "point_read",
            "category": "buffer_cache_read",
            "priority": "high",
            "size": 8192,
            "working_set_mb": 8192,
            "arrival": {
                "kind": "closed",
                "sessions": 160 if adversarial else 24,
                "think_ms": 0,
            },
        },
        {
            "name": "trickle",
            "tenant": 602,
            "workload_key": 1,
            "pattern": "point_read",
            "category": "direct_path_read",
            "priority": "low",
            "size": 8192,
            "working_set_mb": 8192,
            "arrival": {"kind": "open", "rate_per_s": 3.0},
        },
    ]
    return {
        "name": "deadline-stress/" + ("adversarial" if adversarial else "healthy"),
        "description": "starvation guard under a share-skewed flood",
        "duration_s": 30,
        "measure_from_s": 2,
        "plan": {
            "version": 1,
            "objective": "auto",
            "nodes": [
                {"id": "cdbA", "level": "cdb"},
                {"id": "hot_pdb", "level": "pdb", "parent": "cdbA", "shares": 1000},
                {"id": "cold_pdb", "level": "pdb", "parent": "cdbA", "shares": 1},
                {"id": "hot_pdb/wl", "level": "workload", "parent": "hot_pdb"},
                {"id": "cold_pdb/wl", "level": "workload", "parent": "cold_pdb", "default": True},
            ],
        },
        "tenants": [
            {"database_id": 601, "pdb": "hot_pdb", "workloads": {1: "hot_pdb/wl"}},
            {"database_id": 602, "pdb": "cold_pdb", "workloads": {1: "cold_pdb/wl"}},
        ],
        "devices": [{"prefix": "hdd", "kind": "hdd", "count": 2}],
        "generators": gens,
    }


def _limit_vs_deadline() -> dict:
    return {
        "name": "limit-vs-deadline",
        "description": "a capped tenant with an over-age backlog stays capped",
        "duration_s": 30,
        "measure_from_s": 2,
        "plan": {
            "version": 1,
            "objective": "auto",
            "nodes": [
                {"id": "cdbA", "level": "cdb"},
                {"id": "capped_pdb", "level": "pdb", "parent": "cdbA", "limit": 0.01},
                {"id": "free_pdb", "level": "pdb", "parent": "cdbA"},
                {"id": "capped_pdb/wl", "level": "workload", "parent": "capped_pdb"},
                {"id": "free_pdb/wl", "level": "workload", "parent": "free_pdb", "default": True},
            ],
        },
        "tenants": [
            {"database_id": 701, "pdb": "capped_pdb", "workloads": {1: "capped_pdb/wl"}},
            {"database_id": 702, "pdb": "free_pdb", "workloads": {1: "free_pdb/wl"}},
        ],
        "devices": [
            {
                "prefix": "hdd",
                "kind": "hdd",
                "count": 2,
                "service": {"hdd_position_us": 500.0},
            }
        ],
        "generators": [
            {
                "name": "capped",
                "tenant": 701,
                "workload_key": 1,
                "pattern": "scan",
                "category": "buffer_cache_read",
                "priority": "medium",
                "size": 8192,
                "working_set_mb": 4096,
                "dataset_mb": 4096,
                "arrival": {"kind": "open", "rate_per_s": 300.0},
            },
            {
                "name": "free",
                "tenant": 702,
                "workload_key": 1,
                "pattern": "point_read",
                "category": "buffer_cache_read",
                "priority": "medium",
                "size": 8192,
                "working_set_mb": 4096,
                "arrival": {"kind": "closed", "sessions": 8, "think_ms": 0},
            },
        ],
    }


def _reconcile_noise() -> dict:
    # paced large reads at 97% of a 20% cap; completions straddle quanta
    return {
        "name": "reconcile-noise",
        "description": "boundary-straddling tenant near its cap is not throttled",
        "duration_s": 130,
        "measure_from_s": 10,
        "plan": {
            "version": 1,
            "objective": "auto",
            "nodes": [
                {"id": "cdbA", "level": "cdb"},
                {"id": "near_pdb", "level": "pdb", "parent": "cdbA", "limit": 0.2},
                {"id": "bg_pdb", "level": "pdb", "parent": "cdbA"},
                {"id": "near_pdb/wl", "level": "workload", "parent": "near_pdb"},
                {"id": "bg_pdb/wl", "level": "workload", "parent": "bg_pdb", "default": True},
            ],
        },
        "tenants": [
            {"database_id": 801, "pdb": "near_pdb", "workloads": {1: "near_pdb/wl"}},
            {"database_id": 802, "pdb": "bg_pdb", "workloads": {1: "bg_pdb/wl"}},
        ],
        "devices": [
            {
                "prefix": "hdd",
                "kind": "hdd",
                "count": 1,
                "service": {"hdd_position_us": 500.0},
            }
        ],
        # service(1MB) = 5.5ms; budget 0.2 of one device = 36.36 io/s
        "generators": [
            {
                "name": "near",
                "tenant": 801,
                "workload_key": 1,
                "pattern": "scan",
                "category": "direct_path_read",
                "priority": "medium",
                "size": MB,
                "working_set_mb": 8192,
                "dataset_mb": 8192,
                "arrival": {"kind": "open", "rate_per_s": 35.27},
            },
            {
                "name": "background",
                "tenant": 802,
                "workload_key": 1,
                "pattern": "point_read",
                "category": "buffer_cache_read",
                "priority": "medium",
                "size": 8192,
                "working_set_mb": 1024,
                "arrival": {"kind": "open", "rate_per_s": 50.0, "poisson": True},
            },
        ],
    }


def _min_limit() -> dict:
    cfg = _limit_case("min", None, None, duration=65)
    cfg["name"] = "min-limit"
    cfg["description"] = "smallest enforceable utilization cap"
    for node in cfg["plan"]["nodes"]:
        if node["id"] == "pdb5/wl":
            node["limit"] = 0.0001
    return _sequentialize(cfg)


def scenario_suite() -> dict[str, ScenarioFamily]:
    """All built-in scenarios, keyed by family name."""
    noisy = ScenarioFamily(
        "noisy-neighbor",
        "OLTP point reads beside a saturating scan tenant (HDD path)",
        [
            ("iorm", _noisy_neighbor(True, "iorm")),
            ("bypass", _noisy_neighbor(True, "bypass")),
            ("alone-iorm", _noisy_neighbor(False, "iorm")),
            ("alone-bypass", _noisy_neighbor(False, "bypass")),
        ],
    )
    limit_cases = ScenarioFamily(
        "limit-cases",
        "six CDB/PDB limit configurations",
        [
            ("case1", _sequentialize(_limit_case("case1", None, None))),
            ("case2", _sequentialize(_limit_case("case2", 0.10, None))),
            ("case3", _sequentialize(_limit_case("case3", 0.10, 0.20))),
            ("case4", _sequentialize(_limit_case("case4", None, 0.01))),
            ("case5", _sequentialize(_limit_case("case5", 0.01, 0.10))),
            ("case6", _sequentialize(_limit_case("case6", 0.01, 0.01))),
        ],
    )
    three_level = ScenarioFamily(
        "three-level-limits",
        "limits active at CDB, PDB and workload levels",
        [
            ("row1", _three_level_row("row1", 0.50, 0.05, 0.10)),
            ("row2", _three_level_row("row2", 0.10, 0.01, 0.10)),
            ("row3", _three_level_row("row3", 0.01, 0.01, 0.10)),
            ("row4", _three_level_row("row4", None, None, 0.10)),
        ],
    )
    share_ratios = ScenarioFamily(
        "share-ratios",
        "throughput ratio tracking configured shares",
        [
            ("1to1", _share_ratio("1to1", 10, 10)),
            ("2to1", _share_ratio("2to1", 20, 10)),
            ("5to1", _share_ratio("5to1", 50, 10)),
            ("10to1", _share_ratio("10to1", 100, 10)),
        ],
    )
    sweep = ScenarioFamily(
        "queue-depth-sweep",
        "per-tenant queue time across low-priority target settings",
        [(str(t), _queue_sweep(t)) for t in (8, 16, 32, 64)],
    )
    cache_gov = ScenarioFamily(
        "cache-governance",
        "cache quota sweep plus pollution on/off",
        [
            ("q0", _cache_governance("q0", 0.0, False, True)),
            ("q50", _cache_governance("q50", 0.5, False, True)),
            ("q75", _cache_governance("q75", 0.75, False, True)),
            ("q100", _cache_governance("q100", 1.0, False, True)),
            ("bg", _cache_governance("bg", 1.0, True, True)),
            ("bg-polluted", _cache_governance("bg-polluted", 1.0, True, False)),
        ],
    )
    deadline = ScenarioFamily(
        "deadline-stress",
        "starvation guard: adversarial skew and a healthy control",
        [
            ("adversarial", _deadline_stress(True)),
            ("healthy", _deadline_stress(False)),
        ],
    )
    return {
        f.name: f
        for f in [
            noisy,
            ScenarioFamily(
                "bypass-baseline",
                "noisy-neighbor with governance disabled",
                [("default", _noisy_neighbor(True, "bypass"))],
            ),
            sweep,
            limit_cases,
            three_level,
            ScenarioFamily("min-limit", "0.01% leaf cap under saturation", [("default", _min_limit())]),
            share_ratios,
            ScenarioFamily("share-switch", "live share swap mid-run", [("default", _share_switch())]),
            cache_gov,
            deadline,
            ScenarioFamily(
                "limit-vs-deadline",
                "limits outrank the starvation guard",
                [("default", _limit_vs_deadline())],
            ),
            ScenarioFamily(
                "reconcile-noise",
                "carry-forward absorbs quantum boundary noise",
                [("default", _reconcile_noise())],
            ),
        ]
    }
