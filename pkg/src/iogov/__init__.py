"""Hierarchical, tag-aware I/O governance simulator.

A library plus CLI modeling multi-tenant storage scheduling: semantic
request tags, a CDB/PDB/workload resource tree with shares and limits,
lottery dispatch under cost-weighted queue-depth control, two-tier
utilization accounting, deadline-based starvation prevention, and
tag-driven flash-cache admission, all driven by a deterministic
discrete-event engine.
"""

from .accounting import (
    AccountingLedger,
    InfeasibleTarget,
    IoProfile,
    UtilizationReport,
    iops_to_percent,
    percent_to_iops,
)
from .cache import FlashCache, QuotaExhausted
from .devices import (
    Device,
    DeviceKind,
    DeviceModel,
    DeviceQueueTargets,
    DoubleCompletion,
    InFlightState,
    ServiceParams,
    WriteCacheState,
    complete_io,
    sample_service_time,
    set_degraded_mode,
    try_admit,
    write_cache_tick,
)
from .hierarchy import (
    EffectiveAllocation,
    HierarchyNode,
    InvalidDirective,
    MalformedHierarchy,
    MissingDefault,
    PlanHandle,
    ResourcePlan,
    StalePlan,
    UnknownNode,
    build_plan,
    effective_allocation,
    sibling_share_fractions,
    swap_plan,
)
from .scheduler import DeviceScheduler, IoRequest, Mode, evaluate_mode, fragment
from .tags import (
    CachePolicy,
    Category,
    Classification,
    ClassificationRegistry,
    IoTag,
    Priority,
    TruncatedTag,
    UnknownVersion,
    classify,
    classify_bytes,
    decode_tag,
    encode_tag,
)

__version__ = "0.1.0"
