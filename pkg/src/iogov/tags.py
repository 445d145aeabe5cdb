"""Request tags: the binary wire format and storage-side classification.

A tag carries only primitives (tenant id, file target, priority hint).
Workload class, I/O category and cache policy are derived on the storage
side by looking the primitives up in a provisioning registry, so policy
can evolve without touching the wire format.

Wire layout, version 1, 32 bytes, all multi-byte fields big-endian::

    off  size  field
    0    1     version (u8)
    1    1     priority hint (u8: 0 high, 1 medium, 2 low)
    2    2     workload key (u16, 0 = unassigned)
    4    4     reserved, must be zero (u32)
    8    8     database id (u64)
    16   4     file number (u32)
    20   4     block count (u32)
    24   8     block offset (u64)
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Optional

TAG_VERSION = 1
_LAYOUT = struct.Struct(">BBHIQIIQ")
TAG_SIZE = _LAYOUT.size  # 32


class UnknownVersion(Exception):
    """Header version not supported; caller treats the I/O as untagged."""


class TruncatedTag(Exception):
    """Byte sequence is not a whole tag."""


class Priority(enum.IntEnum):
    HIGH = 0
    MEDIUM = 1
    LOW = 2


class Category(enum.Enum):
    REDO_LOG_WRITE = "redo_log_write"
    BUFFER_CACHE_READ = "buffer_cache_read"
    DIRECT_PATH_READ = "direct_path_read"
    DATABASE_WRITE = "database_write"
    TEMP_WRITE = "temp_write"
    UNDO_WRITE = "undo_write"
    BACKUP = "backup"
    STORAGE_REBALANCE = "storage_rebalance"
    UNTAGGED = "untagged"


class CachePolicy(enum.Enum):
    WRITE_BACK = "write_back"
    CACHE_YES = "cache_yes"
    CACHE_CONDITIONAL = "cache_conditional"
    CACHE_NO = "cache_no"


# What-the-data-is decides cache treatment; one-shot system traffic
# never pollutes the cache.
DEFAULT_CACHE_POLICY: dict[Category, CachePolicy] = {
    Category.REDO_LOG_WRITE: CachePolicy.WRITE_BACK,
    Category.BUFFER_CACHE_READ: CachePolicy.CACHE_YES,
    Category.DIRECT_PATH_READ: CachePolicy.CACHE_CONDITIONAL,
    Category.DATABASE_WRITE: CachePolicy.WRITE_BACK,
    Category.TEMP_WRITE: CachePolicy.CACHE_NO,
    Category.UNDO_WRITE: CachePolicy.CACHE_YES,
    Category.BACKUP: CachePolicy.CACHE_NO,
    Category.STORAGE_REBALANCE: CachePolicy.CACHE_NO,
    Category.UNTAGGED: CachePolicy.CACHE_NO,
}

_U16 = 1 << 16
_U32 = 1 << 32
_U64 = 1 << 64


@dataclass(frozen=True)
class IoTag:
    database_id: int
    file_number: int
    block_offset: int
    block_count: int
    priority_hint: Priority = Priority.MEDIUM
    workload_key: int = 0
    version: int = TAG_VERSION

    def __post_init__(self):
        if not (0 <= self.version < 256):
            raise ValueError(f"version out of range: {self.version}")
        if not (0 <= self.database_id < _U64):
            raise ValueError("database_id out of range")
        if not (0 <= self.file_number < _U32):
            raise ValueError("file_number out of range")
        if not (0 <= self.block_offset < _U64):
            raise ValueError("block_offset out of range")
        if not (0 <= self.block_count < _U32):
            raise ValueError("block_count out of range")
        if not (0 <= self.workload_key < _U16):
            raise ValueError("workload_key out of range")


def encode_tag(tag: IoTag) -> bytes:
    return _LAYOUT.pack(
        tag.version,
        int(tag.priority_hint),
        tag.workload_key,
        0,
        tag.database_id,
        tag.file_number,
        tag.block_count,
        tag.block_offset,
    )


def decode_tag(raw: bytes) -> IoTag:
    if len(raw) != TAG_SIZE:
        raise TruncatedTag(f"expected {TAG_SIZE} bytes, got {len(raw)}")
    version, prio, wkey, _reserved, db, fno, count, offset = _LAYOUT.unpack(raw)
    if version != TAG_VERSION:
        raise UnknownVersion(f"tag version {version}")
    return IoTag(
        database_id=db,
        file_number=fno,
        block_offset=offset,
        block_count=count,
        priority_hint=Priority(prio) if prio in (0, 1, 2) else Priority.LOW,
        workload_key=wkey,
        version=version,
    )


@dataclass(frozen=True)
class Classification:
    leaf: str
    category: Category
    priority: Priority
    cache_policy: CachePolicy


@dataclass
class _TenantEntry:
    pdb: str
    default_leaf: str
    workloads: dict[int, str]
    # sorted, non-overlapping (lo, hi, category) file-number ranges
    file_ranges: list[tuple[int, int, Category]]


class ClassificationRegistry:
    """Total lookup from tag primitives to a Classification.

    Provisioned once per plan snapshot; ``classify`` is pure.  Unknown
    tenants fall back to the plan's untagged-default leaf.  A known
    tenant with an unprovisioned file number keeps its leaf but is
    demoted to the untagged category, so it gets no cache admission.
    """

    def __init__(self, fallback: Classification):
        self.fallback = fallback
        self._tenants: dict[int, _TenantEntry] = {}
        self.priority_defaults: dict[str, Priority] = {}

    def provision_tenant(
        self,
        database_id: int,
        pdb: str,
        default_leaf: str,
        workloads: Optional[dict[int, str]] = None,
        file_ranges: Optional[list[tuple[int, int, Category]]] = None,
    ) -> None:
        ranges = sorted(file_ranges or [])
        for (al, ah, _), (bl, bh, _) in zip(ranges, ranges[1:]):
            if bl <= ah:
                raise ValueError(f"overlapping file ranges at {bl}")
        self._tenants[database_id] = _TenantEntry(
            pdb=pdb,
            default_leaf=default_leaf,
            workloads=dict(workloads or {}),
            file_ranges=ranges,
        )

    def tenant_ids(self) -> list[int]:
        return sorted(self._tenants)


def classify(registry: ClassificationRegistry, tag: Optional[IoTag]) -> Classification:
    """Map a decoded tag (or None for untagged I/O) to its policy tuple."""
    if tag is None:
        return registry.fallback
    entry = registry._tenants.get(tag.database_id)
    if entry is None:
        return registry.fallback
    leaf = entry.workloads.get(tag.workload_key, entry.default_leaf)
    category = Category.UNTAGGED
    for lo, hi, cat in entry.file_ranges:
        if lo <= tag.file_number <= hi:
            category = cat
            break
    return Classification(
        leaf=leaf,
        category=category,
        priority=tag.priority_hint,
        cache_policy=DEFAULT_CACHE_POLICY[category],
    )


def classify_bytes(
    registry: ClassificationRegistry, raw: Optional[bytes]
) -> Classification:
    """Decode-and-classify; malformed or unversioned bytes fall back."""
    if raw is None:
        return registry.fallback
    try:
        tag = decode_tag(raw)
    except (UnknownVersion, TruncatedTag):
        return registry.fallback
    return classify(registry, tag)


def make_fallback(default_leaf: str) -> Classification:
    return Classification(
        leaf=default_leaf,
        category=Category.UNTAGGED,
        priority=Priority.LOW,
        cache_policy=CachePolicy.CACHE_NO,
    )
