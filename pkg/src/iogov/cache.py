"""Flash cache with tag-driven admission.

Admission is decided by the request's classification: cache-eligible
categories are admitted (evicting least-recently-used entries), write
back categories absorb writes and mark entries dirty, and one-shot
system traffic bypasses entirely.  The exclusion toggle exists to
measure pollution: with it disabled, bypass categories are admitted
like ordinary reads.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Hashable, Optional

from .tags import CachePolicy, Classification


class QuotaExhausted(Exception):
    """Entity has a zero cache quota; the block bypasses, not an error."""


@dataclass
class CacheEntry:
    size: int
    entity: str
    dirty: bool = False


class AdmitResult:
    ADMITTED = "admitted"
    BYPASSED = "bypassed"
    EVICTED_AND_ADMITTED = "evicted_and_admitted"


class FlashCache:
    """LRU cache keyed by block address with optional per-entity quotas."""

    def __init__(
        self,
        capacity: int,
        quotas: Optional[dict[str, float]] = None,
        scan_admission: Optional[Callable[[str, int], bool]] = None,
    ):
        self.capacity = capacity
        self.quotas = dict(quotas or {})  # entity -> fraction of capacity
        self.scan_admission = scan_admission or (lambda entity, size: True)
        self.exclusion_enabled = True
        self._entries: OrderedDict[Hashable, CacheEntry] = OrderedDict()
        self.used = 0
        self.residency: dict[str, int] = {}
        self.hits: dict[str, int] = {}
        self.misses: dict[str, int] = {}
        self.evictions = 0

    def set_exclusion_enabled(self, enabled: bool) -> None:
        """Pollution-experiment toggle: when off, bypass categories admit."""
        self.exclusion_enabled = enabled

    def entity_quota_bytes(self, entity: str) -> Optional[int]:
        frac = self.quotas.get(entity)
        if frac is None:
            return None
        return int(frac * self.capacity)

    def lookup(self, key: Hashable, entity: Optional[str] = None) -> bool:
        """Hit refreshes recency; miss leaves state untouched."""
        entry = self._entries.get(key)
        if entry is None:
            if entity is not None:
                self.misses[entity] = self.misses.get(entity, 0) + 1
            return False
        self._entries.move_to_end(key)
        if entity is not None:
            self.hits[entity] = self.hits.get(entity, 0) + 1
        return True

    def admit(
        self,
        classification: Classification,
        key: Hashable,
        size: int,
        dirty: bool = False,
    ) -> str:
        """Decide residency for a block the backing store just produced."""
        policy = classification.cache_policy
        if policy is CachePolicy.CACHE_NO and self.exclusion_enabled:
            return AdmitResult.BYPASSED
        if policy is CachePolicy.CACHE_CONDITIONAL and not self.scan_admission(
            classification.leaf, size
        ):
            return AdmitResult.BYPASSED

        entity = classification.leaf
        quota = self.entity_quota_bytes(entity)
        if quota == 0:
            raise QuotaExhausted(entity)
        if size > self.capacity or (quota is not None and size > quota):
            return AdmitResult.BYPASSED

        evicted = False
        old = self._entries.pop(key, None)
        if old is not None:
            self.used -= old.size
            self.residency[old.entity] -= old.size

        if quota is not None:
            while self.residency.get(entity, 0) + size > quota:
                if not self._evict_lru(owner=entity):
                    break
                evicted = True
        while self.used + size > self.capacity:
            if not self._evict_lru():
                break
            evicted = True

        self._entries[key] = CacheEntry(size=size, entity=entity, dirty=dirty)
        self.used += size
        self.residency[entity] = self.residency.get(entity, 0) + size
        return AdmitResult.EVICTED_AND_ADMITTED if evicted else AdmitResult.ADMITTED

    def _evict_lru(self, owner: Optional[str] = None) -> bool:
        if owner is None:
            try:
                key, entry = self._entries.popitem(last=False)
            except KeyError:
                return False
        else:
            key = next(
                (k for k, e in self._entries.items() if e.entity == owner), None
            )
            if key is None:
                return False
            entry = self._entries.pop(key)
        self.used -= entry.size
        self.residency[entry.entity] -= entry.size
        self.evictions += 1
        return True

    def prewarm(self, classification: Classification, keys, size: int) -> int:
        """Seed residency for a working set; returns blocks admitted."""
        count = 0
        for key in keys:
            try:
                if self.admit(classification, key, size) != AdmitResult.BYPASSED:
                    count += 1
            except QuotaExhausted:
                break
        return count

    def stats_snapshot(self) -> dict:
        return {
            "used": self.used,
            "capacity": self.capacity,
            "residency": dict(sorted(self.residency.items())),
            "hits": dict(sorted(self.hits.items())),
            "misses": dict(sorted(self.misses.items())),
            "evictions": self.evictions,
        }

    def reset_counters(self) -> None:
        self.hits.clear()
        self.misses.clear()
        self.evictions = 0
