"""Synthetic storage devices: service-time models and admission control.

Two device families are modeled.  Spindles (``hdd``) serve one request
at a time and protect latency with a partitioned read budget: small
reads own a guaranteed floor of slots, large reads are capped, and the
weighted total stays under the read target.  Flash devices serve many
requests concurrently; high-priority I/O skips admission entirely and
only low-priority traffic is queued against a shallow target.

Costs weight large transfers at 3x a small request.  A request counts
as small when its size is at or below the 128KB fragmentation chunk, so
fragments of a large scan are small by construction.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field, replace
from typing import Optional

SMALL_COST = 1
LARGE_COST = 3
SMALL_SIZE_LIMIT = 128 * 1024  # bytes; above this a request is "large"

HDD_READ_TARGET = 62
HDD_DEGRADED_READ_TARGET = 32
HDD_SMALL_READ_FLOOR = 32
HDD_LARGE_READ_CAP = 10
HDD_WRITE_TARGET = 8
FLASH_LOWPRIO_TARGET = 8


class DeviceKind(enum.Enum):
    HDD = "hdd"
    FLASH = "flash"


class RequestClass(enum.Enum):
    SMALL_READ = "small_read"
    LARGE_READ = "large_read"
    WRITE = "write"


def classify_size(size: int, direction: str) -> RequestClass:
    if direction == "write":
        return RequestClass.WRITE
    return RequestClass.SMALL_READ if size <= SMALL_SIZE_LIMIT else RequestClass.LARGE_READ


def class_cost(klass: RequestClass) -> int:
    return LARGE_COST if klass is RequestClass.LARGE_READ else SMALL_COST


class DoubleCompletion(Exception):
    """A completion arrived for a request that is not in flight."""


@dataclass
class DeviceQueueTargets:
    read_target: int = HDD_READ_TARGET
    small_read_floor: int = HDD_SMALL_READ_FLOOR
    large_read_cap: int = HDD_LARGE_READ_CAP
    write_target: int = HDD_WRITE_TARGET
    flash_lowprio_target: int = FLASH_LOWPRIO_TARGET
    degraded_read_target: int = HDD_DEGRADED_READ_TARGET

    def __post_init__(self):
        # the partition invariant covers the steady-state budget; the
        # degraded budget intentionally sits below the partition sum
        if self.read_target > self.degraded_read_target:
            budget = self.small_read_floor + self.large_read_cap * LARGE_COST
            if budget > self.read_target:
                raise ValueError(
                    f"floor {self.small_read_floor} + {self.large_read_cap} large "
                    f"exceed read target {self.read_target}"
                )


def set_degraded_mode(
    targets: DeviceQueueTargets, cache_available: bool
) -> DeviceQueueTargets:
    """Shrink the read budget while the flash cache cannot absorb misses."""
    want = HDD_READ_TARGET if cache_available else targets.degraded_read_target
    if targets.read_target == want:
        return targets
    return replace(targets, read_target=want)


@dataclass
class InFlightState:
    total_cost: int = 0
    small_count: int = 0
    large_count: int = 0
    write_count: int = 0
    lowprio_count: int = 0  # outstanding low-priority I/Os, reads and writes
    lowprio_write_count: int = 0
    _outstanding: dict = field(default_factory=dict)  # request id -> (class, lowprio)

    def outstanding(self) -> int:
        return self.small_count + self.large_count + self.write_count


def _count_admit(
    state: InFlightState, klass: RequestClass, high_priority: bool, request_id: int
) -> None:
    if klass is RequestClass.SMALL_READ:
        state.small_count += 1
        state.total_cost += SMALL_COST
    elif klass is RequestClass.LARGE_READ:
        state.large_count += 1
        state.total_cost += LARGE_COST
    else:
        state.write_count += 1
        if not high_priority:
            state.lowprio_write_count += 1
    if not high_priority:
        state.lowprio_count += 1
    state._outstanding[request_id] = (klass, not high_priority)


def try_admit(
    state: InFlightState,
    targets: DeviceQueueTargets,
    klass: RequestClass,
    kind: DeviceKind,
    high_priority: bool,
    request_id: int,
) -> bool:
    """Token-style admission check; updates counters atomically on admit.

    HDD reads draw on the weighted read budget, with the small-read
    floor honored even when large I/Os hold their full cap.  HDD writes
    use an independent threshold.  On flash, high-priority requests
    always admit; low-priority requests queue against their own target.
    """
    if kind is DeviceKind.FLASH:
        if not high_priority and state.lowprio_count >= targets.flash_lowprio_target:
            return False
    elif klass is RequestClass.SMALL_READ:
        if (
            state.total_cost + SMALL_COST > targets.read_target
            and state.small_count >= targets.small_read_floor
        ):
            return False
    elif klass is RequestClass.LARGE_READ:
        if state.large_count >= targets.large_read_cap:
            return False
        if state.total_cost + LARGE_COST > targets.read_target:
            return False
    else:  # write
        if state.write_count >= targets.write_target:
            return False

    _count_admit(state, klass, high_priority, request_id)
    return True


def raw_admit(
    state: InFlightState, klass: RequestClass, high_priority: bool, request_id: int
) -> None:
    """Unconditional admission used by the governance-bypass baseline."""
    _count_admit(state, klass, high_priority, request_id)


def complete_io(state: InFlightState, request_id: int) -> None:
    """Release the request's cost; signals the scheduler to re-evaluate."""
    try:
        klass, lowprio = state._outstanding.pop(request_id)
    except KeyError:
        raise DoubleCompletion(f"request {request_id} not in flight") from None
    if klass is RequestClass.SMALL_READ:
        state.small_count -= 1
        state.total_cost -= SMALL_COST
    elif klass is RequestClass.LARGE_READ:
        state.large_count -= 1
        state.total_cost -= LARGE_COST
    else:
        state.write_count -= 1
        if lowprio:
            state.lowprio_write_count -= 1
    if lowprio:
        state.lowprio_count -= 1


@dataclass
class WriteCacheState:
    """Supercapacitor-backed controller cache absorbing writes."""

    capacity: int  # bytes
    flush_rate: float  # bytes per second to platter
    fill: int = 0
    pressure_threshold: float = 0.75
    _remainder: float = 0.0

    def room_for(self, size: int) -> bool:
        return self.fill + size <= self.capacity

    def absorb(self, size: int) -> None:
        self.fill += size


def write_cache_tick(cache: WriteCacheState, elapsed_us: int) -> bool:
    """Drain the cache for ``elapsed_us`` and report pressure."""
    drained = cache.flush_rate * elapsed_us / 1e6 + cache._remainder
    whole = int(drained)
    cache._remainder = drained - whole
    cache.fill = max(0, cache.fill - whole)
    return cache.fill > cache.pressure_threshold * cache.capacity


@dataclass
class ServiceParams:
    """Distribution parameters for one device family.

    HDD small random reads are lognormal around ``hdd_small_mean_us``;
    sequential or large transfers pay a positioning cost plus a linear
    per-byte transfer time.  Flash small reads are uniform within
    ``flash_small_range_us``; larger transfers scale linearly with size.
    """

    hdd_small_mean_us: float = 6000.0
    hdd_small_sigma: float = 0.32
    hdd_position_us: float = 2000.0
    hdd_transfer_us_per_mb: float = 5000.0
    hdd_write_position_us: float = 2000.0
    hdd_write_us_per_mb: float = 6700.0
    hdd_cached_write_range_us: tuple[float, float] = (200.0, 800.0)
    flash_small_range_us: tuple[float, float] = (80.0, 200.0)
    flash_bytes_per_sec: float = 2e9
    flash_write_range_us: tuple[float, float] = (40.0, 120.0)

    @property
    def hdd_small_mu(self) -> float:
        # lognormal location such that the mean comes out as configured
        return math.log(self.hdd_small_mean_us) - self.hdd_small_sigma**2 / 2


@dataclass
class DeviceModel:
    kind: DeviceKind
    service: ServiceParams = field(default_factory=ServiceParams)
    rated_capacity: float = 1.0  # normalized cost units per second
    servers: int = 1  # concurrent in-service requests
    raw_queue_limit: int = 128  # admission bound with governance bypassed
    write_cache: Optional[WriteCacheState] = None


def sample_service_time(
    model: DeviceModel,
    size: int,
    direction: str,
    sequential: bool,
    rng: random.Random,
) -> int:
    """Positive service duration in microseconds; deterministic per rng state."""
    p = model.service
    if model.kind is DeviceKind.FLASH:
        if direction == "write":
            val = rng.uniform(*p.flash_write_range_us)
        elif size <= SMALL_SIZE_LIMIT:
            val = rng.uniform(*p.flash_small_range_us)
        else:
            val = size * 1e6 / p.flash_bytes_per_sec
    else:
        mb = size / (1024 * 1024)
        if direction == "write":
            val = p.hdd_write_position_us + p.hdd_write_us_per_mb * mb
        elif sequential or size > SMALL_SIZE_LIMIT:
            val = p.hdd_position_us + p.hdd_transfer_us_per_mb * mb
        else:
            val = rng.lognormvariate(p.hdd_small_mu, p.hdd_small_sigma)
    return max(1, round(val))


def sample_cached_write_time(model: DeviceModel, rng: random.Random) -> int:
    return max(1, round(rng.uniform(*model.service.hdd_cached_write_range_us)))


def mean_service_time(
    model: DeviceModel, size: int, direction: str, sequential: bool
) -> float:
    """Closed-form mean of the configured distribution, in microseconds."""
    p = model.service
    if model.kind is DeviceKind.FLASH:
        if direction == "write":
            return sum(p.flash_write_range_us) / 2
        if size <= SMALL_SIZE_LIMIT:
            return sum(p.flash_small_range_us) / 2
        return size * 1e6 / p.flash_bytes_per_sec
    mb = size / (1024 * 1024)
    if direction == "write":
        return p.hdd_write_position_us + p.hdd_write_us_per_mb * mb
    if sequential or size > SMALL_SIZE_LIMIT:
        return p.hdd_position_us + p.hdd_transfer_us_per_mb * mb
    return p.hdd_small_mean_us


class Device:
    """Runtime device: admission state plus the in-device service stage.

    Admitted requests enter a FIFO service stage with ``servers``
    concurrent slots (1 for a spindle).  The simulation engine owns the
    clock; this class only answers "does service start now or later".
    State is self-contained so a device can move to a worker thread if
    the event loop is ever parallelized.
    """

    def __init__(self, device_id: str, model: DeviceModel, targets: DeviceQueueTargets):
        self.id = device_id
        self.model = model
        self.targets = targets
        self.inflight = InFlightState()
        self.in_service = 0
        self.service_queue: list = []  # (request, service_us) awaiting a slot
        self._queue_head = 0
        self.cache_available = True

    def total_in_device(self) -> int:
        return self.in_service + (len(self.service_queue) - self._queue_head)

    def start_or_queue(self, request, service_us: int) -> bool:
        """True if service starts immediately, else queued behind the stage."""
        if self.in_service < self.model.servers:
            self.in_service += 1
            return True
        self.service_queue.append((request, service_us))
        return False

    def finish_service(self):
        """Release a service slot; returns the next (request, service_us) to start."""
        self.in_service -= 1
        if self._queue_head < len(self.service_queue):
            item = self.service_queue[self._queue_head]
            self._queue_head += 1
            # periodically compact the consumed prefix
            if self._queue_head > 256 and self._queue_head * 2 > len(self.service_queue):
                del self.service_queue[: self._queue_head]
                self._queue_head = 0
            self.in_service += 1
            return item
        return None

    def set_cache_available(self, available: bool) -> None:
        self.cache_available = available
        if self.model.kind is DeviceKind.HDD:
            self.targets = set_degraded_mode(self.targets, available)
