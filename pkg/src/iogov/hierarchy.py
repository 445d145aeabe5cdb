"""Resource hierarchy: the tenant tree, shares, limits, and their composition.

A plan is an immutable snapshot of a rooted tree (root -> cdb -> pdb ->
workload by default, deeper trees allowed).  Every leaf carries a share
weight; any node may carry a utilization limit expressed as a fraction of
its parent's capacity.  Effective allocations compose multiplicatively
down the tree.  Share math uses exact rationals so that composition is
order independent and leaf fractions sum to exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

DEFAULT_LEVELS = ("cdb", "pdb", "workload")
ROOT_ID = "root"
ROOT_LEVEL = "root"


class MalformedHierarchy(Exception):
    """Tree structure is invalid: cycles, level inversions, orphans."""


class InvalidDirective(Exception):
    """A share or limit value is outside its domain."""


class MissingDefault(Exception):
    """No leaf is designated as the untagged-I/O fallback."""


class UnknownNode(KeyError):
    """Node id not present in the plan."""


class StalePlan(Exception):
    """Replacement plan does not advance the version counter."""


@dataclass
class HierarchyNode:
    id: str
    level: str
    parent: Optional[str]
    shares: int = 1
    limit: Optional[Fraction] = None
    is_default: bool = False
    children: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class EffectiveAllocation:
    node_id: str
    share_fraction: float
    effective_limit: float
    # exact values kept alongside the float views for callers that
    # compose further (enforcement, monitoring output)
    share_fraction_exact: Fraction = Fraction(1)
    effective_limit_exact: Fraction = Fraction(1)


class ResourcePlan:
    """Immutable tree snapshot.  Build through :func:`build_plan` only."""

    def __init__(self, nodes, levels, objective, version, default_leaf_id):
        self.nodes: dict[str, HierarchyNode] = nodes
        self.levels: tuple[str, ...] = levels
        self.objective: str = objective
        self.version: int = version
        self.default_leaf_id: str = default_leaf_id
        self.root_id = ROOT_ID
        self._alloc_cache: dict[str, EffectiveAllocation] = {}

    def node(self, node_id: str) -> HierarchyNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def children(self, node_id: str) -> list[str]:
        return self.node(node_id).children

    def leaves(self) -> list[str]:
        return [n.id for n in self.nodes.values() if not n.children and n.id != ROOT_ID]

    def path(self, node_id: str) -> list[str]:
        """Ids from root (exclusive) down to node (inclusive)."""
        out = []
        cur: Optional[str] = node_id
        while cur is not None and cur != ROOT_ID:
            out.append(cur)
            cur = self.node(cur).parent
        out.reverse()
        return out

    def is_leaf(self, node_id: str) -> bool:
        return not self.node(node_id).children

    def limited_nodes(self) -> list[str]:
        """Nodes carrying an explicitly declared limit, in tree order."""
        return [n.id for n in self.nodes.values() if n.limit is not None]


OBJECTIVES = ("auto", "low-latency", "high-throughput", "balanced")

_IMPLICIT_SUFFIX = ".default"


def build_plan(spec: dict) -> ResourcePlan:
    """Validate a declarative plan description and freeze it.

    ``spec`` keys: ``version`` (int), ``objective`` (one of OBJECTIVES,
    default ``auto``), optional ``levels`` (ordered list, topmost first),
    and ``nodes``: a list of dicts with ``id``, ``level``, ``parent``
    (omitted for top-level nodes), optional ``shares``, ``limit`` and
    ``default``.  A second-from-leaf node with no children receives an
    implicit default-workload child so dispatch always happens at leaves.
    """
    levels = tuple(spec.get("levels", DEFAULT_LEVELS))
    if len(levels) < 1 or len(set(levels)) != len(levels) or ROOT_LEVEL in levels:
        raise InvalidDirective(f"bad level list {levels!r}")
    objective = spec.get("objective", "auto")
    if objective not in OBJECTIVES:
        raise InvalidDirective(f"unknown objective {objective!r}")
    version = int(spec.get("version", 1))

    rank = {name: i for i, name in enumerate(levels)}
    nodes: dict[str, HierarchyNode] = {
        ROOT_ID: HierarchyNode(id=ROOT_ID, level=ROOT_LEVEL, parent=None)
    }
    for raw in spec.get("nodes", []):
        nid = str(raw["id"])
        if nid in nodes:
            raise MalformedHierarchy(f"duplicate node id {nid!r}")
        level = raw.get("level")
        if level not in rank:
            raise MalformedHierarchy(f"node {nid!r}: unknown level {level!r}")
        shares = int(raw.get("shares", 1))
        if shares < 1:
            raise InvalidDirective(f"node {nid!r}: shares must be >= 1, got {shares}")
        limit = raw.get("limit")
        if limit is not None:
            limit = _as_fraction(limit)
            if not (0 < limit <= 1):
                raise InvalidDirective(f"node {nid!r}: limit must be in (0, 1]")
        parent = raw.get("parent")
        nodes[nid] = HierarchyNode(
            id=nid,
            level=level,
            parent=parent if parent is not None else ROOT_ID,
            shares=shares,
            limit=limit,
            is_default=bool(raw.get("default", False)),
        )

    # structural validation: parents exist, levels strictly descend
    for n in list(nodes.values()):
        if n.id == ROOT_ID:
            continue
        if n.parent not in nodes:
            raise MalformedHierarchy(f"node {n.id!r}: unknown parent {n.parent!r}")
        p = nodes[n.parent]
        want = 0 if p.id == ROOT_ID else rank[p.level] + 1
        if rank[n.level] != want:
            raise MalformedHierarchy(
                f"node {n.id!r} at level {n.level!r} under {p.id!r} ({p.level!r})"
            )
        p.children.append(n.id)

    _reject_cycles(nodes)

    # leaves must sit at the final level; a childless node one level up
    # gets an implicit default workload child
    leaf_level = levels[-1]
    for n in list(nodes.values()):
        if n.id == ROOT_ID or n.children or n.level == leaf_level:
            continue
        if rank[n.level] == len(levels) - 2:
            child_id = n.id + _IMPLICIT_SUFFIX
            child = HierarchyNode(
                id=child_id,
                level=leaf_level,
                parent=n.id,
                shares=1,
                is_default=n.is_default,
            )
            n.is_default = False
            nodes[child_id] = child
            n.children.append(child_id)
        else:
            raise MalformedHierarchy(
                f"node {n.id!r} at level {n.level!r} has no children"
            )

    defaults = [n.id for n in nodes.values() if n.is_default and not n.children]
    if any(n.is_default and n.children for n in nodes.values()):
        raise InvalidDirective("default flag must sit on a leaf")
    if len(defaults) > 1:
        raise InvalidDirective(f"multiple default leaves: {defaults}")
    if not defaults:
        raise MissingDefault("plan declares no untagged-default leaf")

    if not nodes[ROOT_ID].children:
        raise MalformedHierarchy("plan has no nodes")

    return ResourcePlan(nodes, levels, objective, version, defaults[0])


def _as_fraction(value) -> Fraction:
    # str() round-trip keeps decimal configs exact (0.1 -> 1/10)
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    return Fraction(str(value))


def _reject_cycles(nodes: dict[str, HierarchyNode]) -> None:
    for nid in nodes:
        seen = set()
        cur: Optional[str] = nid
        while cur is not None:
            if cur in seen:
                raise MalformedHierarchy(f"cycle through {cur!r}")
            seen.add(cur)
            cur = nodes[cur].parent if cur in nodes else None


def sibling_share_fractions(plan: ResourcePlan, parent: str) -> dict[str, Fraction]:
    """Exact per-child share of ``parent``'s allocation."""
    kids = plan.children(parent)
    if not kids:
        raise UnknownNode(f"{parent!r} has no children")
    total = sum(plan.node(k).shares for k in kids)
    return {k: Fraction(plan.node(k).shares, total) for k in kids}


def effective_allocation(plan: ResourcePlan, node_id: str) -> EffectiveAllocation:
    """Path-product entitlement and limit cascade for ``node_id``.

    share_fraction multiplies each ancestor's share of its sibling pool;
    effective_limit multiplies every declared limit on the path (absent
    limits count as 1).  Since limits never exceed 1 the product equals
    the minimum cumulative budget along the path, which is what
    enforcement observes.
    """
    cached = plan._alloc_cache.get(node_id)
    if cached is not None:
        return cached
    share = Fraction(1)
    limit = Fraction(1)
    for nid in plan.path(node_id):
        n = plan.node(nid)
        share *= sibling_share_fractions(plan, n.parent)[nid]
        if n.limit is not None:
            limit *= n.limit
    alloc = EffectiveAllocation(
        node_id=node_id,
        share_fraction=float(share),
        effective_limit=float(limit),
        share_fraction_exact=share,
        effective_limit_exact=limit,
    )
    plan._alloc_cache[node_id] = alloc
    return alloc


class PlanHandle:
    """Single-writer handoff point between a plan publisher and dispatch.

    ``swap`` stages a replacement; the scheduler adopts it at the next
    quantum boundary via ``adopt_staged`` so no dispatch sees a mixture
    of two versions.
    """

    def __init__(self, plan: ResourcePlan):
        self._plan = plan
        self._staged: Optional[ResourcePlan] = None

    @property
    def plan(self) -> ResourcePlan:
        return self._plan

    @property
    def staged(self) -> Optional[ResourcePlan]:
        return self._staged

    def swap(self, next_plan: ResourcePlan) -> None:
        current = self._staged or self._plan
        if next_plan.version <= current.version:
            raise StalePlan(
                f"version {next_plan.version} does not advance {current.version}"
            )
        self._staged = next_plan

    def adopt_staged(self) -> Optional[ResourcePlan]:
        """Publish the staged plan, returning it (or None if nothing staged)."""
        if self._staged is None:
            return None
        self._plan, self._staged = self._staged, None
        self._plan._alloc_cache.clear()
        return self._plan


def swap_plan(current: ResourcePlan, next_plan: ResourcePlan) -> PlanHandle:
    """Validate a live plan replacement and return the staged handle."""
    handle = PlanHandle(current)
    handle.swap(next_plan)
    return handle


def plan_to_spec(plan: ResourcePlan) -> dict:
    """Inverse of :func:`build_plan` for lossless round-tripping."""
    nodes = []
    for n in plan.nodes.values():
        if n.id == ROOT_ID or n.id.endswith(_IMPLICIT_SUFFIX):
            continue
        entry: dict = {"id": n.id, "level": n.level}
        if n.parent != ROOT_ID:
            entry["parent"] = n.parent
        if n.shares != 1:
            entry["shares"] = n.shares
        if n.limit is not None:
            entry["limit"] = (
                float(n.limit) if n.limit.denominator != 1 else int(n.limit)
            )
        implicit_child = plan.nodes.get(n.id + _IMPLICIT_SUFFIX)
        if n.is_default or (implicit_child is not None and implicit_child.is_default):
            entry["default"] = True
        nodes.append(entry)
    spec = {"version": plan.version, "objective": plan.objective, "nodes": nodes}
    if plan.levels != DEFAULT_LEVELS:
        spec["levels"] = list(plan.levels)
    return spec
