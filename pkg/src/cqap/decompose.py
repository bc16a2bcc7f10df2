"""Rooted tree decompositions and their materialization plans.

A plan is a pair (decomposition, M): a rooted tree decomposition whose root
bag contains the access variables, together with a downward-closed node set M
(every node in M has its whole subtree in M).  Nodes inside M become
preprocessed views (S-views), nodes outside stay as online views (T-views);
each node t contributes a view over the variable set nu(t):

    t not in M            -> chi(t)
    t root, in M          -> chi(t) & head
    t in M, parent not    -> chi(t) & (head | chi(parent))
    t in M, parent in M   -> chi(t) & head, unless that is already contained
                             in the parent's, in which case nothing

Plans whose surviving views repeat or contain one another on the same side
are redundant and dropped.  Among the rest only the minimal ones under
per-side target containment (domination) are kept: smaller views always give
at least as good space/time behavior.

The decomposition must be free-connex with respect to the head: no non-head
variable may top out strictly above a head variable (tops are the nodes
nearest the root containing a variable), otherwise answers cannot be emitted
without re-expanding eliminated variables.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from itertools import product

from .queries import Cqap, QueryError
from .relalg import VarSet, members, proper_subset, size, subset, vs, vs_str

log = logging.getLogger(__name__)

DEFAULT_CAP = 200_000


class DecompositionError(ValueError):
    pass


# ═══════════════════════════════════════════════════════════════════════════
# Tree decompositions
# ═══════════════════════════════════════════════════════════════════════════


@dataclass(frozen=True)
class TreeDecomp:
    """A rooted tree of bags; node 0 is the root, parent[0] == -1.

    Nodes are in preorder with siblings ordered by bag value, so equal trees
    compare equal structurally.
    """

    bags: tuple[VarSet, ...]
    parent: tuple[int, ...]

    def __post_init__(self):
        if len(self.bags) != len(self.parent) or not self.bags:
            raise DecompositionError("bags and parent must align and be nonempty")
        if self.parent[0] != -1 or any(
            not 0 <= p < i for i, p in enumerate(self.parent) if i
        ):
            raise DecompositionError("parent must be preorder with root first")

    def __len__(self) -> int:
        return len(self.bags)

    def children(self, t: int) -> list[int]:
        return [i for i, p in enumerate(self.parent) if p == t]

    def subtree(self, t: int) -> list[int]:
        out = [t]
        for i in range(t + 1, len(self.bags)):
            if self.parent[i] in out:
                out.append(i)
        return out

    def is_ancestor(self, a: int, t: int) -> bool:
        """True when a is a proper ancestor of t."""
        while t != -1:
            t = self.parent[t]
            if t == a:
                return True
        return False

    def top(self, v: int) -> int:
        """The node nearest the root whose bag contains variable v."""
        holders = [i for i, b in enumerate(self.bags) if b >> v & 1]
        if not holders:
            raise DecompositionError(f"variable {v} appears in no bag")
        best = holders[0]
        for t in holders[1:]:
            if self.is_ancestor(t, best):
                best = t
        return best

    def validate(self, edges: list[VarSet]) -> list[str]:
        """Edge cover + running intersection, as human-readable problems."""
        problems = []
        for e in edges:
            if not any(subset(e, b) for b in self.bags):
                problems.append(f"edge {vs_str(e)} not covered by any bag")
        all_vars = 0
        for b in self.bags:
            all_vars |= b
        for v in members(all_vars):
            holders = {i for i, b in enumerate(self.bags) if b >> v & 1}
            # the holders must form a connected subtree
            reach = {min(holders)}
            grew = True
            while grew:
                grew = False
                for t in holders - reach:
                    if self.parent[t] in reach or any(
                        self.parent[r] == t for r in reach
                    ):
                        reach.add(t)
                        grew = True
            if reach != holders:
                problems.append(f"variable {v} induces a disconnected bag set")
        return problems


def canonical_tree(bags: list[VarSet], parent: list[int]) -> TreeDecomp:
    """Relabel to preorder with sibling order by bag value."""
    kids: dict[int, list[int]] = {}
    for i, p in enumerate(parent):
        kids.setdefault(p, []).append(i)

    order: list[int] = []

    def walk(t: int) -> None:
        order.append(t)
        for c in sorted(kids.get(t, []), key=lambda c: (bags[c], c)):
            walk(c)

    walk(kids[-1][0] if -1 in kids else 0)
    new_of = {old: new for new, old in enumerate(order)}
    return TreeDecomp(
        tuple(bags[o] for o in order),
        tuple(-1 if parent[o] == -1 else new_of[parent[o]] for o in order),
    )


def is_free_connex(td: TreeDecomp, head: VarSet) -> bool:
    """No non-head variable tops out strictly above some head variable."""
    all_vars = 0
    for b in td.bags:
        all_vars |= b
    head_tops = [td.top(v) for v in members(head & all_vars)]
    for y in members(all_vars & ~head):
        ty = td.top(y)
        if any(td.is_ancestor(ty, tx) for tx in head_tops):
            return False
    return True


# ═══════════════════════════════════════════════════════════════════════════
# Plans (decomposition + M), their views, redundancy, domination
# ═══════════════════════════════════════════════════════════════════════════


@dataclass(frozen=True)
class Pmtd:
    """A plan: decomposition, membership flags for M, and per-node views.

    `nu[t] == 0` marks a node that contributes no view (it stays in the tree
    for traversal but is neither materialized nor scanned).
    """

    td: TreeDecomp
    in_m: tuple[bool, ...]
    nu: tuple[VarSet, ...]

    @property
    def s_targets(self) -> frozenset[VarSet]:
        return frozenset(
            v for v, m in zip(self.nu, self.in_m) if m and v
        )

    @property
    def t_targets(self) -> frozenset[VarSet]:
        return frozenset(
            v for v, m in zip(self.nu, self.in_m) if not m and v
        )

    def key(self) -> tuple[tuple[VarSet, ...], tuple[VarSet, ...]]:
        return (tuple(sorted(self.t_targets)), tuple(sorted(self.s_targets)))

    def pretty(self, names: list[str] | None = None) -> str:
        ts = [f"T{vs_str(v, names)}" for v in sorted(self.t_targets)]
        ss = [f"S{vs_str(v, names)}" for v in sorted(self.s_targets)]
        return "(" + ", ".join(ts + ss) + ")"


def compute_nu(td: TreeDecomp, in_m: tuple[bool, ...], head: VarSet) -> tuple[VarSet, ...]:
    nu = []
    for t, bag in enumerate(td.bags):
        if not in_m[t]:
            nu.append(bag)
        elif t == 0:
            nu.append(bag & head)
        else:
            p = td.parent[t]
            if not in_m[p]:
                nu.append(bag & (head | td.bags[p]))
            elif not subset(bag & head, td.bags[p] & head):
                nu.append(bag & head)
            else:
                nu.append(0)
    return tuple(nu)


def make_pmtd(td: TreeDecomp, in_m: tuple[bool, ...], q: Cqap) -> Pmtd | None:
    """Build a plan, or None when it is invalid or redundant.

    Redundant: a surviving view's variable set is contained in another view
    on the same side (including duplicates).
    """
    if not subset(q.access, td.bags[0]):
        return None
    for t, m in enumerate(in_m):
        if m and any(not in_m[c] for c in td.children(t)):
            return None  # M must be downward-closed
    if not is_free_connex(td, q.head):
        return None
    nu = compute_nu(td, in_m, q.head)
    for side in (True, False):
        views = [v for v, m in zip(nu, in_m) if m == side and v]
        for i, a in enumerate(views):
            for j, b in enumerate(views):
                if i != j and subset(a, b) and (a != b or i < j):
                    return None
    return Pmtd(td, in_m, nu)


def dominates(p: Pmtd, r: Pmtd) -> bool:
    """Every view of r fits inside a same-side view of p (r is at most p)."""
    return all(
        any(subset(v, w) for w in p.s_targets) for v in r.s_targets
    ) and all(any(subset(v, w) for w in p.t_targets) for v in r.t_targets)


def minimal_pmtds(plans: list[Pmtd]) -> list[Pmtd]:
    """Dedup by view sets, then keep plans not strictly above another."""
    by_key: dict = {}
    for p in plans:
        by_key.setdefault(p.key(), p)
    kept = []
    for k, p in by_key.items():
        if not any(
            k2 != k and dominates(p, p2) and not dominates(p2, p)
            for k2, p2 in by_key.items()
        ):
            kept.append(p)
    return sorted(kept, key=Pmtd.key)


# ═══════════════════════════════════════════════════════════════════════════
# Enumeration
# ═══════════════════════════════════════════════════════════════════════════


def _components(edges: list[VarSet], bag: VarSet) -> list[tuple[list[VarSet], VarSet]]:
    """Group uncovered edges connected through variables outside `bag`."""
    comps: list[tuple[list[VarSet], VarSet]] = []  # (edges, outside-vars seen)
    for e in edges:
        out = e & ~bag
        hits = [i for i, (_, ov) in enumerate(comps) if ov & out]
        merged = ([e], out)
        for i in reversed(hits):
            es, ov = comps.pop(i)
            merged = (es + merged[0], ov | merged[1])
        comps.append(merged)
    result = []
    for es, _ in comps:
        cv = 0
        for e in es:
            cv |= e
        result.append((es, cv))
    return result


def _grow(bag: VarSet, uncovered: list[VarSet], max_bag: int, budget: list[int]):
    """Yield child forests: lists of (bag, parent-offset) in preorder."""
    if not uncovered:
        yield []
        return
    per_comp = []
    for comp_edges, comp_vars in _components(uncovered, bag):
        interface = comp_vars & bag
        inner = members(comp_vars & ~bag)
        options = []
        for bits in range(1, 1 << len(inner)):
            child = interface
            for p in range(len(inner)):
                if bits >> p & 1:
                    child |= 1 << inner[p]
            if size(child) > max_bag:
                continue
            newly = [e for e in comp_edges if subset(e, child)]
            if not newly:
                continue
            rest = [e for e in comp_edges if not subset(e, child)]
            for forest in _grow(child, rest, max_bag, budget):
                budget[0] -= 1
                if budget[0] < 0:
                    raise DecompositionError(
                        "decomposition enumeration exceeded its resource cap"
                    )
                options.append([(child, -1)] + [(b, o + 1) for b, o in forest])
        if not options:
            return  # component cannot be completed under max_bag
        per_comp.append(options)
    for combo in product(*per_comp):
        forest = []
        for sub in combo:
            base = len(forest)
            forest.extend(
                (b, -1 if o == -1 else o + base) for b, o in sub
            )
        yield forest


def enumerate_tds(q: Cqap, max_bag: int | None = None, cap: int = DEFAULT_CAP) -> list[TreeDecomp]:
    """All rooted decompositions with the access variables in the root.

    Root bags are the access set plus any other variables; children are grown
    per connected component of uncovered edges, always containing the
    component's interface and at least one newly covered edge.
    """
    edges = sorted(set(q.edge_sets()))
    all_vars = q.vars_all
    if max_bag is None:
        max_bag = size(all_vars)
    budget = [cap]
    out = []
    extra = members(all_vars & ~q.access)
    for bits in range(1 << len(extra)):
        root = q.access
        for p in range(len(extra)):
            if bits >> p & 1:
                root |= 1 << extra[p]
        if root == 0 or size(root) > max_bag:
            continue
        rest = [e for e in edges if not subset(e, root)]
        for forest in _grow(root, rest, max_bag, budget):
            bags = [root] + [b for b, _ in forest]
            parent = [-1] + [0 if o == -1 else o + 1 for _, o in forest]
            out.append(canonical_tree(bags, parent))
    return out


def _downward_closed_sets(td: TreeDecomp):
    n = len(td)
    for bits in range(1 << n):
        in_m = tuple(bits >> t & 1 == 1 for t in range(n))
        if all(
            all(in_m[c] for c in td.children(t)) for t in range(n) if in_m[t]
        ):
            yield in_m


def enumerate_pmtds(q: Cqap, max_bag: int | None = None, cap: int = DEFAULT_CAP) -> list[Pmtd]:
    """All minimal plans for the query, canonically ordered."""
    plans = []
    for td in enumerate_tds(q, max_bag, cap):
        for in_m in _downward_closed_sets(td):
            p = make_pmtd(td, in_m, q)
            if p is not None:
                plans.append(p)
    kept = minimal_pmtds(plans)
    log.debug("%s: %d plans (%d before domination)", q.name, len(kept), len(plans))
    return kept


def induced_pmtd(td: TreeDecomp, merge_tops: set[int], q: Cqap) -> Pmtd | None:
    """Merge each chosen node's subtree into its bag and put it in M.

    `merge_tops` must be an antichain; the merged nodes become leaves.
    """
    for a in merge_tops:
        for b in merge_tops:
            if a != b and td.is_ancestor(a, b):
                raise DecompositionError("merge tops must form an antichain")
    drop = set()
    bags = list(td.bags)
    for t in sorted(merge_tops):
        for s in td.subtree(t):
            if s != t:
                bags[t] |= bags[s]
                drop.add(s)
    keep = [t for t in range(len(td)) if t not in drop]
    new_of = {t: i for i, t in enumerate(keep)}
    new_bags = [bags[t] for t in keep]
    new_parent = [-1 if td.parent[t] == -1 else new_of[td.parent[t]] for t in keep]
    merged = canonical_tree(new_bags, new_parent)
    # recover which canonical nodes are the merged ones by bag identity
    flags = [False] * len(merged)
    want = sorted(bags[t] for t in merge_tops)
    for i, b in enumerate(merged.bags):
        if b in want and not flags[i]:
            want.remove(b)
            flags[i] = True
    return make_pmtd(merged, tuple(flags), q)


# ═══════════════════════════════════════════════════════════════════════════
# JSON
# ═══════════════════════════════════════════════════════════════════════════


def pmtds_to_json(plans: list[Pmtd], q: Cqap) -> str:
    names = q.var_names

    def varlist(s: VarSet) -> list[str]:
        return [names[i] for i in members(s)]

    doc = {
        "query": q.name,
        "pmtds": [
            {
                "bags": [varlist(b) for b in p.td.bags],
                "parent": list(p.td.parent),
                "in_m": list(p.in_m),
                "views": [
                    {"side": "S" if m else "T", "vars": varlist(v)}
                    for v, m in zip(p.nu, p.in_m)
                    if v
                ],
            }
            for p in plans
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def pmtds_from_json(text: str, q: Cqap) -> list[Pmtd]:
    doc = json.loads(text)
    if doc.get("query") not in (None, q.name):
        raise QueryError(
            f"plan file is for query {doc.get('query')!r}, not {q.name!r}"
        )
    plans = []
    for entry in doc["pmtds"]:
        bags = [vs(*(q.var_index(v) for v in bag)) for bag in entry["bags"]]
        td = TreeDecomp(tuple(bags), tuple(entry["parent"]))
        problems = td.validate(q.edge_sets())
        if problems:
            raise QueryError(f"bad decomposition in plan file: {problems[0]}")
        p = make_pmtd(td, tuple(bool(b) for b in entry["in_m"]), q)
        if p is None:
            raise QueryError(f"invalid or redundant plan in file: {entry}")
        plans.append(p)
    return plans
