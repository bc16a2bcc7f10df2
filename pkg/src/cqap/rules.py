"""Disjunctive size rules combining the views of several plans.

Given plans P_1..P_k, every way of choosing one view per plan gives a rule

    T_B1 v ... v T_Bi v S_C1 v ... v S_Cj

read as a size guarantee: the body tuples can always be distributed so that
every one of them lands in at least one chosen view, and the rule's cost is
the best achievable maximum view size.  S-views are filled while
preprocessing (they may not depend on the request), T-views while answering.

Within a rule a target whose variable set contains another target on the
same side is redundant -- covering the smaller view is never harder -- so it
is removed.  Across rules, a rule whose target sets contain another rule's
(one side strictly) can only be weaker and is pruned.

The choice structure is kept as `picks` (plan index, node index) so later
stages can map every target back to the plan node that produced it.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Sequence

from .decompose import Pmtd
from .queries import Cqap
from .relalg import VarSet, members, proper_subset, vs_from, vs_str

log = logging.getLogger(__name__)


# ═══════════════════════════════════════════════════════════════════════════
# Rules
# ═══════════════════════════════════════════════════════════════════════════


@dataclass(frozen=True)
class TwoPhaseRule:
    """One disjunctive size rule; at most one of the sides may be empty."""

    s_targets: frozenset[VarSet]
    t_targets: frozenset[VarSet]
    picks: tuple[tuple[int, int], ...] = field(default=(), compare=False)

    def key(self) -> tuple[tuple[VarSet, ...], tuple[VarSet, ...]]:
        return (tuple(sorted(self.t_targets)), tuple(sorted(self.s_targets)))

    def targets(self) -> frozenset[tuple[str, VarSet]]:
        return frozenset(
            [("T", v) for v in self.t_targets] + [("S", v) for v in self.s_targets]
        )

    def pretty(self, names: list[str] | None = None) -> str:
        parts = [f"T{vs_str(v, names)}" for v in sorted(self.t_targets)]
        parts += [f"S{vs_str(v, names)}" for v in sorted(self.s_targets)]
        return " v ".join(parts)


def clean_targets(targets: Iterable[VarSet]) -> frozenset[VarSet]:
    """Drop every target that properly contains another one."""
    ts = set(targets)
    return frozenset(
        a for a in ts if not any(proper_subset(b, a) for b in ts)
    )


def plan_choices(plan: Pmtd) -> list[tuple[int, bool, VarSet]]:
    """The pickable views of a plan as (node, materialized, variable set)."""
    return [
        (t, m, v) for t, (m, v) in enumerate(zip(plan.in_m, plan.nu)) if v
    ]


def generate_rules(plans: Sequence[Pmtd]) -> list[TwoPhaseRule]:
    """All rules from one-view-per-plan choices, deduplicated.

    Ties between choices that clean down to identical target sets keep the
    first in product order, i.e. the one picking earliest nodes.
    """
    per_plan = [plan_choices(p) for p in plans]
    if not per_plan or any(not c for c in per_plan):
        raise ValueError("every plan must offer at least one view")
    by_key: dict = {}
    for combo in product(*per_plan):
        s = clean_targets(v for _, m, v in combo if m)
        t = clean_targets(v for _, m, v in combo if not m)
        rule = TwoPhaseRule(
            s_targets=s,
            t_targets=t,
            picks=tuple((i, node) for i, (node, _, _) in enumerate(combo)),
        )
        by_key.setdefault(rule.key(), rule)
    rules = sorted(by_key.values(), key=TwoPhaseRule.key)
    log.debug("generated %d rules from %d plans", len(rules), len(plans))
    return rules


def prune_rules(rules: Sequence[TwoPhaseRule]) -> list[TwoPhaseRule]:
    """Keep only rules whose target sets are minimal under inclusion."""
    kept = []
    for r in rules:
        beaten = any(
            o is not r
            and o.s_targets <= r.s_targets
            and o.t_targets <= r.t_targets
            and (o.s_targets, o.t_targets) != (r.s_targets, r.t_targets)
            for o in rules
        )
        if not beaten:
            kept.append(r)
    return sorted(kept, key=TwoPhaseRule.key)


# ═══════════════════════════════════════════════════════════════════════════
# Serialization
# ═══════════════════════════════════════════════════════════════════════════


def _names(v: VarSet, q: Cqap) -> list[str]:
    return [q.var_names[i] for i in members(v)]


def rules_to_json(rules: Sequence[TwoPhaseRule], q: Cqap) -> str:
    doc = {
        "query": q.name,
        "rules": [
            {
                "t": [_names(v, q) for v in sorted(r.t_targets)],
                "s": [_names(v, q) for v in sorted(r.s_targets)],
                "picks": [list(p) for p in r.picks],
            }
            for r in rules
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def rules_from_json(text: str, q: Cqap) -> list[TwoPhaseRule]:
    doc = json.loads(text)
    if doc.get("query") not in (None, q.name):
        raise ValueError(f"rules are for query {doc.get('query')!r}, not {q.name!r}")
    out = []
    for r in doc["rules"]:
        out.append(
            TwoPhaseRule(
                s_targets=frozenset(
                    vs_from(q.var_index(n) for n in names) for names in r["s"]
                ),
                t_targets=frozenset(
                    vs_from(q.var_index(n) for n in names) for names in r["t"]
                ),
                picks=tuple((p[0], p[1]) for p in r.get("picks", [])),
            )
        )
    return out
