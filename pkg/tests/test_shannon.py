"""Joint entropy program: values, certificates, caps, and cross-checks."""

from __future__ import annotations

from fractions import Fraction as F
from pathlib import Path

import pytest

from cqap.decompose import enumerate_pmtds, pmtds_from_json
from cqap.exactlp import solve_lp, solve_lp_guided
from cqap.polymatroids import check_polymatroid
from cqap.queries import load_query
from cqap.rules import TwoPhaseRule, generate_rules, prune_rules
from cqap.shannon import JointSystem, solve_joint_lp

ROOT = Path(__file__).resolve().parent.parent / "corpus"


def q(name):
    return load_query(ROOT / "queries" / f"{name}.cqap")


def mask(query, *names):
    m = 0
    for n in names:
        m |= 1 << query.var_index(n)
    return m


def rules_of(query):
    return prune_rules(generate_rules(enumerate_pmtds(query)))


def rule_with_t(rules, query, *t_groups):
    want = {mask(query, *g) for g in t_groups}
    return next(r for r in rules if set(r.t_targets) == want)


def dense(coeffs, ncols):
    row = [F(0)] * ncols
    for c, w in coeffs:
        row[c] += w
    return row


# ═══════════════════════════════════════════════════════════════════════════
# two_reach: the worked certificate
# ═══════════════════════════════════════════════════════════════════════════


def test_two_reach_value_line_and_cap():
    query = q("two_reach")
    system = JointSystem(query)
    (rule,) = rules_of(query)
    sol = solve_joint_lp(rule, system, F(1))
    assert sol.status == "optimal"
    assert sol.value == F(1, 2)
    assert sol.line == (F(1), F(1), F(1, 2))
    assert sol.s_cap == 2


def test_two_reach_certificate_is_the_worked_dual():
    query = q("two_reach")
    x1, x3, x2 = (mask(query, v) for v in ("x1", "x3", "x2"))
    system = JointSystem(query)
    (rule,) = rules_of(query)
    d = solve_joint_lp(rule, system, F(1)).duals
    assert d.lam == {x1 | x2 | x3: F(1)}
    assert d.theta == {x1 | x3: F(1, 2)}
    assert d.ac == F(1)
    # each relation is charged half: a stored prefix plus a traversal
    assert d.gp == {(x1, x1 | x2, x1 | x2): F(1, 2), (x3, x2 | x3, x2 | x3): F(1, 2)}
    assert d.gm == {} and d.dc_s == {} and d.dc_t == {}
    # the stored halves merge on the request pair, the traversals on the full set
    i1, i3, i2 = (query.var_index(v) for v in ("x1", "x3", "x2"))
    assert d.sub_s == {(i1, i3, 0): F(1, 2)}
    assert d.sub_t == {(i1, i2, x3): F(1, 2), (i3, i2, x1): F(1, 2)}
    assert d.mono_s == {} and d.mono_t == {}


def test_two_reach_budget_cap_region():
    query = q("two_reach")
    system = JointSystem(query)
    (rule,) = rules_of(query)
    for s in (F(2), F(5, 2), F(7)):
        assert solve_joint_lp(rule, system, s).status == "materialize-all"
    near = solve_joint_lp(rule, system, F(199, 100))
    assert near.status == "optimal" and near.value == F(1, 200)


# ═══════════════════════════════════════════════════════════════════════════
# three_reach: piecewise values
# ═══════════════════════════════════════════════════════════════════════════


def three_reach_rho(idx):
    query = q("three_reach")
    rules = rules_of(query)
    groups = {
        1: (("x1", "x2", "x4"), ("x1", "x3", "x4")),
        2: (("x1", "x2", "x4"), ("x1", "x2", "x3")),
        4: (("x1", "x2", "x3"), ("x2", "x3", "x4")),
    }[idx]
    return query, rule_with_t(rules, query, *groups)


def test_three_reach_rho4_piece_sweep():
    query, rule = three_reach_rho(4)
    system = JointSystem(query)
    expected = {
        F(0): F(1),
        F(1, 2): F(1),
        F(1): F(1),
        F(9, 8): F(7, 8),
        F(4, 3): F(2, 3),
        F(35, 24): F(1, 6),
    }
    lines = {}
    for s, want in expected.items():
        sol = solve_joint_lp(rule, system, s)
        assert sol.status == "optimal"
        assert sol.value == want, f"logS={s}"
        assert sol.s_cap == F(3, 2)
        assert sum(sol.duals.lam.values()) == 1
        lines[s] = sol.line
    # every reported line stays a valid bound at every other probe
    for s_from, (a, _b, c) in lines.items():
        for s_at, want in expected.items():
            assert want <= a - c * s_at, (s_from, s_at)
    # the budget that covers the whole S side is reported as such
    assert solve_joint_lp(rule, system, F(3, 2)).status == "materialize-all"


def test_three_reach_rho1_single_piece():
    query, rule = three_reach_rho(1)
    system = JointSystem(query)
    for s in (F(0), F(1, 2), F(1), F(3, 2)):
        sol = solve_joint_lp(rule, system, s)
        assert sol.value == 1 - s / 2
    # a small positive request budget pins the request coefficient too
    probe = solve_joint_lp(rule, system, F(1), log_q=F(1, 64))
    assert probe.value == 1 + F(1, 64) - F(1, 2)
    assert probe.line == (F(1), F(1), F(1, 2))
    assert probe.s_cap == 2


def test_obj_non_increasing_in_budget():
    query, rule = three_reach_rho(2)
    system = JointSystem(query)
    last = None
    for k in range(0, 8):
        sol = solve_joint_lp(rule, system, F(k, 4))
        if sol.status != "optimal":
            break
        if last is not None:
            assert sol.value <= last
        last = sol.value


def test_primal_is_certified_polymatroid_pair():
    query, rule = three_reach_rho(4)
    system = JointSystem(query)
    sol = solve_joint_lp(rule, system, F(9, 8))
    assert check_polymatroid(sol.h_s) and check_polymatroid(sol.h_t)
    # the maximin witness really attains the value on some target
    assert min(sol.h_t(b) for b in rule.t_targets) == sol.value
    assert all(sol.h_s(b) >= F(9, 8) for b in rule.s_targets)


# ═══════════════════════════════════════════════════════════════════════════
# weighted-bound sandwich and formulation cross-checks
# ═══════════════════════════════════════════════════════════════════════════


def weighted_bound(system, lam, theta, log_s):
    """max Σλ·h_T(B) + Σθ·h_S(B') under the data rows, minus ‖θ‖₁·logS."""
    rows = [
        (dense(r.coeffs, system.ncols), r.sense, r.bound.at(F(1), F(0)))
        for r in system.base_rows()
    ]
    c = [F(0)] * system.ncols
    for b, w in lam.items():
        c[system.col("T", b)] += w
    for b, w in theta.items():
        c[system.col("S", b)] += w
    res = solve_lp_guided(c, rows)
    assert res.status == "optimal"
    return res.value - sum(theta.values()) * log_s


def test_weighted_bound_sandwich():
    query, rule = three_reach_rho(4)
    system = JointSystem(query)
    s = F(9, 8)
    sol = solve_joint_lp(rule, system, s)
    # at the solved multipliers the bound is tight ...
    assert weighted_bound(system, sol.duals.lam, sol.duals.theta, s) == sol.value
    # ... and any other feasible choice can only be weaker
    x13 = mask(query, "x1", "x3")
    x14 = mask(query, "x1", "x4")
    x24 = mask(query, "x2", "x4")
    hand = (
        {next(iter(rule.t_targets)): F(1)},
        {x13: F(1, 2), x24: F(1, 2)},
    )
    perturbed = (
        sol.duals.lam,
        {x14: sol.duals.theta.get(x14, F(0)) + F(1, 3), **{
            b: w for b, w in sol.duals.theta.items() if b != x14
        }},
    )
    for lam, theta in (hand, perturbed):
        assert weighted_bound(system, lam, theta, s) >= sol.value


def test_empty_t_side_reports_unbounded():
    query = q("two_reach")
    system = JointSystem(query)
    rule = TwoPhaseRule(s_targets=frozenset({mask(query, "x1", "x3")}), t_targets=frozenset())
    assert solve_joint_lp(rule, system, F(1)).status == "unbounded"


def full_polymatroid_rows(system, side):
    """Every monotonicity and submodularity row, not just the elemental basis."""
    rows = []
    full = system.full
    for x in range(1, full + 1):
        for y in range(1, full + 1):
            if x != y and x & y == x:
                rows.append(
                    (
                        dense([(system.col(side, y), F(1)), (system.col(side, x), F(-1))], system.ncols),
                        ">=",
                        F(0),
                    )
                )
    for i_set in range(1, full + 1):
        for j_set in range(1, full + 1):
            if i_set & j_set in (i_set, j_set):
                continue  # comparable pairs are vacuous
            coeffs = [(system.col(side, i_set), F(1)), (system.col(side, j_set), F(1))]
            coeffs.append((system.col(side, i_set | j_set), F(-1)))
            if i_set & j_set:
                coeffs.append((system.col(side, i_set & j_set), F(-1)))
            rows.append((dense(coeffs, system.ncols), ">=", F(0)))
    return rows


@pytest.mark.parametrize("name,s", [("two_reach", F(1)), ("three_reach", F(1))])
def test_elemental_basis_equals_full_form(name, s):
    query = q(name)
    system = JointSystem(query)
    rule = sorted(rules_of(query), key=lambda r: r.key())[0]
    base = solve_joint_lp(rule, system, s)
    rows = [
        (dense(r.coeffs, system.ncols), r.sense, r.bound.at(F(1), F(0)) + r.s_mult * s)
        for r in system.rule_rows(rule)
    ]
    rows += full_polymatroid_rows(system, "S") + full_polymatroid_rows(system, "T")
    c = [F(0)] * system.ncols
    c[system.col_obj] = F(1)
    res = solve_lp_guided(c, rows)
    assert res.status == "optimal" and res.value == base.value


def test_guided_solve_matches_pure_exact():
    query, rule = three_reach_rho(4)
    system = JointSystem(query)
    s = F(9, 8)
    rows = [
        (dense(r.coeffs, system.ncols), r.sense, r.bound.at(F(1), F(0)) + r.s_mult * s)
        for r in system.rule_rows(rule)
    ]
    c = [F(0)] * system.ncols
    c[system.col_obj] = F(1)
    assert solve_lp(c, rows).value == solve_lp_guided(c, rows).value == F(7, 8)


def test_solve_is_deterministic():
    query, rule = three_reach_rho(2)
    system = JointSystem(query)
    a = solve_joint_lp(rule, system, F(5, 4))
    b = solve_joint_lp(rule, JointSystem(query), F(5, 4))
    assert a.value == b.value and a.line == b.line
    assert a.duals == b.duals


def test_log_size_bound_values():
    query = q("two_reach")
    system = JointSystem(query)
    pair = frozenset({mask(query, "x1", "x3")})
    assert system.log_size_bound(pair) == 2
    # cached: the same key must not re-solve to a different answer
    assert system.log_size_bound(pair) == 2

    query3, rule4 = three_reach_rho(4)
    system3 = JointSystem(query3)
    assert system3.log_size_bound(rule4.s_targets) == F(3, 2)


# ═══════════════════════════════════════════════════════════════════════════
# four_reach probes (n=5)
# ═══════════════════════════════════════════════════════════════════════════


def four_reach_rules():
    query = q("four_reach")
    plans = pmtds_from_json((ROOT / "pmtds" / "four_reach.json").read_text(), query)
    return query, prune_rules(generate_rules(plans))


def test_four_reach_deep_rule_pieces():
    query, rules = four_reach_rules()
    system = JointSystem(query)
    rule = rule_with_t(rules, query, ("x3", "x4", "x5"), ("x2", "x3", "x4"))
    at_54 = solve_joint_lp(rule, system, F(5, 4))
    assert at_54.value == F(9, 10)
    assert at_54.line == (F(12, 5), F(1), F(6, 5))
    assert solve_joint_lp(rule, system, F(7, 5)).value == F(3, 5)
    # between the two printed pieces the program is strictly tighter than
    # their crossing: the curve has an intermediate segment there
    assert solve_joint_lp(rule, system, F(29, 22)).value == F(53, 66)


def test_four_reach_three_target_rule_curve():
    query, rules = four_reach_rules()
    system = JointSystem(query)
    rule = rule_with_t(
        rules, query, ("x1", "x2", "x3", "x5"), ("x1", "x3", "x4", "x5"), ("x2", "x3", "x4")
    )
    # flat until the stored views pay for themselves, then one trade line
    low = solve_joint_lp(rule, system, F(1, 2))
    assert low.value == F(1) and low.line == (F(1), F(1), F(0))
    high = solve_joint_lp(rule, system, F(3, 2), log_q=F(1, 64))
    assert high.value == F(33, 64) and high.line == (F(2), F(1), F(1))
    assert solve_joint_lp(rule, system, F(2)).status == "materialize-all"
