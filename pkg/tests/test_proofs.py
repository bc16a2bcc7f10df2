"""Replay and construction of stepwise entropy proofs.

The short goldens here mirror the bundles under corpus/proofs/; the
construction tests tie the searcher to the multipliers extracted alongside
each tradeoff term, which is the path the analyzer itself uses.
"""

from __future__ import annotations

from collections import Counter
from fractions import Fraction as F
from pathlib import Path
import random

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from cqap.polymatroids import eval_cond_vec, sample_polymatroid
from cqap.proofs import (
    ConstructionError,
    ProofSequence,
    ProofStep,
    bundle_from_json,
    bundle_to_json,
    composition,
    construct,
    decomposition,
    monotonicity,
    normalize,
    replay_values,
    sequence_from_json,
    sequence_to_json,
    submodularity,
    validate,
)
from cqap.queries import load_query

CORPUS = Path(__file__).resolve().parent.parent / "corpus"
BUNDLES = sorted((CORPUS / "proofs").glob("*.json"))


def q(name):
    return load_query(CORPUS / "queries" / f"{name}.cqap")


def storage_merge():
    """hS(x1) + hS(x3) >= hS(x1 x3), as two steps over masks 1, 2."""
    return ProofSequence(
        initial={(0, 1): F(1), (0, 2): F(1)},
        target={(0, 3): F(1)},
        steps=[submodularity(1, 2, 1), composition(2, 3, 1)],
    )


# ═══════════════════════════════════════════════════════════════════════════
# Steps
# ═══════════════════════════════════════════════════════════════════════════


def test_step_shapes_are_checked():
    with pytest.raises(ValueError, match="incomparable"):
        submodularity(1, 3, 1)
    with pytest.raises(ValueError, match="subset"):
        monotonicity(3, 3, 1)
    with pytest.raises(ValueError, match="subset"):
        composition(4, 3, 1)
    with pytest.raises(ValueError, match="subset"):
        decomposition(3, 0, 1)
    with pytest.raises(ValueError, match="positive"):
        monotonicity(1, 3, 0)
    with pytest.raises(ValueError, match="kind"):
        ProofStep("merge", 1, 2, F(1))


def test_step_effects():
    assert submodularity(0b011, 0b110, F(1, 2)).delta() == {
        (0b010, 0b011): F(-1, 2),
        (0b110, 0b111): F(1, 2),
    }
    assert monotonicity(1, 3, 1).delta() == {(0, 3): -1, (0, 1): 1}
    assert composition(1, 3, 1).delta() == {(0, 1): -1, (1, 3): -1, (0, 3): 1}
    assert decomposition(3, 1, 1).delta() == {(0, 3): -1, (1, 3): 1, (0, 1): 1}


# ═══════════════════════════════════════════════════════════════════════════
# Validation
# ═══════════════════════════════════════════════════════════════════════════


def test_two_step_merge_replays_clean():
    rep = validate(storage_merge())
    assert rep and rep.step is None and rep.reason == ""


def test_overdrawn_composition_is_flagged():
    ps = storage_merge()
    ps.steps[1] = composition(2, 3, 2)
    rep = validate(ps)
    assert not rep and rep.step == 1 and "overdraws" in rep.reason


def test_empty_sequence_must_already_dominate():
    assert validate(ProofSequence(initial={(0, 3): F(2)}, target={(0, 3): F(1)}))
    rep = validate(ProofSequence(initial={(0, 1): F(1)}, target={(0, 3): F(1)}))
    assert not rep and rep.step == 0 and "short" in rep.reason


def test_negative_inputs_are_rejected():
    rep = validate(ProofSequence(initial={(0, 1): F(-1)}, target={}))
    assert not rep and rep.step is None and "negative" in rep.reason


def test_validation_reports_name_variables():
    ps = storage_merge()
    ps.steps[1] = composition(2, 3, 2)
    rep = validate(ps, ["x1", "x3", "x2"])
    assert "x3" in rep.reason


# ═══════════════════════════════════════════════════════════════════════════
# Construction
# ═══════════════════════════════════════════════════════════════════════════


def test_construct_reproduces_the_two_step_merge():
    ps = construct(
        {(0, 1): F(1), (0, 2): F(1)}, {(0, 3): F(1)}, sigma={(1, 2): F(1)}
    )
    assert [(s.kind, s.x, s.y, s.weight) for s in ps.steps] == [
        ("submodularity", 1, 2, F(1)),
        ("composition", 2, 3, F(1)),
    ]


def test_construct_online_merge_uses_four_steps():
    ps = construct(
        {(1, 5): F(1), (2, 6): F(1), (0, 3): F(2)},
        {(0, 7): F(2)},
        sigma={(3, 5): F(1), (3, 6): F(1)},
    )
    assert len(ps.steps) == 4
    assert Counter(s.kind for s in ps.steps) == {
        "submodularity": 2,
        "composition": 2,
    }
    assert validate(ps)


def test_construct_without_work_is_empty():
    ps = construct({(0, 7): F(1)}, {(0, 7): F(1)})
    assert ps.steps == []
    assert validate(ps)


def test_construct_failure_reports_residual():
    with pytest.raises(ConstructionError) as exc:
        construct({(0, 1): F(1)}, {(0, 3): F(1)})
    assert exc.value.residual == {(0, 3): F(1)}


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 15), st.integers(1, 15))
def test_construct_merges_any_incomparable_pair(a, b):
    assume(a & ~b and b & ~a)
    ps = construct({(0, a): F(1), (0, b): F(1)}, {(0, a | b): F(1)})
    assert validate(ps)
    assert any(s.kind == "submodularity" for s in ps.steps)


def test_construct_respects_pledged_target_mass():
    # Both targets draw on the same pool; neither may cannibalise the other.
    ps = construct(
        {(0, 1): F(2), (0, 2): F(1), (0, 4): F(1)},
        {(0, 3): F(1), (0, 5): F(1)},
    )
    assert validate(ps)


# ═══════════════════════════════════════════════════════════════════════════
# Normalisation
# ═══════════════════════════════════════════════════════════════════════════


def test_normalize_scales_everything():
    g, th, sg, mus = normalize(
        {(0, 1): F(2)}, {(0, 3): F(2)}, sigma={(1, 2): F(2)}, mu={(1, 3): F(4)}
    )
    assert th == {(0, 3): F(1)} and g == {(0, 1): F(1)}
    assert sg == {(1, 2): F(1)} and mus == {(1, 3): F(2)}


def test_normalize_is_identity_at_unit_weight():
    g, th, sg, mus = normalize({(0, 1): F(1, 2)}, {(0, 3): F(1)})
    assert g == {(0, 1): F(1, 2)} and th == {(0, 3): F(1)}
    assert sg is None and mus is None


def test_normalize_rejects_weightless_targets():
    with pytest.raises(ValueError, match="no positive weight"):
        normalize({(0, 1): F(1)}, {})


def test_normalize_two_entry_target_then_construct(generator_terms):
    ext = generator_terms["path4"].provenance
    assert len(ext.theta) == 2
    g, th, sg, mus = normalize(ext.g_s, ext.theta, ext.sigma_s, ext.mu_s)
    assert sum(th.values()) == 1
    ps = construct(g, th, sigma=sg, mu=mus)
    assert validate(ps)


# ═══════════════════════════════════════════════════════════════════════════
# Every extracted inequality yields a checked sequence
# ═══════════════════════════════════════════════════════════════════════════


def _discharge_both_sides(ext, label):
    ps = construct(ext.g_t, ext.lam, sigma=ext.sigma_t, mu=ext.mu_t, name=label)
    rep = validate(ps)
    assert rep, (label, "T", rep.reason)
    if ext.theta:
        g, th, sg, mus = ext.scaled_s_side()
        ps = construct(g, th, sigma=sg, mu=mus, name=label)
        rep = validate(ps)
        assert rep, (label, "S", rep.reason)


def test_construct_discharges_every_extracted_piece(
    two_reach, three_reach, four_reach
):
    _, _, rt2 = two_reach
    _, _, c3 = three_reach
    _, _, c4 = four_reach
    checked = 0
    for tag, curve in [("2r", rt2), *c3.items(), *c4.items()]:
        for t in curve.terms:
            _discharge_both_sides(t.provenance, f"{tag} {t.pretty()}")
            checked += 1
    assert checked >= 12


def test_construct_discharges_generator_inequalities(generator_terms):
    for key, t in generator_terms.items():
        if t.provenance is None:
            continue
        _discharge_both_sides(t.provenance, key)


# ═══════════════════════════════════════════════════════════════════════════
# Corpus bundles
# ═══════════════════════════════════════════════════════════════════════════


def test_corpus_bundles_exist_for_the_worked_queries():
    names = {p.stem for p in BUNDLES}
    assert {"two_reach", "square", "three_reach", "four_reach"} <= names


@pytest.mark.parametrize("path", BUNDLES, ids=lambda p: p.stem)
def test_corpus_bundle_validates(path):
    qname, var_names, seqs = bundle_from_json(path.read_text())
    query = q(qname)
    assert var_names == query.var_names
    assert seqs
    for ps in seqs:
        rep = validate(ps, var_names)
        assert rep, (ps.name, rep.reason)


@pytest.mark.parametrize("path", BUNDLES, ids=lambda p: p.stem)
def test_corpus_bundle_serialization_is_stable(path):
    qname, var_names, seqs = bundle_from_json(path.read_text())
    assert bundle_to_json(seqs, query=qname, var_names=var_names) == path.read_text()


def test_sequence_round_trips_through_json():
    ps = storage_merge()
    names = ["x1", "x3", "x2"]
    back = sequence_from_json(sequence_to_json(ps, names), names)
    assert back.initial == ps.initial
    assert back.target == ps.target
    assert back.steps == ps.steps


# ═══════════════════════════════════════════════════════════════════════════
# Replay soundness on random polymatroids
# ═══════════════════════════════════════════════════════════════════════════


def _all_corpus_sequences():
    out = []
    for path in BUNDLES:
        _, var_names, seqs = bundle_from_json(path.read_text())
        out += [(len(var_names), ps) for ps in seqs]
    return out


SEQS = _all_corpus_sequences()


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, len(SEQS) - 1))
def test_replay_is_monotone_on_random_polymatroids(seed, pick):
    n, ps = SEQS[pick]
    h = sample_polymatroid(n, random.Random(seed))
    values = replay_values(ps, h)
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert values[-1] >= eval_cond_vec(ps.target, h)


def test_pretty_prints_the_rewrites():
    text = storage_merge().pretty(["x1", "x3", "x2"])
    assert "->" in text and "submodularity" in text
