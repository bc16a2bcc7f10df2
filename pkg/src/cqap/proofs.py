"""Stepwise proofs of entropic inequalities over conditional vectors.

A conditional vector assigns nonnegative weights to coordinates (X, Y) with
X ⊂ Y, each standing for the conditional entropy term h(Y|X).  Four rewrite
rules move weight between coordinates without ever increasing the vector's
value under a polymatroid:

    submodularity   h(I | I∩J)        ->  h(I∪J | J)        (I, J incomparable)
    monotonicity    h(Y)              ->  h(X)              (X ⊂ Y)
    composition     h(X) + h(Y|X)     ->  h(Y)
    decomposition   h(Y)              ->  h(X) + h(Y|X)

A proof sequence applies such steps to an initial vector delta so that every
intermediate vector stays nonnegative and the final vector dominates a target
lambda; replaying it shows <delta, h> >= <lambda, h> for every polymatroid h.
`validate` replays a sequence exactly; `construct` searches for one, guided
by the multipliers of the linear program that certified the inequality.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction

from .polymatroids import CondVec, SetFunction, eval_cond_vec
from .relalg import VarSet, members, vs_str

log = logging.getLogger(__name__)

ZERO = Fraction(0)

SUBMODULARITY = "submodularity"
MONOTONICITY = "monotonicity"
COMPOSITION = "composition"
DECOMPOSITION = "decomposition"
KINDS = (SUBMODULARITY, MONOTONICITY, COMPOSITION, DECOMPOSITION)

Coord = tuple[VarSet, VarSet]


# ═══════════════════════════════════════════════════════════════════════════
# Steps and sequences
# ═══════════════════════════════════════════════════════════════════════════


@dataclass(frozen=True)
class ProofStep:
    """One weighted rewrite.

    For submodularity `x` and `y` are the incomparable sets I and J; the step
    consumes weight on (I∩J, I) and produces it on (J, I∪J).  For the other
    kinds `x` is the proper subset and `y` the superset.
    """

    kind: str
    x: VarSet
    y: VarSet
    weight: Fraction

    def __post_init__(self):
        object.__setattr__(self, "weight", Fraction(self.weight))
        if self.kind not in KINDS:
            raise ValueError(f"unknown step kind {self.kind!r}")
        if self.weight <= 0:
            raise ValueError("step weight must be positive")
        if self.kind == SUBMODULARITY:
            if not (self.x & ~self.y) or not (self.y & ~self.x):
                raise ValueError("submodularity needs incomparable sets")
        else:
            if self.x == 0 or (self.x & ~self.y) or self.x == self.y:
                raise ValueError(f"{self.kind} needs a proper nonempty subset")

    def delta(self) -> CondVec:
        """The step's effect: consumed coordinates negative, produced positive."""
        w = self.weight
        if self.kind == SUBMODULARITY:
            return {(self.x & self.y, self.x): -w, (self.y, self.x | self.y): w}
        if self.kind == MONOTONICITY:
            return {(0, self.y): -w, (0, self.x): w}
        if self.kind == COMPOSITION:
            return {(0, self.x): -w, (self.x, self.y): -w, (0, self.y): w}
        return {(0, self.y): -w, (self.x, self.y): w, (0, self.x): w}

    def pretty(self, names: list[str] | None = None) -> str:
        def term(c: Coord) -> str:
            x, y = c
            body = vs_str(y, names) if names else f"{{{y:b}}}"
            if x:
                return f"h({body}|{vs_str(x, names) if names else f'{{{x:b}}}'})"
            return f"h({body})"

        d = self.delta()
        used = " + ".join(term(c) for c, v in sorted(d.items()) if v < 0)
        made = " + ".join(term(c) for c, v in sorted(d.items()) if v > 0)
        return f"{self.kind:<14} {used} -> {made}  (w={self.weight})"


def submodularity(i: VarSet, j: VarSet, weight) -> ProofStep:
    return ProofStep(SUBMODULARITY, i, j, Fraction(weight))


def monotonicity(x: VarSet, y: VarSet, weight) -> ProofStep:
    return ProofStep(MONOTONICITY, x, y, Fraction(weight))


def composition(x: VarSet, y: VarSet, weight) -> ProofStep:
    return ProofStep(COMPOSITION, x, y, Fraction(weight))


def decomposition(y: VarSet, x: VarSet, weight) -> ProofStep:
    """Split h(Y) into h(X) + h(Y|X); the inverse of composition."""
    return ProofStep(DECOMPOSITION, x, y, Fraction(weight))


@dataclass
class ProofSequence:
    initial: CondVec
    target: CondVec
    steps: list[ProofStep] = field(default_factory=list)
    name: str = ""

    def states(self):
        """Yield the vector after 0, 1, ... steps (fresh dicts)."""
        cur = {k: Fraction(v) for k, v in self.initial.items() if v}
        yield dict(cur)
        for st in self.steps:
            for c, dv in st.delta().items():
                nv = cur.get(c, ZERO) + dv
                if nv:
                    cur[c] = nv
                else:
                    cur.pop(c, None)
            yield dict(cur)

    def final(self) -> CondVec:
        for cur in self.states():
            pass
        return cur

    def pretty(self, names: list[str] | None = None) -> str:
        head = self.name or "proof sequence"
        lines = [f"{head}: {len(self.steps)} step(s)"]
        lines += ["  " + st.pretty(names) for st in self.steps]
        return "\n".join(lines)


# ═══════════════════════════════════════════════════════════════════════════
# Validation
# ═══════════════════════════════════════════════════════════════════════════


@dataclass
class ValidationReport:
    ok: bool
    step: int | None = None  # index of the first offending step, if any
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def _coord_str(c: Coord, names=None) -> str:
    x, y = c
    if names:
        return f"h({vs_str(y, names)}|{vs_str(x, names)})" if x else f"h({vs_str(y, names)})"
    return f"h({y}|{x})" if x else f"h({y})"


def validate(ps: ProofSequence, names: list[str] | None = None) -> ValidationReport:
    """Replay a sequence with exact arithmetic.

    Checks that the initial and target vectors are nonnegative, that no step
    drives any coordinate negative, and that the final vector dominates the
    target.  The report carries the index of the first offending step.
    """
    for c, v in ps.initial.items():
        if v < 0:
            return ValidationReport(False, None, f"initial weight of {_coord_str(c, names)} is negative")
    for c, v in ps.target.items():
        if v < 0:
            return ValidationReport(False, None, f"target weight of {_coord_str(c, names)} is negative")
    cur = {k: Fraction(v) for k, v in ps.initial.items() if v}
    for idx, st in enumerate(ps.steps):
        for c, dv in st.delta().items():
            nv = cur.get(c, ZERO) + dv
            if nv < 0:
                return ValidationReport(
                    False, idx, f"step {idx} overdraws {_coord_str(c, names)} by {-nv}"
                )
            if nv:
                cur[c] = nv
            else:
                cur.pop(c, None)
    for c, v in ps.target.items():
        short = v - cur.get(c, ZERO)
        if short > 0:
            return ValidationReport(
                False, len(ps.steps), f"final vector is short of {_coord_str(c, names)} by {short}"
            )
    return ValidationReport(True)


def replay_values(ps: ProofSequence, h: SetFunction) -> list[Fraction]:
    """<delta_i, h> after each prefix; non-increasing when h is a polymatroid."""
    return [eval_cond_vec(state, h) for state in ps.states()]


# ═══════════════════════════════════════════════════════════════════════════
# Normalisation
# ═══════════════════════════════════════════════════════════════════════════


def normalize(vec: CondVec, target: CondVec, sigma=None, mu=None):
    """Divide an inequality and its multipliers by the target's total weight.

    Returns (vec, target, sigma, mu) scaled so the target weights sum to 1.
    Raises ValueError when the target carries no weight.
    """
    w = sum(target.values(), ZERO)
    if w <= 0:
        raise ValueError("cannot normalize: target has no positive weight")
    scale = lambda d: {k: Fraction(v) / w for k, v in d.items() if v}
    return (
        scale(vec),
        scale(target),
        None if sigma is None else scale(sigma),
        None if mu is None else scale(mu),
    )


# ═══════════════════════════════════════════════════════════════════════════
# Construction
# ═══════════════════════════════════════════════════════════════════════════


class ConstructionError(RuntimeError):
    """Search gave up; `residual` holds the still-uncovered target weight."""

    def __init__(self, msg: str, residual: CondVec):
        super().__init__(msg)
        self.residual = residual


class _RouteFailed(Exception):
    pass


_DEPTH = 12
_NODE_BUDGET = 20000


def _submasks(x: VarSet) -> list[VarSet]:
    out, w = [], x
    while True:
        out.append(w)
        if w == 0:
            break
        w = (w - 1) & x
    return out


class _Builder:
    """Backtracking search for a proof sequence, guided by LP multipliers.

    Mass already pledged to the target is never consumed.  Each commitment is
    one production route for the first unmet target coordinate (so repeated
    weights unroll into unit-sized step groups); when a later coordinate turns
    out unreachable, earlier commitments are undone and the next route tried.
    Inside a route the helpers are greedy: first workable source wins.
    """

    def __init__(self, initial: CondVec, target: CondVec, sigma, mu, max_steps: int):
        self.cur: dict[Coord, Fraction] = {
            k: Fraction(v) for k, v in initial.items() if v
        }
        self.need: dict[Coord, Fraction] = {
            k: Fraction(v) for k, v in target.items() if v
        }
        self.spool: dict[tuple[VarSet, VarSet], Fraction] = {}
        for (i, j), w in (sigma or {}).items():
            if w:
                key = (min(i, j), max(i, j))
                self.spool[key] = self.spool.get(key, ZERO) + Fraction(w)
        self.mpool: dict[tuple[VarSet, VarSet], Fraction] = {
            k: Fraction(v) for k, v in (mu or {}).items() if v
        }
        self.max_steps = max_steps
        self.steps: list[ProofStep] = []

    # ---- bookkeeping -------------------------------------------------------

    def _free(self, c: Coord) -> Fraction:
        avail = self.cur.get(c, ZERO) - self.need.get(c, ZERO)
        return avail if avail > 0 else ZERO

    def residual(self) -> CondVec:
        out = {}
        for c, v in self.need.items():
            short = v - self.cur.get(c, ZERO)
            if short > 0:
                out[c] = short
        return out

    def _snapshot(self):
        return dict(self.cur), dict(self.spool), dict(self.mpool), len(self.steps)

    def _restore(self, snap):
        self.cur, self.spool, self.mpool, n = dict(snap[0]), dict(snap[1]), dict(snap[2]), snap[3]
        del self.steps[n:]

    def _emit(self, step: ProofStep):
        if len(self.steps) >= self.max_steps:
            raise _RouteFailed
        for c, dv in step.delta().items():
            if self.cur.get(c, ZERO) + dv < 0:
                raise _RouteFailed
        for c, dv in step.delta().items():
            nv = self.cur.get(c, ZERO) + dv
            if nv:
                self.cur[c] = nv
            else:
                self.cur.pop(c, None)
        self.steps.append(step)

    # ---- greedy helpers used inside a route --------------------------------

    def _secure(self, c: Coord, amt: Fraction, stack) -> Fraction:
        """Have at least min(amt, achievable) unpledged units ready at c."""
        if amt <= 0:
            return ZERO
        avail = self._free(c)
        if avail >= amt or c in stack or len(stack) >= _DEPTH:
            return min(avail, amt)
        self._make(c, amt - avail, stack + (c,))
        return min(self._free(c), amt)

    def _make(self, c: Coord, amt: Fraction, stack) -> Fraction:
        """Produce new mass at c via the first workable route; returns amount."""
        for thunk in self._routes(c, amt, stack):
            snap = self._snapshot()
            try:
                got = thunk()
            except _RouteFailed:
                got = ZERO
            if got > 0:
                return got
            self._restore(snap)
        return ZERO

    # ---- route enumeration ---------------------------------------------------

    def _routes(self, c: Coord, amt: Fraction, stack):
        x, y = c
        if x == 0:
            yield from self._plain_routes(y, amt, stack)
        else:
            yield from self._cond_routes(x, y, amt, stack)

    def _plain_routes(self, b: VarSet, amt: Fraction, stack):
        # Pooled monotonicity first: the multipliers say it is part of the proof.
        for (px, py), pool in sorted(self.mpool.items()):
            if px != b or pool <= 0:
                continue

            def via_mono(py=py):
                quota = min(amt, self.mpool.get((b, py), ZERO))
                got = self._secure((0, py), quota, stack)
                if got <= 0:
                    raise _RouteFailed
                self._emit(monotonicity(b, py, got))
                self.mpool[(b, py)] -= got
                return got

            yield via_mono
        # Compose from a part and its complement-on-top, most promising first.
        cands = [w for w in _submasks(b) if w not in (0, b)]
        cands.sort(key=lambda w: (self._free((0, w)) + self._free((w, b)), w), reverse=True)
        for xm in cands:

            def via_comp(xm=xm):
                t1 = self._secure((xm, b), amt, stack)
                if t1 <= 0:
                    raise _RouteFailed
                t2 = self._secure((0, xm), t1, stack)
                if t2 <= 0:
                    raise _RouteFailed
                self._emit(composition(xm, b, t2))
                return t2

            yield via_comp
        # Carve out of a larger free set; keeps the leftover conditional mass
        # around, so it never loses ground to plain shrinking.
        supers = sorted(
            {ym for (xm, ym) in self.cur if xm == 0 and ym != b and not (b & ~ym)},
            key=lambda ym: (bin(ym).count("1"), ym),
        )
        for ym in supers:

            def via_carve(ym=ym):
                got = min(self._free((0, ym)), amt)
                if got <= 0:
                    raise _RouteFailed
                self._emit(decomposition(ym, b, got))
                return got

            yield via_carve

    def _cond_routes(self, x: VarSet, y: VarSet, amt: Fraction, stack):
        # Pooled submodularities: orient the pair so it lands on (x, y).
        for (p, q), pool in sorted(self.spool.items()):
            if pool <= 0:
                continue
            for i, j in ((p, q), (q, p)):
                if j != x or (i | x) != y or not (i & ~x) or not (x & ~i):
                    continue

                def via_pool_sub(i=i):
                    key = (min(i, x), max(i, x))
                    quota = min(amt, self.spool.get(key, ZERO))
                    got = self._secure((i & x, i), quota, stack)
                    if got <= 0:
                        raise _RouteFailed
                    self._emit(submodularity(i, x, got))
                    self.spool[key] -= got
                    return got

                yield via_pool_sub

        # Split the unconditional superset.
        def via_split():
            got = self._secure((0, y), amt, stack)
            if got <= 0:
                raise _RouteFailed
            self._emit(decomposition(y, x, got))
            return got

        yield via_split
        # Free-form submodularity: lift the missing part over any slice of x.
        rest = y & ~x
        for w in sorted(_submasks(x), key=lambda w: (bin(w).count("1"), w)):
            if w == x:
                continue

            def via_sub(i=rest | w, w=w):
                got = self._secure((w, i), amt, stack)
                if got <= 0:
                    raise _RouteFailed
                self._emit(submodularity(i, x, got))
                return got

            yield via_sub

    # ---- driver --------------------------------------------------------------

    def _pending_routes(self):
        for c in sorted(self.need):
            shortfall = self.need[c] - self.cur.get(c, ZERO)
            if shortfall > 0:
                return self._routes(c, shortfall, (c,))
        return None

    def run(self) -> list[ProofStep]:
        origin = self._snapshot()
        first = self._pending_routes()
        if first is None:
            return self.steps
        frames = [(origin, first)]
        nodes = 0
        while frames:
            base, routes = frames[-1]
            self._restore(base)
            thunk = next(routes, None)
            if thunk is None:
                frames.pop()
                continue
            nodes += 1
            if nodes > _NODE_BUDGET:
                break
            try:
                made = thunk()
            except _RouteFailed:
                continue
            if made <= 0:
                continue
            nxt = self._pending_routes()
            if nxt is None:
                return self.steps
            frames.append((self._snapshot(), nxt))
        self._restore(origin)
        raise ConstructionError(
            f"no proof route found within budget ({nodes} attempts)",
            self.residual(),
        )


def construct(
    initial: CondVec,
    target: CondVec,
    *,
    sigma: dict | None = None,
    mu: dict | None = None,
    max_steps: int = 4096,
    name: str = "",
) -> ProofSequence:
    """Search for a proof sequence from `initial` to `target`.

    `sigma` and `mu` are optional submodularity / monotonicity multipliers
    from the certifying linear program; routes through them are preferred, so
    on corpus inequalities the output follows the dual witness.  The result
    is validated before being returned; an unreachable target raises
    ConstructionError carrying the uncovered residual vector.
    """
    builder = _Builder(initial, target, sigma, mu, max_steps)
    steps = builder.run()
    ps = ProofSequence(
        initial={k: Fraction(v) for k, v in initial.items() if v},
        target={k: Fraction(v) for k, v in target.items() if v},
        steps=steps,
        name=name,
    )
    report = validate(ps)
    if not report:
        raise ConstructionError(f"constructed sequence fails replay: {report.reason}", builder.residual())
    log.debug("constructed %d step(s) for %s", len(steps), name or "sequence")
    return ps


# ═══════════════════════════════════════════════════════════════════════════
# Serialisation
# ═══════════════════════════════════════════════════════════════════════════


def _names_of(mask: VarSet, var_names: list[str]) -> list[str]:
    return [var_names[i] for i in members(mask)]


def _mask_of(names, var_names: list[str]) -> VarSet:
    m = 0
    for nm in names:
        try:
            m |= 1 << var_names.index(nm)
        except ValueError:
            raise ValueError(f"unknown variable {nm!r}") from None
    return m


def vec_to_json(vec: CondVec, var_names: list[str]) -> list[dict]:
    out = []
    for (x, y), w in sorted(vec.items()):
        if not w:
            continue
        out.append(
            {"given": _names_of(x, var_names), "set": _names_of(y, var_names), "coeff": str(Fraction(w))}
        )
    return out


def vec_from_json(items, var_names: list[str]) -> CondVec:
    vec: CondVec = {}
    for it in items:
        x = _mask_of(it.get("given", []), var_names)
        y = _mask_of(it["set"], var_names)
        if x & ~y:
            raise ValueError("conditioning set must lie inside the set")
        vec[(x, y)] = vec.get((x, y), ZERO) + Fraction(it["coeff"])
    return vec


def step_to_json(step: ProofStep, var_names: list[str]) -> dict:
    return {
        "kind": step.kind,
        "x": _names_of(step.x, var_names),
        "y": _names_of(step.y, var_names),
        "weight": str(step.weight),
    }


def step_from_json(doc: dict, var_names: list[str]) -> ProofStep:
    return ProofStep(
        doc["kind"],
        _mask_of(doc["x"], var_names),
        _mask_of(doc["y"], var_names),
        Fraction(doc["weight"]),
    )


def sequence_to_json(ps: ProofSequence, var_names: list[str]) -> dict:
    return {
        "name": ps.name,
        "initial": vec_to_json(ps.initial, var_names),
        "target": vec_to_json(ps.target, var_names),
        "steps": [step_to_json(st, var_names) for st in ps.steps],
    }


def sequence_from_json(doc: dict, var_names: list[str]) -> ProofSequence:
    return ProofSequence(
        initial=vec_from_json(doc["initial"], var_names),
        target=vec_from_json(doc["target"], var_names),
        steps=[step_from_json(s, var_names) for s in doc.get("steps", [])],
        name=doc.get("name", ""),
    )


def bundle_to_json(sequences, *, query: str, var_names: list[str]) -> str:
    doc = {
        "query": query,
        "vars": list(var_names),
        "sequences": [sequence_to_json(ps, var_names) for ps in sequences],
    }
    return json.dumps(doc, indent=2) + "\n"


def bundle_from_json(text: str) -> tuple[str, list[str], list[ProofSequence]]:
    doc = json.loads(text)
    var_names = list(doc["vars"])
    seqs = [sequence_from_json(d, var_names) for d in doc.get("sequences", [])]
    return doc.get("query", ""), var_names, seqs
