"""Counting sets over agent states: interval products and their closures.

A cube constrains each state's agent count to an interval whose upper end may
be infinite (``None``); a counting constraint denotes the union of finitely
many cubes.  Representation size is tracked throughout: the l-norm sums lower
bounds, the u-norm sums finite upper bounds, and every operation asserts the
size bound it guarantees.

Reachability closures (pre*/post*) are computed two ways.  The saturation
route repeatedly adds exact one-step predecessor cubes, with a sound
single-transition acceleration that detects pure-shift chains and widens the
shifted bound to infinity.  The witness route enumerates member
configurations up to a size budget, finds a run for each, and generalizes the
run into a cube by pruning its deanonymized history.
"""

import itertools
import math
import re
from collections import deque
from collections.abc import Mapping

import numpy as np

from .core import (
    BudgetExceeded,
    Configuration,
    Multiset,
    ObsTrans,
    Protocol,
    Run,
    apply_run,
    corresponding_mfdo,
    node_budget,
)
from .histories import _prune_history

__all__ = [
    "Cube",
    "CountingConstraint",
    "StatePredicate",
    "member",
    "union",
    "intersect",
    "complement",
    "onestep_pre_io",
    "pre_star",
    "post_star",
    "pre_star_zm",
    "post_star_zm",
    "is_empty_population",
    "parse_constraint",
    "format_constraint",
]

UNDERAPPROX = "SOUND-UNDERAPPROX"

# Saturation may in principle keep generating cubes outside the closure's norm
# envelope; runs that produce more than this many are cut off and reported as
# an under-approximation.
MAX_BEYOND_ENVELOPE = 200_000


def _hi_key(h):
    return (1, 0) if h is None else (0, h)


class Cube:
    """Product of per-state intervals [lo, hi]; hi None means no upper bound."""

    __slots__ = ("names", "lo", "hi", "_key")

    def __init__(self, names, lo=(), hi=()):
        self.names = tuple(names)
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate state names in cube")
        self.lo = self._vector(lo, 0, "lower bounds")
        self.hi = self._vector(hi, None, "upper bounds")
        for q in self.names:
            l, h = self.lo[q], self.hi[q]
            if not isinstance(l, int) or l < 0:
                raise ValueError(f"lower bound for {q} must be a non-negative integer")
            if h is not None and (not isinstance(h, int) or h < 0):
                raise ValueError(f"upper bound for {q} must be non-negative or None")
        self._key = (
            tuple(self.lo[q] for q in self.names),
            tuple(_hi_key(self.hi[q]) for q in self.names),
        )

    def _vector(self, given, default, what):
        if isinstance(given, Mapping):
            extra = set(given) - set(self.names)
            if extra:
                raise ValueError(f"unknown states in {what}: {sorted(extra)}")
            return {q: given.get(q, default) for q in self.names}
        vals = tuple(given)
        if vals and len(vals) != len(self.names):
            raise ValueError(f"{what} must give one value per state")
        if not vals:
            return {q: default for q in self.names}
        return dict(zip(self.names, vals))

    def is_empty(self):
        return any(h is not None and self.lo[q] > h for q, h in self.hi.items())

    def lnorm(self):
        return sum(self.lo.values())

    def unorm(self):
        return sum(h for h in self.hi.values() if h is not None)

    def member(self, counts):
        for q in self.names:
            v = counts.get(q, 0)
            if v < self.lo[q]:
                return False
            h = self.hi[q]
            if h is not None and v > h:
                return False
        return True

    def contains(self, other):
        """True iff every member of `other` is a member of this cube."""
        for q in self.names:
            if self.lo[q] > other.lo[q]:
                return False
            h = self.hi[q]
            if h is not None and (other.hi[q] is None or other.hi[q] > h):
                return False
        return True

    def meet(self, other):
        lo = {q: max(self.lo[q], other.lo[q]) for q in self.names}
        hi = {}
        for q in self.names:
            a, b = self.hi[q], other.hi[q]
            hi[q] = b if a is None else a if b is None else min(a, b)
        return Cube(self.names, lo, hi)

    def size_range(self):
        """Smallest and largest member size (largest None if unbounded)."""
        top = 0
        for h in self.hi.values():
            if h is None:
                top = None
                break
            top += h
        return self.lnorm(), top

    def __eq__(self, other):
        return (
            isinstance(other, Cube) and self.names == other.names and self._key == other._key
        )

    def __hash__(self):
        return hash((self.names, self._key))

    def __repr__(self):
        parts = []
        for q in self.names:
            h = "inf" if self.hi[q] is None else self.hi[q]
            parts.append(f"{q} in [{self.lo[q]}, {h}]")
        return "Cube(" + ", ".join(parts) + ")"


class CountingConstraint:
    """Finite union of cubes over a fixed state list.

    `note` is None for exact results; closure operations that give up set it
    to a status label (the constraint then under-approximates the true set).
    """

    __slots__ = ("names", "cubes", "note")

    def __init__(self, names, cubes=(), note=None):
        self.names = tuple(names)
        out = []
        for c in cubes:
            if c.names != self.names:
                raise ValueError("dimension mismatch: cube states differ from constraint states")
            out.append(c)
        self.cubes = tuple(out)
        self.note = note

    def member(self, c):
        counts = _as_counts(c, self.names)
        return any(cube.member(counts) for cube in self.cubes)

    def lnorm(self):
        return max((c.lnorm() for c in self.cubes if not c.is_empty()), default=0)

    def unorm(self):
        return max((c.unorm() for c in self.cubes if not c.is_empty()), default=0)

    def canonical(self):
        alive = []
        for c in sorted(set(self.cubes), key=lambda c: c._key):
            if not c.is_empty():
                alive.append(c)
        kept = []
        for i, c in enumerate(alive):
            if any(d is not c and d.contains(c) for d in kept):
                continue
            if any(
                alive[j].contains(c) and not c.contains(alive[j])
                for j in range(i + 1, len(alive))
            ):
                continue
            kept.append(c)
        return CountingConstraint(self.names, kept, note=self.note)

    def denotes_empty(self):
        return all(c.is_empty() for c in self.cubes)

    def __eq__(self, other):
        return (
            isinstance(other, CountingConstraint)
            and self.names == other.names
            and self.cubes == other.cubes
        )

    def __hash__(self):
        return hash((self.names, self.cubes))

    def __repr__(self):
        return f"CountingConstraint({list(self.cubes)!r})"


class StatePredicate:
    """Boolean predicate over input multisets, given by a counting constraint."""

    __slots__ = ("names", "constraint")

    def __init__(self, names, constraint):
        self.names = tuple(names)
        if constraint.names != self.names:
            raise ValueError("dimension mismatch: predicate names differ from constraint")
        self.constraint = constraint

    def evaluate(self, d):
        return 1 if self.constraint.member(d) else 0


def _as_counts(c, names):
    if isinstance(c, Configuration):
        if c.messages:
            raise ValueError("counting constraints range over agent states; drop messages first")
        c = c.agents
    if isinstance(c, Multiset):
        counts = dict(c.items())
    elif isinstance(c, Mapping):
        counts = dict(c)
    else:
        raise TypeError(f"cannot read counts from {type(c).__name__}")
    extra = set(counts) - set(names)
    if extra:
        raise ValueError(f"dimension mismatch: unknown states {sorted(extra)}")
    return counts


def _same_names(g1, g2):
    if g1.names != g2.names:
        raise ValueError("dimension mismatch: constraints over different state lists")


def member(gamma, c):
    return gamma.member(c)


def union(g1, g2):
    _same_names(g1, g2)
    out = CountingConstraint(g1.names, g1.cubes + g2.cubes).canonical()
    assert out.lnorm() <= max(g1.lnorm(), g2.lnorm()), "union must not grow the l-norm"
    assert out.unorm() <= max(g1.unorm(), g2.unorm()), "union must not grow the u-norm"
    return out


def intersect(g1, g2):
    _same_names(g1, g2)
    met = [a.meet(b) for a in g1.cubes for b in g2.cubes]
    out = CountingConstraint(g1.names, met).canonical()
    assert out.lnorm() <= g1.lnorm() + g2.lnorm(), "intersection l-norms must add"
    assert out.unorm() <= g1.unorm() + g2.unorm(), "intersection u-norms must add"
    return out


def complement(g):
    """Exact complement, built clause-by-clause from interval negations."""
    names = g.names
    n = len(names)
    out = CountingConstraint(names, [Cube(names)])
    for cube in g.canonical().cubes:
        parts = []
        for q in names:
            if cube.lo[q] > 0:
                parts.append(Cube(names, {}, {q: cube.lo[q] - 1}))
            if cube.hi[q] is not None:
                parts.append(Cube(names, {q: cube.hi[q] + 1}, {}))
        met = [a.meet(b) for a in out.cubes for b in parts]
        out = CountingConstraint(names, met).canonical()
    out = out.canonical()
    assert out.unorm() <= n * g.lnorm(), "complement u-norm exceeds state-count times l-norm"
    assert out.lnorm() <= n * g.unorm() + n, "complement l-norm exceeds its size bound"
    return out


def is_empty_population(g):
    """True iff no configuration with at least two agents satisfies g."""
    for c in g.canonical().cubes:
        _, top = c.size_range()
        if top is None or top >= 2:
            return False
    return True


# ---------------------------------------------------------------------------
# one-step predecessors (IO)


def _pre_cube(names, src, o, dst, c):
    """Exact predecessor cube of `c` under one application of src --obs o--> dst."""
    lo = dict(c.lo)
    hi = dict(c.hi)
    if src != dst:
        lo[src] += 1
        if hi[src] is not None:
            hi[src] += 1
        if hi[dst] == 0:
            return None
        lo[dst] = max(0, lo[dst] - 1)
        if hi[dst] is not None:
            hi[dst] -= 1
    else:
        lo[src] = max(lo[src], 1)
    lo[o] = max(lo[o], 2 if o == src else 1)
    out = Cube(names, lo, hi)
    return None if out.is_empty() else out


def onestep_pre_io(p, gamma):
    """All configurations that enter the constraint in one transition."""
    if p.model != "IO":
        raise ValueError("one-step predecessor cubes require an IO protocol")
    _check_dimension(p, gamma)
    names = gamma.names
    cubes = []
    for t in p.obs_view():
        for c in gamma.cubes:
            if c.is_empty():
                continue
            pc = _pre_cube(names, t.src, t.obs, t.dst, c)
            if pc is not None:
                cubes.append(pc)
    return CountingConstraint(names, cubes).canonical()


def _check_dimension(p, gamma):
    if gamma.names != tuple(p.states):
        raise ValueError("dimension mismatch: constraint states differ from protocol states")


# ---------------------------------------------------------------------------
# closures


def _shift_up(c, q):
    lo = dict(c.lo)
    hi = dict(c.hi)
    lo[q] += 1
    if hi[q] is not None:
        hi[q] += 1
    return Cube(c.names, lo, hi)


def _widen(c, q):
    hi = dict(c.hi)
    hi[q] = None
    return Cube(c.names, c.lo, hi)


def _beyond_cap(n, bound_l, bound_u):
    n_lo = math.comb(bound_l + n, n)
    n_hi = sum(math.comb(n, k) * math.comb(bound_u + k, k) for k in range(n + 1))
    return min(n_lo * n_hi * 10, MAX_BEYOND_ENVELOPE)


def _covered_by(cube, others, names):
    if not others:
        return cube.is_empty()
    rest = intersect(
        CountingConstraint(names, [cube]),
        complement(CountingConstraint(names, others)),
    )
    return rest.denotes_empty()


def _reshape_cube(cube, comp_all, names):
    """Grow a cube inside the overall union so its norms shrink.

    Enlarging a member cube never changes the union as long as the result
    stays inside it, so each finite upper bound is lifted to infinity and each
    lower bound is pushed down (binary search: feasibility is monotone) while
    the cube avoids the union's complement.
    """
    lo = dict(cube.lo)
    hi = dict(cube.hi)

    def fits(l, h):
        probe = CountingConstraint(names, [Cube(names, l, h)])
        return intersect(probe, comp_all).denotes_empty()

    for q in names:
        if hi[q] is not None:
            trial = dict(hi)
            trial[q] = None
            if fits(lo, trial):
                hi = trial
    for q in names:
        if lo[q] > 0:
            best, low, high = lo[q], 0, lo[q] - 1
            while low <= high:
                mid = (low + high) // 2
                trial = dict(lo)
                trial[q] = mid
                if fits(trial, hi):
                    best, high = mid, mid - 1
                else:
                    low = mid + 1
            lo[q] = best
    return Cube(names, lo, hi)


def _enforce_envelope(out, bound_l, bound_u):
    """Rewrite over-sized cubes without changing the union; assert the bounds.

    Saturation can emit a staircase of narrow cubes whose union has a far
    cheaper representation.  Over-sized cubes are dropped when the rest
    already covers them, otherwise grown in place (which subsumes the
    staircase neighbours) until every cube fits the envelope.
    """
    names = out.names
    cubes = list(out.canonical().cubes)

    def oversized(c):
        return c.lnorm() > bound_l or c.unorm() > bound_u

    changed = True
    while changed:
        changed = False
        bad = [c for c in cubes if oversized(c)]
        if not bad:
            break
        for c in bad:
            rest = [d for d in cubes if d is not c]
            if _covered_by(c, rest, names):
                cubes = rest
                changed = True
                break
        if changed:
            continue
        comp_all = complement(CountingConstraint(names, cubes))
        for c in bad:
            grown = _reshape_cube(c, comp_all, names)
            if not oversized(grown):
                cubes = [grown if d is c else d for d in cubes]
                cubes = list(CountingConstraint(names, cubes).canonical().cubes)
                changed = True
                break
    out = CountingConstraint(names, cubes, note=out.note).canonical()
    assert out.lnorm() <= bound_l and out.unorm() <= bound_u, "closure norm bound violated"
    return out


def _fixpoint_pre_io(p, gamma):
    names = gamma.names
    n = len(names)
    base = gamma.canonical()
    bound_l = base.lnorm() + n**3
    bound_u = base.unorm()
    cap = _beyond_cap(n, bound_l, bound_u)
    obs = [(t.src, t.obs, t.dst) for t in p.obs_view()]

    live = {c._key: c for c in base.cubes}
    work = deque(live.values())
    beyond = 0
    note = None
    while work:
        c = work.popleft()
        if c._key not in live:
            continue
        for src, o, dst in obs:
            cand = _pre_cube(names, src, o, dst, c)
            if cand is None:
                continue
            if src != dst:
                # A predecessor that is a pure +1 shift of itself at src keeps
                # shifting forever; the union of the whole chain is the cube
                # with the src upper bound dropped, so add that instead.
                nxt = _pre_cube(names, src, o, dst, cand)
                if nxt is not None and nxt == _shift_up(cand, src):
                    cand = _widen(cand, src)
            if any(x.contains(cand) for x in live.values()):
                continue
            for key in [k for k, x in live.items() if cand.contains(x)]:
                del live[key]
            live[cand._key] = cand
            work.append(cand)
            if cand.lnorm() > bound_l or cand.unorm() > bound_u:
                beyond += 1
                if beyond > cap:
                    note = UNDERAPPROX
                    work.clear()
                    break
        if note:
            break
    out = CountingConstraint(names, live.values(), note=note).canonical()
    if note is None:
        out = _enforce_envelope(out, bound_l, bound_u)
    return out


def _compositions(total, k):
    """All k-vectors of non-negative ints summing to total, lexicographic."""
    if k == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for rest in _compositions(total - head, k - 1):
            yield (head,) + rest


def _cube_masks(cubes, rows, names):
    mask = np.zeros(len(rows), dtype=bool)
    for c in cubes:
        if c.is_empty():
            continue
        lo = np.array([c.lo[q] for q in names])
        hi = np.array([np.iinfo(np.int64).max if c.hi[q] is None else c.hi[q] for q in names])
        mask |= ((rows >= lo) & (rows <= hi)).all(axis=1)
    return mask


class _Budget:
    def __init__(self, limit):
        self.limit = limit
        self.used = 0

    def spend(self, k):
        self.used += k
        if self.used > self.limit:
            raise BudgetExceeded(f"witness enumeration exceeded {self.limit} graph nodes")


def _io_backward_hops(p, names, rows, member_mask, wanted, spend):
    """Hop pointers toward a member vector, searched backward lazily (IO).

    Explores only what is backward-reachable from member vectors and stops as
    soon as every wanted start has been reached.
    """
    pos = {q: i for i, q in enumerate(names)}
    trans = [
        (t.name, pos[t.src], pos[t.obs], pos[t.dst], 2 if t.obs == t.src else 1)
        for t in p.obs_view()
        if t.src != t.dst
    ]
    hop = {}
    seen = set()
    frontier = deque()
    for r, m in zip(rows.tolist(), member_mask.tolist()):
        if m:
            v = tuple(r)
            seen.add(v)
            frontier.append(v)
    todo = set(wanted) - seen
    while frontier and todo:
        v = frontier.popleft()
        spend.spend(1)
        for name, s_i, o_i, d_i, need in trans:
            if v[d_i] < 1:
                continue
            u = list(v)
            u[d_i] -= 1
            u[s_i] += 1
            if u[o_i] < need:
                continue
            u = tuple(u)
            if u in seen:
                continue
            seen.add(u)
            hop[u] = (name, v)
            todo.discard(u)
            frontier.append(u)
    return seen, hop


def _mfdo_backward_hops(p, names, rows, member_mask, wanted, spend):
    """Hop pointers toward a member vector, searched backward lazily (MFDO).

    Nodes pair counts with the seen set; member vectors are seeded under
    every consistent seen set, since a run may finish having populated any
    superset of the final support.
    """
    pos = {q: i for i, q in enumerate(names)}
    trans = [
        (t.name, pos[t.src], t.obs, pos[t.dst], t.dst)
        for t in p.obs_view()
        if t.src != t.dst
    ]
    hop = {}
    seen_nodes = set()
    frontier = deque()
    for r, m in zip(rows.tolist(), member_mask.tolist()):
        if not m:
            continue
        vec = tuple(r)
        supp = frozenset(q for q, v in zip(names, vec) if v)
        free = [q for q in names if q not in supp]
        for k in range(len(free) + 1):
            for extra in itertools.combinations(free, k):
                node = (vec, supp | frozenset(extra))
                seen_nodes.add(node)
                frontier.append(node)
    todo = set(wanted) - seen_nodes
    while frontier and todo:
        v, after = frontier.popleft()
        spend.spend(1)
        for name, s_i, o, d_i, dst in trans:
            if v[d_i] < 1 or dst not in after:
                continue
            u = list(v)
            u[d_i] -= 1
            u[s_i] += 1
            u = tuple(u)
            usupp = frozenset(q for q, x in zip(names, u) if x)
            for before in (after, after - {dst}):
                if o not in before or not usupp <= before:
                    continue
                node = (u, before)
                if node in seen_nodes:
                    continue
                seen_nodes.add(node)
                hop[node] = (name, (v, after))
                todo.discard(node)
                frontier.append(node)
    return seen_nodes, hop


def _vec_config(names, vec):
    return Configuration(Multiset({q: v for q, v in zip(names, vec) if v}))


def _pre_witness_cube(p, gamma, run, start_counts):
    """Generalize one witness run (start reaches gamma) into a cube."""
    names = gamma.names
    final = _run_final_counts(p, run)
    target = next(c for c in gamma.cubes if not c.is_empty() and c.member(final))
    want = Multiset({q: v for q, v in target.lo.items() if v})
    h = _prune_history(p, run, Multiset(), want)
    start = h.config_at(0)
    lo = {q: start[q] for q in names}
    hi = {}
    for q in names:
        if any(t[0] == q and target.hi[t[-1]] is None for t, _ in h.entries):
            hi[q] = None
        else:
            hi[q] = start_counts.get(q, 0)
    return Cube(names, lo, hi)


def _post_witness_cube(p, gamma, run, end_counts):
    """Generalize one witness run (gamma reaches its end) into a cube."""
    names = gamma.names
    start_counts = {q: run.start.agents[q] for q in names}
    source = next(c for c in gamma.cubes if not c.is_empty() and c.member(start_counts))
    want = Multiset({q: v for q, v in source.lo.items() if v})
    h = _prune_history(p, run, want, Multiset())
    end = h.config_at(h.length - 1)
    lo = {q: end[q] for q in names}
    hi = {}
    for q in names:
        if any(t[-1] == q and source.hi[t[0]] is None for t, _ in h.entries):
            hi[q] = None
        else:
            hi[q] = end_counts.get(q, 0)
    return Cube(names, lo, hi)


def _run_final_counts(p, run):
    out = apply_run(p, run)
    return {q: out.agents[q] for q in p.states}


def _witness_pre(p, gamma, budget):
    names = gamma.names
    n = len(names)
    base = gamma.canonical()
    bound_l = base.lnorm() + n**3
    size_cap = base.lnorm() + n**3 + base.unorm()
    spend = _Budget(node_budget(budget))
    mfdo = p.model == "MFDO"
    cubes = list(base.cubes)

    for s in range(size_cap + 1):
        if not any(_admits(c, s) for c in base.cubes):
            continue
        rows = np.array(list(_compositions(s, n)), dtype=np.int64).reshape(-1, n)
        cand = [tuple(r) for r in rows[~_cube_masks(cubes, rows, names)].tolist()]
        if not cand:
            continue
        member_mask = _cube_masks(base.cubes, rows, names)
        if mfdo:
            starts = {
                vec: (vec, frozenset(q for q, v in zip(names, vec) if v)) for vec in cand
            }
            reach, hop = _mfdo_backward_hops(p, names, rows, member_mask, starts.values(), spend)
        else:
            starts = {vec: vec for vec in cand}
            reach, hop = _io_backward_hops(p, names, rows, member_mask, cand, spend)
        for vec in cand:
            if _vec_member(CountingConstraint(names, cubes), names, vec):
                continue
            node = starts[vec]
            if node not in reach:
                continue
            steps = []
            while node in hop:
                name, node = hop[node]
                steps.append((name, 1))
            run = Run(_vec_config(names, vec), tuple(steps))
            counts = dict(zip(names, vec))
            cubes.append(_pre_witness_cube(p, base, run, counts))

    out = CountingConstraint(names, cubes).canonical()
    assert out.lnorm() <= bound_l and out.unorm() <= base.unorm(), "closure norm bound violated"
    return out


def _witness_post_mfdo(p, gamma, budget):
    names = gamma.names
    n = len(names)
    base = gamma.canonical()
    bound_l = base.lnorm() + n**3
    size_cap = base.lnorm() + n**3 + base.unorm()
    spend = _Budget(node_budget(budget))
    cubes = list(base.cubes)

    pos = {q: i for i, q in enumerate(names)}
    trans = [
        (t.name, pos[t.src], t.obs, pos[t.dst], t.dst)
        for t in p.obs_view()
        if t.src != t.dst
    ]
    for s in range(size_cap + 1):
        if not any(_admits(c, s) for c in base.cubes):
            continue
        rows = np.array(list(_compositions(s, n)), dtype=np.int64).reshape(-1, n)
        cand = [tuple(r) for r in rows[~_cube_masks(cubes, rows, names)].tolist()]
        if not cand:
            continue
        member_mask = _cube_masks(base.cubes, rows, names)
        parent = {}
        frontier = deque()
        for r, m in zip(rows.tolist(), member_mask.tolist()):
            if m:
                vec = tuple(r)
                node = (vec, frozenset(q for q, v in zip(names, vec) if v))
                parent.setdefault(node, None)
                frontier.append(node)
        reached_vec = {}
        todo = set(cand)
        while frontier and todo:
            node = frontier.popleft()
            spend.spend(1)
            vec, seen = node
            if vec not in reached_vec:
                reached_vec[vec] = node
                todo.discard(vec)
            for name, s_i, o, d_i, dst in trans:
                if vec[s_i] < 1 or o not in seen:
                    continue
                nv = list(vec)
                nv[s_i] -= 1
                nv[d_i] += 1
                nxt = (tuple(nv), seen | {dst})
                if nxt not in parent:
                    parent[nxt] = (node, name)
                    frontier.append(nxt)
        for vec in cand:
            if _vec_member(CountingConstraint(names, cubes), names, vec):
                continue
            if vec not in reached_vec:
                continue
            steps = []
            node = reached_vec[vec]
            while parent[node] is not None:
                node, name = parent[node]
                steps.append((name, 1))
            run = Run(_vec_config(names, node[0]), tuple(reversed(steps)))
            counts = dict(zip(names, vec))
            cubes.append(_post_witness_cube(p, base, run, counts))

    out = CountingConstraint(names, cubes).canonical()
    assert out.lnorm() <= bound_l and out.unorm() <= base.unorm(), "closure norm bound violated"
    return out


def _admits(cube, s):
    if cube.is_empty():
        return False
    lo, top = cube.size_range()
    return lo <= s and (top is None or s <= top)


def _vec_member(gamma, names, vec):
    counts = dict(zip(names, vec))
    return any(c.member(counts) for c in gamma.cubes if not c.is_empty())


def _pick_method(p, method):
    if method is None:
        return "fixpoint" if p.model == "IO" else "witness"
    if method not in ("fixpoint", "witness"):
        raise ValueError(f"unknown closure method {method!r}")
    if method == "fixpoint" and p.model != "IO":
        raise ValueError("the fixpoint method needs step enabledness to be local (IO only)")
    return method


def pre_star(p, gamma, method=None, budget=None):
    """Constraint for all configurations that can reach the given set."""
    if p.model not in ("IO", "MFDO"):
        raise ValueError("closures are supported for IO and MFDO protocols")
    _check_dimension(p, gamma)
    method = _pick_method(p, method)
    if method == "fixpoint":
        return _fixpoint_pre_io(p, gamma)
    return _witness_pre(p, gamma, budget)


def _reversed_io(p):
    flipped = [ObsTrans(t.name, t.dst, t.obs, t.src) for t in p.obs_view()]
    return Protocol("IO", p.states, transitions=flipped, inputs=p.inputs, outputs=p.outputs)


def post_star(p, gamma, method=None, budget=None):
    """Constraint for all configurations reachable from the given set."""
    if p.model not in ("IO", "MFDO"):
        raise ValueError("closures are supported for IO and MFDO protocols")
    _check_dimension(p, gamma)
    method = _pick_method(p, method)
    if p.model == "IO":
        return pre_star(_reversed_io(p), gamma, method, budget)
    return _witness_post_mfdo(p, gamma, budget)


def _zm_setup(p, gamma):
    if p.model != "DO":
        raise ValueError("zero-message closures apply to DO protocols")
    _check_dimension(p, gamma)
    return corresponding_mfdo(p)


def pre_star_zm(p, gamma, method=None, budget=None):
    """pre* restricted to zero-message configurations of a DO protocol."""
    return pre_star(_zm_setup(p, gamma), gamma, method, budget)


def post_star_zm(p, gamma, method=None, budget=None):
    """post* restricted to zero-message configurations of a DO protocol."""
    return post_star(_zm_setup(p, gamma), gamma, method, budget)


# ---------------------------------------------------------------------------
# text format

_CLAUSE = re.compile(r"\s*(\S+)\s+in\s+\[\s*(\d+)\s*,\s*(\d+|inf)\s*\]\s*")


def parse_constraint(text, names):
    """Parse `cube:` lines with `state in [lo, hi]` clauses (hi may be inf)."""
    names = tuple(names)
    cubes = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if not line.startswith("cube:"):
            raise ValueError(f"line {lineno}: expected a 'cube:' line")
        body = line[len("cube:"):].strip()
        lo, hi = {}, {}
        pos = 0
        while pos < len(body):
            m = _CLAUSE.match(body, pos)
            if not m:
                raise ValueError(f"line {lineno}: bad clause {body[pos:].strip()!r}")
            q, low, high = m.groups()
            if q not in names:
                raise ValueError(f"line {lineno}: unknown state {q!r}")
            if q in lo:
                raise ValueError(f"line {lineno}: duplicate state {q!r}")
            lo[q] = int(low)
            hi[q] = None if high == "inf" else int(high)
            pos = m.end()
            if pos < len(body):
                if body[pos] != ",":
                    raise ValueError(f"line {lineno}: expected ',' before {body[pos:]!r}")
                pos += 1
        cubes.append(Cube(names, lo, hi))
    return CountingConstraint(names, cubes)


def format_constraint(gamma):
    lines = []
    for c in gamma.cubes:
        parts = []
        for q in gamma.names:
            h = "inf" if c.hi[q] is None else c.hi[q]
            parts.append(f"{q} in [{c.lo[q]}, {h}]")
        lines.append("cube: " + ", ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")
