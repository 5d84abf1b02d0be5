"""Correctness deciders.

Verdicts come from three routes: `symbolic` (counting-constraint pipelines
ending in an emptiness test), `witness-bound` (a norm-derived size bound plus
per-size instance kernels), and `kernel` (explicit bottom-SCC analysis).
Broadcast (DO) protocols are decided over their zero-message configurations:
any configuration can drain its pool, so the placements reachable between
empty-pool moments form a finite graph, computed through the message-free
image.  The saturation/max-flow route gives an SCC-free alternative for
single DO instances.
"""

from dataclasses import dataclass
from typing import Iterator, Optional

import networkx as nx
from networkx.algorithms.flow import edmonds_karp

from . import counting
from .core import (
    BudgetExceeded,
    Configuration,
    Multiset,
    Protocol,
    ReachGraph,
    RecvTrans,
    Run,
    apply_run,
    bottom_scc_analysis,
    consensus_set,
    corresponding_mfdo,
    format_config,
    format_run,
    initial_set,
    reach_graph,
)
from .histories import mfdo_to_do_run


@dataclass
class Witness:
    """Replayable evidence that a check fails.

    `input` is the offending input population (when the check ranges over
    inputs), `run` drives the protocol from the start configuration into
    `config`, a configuration that an offending bottom component contains,
    and `bit` is the consensus value that was expected.
    """

    input: Optional[Multiset]
    config: Configuration
    run: Optional[Run]
    bit: Optional[int]


@dataclass
class Verdict:
    correct: bool
    witness: Optional[Witness]
    method: str  # "symbolic" | "witness-bound" | "kernel"
    bound_used: int
    complete: bool = True  # False marks BOUNDED verdicts (nothing beyond the bound)
    worst_case_bound: Optional[int] = None


@dataclass
class SaturatedConfig:
    """A zero-message configuration flooded with every message it can emit.

    `run` replays base -> result; `emitted` lists the states that broadcast,
    in emission order.  Every present message type ends up plentiful enough
    that receive availability never binds afterwards.
    """

    base: Configuration
    result: Configuration
    run: Run
    emitted: tuple[str, ...]


# ---------------------------------------------------------------------------
# stable consensus sets


def stable_set(p: Protocol, b: int):
    """Configurations whose every continuation keeps consensus b.

    The complement of what can reach a non-b-consensus configuration.
    Broadcast protocols are handled over their zero-message configurations.
    """
    if b not in (0, 1):
        raise ValueError("consensus value must be 0 or 1")
    star = counting.pre_star_zm if p.model == "DO" else counting.pre_star
    reach_bad = star(p, counting.complement(consensus_set(p, b)))
    if reach_bad.note is not None:
        raise RuntimeError(f"stable set is not exact: {reach_bad.note}")
    out = counting.complement(reach_bad)
    n = len(p.states)
    assert out.lnorm() <= n, "stable set l-norm exceeds the state count"
    assert out.unorm() <= n * n + n**4, "stable set u-norm exceeds its bound"
    return out


# ---------------------------------------------------------------------------
# single-instance checks (bottom SCCs)


def check_instance(
    p: Protocol,
    c0: Configuration,
    b: int,
    bound: Optional[int] = None,
    budget: Optional[int] = None,
) -> Verdict:
    """Does every fair run from c0 stabilize to consensus b?

    Decided by the bottom SCCs of the reachable space: correct iff every one
    is a b-consensus.  DO protocols are checked on the graph of reachable
    zero-message placements (edges = message-free reachability through the
    observation image).  DT needs `bound`, a message cap; its verdict is
    incomplete whenever the cap cut a successor off.
    """
    if b not in (0, 1):
        raise ValueError("expected consensus must be 0 or 1")
    if p.model == "QT":
        raise ValueError("QT protocols do not get convergence verdicts")
    if p.model == "DO":
        return _check_instance_do(p, c0, b, budget)
    g = reach_graph(p, [c0], bound=bound, budget=budget)
    complete = not g.truncated
    used = bound if bound is not None else c0.agents.size()
    sccs, bottom, consensus = bottom_scc_analysis(g, p)
    bad = [ci for ci in bottom if consensus[ci] != b]
    if not bad:
        return Verdict(True, None, "kernel", used, complete)
    config, run = _graph_witness(p, g, sccs, bad, b, c0)
    return Verdict(False, Witness(None, config, run, b), "kernel", used, complete)


def _node_config(node) -> Configuration:
    return node[0] if isinstance(node, tuple) else node


def _graph_witness(p, g, sccs, bad, b, c0):
    """Shortest path from the roots into an offending bottom SCC."""
    targets = set()
    for ci in bad:
        for i in sccs[ci]:
            if p.config_output(_node_config(g.nodes[i])) != b:
                targets.add(i)
    adj: dict[int, list[tuple[str, int]]] = {}
    for s, lbl, d in g.edges:
        adj.setdefault(s, []).append((lbl, d))
    parent: dict[int, Optional[tuple[int, str]]] = {r: None for r in g.roots}
    order = list(g.roots)
    goal = next((r for r in g.roots if r in targets), None)
    head = 0
    while goal is None and head < len(order):
        i = order[head]
        head += 1
        for lbl, j in adj.get(i, ()):
            if j not in parent:
                parent[j] = (i, lbl)
                order.append(j)
                if j in targets:
                    goal = j
                    break
    assert goal is not None, "offending SCC without a reachable bad member"
    steps = []
    i = goal
    while parent[i] is not None:
        i, lbl = parent[i]
        steps.append((lbl, 1))
    steps.reverse()
    return _node_config(g.nodes[goal]), Run(c0, tuple(steps)).normalized()


def _zm_successors(pm, z: Multiset, budget, cache) -> tuple[Multiset, ...]:
    """Placements reachable from z with a fresh (empty-pool) history."""
    out = None if cache is None else cache.get(z)
    if out is None:
        g = reach_graph(pm, [Configuration(z)], budget=budget)
        out = tuple(sorted({node[0].agents for node in g.nodes}, key=lambda m: tuple(m.items())))
        if cache is not None:
            cache[z] = out
    return out


def _mfdo_leg(pm, z_from: Multiset, z_to: Multiset, budget) -> list[tuple[str, int]]:
    """Steps of a shortest observation run between two placements."""
    if z_from == z_to:
        return []
    g = reach_graph(pm, [Configuration(z_from)], budget=budget)
    adj: dict[int, list[tuple[str, int]]] = {}
    for s, lbl, d in g.edges:
        adj.setdefault(s, []).append((lbl, d))
    parent: dict[int, Optional[tuple[int, str]]] = {g.roots[0]: None}
    order = [g.roots[0]]
    goal = None
    head = 0
    while goal is None and head < len(order):
        i = order[head]
        head += 1
        for lbl, j in adj.get(i, ()):
            if j not in parent:
                parent[j] = (i, lbl)
                order.append(j)
                if g.nodes[j][0].agents == z_to:
                    goal = j
                    break
    assert goal is not None, "placement edge without a realizing run"
    steps = []
    i = goal
    while parent[i] is not None:
        i, lbl = parent[i]
        steps.append((lbl, 1))
    steps.reverse()
    return steps


def _check_instance_do(p, c0, b, budget, cache=None) -> Verdict:
    if c0.messages:
        raise ValueError("broadcast instance checks start message-free")
    pm = corresponding_mfdo(p)
    placements: list[Multiset] = [c0.agents]
    index = {c0.agents: 0}
    edges: list[tuple[int, str, int]] = []
    head = 0
    while head < len(placements):
        z = placements[head]
        for m in _zm_successors(pm, z, budget, cache):
            j = index.get(m)
            if j is None:
                j = index[m] = len(placements)
                placements.append(m)
            edges.append((head, "", j))
        head += 1
    rg = ReachGraph([Configuration(z) for z in placements], edges, [0], index)
    sccs, bottom, consensus = bottom_scc_analysis(rg, p)
    bad = [ci for ci in bottom if consensus[ci] != b]
    size = c0.agents.size()
    if not bad:
        return Verdict(True, None, "kernel", size, True)
    target, _ = _graph_witness(p, rg, sccs, bad, b, Configuration(c0.agents))
    hops = _placement_path(rg, target)
    steps: list[tuple[str, int]] = []
    at = c0.agents
    for z in hops:
        steps.extend(_mfdo_leg(pm, at, z, budget))
        at = z
    mrun = Run(Configuration(c0.agents), tuple(steps)).normalized()
    do_run = mfdo_to_do_run(p, pm, mrun)
    return Verdict(False, Witness(None, Configuration(at), do_run, b), "kernel", size, True)


def _placement_path(rg, target: Configuration) -> list[Multiset]:
    """Placement hops from the root to `target` along regeneration edges."""
    goal = rg.index[target.agents]
    adj: dict[int, list[int]] = {}
    for s, _, d in rg.edges:
        adj.setdefault(s, []).append(d)
    parent: dict[int, Optional[int]] = {0: None}
    order = [0]
    head = 0
    while goal not in parent and head < len(order):
        i = order[head]
        head += 1
        for j in adj.get(i, ()):
            if j not in parent:
                parent[j] = i
                order.append(j)
    hops = []
    i = goal
    while parent[i] is not None:
        hops.append(rg.nodes[i].agents)
        i = parent[i]
    hops.reverse()
    return hops


# ---------------------------------------------------------------------------
# saturation and agent-flow


def _present_moves(p: Protocol, present) -> dict[str, list[RecvTrans]]:
    """Declared moving receives keyed by source, message type present."""
    out: dict[str, list[RecvTrans]] = {}
    for t in p.transitions:
        if isinstance(t, RecvTrans) and t.src != t.dst and t.msg in present:
            out.setdefault(t.src, []).append(t)
    return out


def _receive_bfs(p: Protocol, populated, present):
    """Multi-source shortest receive paths; deterministic tie-breaks.

    Sources enter in state order, edges relax in declared order, so the
    parent tree (and thus every extracted path) is unique.
    """
    moves = _present_moves(p, present)
    dist: dict[str, int] = {}
    parent: dict[str, Optional[RecvTrans]] = {}
    queue = [q for q in p.states if populated.get(q, 0)]
    for q in queue:
        dist[q] = 0
        parent[q] = None
    head = 0
    while head < len(queue):
        q = queue[head]
        head += 1
        for t in moves.get(q, ()):
            if t.dst not in dist:
                dist[t.dst] = dist[q] + 1
                parent[t.dst] = t
                queue.append(t.dst)
    return dist, parent


def saturate(p: Protocol, z: Configuration) -> SaturatedConfig:
    """Flood a zero-message configuration with every message it can produce.

    Every populated state broadcasts k = |z|*|Q| + |Q|^2 copies of its
    message; then, while some reachable state has not broadcast yet, one
    agent walks there by a shortest receive path and broadcasts.  At most
    |Q|^2 messages are consumed walking, so every present type retains at
    least |z|*|Q| copies, and every state reachable from the result has
    already broadcast.
    """
    if p.model != "DO":
        raise ValueError("saturation is defined for DO protocols")
    if z.messages:
        raise ValueError("saturation starts from a zero-message configuration")
    n = len(p.states)
    k = z.agents.size() * n + n * n
    agents = {q: c for q, c in z.agents.items()}
    pool: dict[str, int] = {}
    emitted: list[str] = []
    steps: list[tuple[str, int]] = []

    def emit(q: str) -> None:
        t = p.send_of(q)[0]
        steps.append((t.name, k))
        pool[t.msg] = pool.get(t.msg, 0) + k
        emitted.append(q)

    for q in p.states:
        if agents.get(q, 0):
            emit(q)
    while True:
        present = {m for m, c in pool.items() if c}
        dist, parent = _receive_bfs(p, agents, present)
        todo = [q for q in dist if q not in emitted]
        if not todo:
            break
        target = min(todo, key=lambda q: (dist[q], p.state_index[q]))
        path = []
        q = target
        while parent[q] is not None:
            path.append(parent[q])
            q = parent[q].src
        path.reverse()
        for t in path:
            assert pool[t.msg] > 0, "walking consumed more messages than emitted"
            steps.append((t.name, 1))
            pool[t.msg] -= 1
            agents[t.src] -= 1
            agents[t.dst] = agents.get(t.dst, 0) + 1
        emit(target)

    base = Configuration(z.agents)
    run = Run(base, tuple(steps)).normalized()
    result = apply_run(p, run)
    floor = z.agents.size() * n
    assert all(c >= floor for _, c in result.messages.items()), "present type below its floor"
    dist, _ = _receive_bfs(p, agents, {m for m, c in pool.items() if c})
    assert all(q in emitted for q in dist), "reachable state never broadcast"
    return SaturatedConfig(base, result, run, tuple(emitted))


def flow_check(p: Protocol, ms: SaturatedConfig, z_target: Configuration) -> bool:
    """Can the saturated configuration redistribute its agents into z_target?

    Receives of present message types move agents; each agent needs at most
    |Q|-1 hops, and saturation keeps every present type plentiful, so exact
    integer max-flow on a layered state-copy graph decides reachability of
    the placement.
    """
    if p.model != "DO":
        raise ValueError("agent-flow checks are defined for DO protocols")
    if z_target.messages:
        raise ValueError("the target placement must be zero-message")
    total = z_target.agents.size()
    if ms.base.agents.size() != total:
        raise ValueError("agent counts differ")
    if total == 0:
        return True
    n = len(p.states)
    present = set(ms.result.messages.support())
    moves: dict[str, set[str]] = {}
    for t in p.transitions:
        if isinstance(t, RecvTrans) and t.msg in present:
            moves.setdefault(t.src, set()).add(t.dst)
    g = nx.DiGraph()
    for q, c in ms.result.agents.items():
        g.add_edge("s", (1, q), capacity=c)
    for q, c in z_target.agents.items():
        g.add_edge((n, q), "t", capacity=c)
    for i in range(1, n):
        for q in p.states:
            g.add_edge((i, q), (i + 1, q))
            for dst in sorted(moves.get(q, ())):
                g.add_edge((i, q), (i + 1, dst))
    return nx.maximum_flow_value(g, "s", "t", flow_func=edmonds_karp) == total


def check_instance_do_sigma2(
    p: Protocol, d: Multiset, b: int, budget: Optional[int] = None
) -> Verdict:
    """DO instance check by saturation and flow, no SCC analysis.

    The protocol fails to compute b on d exactly when some reachable
    zero-message placement Z (a) can reach a placement holding an agent with
    the wrong output and (b) is recoverable: from every placement reachable
    from Z, the saturated configuration can redistribute its agents back to
    Z.  Such a Z supports a fair run that revisits the wrong output forever.
    """
    if p.model != "DO":
        raise ValueError("the saturation route needs a DO protocol")
    if b not in (0, 1):
        raise ValueError("expected consensus must be 0 or 1")
    pm = corresponding_mfdo(p)
    c0 = p.initial(d)
    cache: dict = {}
    sats: dict[Multiset, SaturatedConfig] = {}

    def saturated(z: Multiset) -> SaturatedConfig:
        ms = sats.get(z)
        if ms is None:
            ms = sats[z] = saturate(p, Configuration(z))
        return ms

    size = c0.agents.size()
    for z in _zm_successors(pm, c0.agents, budget, cache):
        reach_z = _zm_successors(pm, z, budget, cache)
        off = [m for m in reach_z if p.config_output(Configuration(m)) != b]
        if not off:
            continue
        if all(flow_check(p, saturated(zp), Configuration(z)) for zp in reach_z):
            steps = _mfdo_leg(pm, c0.agents, z, budget) + _mfdo_leg(pm, z, off[0], budget)
            mrun = Run(Configuration(c0.agents), tuple(steps)).normalized()
            do_run = mfdo_to_do_run(p, pm, mrun)
            witness = Witness(d, Configuration(off[0]), do_run, b)
            return Verdict(False, witness, "kernel", size, True)
    return Verdict(True, None, "kernel", size, True)


# ---------------------------------------------------------------------------
# all-instance checks


def _check_predicate(p: Protocol, phi) -> None:
    if set(phi.names) != set(p.alphabet):
        raise ValueError("predicate symbols do not match the protocol inputs")


def _inputs_of_size(alphabet, size: int) -> Iterator[Multiset]:
    """Input populations with exactly `size` agents, first symbol greedy."""
    syms = tuple(alphabet)
    if not syms:
        return

    def rec(i: int, left: int, acc: dict) -> Iterator[Multiset]:
        if i == len(syms) - 1:
            if left:
                acc = {**acc, syms[i]: left}
            yield Multiset(acc)
            return
        for c in range(left, -1, -1):
            yield from rec(i + 1, left - c, {**acc, syms[i]: c} if c else acc)

    yield from rec(0, size, {})


def _min_population_size(gamma) -> int:
    """Smallest population size (>= 2) admitted by a nonempty constraint."""
    best = None
    for c in gamma.cubes:
        lo, hi = c.size_range()
        s = max(2, lo)
        if hi is not None and s > hi:
            continue
        if best is None or s < best:
            best = s
    assert best is not None, "no population of size >= 2 satisfies the constraint"
    return best


def _sweep(p, phi, cap: int, bound: int, budget, msg_cap=None) -> Optional[Witness]:
    """First failing input of size 2..cap, or None when the sweep is clean."""
    cache: Optional[dict] = {} if p.model == "DO" else None
    for size in range(2, cap + 1):
        for d in _inputs_of_size(p.alphabet, size):
            b = phi.evaluate(d)
            try:
                if cache is not None:
                    v = _check_instance_do(p, p.initial(d), b, budget, cache)
                else:
                    v = check_instance(p, p.initial(d), b, bound=msg_cap, budget=budget)
            except BudgetExceeded as e:
                raise BudgetExceeded(
                    f"{e}; size bound {bound}, sizes below {size} checked"
                ) from e
            if not v.correct:
                return Witness(d, v.witness.config, v.witness.run, b)
    return None


def _predicate_witness(p, phi, b: int, size: int, budget) -> Witness:
    """Failing input of exactly `size` agents with phi = b (must exist)."""
    for d in _inputs_of_size(p.alphabet, size):
        if phi.evaluate(d) != b:
            continue
        v = check_instance(p, p.initial(d), b, budget=budget)
        if not v.correct:
            return Witness(d, v.witness.config, v.witness.run, b)
    raise AssertionError("population violation without an input witness at its size")


def _exact_closure(star, p, gamma, budget):
    out = star(p, gamma, budget=budget)
    if out.note is not None:
        raise RuntimeError(f"symbolic route lost exactness: {out.note}")
    return out


def check_correct_io(
    p: Protocol,
    phi,
    method: Optional[str] = None,
    max_size: Optional[int] = None,
    budget: Optional[int] = None,
) -> Verdict:
    """Does the protocol compute phi on every input population (size >= 2)?

    symbolic: incorrect iff some configuration reachable from an initial set
    can never reach the matching stable consensus; decided by counting
    constraints and an emptiness test.
    witness-bound: any violation shows up at a population size within a bound
    B computed from the norms of the actual initial and stable sets, so
    sweeping the instance kernel over sizes 2..B decides it; `max_size` caps
    the sweep (verdict incomplete when the cap is below B).
    """
    if p.model != "IO":
        raise ValueError("all-instance verdicts here need an IO protocol")
    _check_predicate(p, phi)
    if method is None:
        method = "symbolic"
    if method not in ("symbolic", "witness-bound"):
        raise ValueError(f"unknown method {method!r}")
    n = len(p.states)
    pieces = [(b, initial_set(p, phi, b), stable_set(p, b)) for b in (0, 1)]
    bound = max(ib.lnorm() + n**3 + n * stab.unorm() + n for _, ib, stab in pieces)
    worst = max(ib.lnorm() for _, ib, _ in pieces) + n**3 + n * (n * n + n**4) + n
    if method == "symbolic":
        for b, ib, stab in pieces:
            reach = _exact_closure(counting.post_star, p, ib, budget)
            safe = _exact_closure(counting.pre_star, p, stab, budget)
            bad = counting.intersect(reach, counting.complement(safe))
            if not counting.is_empty_population(bad):
                w = _predicate_witness(p, phi, b, _min_population_size(bad), budget)
                return Verdict(False, w, "symbolic", bound, True, worst)
        return Verdict(True, None, "symbolic", bound, True, worst)
    cap = bound if max_size is None else min(bound, max_size)
    witness = _sweep(p, phi, cap, bound, budget)
    if witness is not None:
        return Verdict(False, witness, "witness-bound", cap, True, worst)
    return Verdict(True, None, "witness-bound", cap, cap >= bound, worst)


def check_correct_do(
    p: Protocol,
    phi,
    method: Optional[str] = None,
    max_size: Optional[int] = None,
    budget: Optional[int] = None,
) -> Verdict:
    """All-instance correctness for DO protocols (population sizes >= 2).

    kernel: sweep every input through the zero-message instance check, up to
    a bound computed from the actual initial/stable-set norms; when
    `max_size` is given the closures are skipped entirely and the sweep runs
    to max_size (verdict incomplete).
    symbolic: emptiness of reachable-but-never-stabilizing placements, via
    the zero-message closures.
    """
    if p.model != "DO":
        raise ValueError("this decider needs a DO protocol")
    _check_predicate(p, phi)
    if method is None:
        method = "kernel"
    if method not in ("kernel", "symbolic"):
        raise ValueError(f"unknown method {method!r}")
    n = len(p.states)
    worst = n**4 + 2 * n**3
    if method == "kernel" and max_size is not None:
        witness = _sweep(p, phi, max_size, max_size, budget)
        if witness is not None:
            return Verdict(False, witness, "kernel", max_size, True, worst)
        return Verdict(True, None, "kernel", max_size, False, worst)
    pieces = [(b, initial_set(p, phi, b), stable_set(p, b)) for b in (0, 1)]
    bound = max(ib.lnorm() + n**3 + n * stab.unorm() + n for _, ib, stab in pieces)
    if method == "symbolic":
        for b, ib, stab in pieces:
            reach = _exact_closure(counting.post_star_zm, p, ib, budget)
            safe = _exact_closure(counting.pre_star_zm, p, stab, budget)
            bad = counting.intersect(reach, counting.complement(safe))
            if not counting.is_empty_population(bad):
                w = _predicate_witness(p, phi, b, _min_population_size(bad), budget)
                return Verdict(False, w, "symbolic", bound, True, worst)
        return Verdict(True, None, "symbolic", bound, True, worst)
    witness = _sweep(p, phi, bound, bound, budget)
    if witness is not None:
        return Verdict(False, witness, "kernel", bound, True, worst)
    return Verdict(True, None, "kernel", bound, True, worst)


def check_correct_bounded(
    p: Protocol,
    phi,
    max_size: int,
    bound: Optional[int] = None,
    budget: Optional[int] = None,
) -> Verdict:
    """Sweep every input of size 2..max_size through the instance kernel.

    The only all-instance mode for models without counting closures (PP, IT,
    DT); a clean sweep proves nothing beyond max_size, so the verdict is
    always incomplete.  `bound` is the DT message cap.
    """
    if p.model == "QT":
        raise ValueError("QT protocols do not get convergence verdicts")
    _check_predicate(p, phi)
    witness = _sweep(p, phi, max_size, max_size, budget, msg_cap=bound)
    if witness is not None:
        return Verdict(False, witness, "kernel", max_size, True)
    return Verdict(True, None, "kernel", max_size, False)


# ---------------------------------------------------------------------------
# text form


def serialize_verdict(v: Verdict) -> str:
    lines = [
        f"verdict: {'correct' if v.correct else 'incorrect'}",
        f"method: {v.method}",
        f"bound: {v.bound_used}",
    ]
    if not v.complete:
        lines.append("coverage: bounded (sizes beyond the bound unchecked)")
    if v.worst_case_bound is not None:
        lines.append(f"worst-case bound: {v.worst_case_bound}")
    if v.witness is not None:
        w = v.witness
        if w.bit is not None:
            lines.append(f"expected consensus: {w.bit}")
        if w.input is not None:
            lines.append(f"witness input: {format_config(Configuration(w.input))}")
        lines.append(f"witness configuration: {format_config(w.config)}")
        if w.run is not None:
            lines.append("witness run:")
            lines.append(format_run(w.run).rstrip("\n"))
    return "\n".join(lines) + "\n"
