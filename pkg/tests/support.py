"""Shared test material: worked example protocols, seeded random protocol and
run generators, and independent oracles (plain reachability/SCC code kept
deliberately separate from the library's implementations)."""

import itertools
from collections import defaultdict, deque

from popverify import counting
from popverify.core import (
    Configuration,
    Multiset,
    ObsTrans,
    PairTrans,
    Protocol,
    RecvTrans,
    Run,
    SendTrans,
    enabled_steps,
    mfdo_seen_after,
)

# ---------------------------------------------------------------- examples


def io_example() -> Protocol:
    """Three-state observation protocol: q1 climbs to q2 and q3."""
    return Protocol(
        "IO",
        ["q1", "q2", "q3"],
        transitions=[
            ObsTrans("t1", "q1", "q1", "q2"),
            ObsTrans("t2", "q2", "q2", "q3"),
            ObsTrans("t3", "q1", "q3", "q3"),
            ObsTrans("t4", "q2", "q3", "q3"),
        ],
    )


def mfdo_example() -> Protocol:
    """Two producers meet: a and b turn into ab after observing each other."""
    return Protocol(
        "MFDO",
        ["a", "b", "ab"],
        transitions=[
            ObsTrans("t1", "a", "b", "ab"),
            ObsTrans("t2", "b", "a", "ab"),
        ],
    )


def do_example() -> Protocol:
    """Broadcast variant of the producers example: every state sends itself."""
    return Protocol(
        "DO",
        ["a", "b", "ab"],
        messages=["a", "b", "ab"],
        transitions=[
            SendTrans("sa", "a", "a", "a"),
            SendTrans("sb", "b", "b", "b"),
            SendTrans("sab", "ab", "ab", "ab"),
            RecvTrans("rab", "a", "b", "ab"),
            RecvTrans("rba", "b", "a", "ab"),
        ],
    )


FIG_A = ("q1", "q1", "q1", "q1", "q3", "q3", "q3")
FIG_B = ("q1", "q1", "q2", "q2", "q2", "q3", "q3")
FIG_C = ("q1", "q1", "q2", "q2", "q2", "q2", "q3")
FIG_D = ("q1", "q3", "q3", "q3", "q3", "q3", "q3")
FIG_E = ("q3",) * 7


# ------------------------------------------------------- random generation


def _states(n):
    return [f"s{i}" for i in range(n)]


def rand_pp(rng, max_states=4, max_trans=8) -> Protocol:
    qs = _states(rng.randint(2, max_states))
    trans = []
    used = set()
    for i in range(rng.randint(1, max_trans)):
        q1, q2 = rng.choice(qs), rng.choice(qs)
        if (q1, q2) in used:
            continue
        used.add((q1, q2))
        trans.append(PairTrans(f"t{i}", q1, q2, rng.choice(qs), rng.choice(qs)))
    return Protocol("PP", qs, transitions=trans)


def rand_it(rng, max_states=4) -> Protocol:
    qs = _states(rng.randint(2, max_states))
    delta1 = {q: (rng.choice(qs) if rng.random() < 0.4 else q) for q in qs}
    trans = []
    i = 0
    for q1 in qs:
        if delta1[q1] != q1:
            partners = qs  # moving initiators need every pair written
        else:
            partners = [q for q in qs if rng.random() < 0.5]
        for q2 in partners:
            trans.append(PairTrans(f"t{i}", q1, q2, delta1[q1], rng.choice(qs)))
            i += 1
    return Protocol("IT", qs, transitions=trans)


def rand_io(rng, max_states=4, max_trans=8) -> Protocol:
    qs = _states(rng.randint(2, max_states))
    trans = []
    used = set()
    for i in range(rng.randint(1, max_trans)):
        src, obs = rng.choice(qs), rng.choice(qs)
        if (src, obs) in used:
            continue
        used.add((src, obs))
        dst = rng.choice([q for q in qs if q != src] or qs)
        trans.append(ObsTrans(f"t{i}", src, obs, dst))
    return Protocol("IO", qs, transitions=trans)


def rand_mfdo(rng, max_states=4, max_trans=8) -> Protocol:
    p = rand_io(rng, max_states, max_trans)
    return Protocol("MFDO", p.states, transitions=p.transitions)


def rand_qt(rng, max_states=4, max_msgs=3) -> Protocol:
    qs = _states(rng.randint(2, max_states))
    ms = [f"m{i}" for i in range(rng.randint(1, max_msgs))]
    trans = []
    i = 0
    for q in qs:
        if rng.random() < 0.7:
            trans.append(SendTrans(f"t{i}", q, rng.choice(ms), rng.choice(qs)))
            i += 1
    for q in qs:
        for m in ms:
            if rng.random() < 0.5:
                trans.append(RecvTrans(f"t{i}", q, m, rng.choice(qs)))
                i += 1
    return Protocol("QT", qs, ms, trans)


def rand_dt(rng, max_states=4, max_msgs=3) -> Protocol:
    p = rand_qt(rng, max_states, max_msgs)
    return Protocol("DT", p.states, p.messages, p.transitions)


def rand_do(rng, max_states=4) -> Protocol:
    qs = _states(rng.randint(2, max_states))
    pool = [f"m{i}" for i in range(len(qs))]
    sends = {q: pool[rng.randrange(len(pool))] for q in qs}
    ms = sorted(set(sends.values()), key=pool.index)
    trans = [SendTrans(f"snd_{q}", q, sends[q], q) for q in qs]
    i = 0
    for q in qs:
        for m in ms:
            if rng.random() < 0.5:
                dst = rng.choice([x for x in qs if x != q] or qs)
                trans.append(RecvTrans(f"t{i}", q, m, dst))
                i += 1
    return Protocol("DO", qs, ms, trans)


RAND_BY_MODEL = {
    "PP": rand_pp,
    "IT": rand_it,
    "IO": rand_io,
    "QT": rand_qt,
    "DT": rand_dt,
    "DO": rand_do,
    "MFDO": rand_mfdo,
}


def rand_agents(rng, p: Protocol, n: int) -> Multiset:
    counts = defaultdict(int)
    for _ in range(n):
        counts[rng.choice(p.states)] += 1
    return Multiset(counts)


def random_walk(rng, p: Protocol, start: Configuration, max_steps: int, cap=None) -> Run:
    """A valid run sampled step by step; stops early when nothing is enabled."""
    c = start
    seen = frozenset(c.agents.support()) if p.model == "MFDO" else None
    names = []
    for _ in range(max_steps):
        options = enabled_steps(p, c, seen)
        if cap is not None:
            options = [(t, s) for t, s in options if s.messages.size() <= cap]
        if not options:
            break
        t, c = options[rng.randrange(len(options))]
        names.append(t.name)
        if seen is not None:
            seen = mfdo_seen_after(seen, t)
    return Run(start, tuple((n, 1) for n in names)).normalized()


def drain_messages(rng, p: Protocol, r: Run) -> Run:
    """Extend a QT/DT/DO run with receives until the pool is empty."""
    from popverify.core import apply_run

    c = apply_run(p, r)
    names = []
    while c.messages.size() > 0:
        options = [
            (t, s) for t, s in enabled_steps(p, c) if isinstance(t, RecvTrans)
        ]
        if not options:
            raise AssertionError("message pool cannot be drained")
        t, c = options[rng.randrange(len(options))]
        names.append(t.name)
    return Run(r.start, r.steps + tuple((n, 1) for n in names)).normalized()


# --------------------------------------------------------------- oracles


def min_aggregated_mfdo(p: Protocol, start: Configuration, goal: Multiset):
    """Fewest aggregated steps from start to goal agents (BFS over
    (configuration, seen) nodes where one edge applies a transition k times)."""
    root = (start.agents, frozenset(start.agents.support()))
    dist = {root: 0}
    queue = deque([root])
    while queue:
        agents, seen = queue.popleft()
        if agents == goal:
            return dist[(agents, seen)]
        for t in p.obs_view():
            if t.src == t.dst or t.obs not in seen or agents[t.src] < 1:
                continue
            for k in range(1, agents[t.src] + 1):
                nxt = (
                    agents - Multiset({t.src: k}) + Multiset({t.dst: k}),
                    seen | {t.dst},
                )
                if nxt not in dist:
                    dist[nxt] = dist[(agents, seen)] + 1
                    queue.append(nxt)
    return None


def scc_oracle(n_nodes: int, edges):
    """SCCs, bottom SCCs via plain reachability closure (no library calls)."""
    adj = defaultdict(set)
    for s, d in edges:
        adj[s].add(d)
    reach = []
    for i in range(n_nodes):
        seen = {i}
        stack = [i]
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        reach.append(seen)
    comp_of = {}
    comps = []
    for i in range(n_nodes):
        if i in comp_of:
            continue
        members = sorted(j for j in reach[i] if i in reach[j])
        for j in members:
            comp_of[j] = len(comps)
        comps.append(members)
    bottoms = set()
    for ci, members in enumerate(comps):
        if all(comp_of[d] == ci for s in members for d in adj[s]):
            bottoms.add(ci)
    return comps, comp_of, bottoms


def obs_rules(p: Protocol):
    """(src, obs, dst) triples of a protocol's observation transitions."""
    out = []
    for t in p.transitions:
        if isinstance(t, ObsTrans):
            out.append((t.src, t.obs, t.dst))
        else:
            out.append((t.q2, t.q1, t.q4))
    return out


def vectors_of_size(total: int, k: int):
    if k == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for rest in vectors_of_size(total - head, k - 1):
            yield (head,) + rest


def _seen_supersets(states, vec):
    support = frozenset(q for q, v in zip(states, vec) if v)
    rest = [q for q in states if q not in support]
    for k in range(len(rest) + 1):
        for extra in itertools.combinations(rest, k):
            yield support | frozenset(extra)


def closure_members(p: Protocol, member_fn, max_size: int, post: bool = False):
    """Explicit-search oracle for pre*/post* membership, size by size.

    member_fn takes a count vector in state order.  Returns the set of
    vectors (total size <= max_size) that can reach the member set (pre*) or
    be reached from it (post*).  Agent count is conserved, so each size is
    searched independently.
    """
    states = tuple(p.states)
    rules = obs_rules(p)
    pos = {q: i for i, q in enumerate(states)}
    mfdo = p.model == "MFDO"
    result = set()
    for s in range(max_size + 1):
        vecs = list(vectors_of_size(s, len(states)))
        if mfdo:
            nodes = [(v, seen) for v in vecs for seen in _seen_supersets(states, v)]
        else:
            nodes = vecs
        index = {node: i for i, node in enumerate(nodes)}
        succs = [[] for _ in nodes]
        preds = [[] for _ in nodes]
        for i, node in enumerate(nodes):
            vec, seen = node if mfdo else (node, None)
            for src, obs, dst in rules:
                if src == dst or vec[pos[src]] < 1:
                    continue
                if mfdo:
                    if obs not in seen:
                        continue
                elif vec[pos[obs]] < (2 if obs == src else 1):
                    continue
                nv = list(vec)
                nv[pos[src]] -= 1
                nv[pos[dst]] += 1
                nxt = (tuple(nv), seen | {dst}) if mfdo else tuple(nv)
                j = index[nxt]
                succs[i].append(j)
                preds[j].append(i)
        if post:
            frontier = deque()
            reached = set()
            for i, node in enumerate(nodes):
                vec = node[0] if mfdo else node
                if mfdo and node[1] != frozenset(q for q, v in zip(states, vec) if v):
                    continue
                if member_fn(vec):
                    reached.add(i)
                    frontier.append(i)
            while frontier:
                i = frontier.popleft()
                for j in succs[i]:
                    if j not in reached:
                        reached.add(j)
                        frontier.append(j)
            result.update(nodes[i][0] if mfdo else nodes[i] for i in reached)
        else:
            frontier = deque()
            reached = set()
            for i, node in enumerate(nodes):
                vec = node[0] if mfdo else node
                if member_fn(vec):
                    reached.add(i)
                    frontier.append(i)
            while frontier:
                j = frontier.popleft()
                for i in preds[j]:
                    if i not in reached:
                        reached.add(i)
                        frontier.append(i)
            for i in reached:
                if mfdo:
                    vec, seen = nodes[i]
                    if seen == frozenset(q for q, v in zip(states, vec) if v):
                        result.add(vec)
                else:
                    result.add(nodes[i])
    return result


def rand_cube(rng, names, max_l=3, max_u=3):
    lo = {q: 0 for q in names}
    for _ in range(rng.randint(0, max_l)):
        lo[rng.choice(names)] += 1
    hi = {q: None for q in names}
    room = max_u
    for q in rng.sample(list(names), k=rng.randint(0, len(names))):
        if room <= 0:
            break
        v = rng.randint(0, room)
        hi[q] = v
        room -= v
    return counting.Cube(names, lo, hi)


def rand_constraint(rng, names, max_cubes=3, max_l=3, max_u=3):
    k = rng.randint(0, max_cubes)
    return counting.CountingConstraint(
        names, [rand_cube(rng, names, max_l, max_u) for _ in range(k)]
    )
