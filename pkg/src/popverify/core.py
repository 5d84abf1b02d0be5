"""Protocol models and step semantics.

Agents are anonymous and finite-state; a configuration counts agents per state
(and, for message-based models, undelivered messages per type).  Seven models
share one Protocol type:

  PP    pairwise rendezvous, both agents may change state
  IT    immediate transmission: sender's new state independent of receiver
  IO    immediate observation: observed agent unchanged
  QT    queued transmission: send/receive via a message pool, both partial
  DT    delayed transmission: every state can receive every message
  DO    delayed observation: DT where senders broadcast their own state
  MFDO  message-free delayed observation: an agent may move when the state it
        observes has been populated at some earlier point of the run
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Union

MODELS = ("PP", "IT", "IO", "QT", "DT", "DO", "MFDO")
IMMEDIATE_MODELS = ("PP", "IT", "IO", "MFDO")
DELAYED_MODELS = ("QT", "DT", "DO")

DEFAULT_NODE_BUDGET = 10_000_000


def node_budget(override: Optional[int] = None) -> int:
    if override is not None:
        return override
    env = os.environ.get("POPV_NODE_BUDGET")
    return int(env) if env else DEFAULT_NODE_BUDGET


class BudgetExceeded(Exception):
    """Raised when an explicit search outgrows its node budget."""


class Multiset:
    """Immutable multiset with componentwise arithmetic and ordering."""

    __slots__ = ("_counts", "_items", "_size", "_hash")

    def __init__(self, counts: Union[Mapping[str, int], Iterable[tuple[str, int]], None] = None):
        d: dict[str, int] = {}
        if counts:
            pairs = counts.items() if isinstance(counts, Mapping) else counts
            for elem, n in pairs:
                if n < 0:
                    raise ValueError(f"negative count for {elem!r}")
                if n:
                    d[elem] = d.get(elem, 0) + n
        items = tuple(sorted(d.items()))
        object.__setattr__(self, "_counts", dict(items))
        object.__setattr__(self, "_items", items)
        object.__setattr__(self, "_size", sum(d.values()))
        object.__setattr__(self, "_hash", hash(items))

    @classmethod
    def from_elements(cls, elems: Iterable[str]) -> "Multiset":
        return cls((e, 1) for e in elems)

    def __setattr__(self, name, value):
        raise AttributeError("Multiset is immutable")

    def __getitem__(self, elem: str) -> int:
        return self._counts.get(elem, 0)

    def items(self) -> tuple[tuple[str, int], ...]:
        return self._items

    def elements(self) -> Iterator[str]:
        for elem, n in self._items:
            for _ in range(n):
                yield elem

    def support(self) -> frozenset:
        return frozenset(self._counts)

    def size(self) -> int:
        return self._size

    def __len__(self) -> int:
        return self._size

    def __bool__(self) -> bool:
        return self._size > 0

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        return isinstance(other, Multiset) and self._items == other._items

    def __le__(self, other: "Multiset") -> bool:
        return all(n <= other[e] for e, n in self._items)

    def __ge__(self, other: "Multiset") -> bool:
        return other.__le__(self)

    def __add__(self, other: "Multiset") -> "Multiset":
        d = dict(self._counts)
        for e, n in other._items:
            d[e] = d.get(e, 0) + n
        return Multiset(d)

    def __sub__(self, other: "Multiset") -> "Multiset":
        d = dict(self._counts)
        for e, n in other._items:
            have = d.get(e, 0)
            if have < n:
                raise ValueError(f"cannot remove {n} x {e!r}: only {have} present")
            d[e] = have - n
        return Multiset(d)

    def max_with(self, other: "Multiset") -> "Multiset":
        d = dict(self._counts)
        for e, n in other._items:
            if n > d.get(e, 0):
                d[e] = n
        return Multiset(d)

    def add(self, elem: str, n: int = 1) -> "Multiset":
        return self + Multiset({elem: n})

    def remove(self, elem: str, n: int = 1) -> "Multiset":
        return self - Multiset({elem: n})

    def __repr__(self) -> str:
        inner = ", ".join(f"{e}:{n}" for e, n in self._items)
        return "{" + inner + "}"


EMPTY = Multiset()


@dataclass(frozen=True)
class Configuration:
    """Agent counts plus (for message-based models) pending message counts."""

    agents: Multiset
    messages: Multiset = EMPTY

    def is_zero_message(self) -> bool:
        return self.messages.size() == 0

    def size(self) -> int:
        return self.agents.size() + self.messages.size()

    def __repr__(self) -> str:
        if self.messages:
            return f"{self.agents!r}|{self.messages!r}"
        return repr(self.agents)


@dataclass(frozen=True)
class PairTrans:
    """Rendezvous (q1, q2) -> (q3, q4); q1 is the initiator/observed side."""

    name: str
    q1: str
    q2: str
    q3: str
    q4: str


@dataclass(frozen=True)
class ObsTrans:
    """src moves to dst after observing obs; the observed agent is untouched."""

    name: str
    src: str
    obs: str
    dst: str


@dataclass(frozen=True)
class SendTrans:
    name: str
    src: str
    msg: str
    dst: str


@dataclass(frozen=True)
class RecvTrans:
    name: str
    src: str
    msg: str
    dst: str


Transition = Union[PairTrans, ObsTrans, SendTrans, RecvTrans]


@dataclass(frozen=True)
class Run:
    """A start configuration plus (transition name, multiplicity) blocks.

    Multiplicity 0 marks an explicit stutter and replays as a no-op; a
    normalized run has no stutters and no equal adjacent transitions.
    """

    start: Configuration
    steps: tuple[tuple[str, int], ...] = ()

    def normalized(self) -> "Run":
        out: list[tuple[str, int]] = []
        for name, k in self.steps:
            if k == 0:
                continue
            if out and out[-1][0] == name:
                out[-1] = (name, out[-1][1] + k)
            else:
                out.append((name, k))
        return Run(self.start, tuple(out))

    def aggregated_length(self) -> int:
        return len(self.normalized().steps)

    def total_steps(self) -> int:
        return sum(k for _, k in self.steps)


class Protocol:
    """A protocol over states (and messages), with input/output decorations.

    `transitions` keeps file order; names must be unique.  `inputs` maps input
    symbols to states, `outputs` maps every state to 0 or 1 (both may be empty
    for bare reachability work).  For DT/DO, receive pairs left unwritten act
    as identity receives; `completed_receives` lists those.
    """

    def __init__(
        self,
        model: str,
        states: Iterable[str],
        messages: Iterable[str] = (),
        transitions: Iterable[Transition] = (),
        inputs: Iterable[tuple[str, str]] = (),
        outputs: Iterable[tuple[str, int]] = (),
    ):
        if model not in MODELS:
            raise ValueError(f"unknown model {model!r}")
        self.model = model
        self.states = tuple(states)
        self.messages = tuple(messages)
        self.transitions = tuple(transitions)
        self.inputs = tuple(inputs)
        self.outputs = tuple(outputs)

        if len(set(self.states)) != len(self.states):
            raise ValueError("duplicate states")
        if len(set(self.messages)) != len(self.messages):
            raise ValueError("duplicate messages")
        self.state_index = {q: i for i, q in enumerate(self.states)}
        self.msg_index = {m: i for i, m in enumerate(self.messages)}

        names = [t.name for t in self.transitions]
        if len(set(names)) != len(names):
            raise ValueError("duplicate transition names")
        self.by_name = {t.name: t for t in self.transitions}
        self.declared_order = {t.name: i for i, t in enumerate(self.transitions)}
        for t in self.transitions:
            self._check_refs(t)

        self.input_map = dict(self.inputs)
        self.output_map = dict(self.outputs)
        self.alphabet = tuple(s for s, _ in self.inputs)
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ValueError("duplicate input symbols")
        for s, q in self.inputs:
            if q not in self.state_index:
                raise ValueError(f"input symbol {s!r} maps to unknown state {q!r}")
        for q, b in self.outputs:
            if q not in self.state_index:
                raise ValueError(f"output for unknown state {q!r}")
            if b not in (0, 1):
                raise ValueError(f"output of {q!r} must be 0 or 1")

        self.completed_receives: tuple[RecvTrans, ...] = ()
        if model in ("DT", "DO"):
            declared = {(t.src, t.msg) for t in self.transitions if isinstance(t, RecvTrans)}
            completed = []
            for q in self.states:
                for m in self.messages:
                    if (q, m) not in declared:
                        name = f"{q}?{m}"
                        if name in self.by_name:
                            raise ValueError(f"transition name {name!r} collides with an identity receive")
                        completed.append(RecvTrans(name, q, m, q))
            self.completed_receives = tuple(completed)
            self.by_name.update({t.name: t for t in completed})

    def _check_refs(self, t: Transition) -> None:
        if isinstance(t, PairTrans):
            refs, msgs = (t.q1, t.q2, t.q3, t.q4), ()
        elif isinstance(t, ObsTrans):
            refs, msgs = (t.src, t.obs, t.dst), ()
        else:
            refs, msgs = (t.src, t.dst), (t.msg,)
        for q in refs:
            if q not in self.state_index:
                raise ValueError(f"transition {t.name}: unknown state {q!r}")
        for m in msgs:
            if m not in self.msg_index:
                raise ValueError(f"transition {t.name}: unknown message {m!r}")

    def transition(self, name: str) -> Transition:
        t = self.by_name.get(name)
        if t is None:
            raise KeyError(f"no transition named {name!r}")
        return t

    def output(self, q: str) -> int:
        b = self.output_map.get(q)
        if b is None:
            raise ValueError(f"state {q!r} has no output")
        return b

    def config_output(self, c: Configuration) -> Optional[int]:
        """Consensus output of c: b when every agent outputs b, else None."""
        vals = {self.output(q) for q, _ in c.agents.items()}
        return vals.pop() if len(vals) == 1 else None

    def initial(self, d: Multiset) -> Configuration:
        """Map an input population (over the alphabet) to its start configuration."""
        agents: dict[str, int] = {}
        for sym, n in d.items():
            q = self.input_map.get(sym)
            if q is None:
                raise ValueError(f"unknown input symbol {sym!r}")
            agents[q] = agents.get(q, 0) + n
        return Configuration(Multiset(agents))

    def pair_view(self) -> list[PairTrans]:
        """Declared transitions as rendezvous pairs (observations included)."""
        out = []
        for t in self.transitions:
            if isinstance(t, PairTrans):
                out.append(t)
            elif isinstance(t, ObsTrans):
                out.append(PairTrans(t.name, t.obs, t.src, t.obs, t.dst))
            else:
                raise ValueError(f"transition {t.name} has no rendezvous form")
        return out

    def obs_view(self) -> list[ObsTrans]:
        """Declared transitions as observations, when they qualify."""
        out = []
        for t in self.transitions:
            if isinstance(t, ObsTrans):
                out.append(t)
            elif isinstance(t, PairTrans) and t.q1 == t.q3:
                out.append(ObsTrans(t.name, t.q2, t.q1, t.q4))
            else:
                raise ValueError(f"transition {t.name} has no observation form")
        return out

    def send_of(self, q: str) -> list[SendTrans]:
        return [t for t in self.transitions if isinstance(t, SendTrans) and t.src == q]

    def recv_of(self, q: str, m: str) -> list[RecvTrans]:
        declared = [
            t for t in self.transitions if isinstance(t, RecvTrans) and t.src == q and t.msg == m
        ]
        if declared or self.model == "QT":
            return declared
        return [t for t in self.completed_receives if t.src == q and t.msg == m]


def validate_protocol(p: Protocol) -> list[str]:
    """Structural restrictions of p's declared model; empty list means valid."""
    v: list[str] = []
    model = p.model

    if model in IMMEDIATE_MODELS:
        if p.messages:
            v.append(f"{model} declares messages but has no message component")
        bad = [t.name for t in p.transitions if isinstance(t, (SendTrans, RecvTrans))]
        if bad:
            v.append(f"{model} has send/receive transitions: {', '.join(bad)}")
            return v
        try:
            pairs = p.pair_view()
        except ValueError as e:
            v.append(str(e))
            return v
        seen_keys: dict[tuple[str, str], str] = {}
        for t in pairs:
            key = (t.q1, t.q2)
            if key in seen_keys:
                v.append(f"transitions {seen_keys[key]} and {t.name} both define the pair {key}")
            else:
                seen_keys[key] = t.name
        if model == "IT":
            first: dict[str, str] = {}
            for t in pairs:
                q3 = first.setdefault(t.q1, t.q3)
                if q3 != t.q3:
                    v.append(
                        f"transition {t.name}: initiator {t.q1} moves to {t.q3}, elsewhere to {q3}"
                    )
            for q1, q3 in sorted(first.items()):
                written = {t.q2 for t in pairs if t.q1 == q1}
                if q3 != q1 and written != set(p.states):
                    v.append(
                        f"initiator {q1} moves to {q3} but pairs with "
                        f"{sorted(set(p.states) - written)} are unwritten (identity)"
                    )
        if model in ("IO", "MFDO"):
            for t in pairs:
                if t.q1 != t.q3:
                    v.append(f"transition {t.name}: observed agent changes state {t.q1} -> {t.q3}")
    else:
        bad = [t.name for t in p.transitions if isinstance(t, (PairTrans, ObsTrans))]
        if bad:
            v.append(f"{model} needs send/receive transitions, got rendezvous/observation: {', '.join(bad)}")
            return v
        if not p.messages:
            v.append(f"{model} declares no messages")
        send_src: dict[str, str] = {}
        for t in p.transitions:
            if isinstance(t, SendTrans):
                if t.src in send_src:
                    v.append(f"transitions {send_src[t.src]} and {t.name} both send from {t.src}")
                else:
                    send_src[t.src] = t.name
                if model == "DO" and t.dst != t.src:
                    v.append(f"transition {t.name}: sender state changes {t.src} -> {t.dst}")
        recv_key: dict[tuple[str, str], str] = {}
        for t in p.transitions:
            if isinstance(t, RecvTrans):
                key = (t.src, t.msg)
                if key in recv_key:
                    v.append(f"transitions {recv_key[key]} and {t.name} both receive {key}")
                else:
                    recv_key[key] = t.name
        if model == "DO":
            for q in p.states:
                if q not in send_src:
                    v.append(f"state {q} sends nothing (broadcast of own state required)")
    return v


def completion_notes(p: Protocol) -> list[str]:
    """Informational notes about defaults applied on top of the declared text."""
    if p.completed_receives:
        pairs = ", ".join(f"({t.src},{t.msg})" for t in p.completed_receives)
        return [f"identity receives assumed for unwritten pairs: {pairs}"]
    return []


def _pair_steps(p: Protocol, c: Configuration):
    for t in p.pair_view():
        need = Multiset.from_elements((t.q1, t.q2))
        if need <= c.agents:
            agents = c.agents - need + Multiset.from_elements((t.q3, t.q4))
            if agents != c.agents:
                yield t, Configuration(agents)


def enabled_steps(
    p: Protocol,
    c: Configuration,
    seen: Optional[frozenset] = None,
) -> list[tuple[Transition, Configuration]]:
    """All one-step successors of c (no-op steps omitted; the step relation is
    reflexive regardless).  MFDO needs the set of states populated so far."""
    for q, _ in c.agents.items():
        if q not in p.state_index:
            raise ValueError(f"configuration references unknown state {q!r}")
    for m, _ in c.messages.items():
        if m not in p.msg_index:
            raise ValueError(f"configuration references unknown message {m!r}")

    if p.model == "MFDO":
        if seen is None:
            raise ValueError("MFDO stepping needs the seen-state set")
        if not c.agents.support() <= seen:
            raise ValueError("seen set must contain every populated state")
        out = []
        for t in p.obs_view():
            if t.src != t.dst and c.agents[t.src] >= 1 and t.obs in seen:
                out.append((t, Configuration(c.agents.remove(t.src).add(t.dst))))
        return out
    if seen is not None:
        raise ValueError(f"seen set is only meaningful for MFDO, not {p.model}")

    if p.model in ("PP", "IT", "IO"):
        return list(_pair_steps(p, c))

    out = []
    for t in p.transitions:
        if isinstance(t, SendTrans) and c.agents[t.src] >= 1:
            agents = c.agents.remove(t.src).add(t.dst)
            out.append((t, Configuration(agents, c.messages.add(t.msg))))
    for m, _ in c.messages.items():
        for q, _ in c.agents.items():
            for t in p.recv_of(q, m):
                agents = c.agents.remove(t.src).add(t.dst)
                out.append((t, Configuration(agents, c.messages.remove(t.msg))))
    out.sort(key=lambda pair: _step_order(p, pair[0]))
    return out


def _step_order(p: Protocol, t: Transition):
    i = p.declared_order.get(t.name)
    if i is not None:
        return (0, i)
    return (1, p.state_index[t.src], p.msg_index[t.msg])


def mfdo_seen_after(seen: frozenset, t: Transition) -> frozenset:
    dst = t.q4 if isinstance(t, PairTrans) else t.dst
    return seen | {dst}


def apply_run(p: Protocol, r: Run) -> Configuration:
    """Replay r and return the final configuration; fails on the first disabled step."""
    c = r.start
    seen = frozenset(c.agents.support()) if p.model == "MFDO" else None
    for idx, (name, k) in enumerate(r.steps):
        t = p.transition(name)
        for j in range(k):
            nxt = _apply_one(p, c, t, seen)
            if nxt is None:
                raise ValueError(
                    f"step {idx} ({name}^{k}): not enabled after {j} of {k} applications"
                )
            c = nxt
            if seen is not None:
                seen = mfdo_seen_after(seen, t)
    return c


def _apply_one(p, c, t, seen):
    if p.model == "MFDO":
        if isinstance(t, PairTrans):
            t = ObsTrans(t.name, t.q2, t.q1, t.q4)
        if c.agents[t.src] < 1 or t.obs not in seen:
            return None
        return Configuration(c.agents.remove(t.src).add(t.dst))
    if p.model in ("PP", "IT", "IO"):
        if isinstance(t, ObsTrans):
            t = PairTrans(t.name, t.obs, t.src, t.obs, t.dst)
        need = Multiset.from_elements((t.q1, t.q2))
        if not need <= c.agents:
            return None
        return Configuration(c.agents - need + Multiset.from_elements((t.q3, t.q4)))
    if isinstance(t, SendTrans):
        if c.agents[t.src] < 1:
            return None
        return Configuration(c.agents.remove(t.src).add(t.dst), c.messages.add(t.msg))
    if isinstance(t, RecvTrans):
        if c.agents[t.src] < 1 or c.messages[t.msg] < 1:
            return None
        return Configuration(c.agents.remove(t.src).add(t.dst), c.messages.remove(t.msg))
    raise TypeError(f"cannot apply {t!r} under model {p.model}")


Node = Union[Configuration, tuple[Configuration, frozenset]]


@dataclass
class ReachGraph:
    nodes: list
    edges: list[tuple[int, str, int]]
    roots: list[int]
    index: dict = field(repr=False)
    truncated: bool = False  # some successor fell outside the message cap

    def successors(self, i: int) -> list[tuple[str, int]]:
        return [(lbl, dst) for src, lbl, dst in self.edges if src == i]


def reach_graph(
    p: Protocol,
    roots: Iterable[Configuration],
    bound: Optional[int] = None,
    budget: Optional[int] = None,
) -> ReachGraph:
    """Explicit graph of everything reachable from roots.

    MFDO nodes are (configuration, seen-set) pairs.  Message-based models need
    `bound`, a cap on the total message count: successors beyond the cap are
    cut (and the graph marked truncated), making the search a semi-decision.
    """
    budget = node_budget(budget)
    mfdo = p.model == "MFDO"
    delayed = p.model in DELAYED_MODELS
    if delayed and bound is None:
        raise ValueError(f"{p.model} reachability needs a message cap")

    nodes: list = []
    index: dict = {}
    edges: list[tuple[int, str, int]] = []
    root_ids = []
    truncated = False

    def intern(node) -> int:
        i = index.get(node)
        if i is None:
            if len(nodes) >= budget:
                raise BudgetExceeded(f"reachability graph exceeds {budget} nodes")
            i = len(nodes)
            index[node] = i
            nodes.append(node)
        return i

    frontier = []
    for c in roots:
        node = (c, frozenset(c.agents.support())) if mfdo else c
        i = intern(node)
        root_ids.append(i)
        frontier.append(i)

    head = 0
    while head < len(frontier):
        i = frontier[head]
        head += 1
        node = nodes[i]
        if mfdo:
            c, seen = node
            steps = enabled_steps(p, c, seen)
        else:
            c = node
            steps = enabled_steps(p, c)
        for t, succ in steps:
            if delayed and succ.messages.size() > bound:
                truncated = True
                continue
            nxt = (succ, mfdo_seen_after(seen, t)) if mfdo else succ
            known = nxt in index
            j = intern(nxt)
            edges.append((i, t.name, j))
            if not known:
                frontier.append(j)
    return ReachGraph(nodes, edges, root_ids, index, truncated)


def bottom_scc_analysis(g: ReachGraph, p: Protocol):
    """SCC partition, bottom SCCs, and each bottom SCC's consensus value.

    Returns (sccs, bottom_ids, consensus) where sccs is a list of sorted node
    lists, bottom_ids indexes SCCs without outgoing edges, and consensus maps
    each bottom SCC index to 0/1 when every member agrees, else None.
    """
    import networkx as nx

    dg = nx.DiGraph()
    dg.add_nodes_from(range(len(g.nodes)))
    dg.add_edges_from((s, d) for s, _, d in g.edges)
    comp = list(nx.strongly_connected_components(dg))
    comp = [sorted(c) for c in comp]
    comp.sort(key=lambda c: c[0])
    scc_of = {}
    for ci, members in enumerate(comp):
        for n in members:
            scc_of[n] = ci
    outgoing = set()
    for s, _, d in g.edges:
        if scc_of[s] != scc_of[d]:
            outgoing.add(scc_of[s])
    bottom = [ci for ci in range(len(comp)) if ci not in outgoing]
    consensus: dict[int, Optional[int]] = {}
    for ci in bottom:
        vals = set()
        for n in comp[ci]:
            node = g.nodes[n]
            c = node[0] if isinstance(node, tuple) else node
            vals.add(p.config_output(c))
        consensus[ci] = vals.pop() if len(vals) == 1 and None not in vals else None
    return comp, bottom, consensus


def corresponding_mfdo(p: Protocol) -> Protocol:
    """Message-free image of a DO protocol over the same states.

    An observation q -o-> q' exists for every receive (q, m) -> q' with q != q'
    and every state o broadcasting m.  Zero-message reachability agrees between
    the two protocols, which lets message-free analyses stand in for DO ones.
    """
    if p.model != "DO":
        raise ValueError(f"corresponding MFDO is defined for DO protocols, not {p.model}")
    senders: dict[str, list[str]] = {}
    for q in p.states:
        for t in p.send_of(q):
            senders.setdefault(t.msg, []).append(q)
    transitions = []
    for t in p.transitions:
        if isinstance(t, RecvTrans) and t.src != t.dst:
            for o in senders.get(t.msg, ()):
                transitions.append(ObsTrans(f"{t.name}@{o}", t.src, o, t.dst))
    return Protocol(
        "MFDO",
        p.states,
        transitions=transitions,
        inputs=p.inputs,
        outputs=p.outputs,
    )


def initial_set(p: Protocol, phi, b: int):
    """Counting constraint over states for the inputs D with phi(D) = b.

    Requires an injective input mapping; the constraint re-indexes the
    predicate's constraint (or its complement for b=0) to the image states and
    pins non-image states to [0,0].
    """
    from . import counting

    if len(set(p.input_map.values())) != len(p.input_map):
        raise ValueError("input mapping must be injective for symbolic initial sets")
    gamma = phi.constraint if b == 1 else counting.complement(phi.constraint)
    cubes = []
    for cube in gamma.cubes:
        lo = {}
        hi = {}
        for q in p.states:
            lo[q], hi[q] = 0, 0
        for sym, q in p.inputs:
            lo[q] = cube.lo[sym]
            hi[q] = cube.hi[sym]
        cubes.append(counting.Cube(p.states, lo, hi))
    return counting.CountingConstraint(p.states, cubes).canonical()


def consensus_set(p: Protocol, b: int):
    """All configurations whose agents unanimously output b (as a constraint)."""
    from . import counting

    hi = {q: (0 if p.output(q) == 1 - b else None) for q in p.states}
    cube = counting.Cube(p.states, {q: 0 for q in p.states}, hi)
    return counting.CountingConstraint(p.states, [cube])


# ---------------------------------------------------------------------------
# text forms for configurations and runs


_COUNT_ITEM = re.compile(r"^([^\s:,{}|]+)\s*:\s*(\d+)$")
_RUN_TOKEN = re.compile(r"^([^\s^]+)(?:\^(\d+))?$")


def format_config(c: Configuration) -> str:
    """`{q1:4, q3:1 | a:2}` literal; the message part is omitted when empty."""
    agents = ", ".join(f"{q}:{k}" for q, k in c.agents.items())
    if c.messages:
        msgs = ", ".join(f"{m}:{k}" for m, k in c.messages.items())
        return "{" + agents + " | " + msgs + "}"
    return "{" + agents + "}"


def parse_config(text: str) -> Configuration:
    s = text.strip()
    if not (s.startswith("{") and s.endswith("}")):
        raise ValueError("configuration literal must be wrapped in { }")
    parts = s[1:-1].split("|")
    if len(parts) > 2:
        raise ValueError("at most one '|' separates agents from messages")

    def side(txt: str) -> dict[str, int]:
        counts: dict[str, int] = {}
        txt = txt.strip()
        if not txt:
            return counts
        for item in txt.split(","):
            m = _COUNT_ITEM.match(item.strip())
            if not m:
                raise ValueError(f"bad count item {item.strip()!r}")
            name, k = m.group(1), int(m.group(2))
            if name in counts:
                raise ValueError(f"duplicate entry {name!r}")
            counts[name] = k
        return counts

    agents = Multiset(side(parts[0]))
    messages = Multiset(side(parts[1])) if len(parts) == 2 else Multiset()
    return Configuration(agents, messages)


def format_run(r: Run) -> str:
    """A `start:` line followed by whitespace-separated `NAME^K` step tokens."""
    lines = [f"start: {format_config(r.start)}"]
    if r.steps:
        lines.append(" ".join(f"{name}^{k}" for name, k in r.steps))
    return "\n".join(lines) + "\n"


def parse_run(text: str) -> Run:
    start = None
    steps: list[tuple[str, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("start:"):
            if start is not None:
                raise ValueError(f"line {lineno}: duplicate start line")
            start = parse_config(line[len("start:"):])
            continue
        if start is None:
            raise ValueError(f"line {lineno}: run file must open with a start: line")
        for tok in line.split():
            m = _RUN_TOKEN.match(tok)
            if not m:
                raise ValueError(f"line {lineno}: bad step token {tok!r}")
            steps.append((m.group(1), int(m.group(2) or 1)))
    if start is None:
        raise ValueError("run file has no start: line")
    return Run(start, tuple(steps))
