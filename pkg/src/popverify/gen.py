"""Generators that compile classic machine models into protocols.

Three reductions produce stress-test protocols with known behaviour:

  tm_to_io       space-bounded deterministic machine -> IO protocol whose
                 fair runs settle on output 1 exactly when the machine
                 accepts from the blank tape
  circuit_to_do  boolean circuit with exists/forall-labeled inputs -> DO
                 protocol computing the always-0 predicate exactly when the
                 quantified circuit value is false
  vass_to_pm1 / pm1_to_dt
                 counter-machine reachability query -> DT protocol that
                 fails to settle on output 1 exactly when the query holds

Each family comes with a plain-text input format (`parse_tm`, `parse_circuit`,
`parse_vass`) so the generators can be driven from files.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import product
from typing import Mapping, Optional

from .core import (
    Configuration,
    Multiset,
    ObsTrans,
    Protocol,
    RecvTrans,
    SendTrans,
    enabled_steps,
)

__all__ = [
    "TuringMachine",
    "Circuit",
    "Vass",
    "parse_tm",
    "parse_circuit",
    "parse_vass",
    "tm_to_io",
    "validate_modelling",
    "simulate_tm_step",
    "circuit_to_do",
    "vass_to_pm1",
    "pm1_to_dt",
    "determinize_dt",
]

_TOKEN = re.compile(r"^[A-Za-z0-9_]+$")

LEFT, RIGHT = -1, 1
_MOVE_NAME = {LEFT: "L", RIGHT: "R"}
_MOVE_OF = {"L": LEFT, "R": RIGHT}


def _check_token(name: str, what: str) -> str:
    if not _TOKEN.match(name or ""):
        raise ValueError(f"{what} {name!r} must be made of letters, digits and underscores")
    return name


def _fresh(base: str, used) -> str:
    while base in used:
        base += "_"
    return base


# --------------------------------------------------------------------------
# Tape machines -> IO protocols


@dataclass(frozen=True, eq=False)
class TuringMachine:
    """Deterministic machine on a tape of `space` cells (positions 1..space).

    `states[0]` is the start state and `tape[0]` the blank symbol.  `delta`
    maps (state, symbol) to (state', symbol', move) with move in {-1, +1};
    the accept state (and the optional reject state) have no entries.  A run
    halts when `delta` is undefined or the head would leave the tape; only
    halting in the accept state counts as acceptance.
    """

    states: tuple[str, ...]
    tape: tuple[str, ...]
    accept: str
    space: int
    delta: Mapping[tuple[str, str], tuple[str, str, int]]
    reject: Optional[str] = None

    def __post_init__(self):
        if not self.states or len(set(self.states)) != len(self.states):
            raise ValueError("machine needs a non-empty list of distinct states")
        if not self.tape or len(set(self.tape)) != len(self.tape):
            raise ValueError("machine needs a non-empty list of distinct tape symbols")
        for q in self.states:
            _check_token(q, "machine state")
        for s in self.tape:
            _check_token(s, "tape symbol")
        if self.accept not in self.states:
            raise ValueError(f"accept state {self.accept!r} is not a machine state")
        if self.reject is not None:
            if self.reject not in self.states:
                raise ValueError(f"reject state {self.reject!r} is not a machine state")
            if self.reject == self.accept:
                raise ValueError("accept and reject states must differ")
        if self.space < 1:
            raise ValueError("tape bound must be at least 1")
        halting = {self.accept, self.reject}
        for (q, s), (q2, s2, d) in self.delta.items():
            if q not in self.states or s not in self.tape:
                raise ValueError(f"table entry for unknown pair ({q!r}, {s!r})")
            if q in halting:
                raise ValueError(f"halting state {q!r} has outgoing table entries")
            if q2 not in self.states or s2 not in self.tape:
                raise ValueError(f"table entry ({q!r}, {s!r}) targets unknown {q2!r}/{s2!r}")
            if d not in (LEFT, RIGHT):
                raise ValueError(f"table entry ({q!r}, {s!r}) has move {d!r}, want -1 or +1")

    @property
    def init(self) -> str:
        return self.states[0]

    @property
    def blank(self) -> str:
        return self.tape[0]


def parse_tm(text: str) -> TuringMachine:
    """Text format: `states:`, `accept:`, optional `reject:`, `tape:`, `K:`,
    and one `delta: q s -> q' s' L|R` line per table entry.  The first state
    is the start state, the first tape symbol the blank; `#` comments."""
    states = tape = accept = reject = None
    space = None
    delta: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, rest = line.partition(":")
        if not sep:
            raise ValueError(f"line {lineno}: expected `key: value`, got {line!r}")
        key, rest = key.strip(), rest.strip()
        if key == "states":
            states = tuple(rest.split())
        elif key == "tape":
            tape = tuple(rest.split())
        elif key == "accept":
            accept = rest
        elif key == "reject":
            reject = rest
        elif key == "K":
            try:
                space = int(rest)
            except ValueError:
                raise ValueError(f"line {lineno}: K must be an integer, got {rest!r}") from None
        elif key == "delta":
            m = re.match(r"^(\S+)\s+(\S+)\s*->\s*(\S+)\s+(\S+)\s+([LR])$", rest)
            if not m:
                raise ValueError(f"line {lineno}: want `delta: q s -> q' s' L|R`, got {rest!r}")
            q, s, q2, s2, d = m.groups()
            if (q, s) in delta:
                raise ValueError(f"line {lineno}: duplicate table entry for ({q}, {s})")
            delta[(q, s)] = (q2, s2, _MOVE_OF[d])
        else:
            raise ValueError(f"line {lineno}: unknown directive {key!r}")
    for field_name, value in (("states", states), ("tape", tape), ("accept", accept), ("K", space)):
        if value is None:
            raise ValueError(f"missing `{field_name}:` line")
    return TuringMachine(states, tape, accept, space, delta, reject)


# Generated state families.  Cell agents alternate between showing their
# symbol (pass) and holding it out for rewriting (act); the head agent
# alternates between resting on a cell (stable) and carrying a committed
# table entry to the next cell (sw).
_SIM_PREFIXES = ("pass", "act", "stable", "sw")


def _cell(kind: str, sym: str, n: int) -> str:
    return f"{kind}.{sym}.{n}"


def _head(q: str, n: int) -> str:
    return f"stable.{q}.{n}"


def _switch(q: str, sym: str, n: int, d: int) -> str:
    return f"sw.{q}.{sym}.{n}.{_MOVE_NAME[d]}"


def tm_to_io(tm: TuringMachine):
    """IO protocol simulating tm plus its canonical input population.

    Input symbols "1".."K" seed the blank tape, "K+1" the head, "K+2" an
    observer that turns into `success` upon seeing the head accept; every
    agent follows a `success` it observes, so acceptance drags the whole
    population to the only 1-output state.  Returns (protocol, input).
    """
    K = tm.space
    cells = range(1, K + 1)
    legal_moves = [(n, d) for n in cells for d in (LEFT, RIGHT) if 1 <= n + d <= K]

    states = [_cell("pass", s, n) for s in tm.tape for n in cells]
    states += [_cell("act", s, n) for s in tm.tape for n in cells]
    states += [_head(q, n) for q in tm.states for n in cells]
    states += [_switch(q, s, n, d) for q in tm.states for s in tm.tape for n, d in legal_moves]
    states += ["observer", "success"]

    ts = []
    for s in tm.tape:
        for n in cells:
            for q in tm.states:
                ts.append(
                    ObsTrans(f"t1a.{s}.{n}.{q}", _cell("pass", s, n), _head(q, n), _cell("act", s, n))
                )
    for s in tm.tape:
        for n in cells:
            for q in tm.states:
                for s2 in tm.tape:
                    for d in (LEFT, RIGHT):
                        if 1 <= n + d <= K:
                            ts.append(
                                ObsTrans(
                                    f"t1b.{s}.{n}.{q}.{s2}.{_MOVE_NAME[d]}",
                                    _cell("act", s, n),
                                    _switch(q, s2, n, d),
                                    _cell("pass", s2, n),
                                )
                            )
    for q in tm.states:
        for s in tm.tape:
            entry = tm.delta.get((q, s))
            if entry is None:
                continue
            q2, s2, d = entry
            for n in cells:
                if 1 <= n + d <= K:
                    ts.append(
                        ObsTrans(f"t2a.{q}.{s}.{n}", _head(q, n), _cell("act", s, n), _switch(q2, s2, n, d))
                    )
    for q in tm.states:
        for s in tm.tape:
            for n, d in legal_moves:
                ts.append(
                    ObsTrans(
                        f"t2b.{q}.{s}.{n}.{_MOVE_NAME[d]}",
                        _switch(q, s, n, d),
                        _cell("pass", s, n),
                        _head(q, n + d),
                    )
                )
    for n in cells:
        ts.append(ObsTrans(f"win.{n}", "observer", _head(tm.accept, n), "success"))
    for q in states:
        if q != "success":
            ts.append(ObsTrans(f"follow.{q}", q, "success", "success"))

    inputs = [(str(n), _cell("pass", tm.blank, n)) for n in cells]
    inputs.append((str(K + 1), _head(tm.init, 1)))
    inputs.append((str(K + 2), "observer"))
    outputs = [(q, 1 if q == "success" else 0) for q in states]
    p = Protocol("IO", states, transitions=ts, inputs=inputs, outputs=outputs)
    return p, Multiset({sym: 1 for sym, _ in inputs})


class _TmView:
    """Cell/head structure recovered from a generated protocol's state names."""

    def __init__(self, pm: Protocol):
        self.kind: dict[str, tuple] = {}
        positions = set()
        for q in pm.states:
            parts = q.split(".")
            if parts[0] == "pass" or parts[0] == "act":
                self.kind[q] = (parts[0], parts[1], int(parts[2]))
                positions.add(int(parts[2]))
            elif parts[0] == "stable":
                self.kind[q] = ("stable", parts[1], int(parts[2]))
            elif parts[0] == "sw":
                self.kind[q] = ("sw", parts[1], parts[2], int(parts[3]), parts[4])
        if not positions:
            raise ValueError("protocol has no cell states; not generated by tm_to_io")
        self.space = max(positions)

    def conditions(self, c: Configuration) -> bool:
        """One agent per cell, one head, and the mid-rewrite coherence rules."""
        cell_total = {n: 0 for n in range(1, self.space + 1)}
        acts = []
        heads = []
        for q, k in c.agents.items():
            info = self.kind.get(q)
            if info is None:
                continue  # observer/success agents sit outside the encoding
            if info[0] in ("pass", "act"):
                cell_total[info[2]] += k
                if info[0] == "act":
                    acts.append(info)
            else:
                heads.append((info, k))
        if any(total != 1 for total in cell_total.values()):
            return False
        if sum(k for _, k in heads) != 1:
            return False
        head = heads[0][0]
        head_pos = head[2] if head[0] == "stable" else head[3]
        if any(n != head_pos for _, _, n in acts):
            return False
        if head[0] == "sw":
            _, _, sym, n, _ = head
            if not acts and c.agents[_cell("pass", sym, n)] != 1:
                return False
        return True

    def settled(self, c: Configuration) -> bool:
        """No cell mid-rewrite and the head resting on a cell."""
        for q, _ in c.agents.items():
            info = self.kind.get(q)
            if info and info[0] in ("act", "sw"):
                return False
        return True


def _sim_steps(pm: Protocol, c: Configuration):
    return [
        (t, succ)
        for t, succ in enabled_steps(pm, c)
        if t.name.partition(".")[0] in ("t1a", "t1b", "t2a", "t2b")
    ]


def validate_modelling(pm: Protocol, c: Configuration) -> bool:
    """Whether c is a coherent machine encoding (cells, head, rewrite phase).

    Agents in observer/success states are outside the encoding and ignored.
    A coherent encoding enables at most one simulation step, and the step
    leads to another coherent encoding; both facts are asserted here.
    """
    view = _TmView(pm)
    ok = view.conditions(c)
    if ok:
        steps = _sim_steps(pm, c)
        assert len(steps) <= 1, f"encoding enables {len(steps)} simulation steps"
        for _, succ in steps:
            assert view.conditions(succ), "simulation step left the encoding family"
    return ok


def simulate_tm_step(pm: Protocol, c: Configuration) -> Optional[Configuration]:
    """One full machine step (read, commit, rewrite, move) on an encoding.

    Returns the settled successor encoding, or None when the machine halts
    (no table entry, or the head would leave the tape).
    """
    view = _TmView(pm)
    if not (view.conditions(c) and view.settled(c)):
        raise ValueError("need a settled machine encoding: one passive agent per cell, head resting")
    cur = c
    for _ in range(4):
        steps = _sim_steps(pm, cur)
        if not steps:
            return None
        assert len(steps) == 1, f"encoding enables {len(steps)} simulation steps"
        _, cur = steps[0]
    assert view.conditions(cur) and view.settled(cur), "machine step did not settle in 4 moves"
    return cur


# --------------------------------------------------------------------------
# Labeled circuits -> DO protocols

_VALUES = ("0", "1", "u")  # u = not yet known
MAX_ARITY = 3
_OPS = ("AND", "OR", "NOT")


@dataclass(frozen=True, eq=False)
class Circuit:
    """Acyclic circuit over AND/OR/NOT with quantifier-labeled inputs.

    `inputs` pairs each input node with "exists" or "forall"; `gates` lists
    (name, op, args) with args referring to inputs or earlier gates (this
    ordering makes acyclicity structural); `output` names the final gate,
    which no other gate may use.  Every node must reach the output.
    """

    inputs: tuple[tuple[str, str], ...]
    gates: tuple[tuple[str, str, tuple[str, ...]], ...]
    output: str

    def __post_init__(self):
        defined: list[str] = []
        for name, quant in self.inputs:
            _check_token(name, "input node")
            if quant not in ("exists", "forall"):
                raise ValueError(f"input {name!r} must be labeled exists or forall, not {quant!r}")
            defined.append(name)
        for name, op, args in self.gates:
            _check_token(name, "gate")
            if op not in _OPS:
                raise ValueError(f"gate {name!r} has unknown operation {op!r}")
            if op == "NOT" and len(args) != 1:
                raise ValueError(f"gate {name!r}: NOT takes exactly one argument")
            if not 1 <= len(args) <= MAX_ARITY:
                raise ValueError(f"gate {name!r}: arity must be between 1 and {MAX_ARITY}")
            for a in args:
                if a not in defined:
                    raise ValueError(f"gate {name!r} uses {a!r} before it is defined")
            defined.append(name)
        if len(set(defined)) != len(defined):
            raise ValueError("node names must be distinct")
        gate_names = {name for name, _, _ in self.gates}
        if self.output not in gate_names:
            raise ValueError(f"output {self.output!r} is not a gate")
        for name, _, args in self.gates:
            if self.output in args:
                raise ValueError("the output gate feeds no other gate")
        connected = {self.output}
        for name, _, args in reversed(self.gates):
            if name in connected:
                connected.update(args)
        missing = [n for n in defined if n not in connected]
        if missing:
            raise ValueError(f"nodes not connected to the output: {', '.join(missing)}")

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.inputs) + tuple(n for n, _, _ in self.gates)


def parse_circuit(text: str) -> Circuit:
    """Text format: `in x exists|forall`, `gate g OP a b...`, `out g`."""
    inputs: list[tuple[str, str]] = []
    gates: list[tuple[str, str, tuple[str, ...]]] = []
    output = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        if words[0] == "in" and len(words) == 3:
            inputs.append((words[1], words[2]))
        elif words[0] == "gate" and len(words) >= 4:
            gates.append((words[1], words[2], tuple(words[3:])))
        elif words[0] == "out" and len(words) == 2:
            if output is not None:
                raise ValueError(f"line {lineno}: duplicate out line")
            output = words[1]
        else:
            raise ValueError(f"line {lineno}: want `in x exists|forall`, `gate g OP args...` or `out g`")
    if output is None:
        raise ValueError("missing `out` line")
    return Circuit(tuple(inputs), tuple(gates), output)


def _opval(op: str, vals) -> str:
    if op == "NOT":
        return {"0": "1", "1": "0", "u": "u"}[vals[0]]
    if "u" in vals:
        return "u"
    bits = [v == "1" for v in vals]
    return "1" if (all(bits) if op == "AND" else any(bits)) else "0"


def circuit_to_do(c: Circuit) -> Protocol:
    """DO protocol evaluating c with agent-chosen input values.

    Each agent carries its node, the node's value opinion (for gates the
    value is determined by the stored argument opinions) and an opinion of
    the output gate's value, which is what the agent outputs.  Message
    `n.v` broadcasts node n's current value.  An unset input picks 0 on
    hearing itself and 1 on hearing the output gate; two agents voting
    differently on one exists-input poison the population through the
    `dead` state, while forall-inputs flip whenever the output claims 1,
    so a surviving 1-consensus needs the circuit true for every forall
    choice.
    """
    quant = dict(c.inputs)
    gate_of = {name: (op, args) for name, op, args in c.gates}
    out_gate = c.output

    def input_state(n, v, o):
        return f"{n}.{v}.{o}"

    def gate_state(n, arg, o):
        return f"{n}.{''.join(arg)}.{o}"

    states: list[str] = []
    init_state: dict[str, str] = {}
    for n, _ in c.inputs:
        states += [input_state(n, v, o) for v in _VALUES for o in _VALUES]
        init_state[n] = input_state(n, "u", "u")
    for n, op, args in c.gates:
        for arg in product(_VALUES, repeat=len(args)):
            states += [gate_state(n, arg, o) for o in _VALUES]
        init_state[n] = gate_state(n, ("u",) * len(args), "u")
    states.append("dead")

    messages = [f"{n}.{v}" for n in c.nodes for v in _VALUES]
    messages.append("poison")

    ts: list = []
    for n, _ in c.inputs:
        for v in _VALUES:
            for o in _VALUES:
                s = input_state(n, v, o)
                ts.append(SendTrans(f"{s}!", s, f"{n}.{v}", s))
    for n, op, args in c.gates:
        for arg in product(_VALUES, repeat=len(args)):
            for o in _VALUES:
                s = gate_state(n, arg, o)
                ts.append(SendTrans(f"{s}!", s, f"{n}.{_opval(op, arg)}", s))
    ts.append(SendTrans("dead!", "dead", "poison", "dead"))

    def recv(src, msg, dst):
        if dst != src:
            ts.append(RecvTrans(f"{src}?{msg}", src, msg, dst))

    for n, q in c.inputs:
        for v, o in product(_VALUES, _VALUES):
            s = input_state(n, v, o)
            for m, w in product(c.nodes, _VALUES):
                v2, o2 = v, o
                if v == "u":
                    if m == n:
                        v2 = "0"
                    elif m == out_gate:
                        v2 = "1"
                else:
                    if q == "exists" and m == n and w not in ("u", v):
                        recv(s, f"{m}.{w}", "dead")
                        continue
                    if q == "forall" and m == out_gate and w == "1":
                        v2 = "1" if v == "0" else "0"
                if m == out_gate and w != "u":
                    o2 = w
                recv(s, f"{m}.{w}", input_state(n, v2, o2))
            recv(s, "poison", "dead")

    for n, op, args in c.gates:
        arg_nodes = sorted(set(args))
        for arg in product(_VALUES, repeat=len(args)):
            for o in _VALUES:
                s = gate_state(n, arg, o)
                for a in arg_nodes:
                    for w in _VALUES:
                        arg2 = tuple(w if args[i] == a else arg[i] for i in range(len(args)))
                        recv(s, f"{a}.{w}", gate_state(n, arg2, o))
                for w in ("0", "1"):
                    recv(s, f"{out_gate}.{w}", gate_state(n, arg, w))
                recv(s, "poison", "dead")

    inputs = [(n, init_state[n]) for n in c.nodes]
    outputs = [(s, 1 if s != "dead" and s.rsplit(".", 1)[1] == "1" else 0) for s in states]
    return Protocol("DO", states, messages, ts, inputs, outputs)


# --------------------------------------------------------------------------
# Counter machines -> DT protocols


@dataclass(frozen=True, eq=False)
class Vass:
    """Counter machine: states, integer-vector transitions, and optionally a
    reachability query ((q0, v0) to (q, vf)) with non-negative endpoints."""

    dim: int
    states: tuple[str, ...]
    transitions: tuple[tuple[str, tuple[int, ...], str], ...]
    query: Optional[tuple[str, tuple[int, ...], str, tuple[int, ...]]] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be at least 1")
        if not self.states or len(set(self.states)) != len(self.states):
            raise ValueError("need a non-empty list of distinct states")
        for q in self.states:
            if not re.match(r"^[A-Za-z0-9_.]+$", q):
                raise ValueError(f"state {q!r} must be made of letters, digits, dots and underscores")
        for a, w, b in self.transitions:
            if a not in self.states or b not in self.states:
                raise ValueError(f"transition {a!r} -> {b!r} references unknown states")
            if len(w) != self.dim:
                raise ValueError(f"transition {a!r} -> {b!r} has a vector of length {len(w)}")
        if self.query is not None:
            q0, v0, qf, vf = self.query
            if q0 not in self.states or qf not in self.states:
                raise ValueError("query references unknown states")
            if len(v0) != self.dim or len(vf) != self.dim:
                raise ValueError("query vectors must match the dimension")
            if min(v0, default=0) < 0 or min(vf, default=0) < 0:
                raise ValueError("query counter values must be non-negative")

    def is_pm1(self) -> bool:
        """Every transition changes exactly one counter, by exactly one."""
        return all(
            sorted(map(abs, w)) == [0] * (self.dim - 1) + [1] for _, w, _ in self.transitions
        )


_VEC = re.compile(r"^\(([^()]*)\)$")


def _parse_vec(text: str, dim: int, lineno: int) -> tuple[int, ...]:
    m = _VEC.match(text.strip())
    if not m:
        raise ValueError(f"line {lineno}: want a vector like (1,-2), got {text!r}")
    parts = [x.strip() for x in m.group(1).split(",")] if m.group(1).strip() else []
    try:
        vec = tuple(int(x) for x in parts)
    except ValueError:
        raise ValueError(f"line {lineno}: non-integer entry in {text!r}") from None
    if len(vec) != dim:
        raise ValueError(f"line {lineno}: vector {text!r} has {len(vec)} entries, want {dim}")
    return vec


def parse_vass(text: str) -> Vass:
    """Text format: `dim k`, `state q` lines, `trans q (dv1,...,dvk) q'`
    lines, and an optional `query q0 (..) -> q (..)` line."""
    dim = None
    states: list[str] = []
    transitions: list = []
    query = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split(None, 1)
        key, rest = words[0], (words[1] if len(words) > 1 else "")
        if key == "dim":
            try:
                dim = int(rest)
            except ValueError:
                raise ValueError(f"line {lineno}: dim must be an integer, got {rest!r}") from None
        elif key == "state":
            states.append(rest.strip())
        elif key == "trans":
            if dim is None:
                raise ValueError(f"line {lineno}: `dim` must come before transitions")
            m = re.match(r"^(\S+)\s+(\([^()]*\))\s+(\S+)$", rest)
            if not m:
                raise ValueError(f"line {lineno}: want `trans q (v1,...,vk) q'`, got {rest!r}")
            transitions.append((m.group(1), _parse_vec(m.group(2), dim, lineno), m.group(3)))
        elif key == "query":
            if dim is None:
                raise ValueError(f"line {lineno}: `dim` must come before the query")
            m = re.match(r"^(\S+)\s+(\([^()]*\))\s*->\s*(\S+)\s+(\([^()]*\))$", rest)
            if not m:
                raise ValueError(f"line {lineno}: want `query q0 (..) -> q (..)`, got {rest!r}")
            query = (
                m.group(1),
                _parse_vec(m.group(2), dim, lineno),
                m.group(3),
                _parse_vec(m.group(4), dim, lineno),
            )
        else:
            raise ValueError(f"line {lineno}: unknown directive {key!r}")
    if dim is None:
        raise ValueError("missing `dim` line")
    return Vass(dim, tuple(states), tuple(transitions), query)


def vass_to_pm1(v: Vass, query=None):
    """Fold a reachability query into a unit-step machine.

    Adds fresh entry/exit states so the query becomes (entry, 0) to
    (exit, 0), then splits every transition into steps that each change one
    counter by one (a zero vector becomes an up/down pair on counter 1).
    Returns (unit-step machine with the rewritten query, entry, exit).
    """
    query = query or v.query
    if query is None:
        raise ValueError("no reachability query given")
    q0, v0, qf, vf = query
    used = set(v.states)
    r0 = _fresh("r0", used)
    used.add(r0)
    r = _fresh("r", used)
    used.add(r)
    via = "v"
    while any(s == via or s.startswith(via + ".") for s in used):
        via += "v"

    base = [(r0, tuple(v0), q0), (qf, tuple(-x for x in vf), r)]
    base += list(v.transitions)

    states = [r0, r] + list(v.states)
    out: list = []
    for i, (a, w, b) in enumerate(base):
        units = [(j, 1 if w[j] > 0 else -1) for j in range(v.dim) for _ in range(abs(w[j]))]
        if not units:
            units = [(0, 1), (0, -1)]
        hops = [a] + [f"{via}.{i}.{t}" for t in range(1, len(units))] + [b]
        states += hops[1:-1]
        for t, (j, sign) in enumerate(units):
            step = [0] * v.dim
            step[j] = sign
            out.append((hops[t], tuple(step), hops[t + 1]))

    zero = (0,) * v.dim
    return Vass(v.dim, tuple(states), tuple(out), (r0, zero, r, zero)), r0, r


def pm1_to_dt(v: Vass, r0: str, r: str, determinize: bool = False):
    """DT protocol whose failure to settle on 1 witnesses (r0, 0) ->* (r, 0).

    A single walker simulates the machine, sending message `cj` to bump
    counter j and receiving one to drop it, so the message pool is the
    counter valuation.  From `r` the walker may declare the query reached
    and blink forever between `blink1` (output 1) and `blink0` (the only
    0-output state), blocking consensus exactly when it can declare with an
    empty pool.  Any off-script receive lands in the absorbing `alarm`
    state (output 1), and an inert `idle` companion makes the start
    configuration a population: C0 = one walker in r0 plus one idle agent.

    Without `determinize` the walker's choices are kept as several send
    (and receive) entries per state; such a protocol drives bounded
    exploration but is not a valid deterministic DT.  With `determinize`
    the choices are serialized by a round counter (see determinize_dt).
    Returns (protocol, C0).
    """
    if not v.is_pm1():
        raise ValueError("every transition must change exactly one counter by one")
    if r0 not in v.states or r not in v.states:
        raise ValueError("entry/exit states are not machine states")
    used = set(v.states)
    blink0 = _fresh("blink0", used)
    used.add(blink0)
    blink1 = _fresh("blink1", used)
    used.add(blink1)
    alarm = _fresh("alarm", used)
    used.add(alarm)
    idle = _fresh("idle", used)
    used.add(idle)

    states = tuple(v.states) + (blink0, blink1, alarm, idle)
    msgs = tuple(f"c{j + 1}" for j in range(v.dim)) + ("tick", "panic")

    ts: list = []
    for i, (a, w, b) in enumerate(v.transitions):
        j = next(k for k in range(v.dim) if w[k])
        if w[j] > 0:
            ts.append(SendTrans(f"up{i}", a, f"c{j + 1}", b))
        else:
            ts.append(RecvTrans(f"dn{i}", a, f"c{j + 1}", b))
    ts.append(SendTrans("settle", r, "tick", blink0))
    ts.append(SendTrans("blinkA", blink0, "tick", blink1))
    ts.append(SendTrans("blinkB", blink1, "tick", blink0))
    ts.append(SendTrans("spread", alarm, "panic", alarm))
    ts.append(RecvTrans("tockA", blink0, "tick", blink1))
    ts.append(RecvTrans("tockB", blink1, "tick", blink1))

    declared = {(t.src, t.msg) for t in ts if isinstance(t, RecvTrans)}
    for q in states:
        for m in msgs:
            if (q, m) not in declared:
                ts.append(RecvTrans(f"{q}?{m}", q, m, alarm))

    outputs = [(q, 0 if q == blink0 else 1) for q in states]
    p = Protocol("DT", states, msgs, ts, inputs=[(r0, r0)], outputs=outputs)
    c0 = Configuration(Multiset({r0: 1, idle: 1}))
    if determinize:
        return determinize_dt(p, c0)
    return p, c0


def determinize_dt(p: Protocol, c0: Configuration):
    """Serialize a DT protocol's choices behind a round counter.

    Each state becomes (state, round 1..n, bit) with n = states x messages.
    With the bit set the agent's next send is a fresh `inc` message and the
    bit clears; receiving `inc` advances the round (mod n) and sets the
    bit.  A state's k send options (sorted by message then target name) and
    the k' targets of each receive option (sorted by name) are picked by
    round index mod k, so every option recurs as rounds cycle.  The result
    is deterministic: one send per state, one receive per state/message
    pair, total over the extended message set.  Returns (protocol, c0').
    """
    n = len(p.states) * len(p.messages)
    inc = _fresh("inc", set(p.messages))
    sends: dict[str, list] = {}
    recvs: dict[tuple[str, str], list] = {}
    for t in p.transitions:
        if isinstance(t, SendTrans):
            sends.setdefault(t.src, []).append((t.msg, t.dst))
        elif isinstance(t, RecvTrans):
            recvs.setdefault((t.src, t.msg), []).append(t.dst)
        else:
            raise ValueError("round-counter serialization is for DT protocols")
    for opts in sends.values():
        opts.sort()
    for opts in recvs.values():
        opts.sort()

    def st(q, i, b):
        return f"{q}.{i}.{b}"

    states = [st(q, i, b) for q in p.states for i in range(1, n + 1) for b in (0, 1)]
    ts: list = []
    for q in p.states:
        for i in range(1, n + 1):
            opts = sends.get(q)
            if opts:
                m, dst = opts[i % len(opts)]
                ts.append(SendTrans(f"{st(q, i, 0)}!", st(q, i, 0), m, st(dst, i, 0)))
            ts.append(SendTrans(f"{st(q, i, 1)}!", st(q, i, 1), inc, st(q, i, 0)))
    for q in p.states:
        for i in range(1, n + 1):
            for b in (0, 1):
                s = st(q, i, b)
                for m in p.messages:
                    opts = recvs.get((q, m))
                    if opts:
                        ts.append(RecvTrans(f"{s}?{m}", s, m, st(opts[i % len(opts)], i, b)))
                ts.append(RecvTrans(f"{s}?{inc}", s, inc, st(q, (i % n) + 1, 1)))

    outputs = [(st(q, i, b), p.output(q)) for q in p.states for i in range(1, n + 1) for b in (0, 1)]
    inputs = [(sym, st(q, 1, 1)) for sym, q in p.inputs]
    p2 = Protocol("DT", states, tuple(p.messages) + (inc,), ts, inputs, outputs)
    c02 = Configuration(Multiset({st(q, 1, 1): k for q, k in c0.agents.items()}), c0.messages)
    return p2, c02
