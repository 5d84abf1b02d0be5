"""Agent-trajectory view of runs.

A history names the agents of a run: it is a multiset of equal-length state
trajectories, one per agent.  Position i of the history induces the i-th
configuration.  Histories support realizability checks, extraction from runs
(de-anonymization), covering-preserving pruning that shrinks the population,
and shortening that caps a run's aggregated length by a polynomial in |Q|.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Iterable, Optional

from .core import (
    Configuration,
    Multiset,
    ObsTrans,
    PairTrans,
    Protocol,
    RecvTrans,
    Run,
    SendTrans,
    apply_run,
    corresponding_mfdo,
)

log = logging.getLogger(__name__)

MAX_POSITIONS = 100_000

Trajectory = tuple[str, ...]


class History:
    """Immutable multiset of equal-length trajectories."""

    __slots__ = ("entries", "length", "agents")

    def __init__(self, entries: Iterable[tuple[Iterable[str], int]]):
        merged: dict[Trajectory, int] = {}
        for traj, k in entries:
            t = tuple(traj)
            if not t:
                raise ValueError("empty trajectory")
            if k < 1:
                raise ValueError("trajectory multiplicity must be >= 1")
            merged[t] = merged.get(t, 0) + k
        if not merged:
            raise ValueError("a history holds at least one trajectory")
        lengths = {len(t) for t in merged}
        if len(lengths) != 1:
            raise ValueError("trajectories differ in length")
        n = lengths.pop()
        if n > MAX_POSITIONS:
            raise ValueError(f"history length {n} exceeds the {MAX_POSITIONS}-position cap")
        object.__setattr__(self, "entries", tuple(sorted(merged.items())))
        object.__setattr__(self, "length", n)
        object.__setattr__(self, "agents", sum(merged.values()))

    def __setattr__(self, name, value):
        raise AttributeError("History is immutable")

    def __eq__(self, other) -> bool:
        return isinstance(other, History) and self.entries == other.entries

    def __hash__(self) -> int:
        return hash(self.entries)

    def __repr__(self) -> str:
        inner = ", ".join(f"{'.'.join(t)}x{k}" if k > 1 else ".".join(t) for t, k in self.entries)
        return f"History[{inner}]"

    def config_at(self, i: int) -> Multiset:
        if not 0 <= i < self.length:
            raise IndexError(f"position {i} outside 0..{self.length - 1}")
        counts: dict[str, int] = {}
        for traj, k in self.entries:
            q = traj[i]
            counts[q] = counts.get(q, 0) + k
        return Multiset(counts)

    def seen_sets(self) -> list[frozenset]:
        """Cumulative populated-state sets, one per position."""
        out: list[frozenset] = []
        cur: set[str] = set()
        for i in range(self.length):
            for traj, _ in self.entries:
                cur.add(traj[i])
            out.append(frozenset(cur))
        return out

    def expand(self) -> list[Trajectory]:
        out: list[Trajectory] = []
        for traj, k in self.entries:
            out.extend([traj] * k)
        return out

    def counts(self) -> dict[Trajectory, int]:
        return dict(self.entries)

    def contains(self, other: "History") -> bool:
        mine = self.counts()
        return all(mine.get(t, 0) >= k for t, k in other.entries)


def format_history(h: History) -> str:
    lines = []
    for traj, k in h.entries:
        line = " ".join(traj)
        if k > 1:
            line += f" x{k}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def parse_history(text: str) -> History:
    """Inverse of format_history; a trailing `xK` token is a multiplicity."""
    entries = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        k = 1
        if len(toks) >= 2 and re.fullmatch(r"x\d+", toks[-1]):
            k = int(toks[-1][1:])
            toks = toks[:-1]
        entries.append((tuple(toks), k))
    return History(entries)


def _step_profile(h: History) -> list[Optional[tuple[str, str, int]]]:
    """Per step: None when all agents stay put, else (src, dst, mover count).

    Raises when some step mixes distinct movements (not well-structured).
    """
    out: list[Optional[tuple[str, str, int]]] = []
    for i in range(h.length - 1):
        moves: dict[tuple[str, str], int] = {}
        for traj, k in h.entries:
            a, b = traj[i], traj[i + 1]
            if a != b:
                moves[(a, b)] = moves.get((a, b), 0) + k
        if not moves:
            out.append(None)
        elif len(moves) == 1:
            (a, b), k = next(iter(moves.items()))
            out.append((a, b, k))
        else:
            raise ValueError(
                f"history is not well-structured: position {i} mixes movements {sorted(moves)}"
            )
    return out


def is_well_structured(h: History) -> bool:
    try:
        _step_profile(h)
        return True
    except ValueError:
        return False


@dataclass(frozen=True)
class Compat:
    """Outcome of a compatibility check.

    For ok results, `transitions` names the enabling transition per position
    (None at stay-put positions).  Otherwise `position`/`trajectory` point at
    the first movement no transition can explain.
    """

    ok: bool
    transitions: Optional[tuple[Optional[str], ...]] = None
    position: Optional[int] = None
    trajectory: Optional[Trajectory] = None
    reason: str = ""


def is_compatible(p: Protocol, h: History) -> Compat:
    """Whether every movement of h is explained by a transition of p.

    IO: the observed state must host an agent staying put across the position.
    MFDO: the observed state must have been populated at the position or
    earlier.  Requires a well-structured history.
    """
    if p.model not in ("IO", "MFDO"):
        raise ValueError(f"compatibility is defined for IO/MFDO, not {p.model}")
    profile = _step_profile(h)
    seen = h.seen_sets()
    obs_transitions = p.obs_view()
    chosen: list[Optional[str]] = []
    for i, step in enumerate(profile):
        if step is None:
            chosen.append(None)
            continue
        src, dst, _k = step
        pick = None
        for t in obs_transitions:
            if t.src != src or t.dst != dst:
                continue
            if p.model == "MFDO":
                if t.obs in seen[i]:
                    pick = t
                    break
            else:
                if any(traj[i] == traj[i + 1] == t.obs for traj, _ in h.entries):
                    pick = t
                    break
        if pick is None:
            offender = min(traj for traj, _ in h.entries if traj[i] != traj[i + 1])
            return Compat(
                False,
                position=i,
                trajectory=offender,
                reason=f"no enabled transition moves {src} to {dst} at position {i}",
            )
        chosen.append(pick.name)
    return Compat(True, transitions=tuple(chosen))


def realize(p: Protocol, h: History) -> Run:
    """The run replaying h: one aggregated step per moving position.

    Stay-put positions contribute nothing; adjacent positions moved by the
    same transition collapse into one aggregated step.
    """
    c = is_compatible(p, h)
    if not c.ok:
        raise ValueError(f"history is not realizable: {c.reason}")
    profile = _step_profile(h)
    steps = []
    for i, step in enumerate(profile):
        if step is not None:
            steps.append((c.transitions[i], step[2]))
    return Run(Configuration(h.config_at(0)), tuple(steps)).normalized()


def _as_obs(p: Protocol, t) -> ObsTrans:
    if isinstance(t, ObsTrans):
        return t
    if isinstance(t, PairTrans) and t.q1 == t.q3:
        return ObsTrans(t.name, t.q2, t.q1, t.q4)
    raise ValueError(f"transition {t.name} has no observation form")


def deanonymize(p: Protocol, r: Run) -> History:
    """Assign agents to a run: one position per single transition application.

    The mover of each application is the lexicographically smallest trajectory
    currently ending at the source state; everyone else stays put.  The result
    is well-structured, compatible, and realizes back to r up to aggregation
    of adjacent equal steps.
    """
    if p.model not in ("IO", "MFDO"):
        raise ValueError(f"trajectory extraction supports IO/MFDO, not {p.model}")
    if r.start.messages:
        raise ValueError("immediate-model runs carry no messages")
    trajs: list[list[str]] = [[q] for q in r.start.agents.elements()]
    if not trajs:
        raise ValueError("cannot de-anonymize a run with no agents")
    counts: dict[str, int] = dict(r.start.agents.items())
    seen = set(r.start.agents.support())
    for idx, (name, k) in enumerate(r.steps):
        t = _as_obs(p, p.transition(name))
        for j in range(k):
            have = counts.get(t.src, 0)
            if p.model == "MFDO":
                enabled = have >= 1 and t.obs in seen
            elif t.obs == t.src:
                enabled = have >= 2
            else:
                enabled = have >= 1 and counts.get(t.obs, 0) >= 1
            if not enabled:
                raise ValueError(
                    f"step {idx} ({name}^{k}): not enabled after {j} applications"
                )
            mover = min(
                (i for i, tr in enumerate(trajs) if tr[-1] == t.src),
                key=lambda i: tuple(trajs[i]),
            )
            for i, tr in enumerate(trajs):
                tr.append(t.dst if i == mover else tr[-1])
            counts[t.src] -= 1
            counts[t.dst] = counts.get(t.dst, 0) + 1
            seen.add(t.dst)
    return History((tuple(tr), 1) for tr in trajs)


def _bunch_check(h: History, bunch: History) -> None:
    if bunch.length != h.length:
        raise ValueError("bunch and history lengths differ")
    if not h.contains(bunch):
        raise ValueError("bunch is not a sub-multiset of the history")
    starts = {traj[0] for traj, _ in bunch.entries}
    ends = {traj[-1] for traj, _ in bunch.entries}
    if len(starts) != 1 or len(ends) != 1:
        raise ValueError("a bunch shares one initial and one final state")


def prune_bunch(p: Protocol, h: History, bunch: History) -> History:
    """Replace an oversized bunch by at most |Q| trajectories.

    The replacement keeps, for every state q the bunch visits, one trajectory
    that reaches q by the bunch's earliest visit of q and stays there through
    the latest visit, so every observation the bunch used to serve survives.
    Bunches of size <= |Q| are left alone (logged as a no-op).
    """
    _bunch_check(h, bunch)
    nq = len(p.states)
    if bunch.agents <= nq:
        log.info("bunch of size %d <= %d states: nothing to prune", bunch.agents, nq)
        return h
    first: dict[str, int] = {}
    last: dict[str, int] = {}
    for traj, _ in bunch.entries:
        for i, q in enumerate(traj):
            if q not in first or i < first[q]:
                first[q] = i
            if q not in last or i > last[q]:
                last[q] = i
    replacement: list[tuple[Trajectory, int]] = []
    for q in sorted(first, key=p.state_index.__getitem__):
        fq, lq = first[q], last[q]
        prefix = min(traj for traj, _ in bunch.entries if traj[fq] == q)
        suffix = min(traj for traj, _ in bunch.entries if traj[lq] == q)
        tau = prefix[:fq] + (q,) * (lq - fq + 1) + suffix[lq + 1 :]
        replacement.append((tau, 1))
    remaining = h.counts()
    for traj, k in bunch.entries:
        remaining[traj] -= k
        if not remaining[traj]:
            del remaining[traj]
    out = History(list(remaining.items()) + replacement)
    _step_profile(out)  # replacement preserves well-structuring
    return out


def _covering_check(p: Protocol, r: Run, L_init: Multiset, L_final: Multiset) -> Configuration:
    final = apply_run(p, r)
    if not L_init <= r.start.agents:
        raise ValueError("start configuration does not cover the initial requirement")
    if not L_final <= final.agents:
        raise ValueError("final configuration does not cover the final requirement")
    return final


def _greedy_cover(
    entries: Iterable[tuple[Trajectory, int]],
    L_init: Multiset,
    L_final: Multiset,
    preselected: Optional[dict[Trajectory, int]] = None,
) -> dict[Trajectory, int]:
    """Sub-multiset covering L_init at position 0 and L_final at the end.

    Walks trajectories in sorted order; a copy serving either requirement
    serves both.  Trajectories in `preselected` count first and are included
    in the result.
    """
    need_init = {q: n for q, n in L_init.items()}
    need_final = {q: n for q, n in L_final.items()}
    selected = dict(preselected or {})
    for traj, k in sorted(selected.items()):
        a = min(k, need_init.get(traj[0], 0))
        if a:
            need_init[traj[0]] -= a
        b = min(k, need_final.get(traj[-1], 0))
        if b:
            need_final[traj[-1]] -= b
    for traj, k in entries:
        avail = k - selected.get(traj, 0)
        if avail <= 0:
            continue
        a = min(avail, need_init.get(traj[0], 0))
        b = min(avail, need_final.get(traj[-1], 0))
        take = max(a, b)
        if take:
            selected[traj] = selected.get(traj, 0) + take
            need_init[traj[0]] = need_init.get(traj[0], 0) - min(take, need_init.get(traj[0], 0))
            need_final[traj[-1]] = need_final.get(traj[-1], 0) - min(
                take, need_final.get(traj[-1], 0)
            )
    if any(need_init.values()) or any(need_final.values()):
        raise AssertionError("covering selection failed despite covering preconditions")
    return selected


def _prune_history(p: Protocol, r: Run, L_init: Multiset, L_final: Multiset) -> History:
    h = deanonymize(p, r)
    h0 = _greedy_cover(h.entries, L_init, L_final)
    groups: dict[tuple[str, str], dict[Trajectory, int]] = {}
    for traj, k in h.entries:
        rest = k - h0.get(traj, 0)
        if rest > 0:
            groups.setdefault((traj[0], traj[-1]), {})[traj] = rest
    current = h
    order = lambda key: (p.state_index[key[0]], p.state_index[key[1]])
    for key in sorted(groups, key=order):
        bunch = History(groups[key].items())
        if bunch.agents > len(p.states):
            current = prune_bunch(p, current, bunch)
    return current


def prune(p: Protocol, r: Run, L_init: Multiset, L_final: Multiset) -> Run:
    """Shrink a covering run: same endpoints' required parts, fewer agents.

    The result starts within r.start, still covers L_init at the start and
    L_final at the end, and uses at most |L_init| + |L_final| + |Q|^3 agents:
    a covering core is kept verbatim and every remaining same-endpoints bunch
    larger than |Q| is pruned.
    """
    if p.model not in ("IO", "MFDO"):
        raise ValueError(f"pruning supports IO/MFDO, not {p.model}")
    _covering_check(p, r, L_init, L_final)
    current = _prune_history(p, r, L_init, L_final)
    bound = L_init.size() + L_final.size() + len(p.states) ** 3
    assert current.agents <= bound, f"pruned size {current.agents} exceeds {bound}"
    return realize(p, current)


def _prune_mfdo_linear_history(
    p: Protocol, r: Run, L_init: Multiset, L_final: Multiset
) -> History:
    h = deanonymize(p, r)
    first_pos: dict[str, int] = {}
    for i in range(h.length):
        for q, _ in h.config_at(i).items():
            first_pos.setdefault(q, i)
    selected: dict[Trajectory, int] = {}
    for q in sorted(first_pos, key=p.state_index.__getitem__):
        fq = first_pos[q]
        tau = min(traj for traj, _ in h.entries if traj[fq] == q)
        selected[tau] = 1
    selected = _greedy_cover(h.entries, L_init, L_final, preselected=selected)
    return History(selected.items())


def prune_mfdo_linear(p: Protocol, r: Run, L_init: Multiset, L_final: Multiset) -> Run:
    """Covering-preserving pruning with only |Q| overhead (message-free only).

    Keeps one whole trajectory per visited state — the lexicographically
    smallest one reaching the state at its earliest visit, so every state
    stays first-visited at the same position — plus covering trajectories.
    Result size is at most |L_init| + |L_final| + |Q|.
    """
    if p.model != "MFDO":
        raise ValueError(f"linear pruning is message-free only, not {p.model}")
    _covering_check(p, r, L_init, L_final)
    hp = _prune_mfdo_linear_history(p, r, L_init, L_final)
    bound = L_init.size() + L_final.size() + len(p.states)
    assert hp.agents <= bound, f"pruned size {hp.agents} exceeds {bound}"
    return realize(p, hp)


def do_to_mfdo_run(p: Protocol, pm: Protocol, r: Run) -> Run:
    """Project a DO run starting message-free onto the message-free image.

    Send steps disappear; a receive of message m becomes an observation of the
    state that sent m first.  Agent movements line up step for step.
    """
    if p.model != "DO":
        raise ValueError("expected a DO run")
    if r.start.messages:
        raise ValueError("the run must start message-free")
    apply_run(p, r)
    by_shape = {(t.src, t.obs, t.dst): t.name for t in pm.transitions}
    earliest_sender: dict[str, str] = {}
    steps: list[tuple[str, int]] = []
    for name, k in r.steps:
        if k == 0:
            continue
        t = p.transition(name)
        if isinstance(t, SendTrans):
            earliest_sender.setdefault(t.msg, t.src)
        elif isinstance(t, RecvTrans) and t.src != t.dst:
            o = earliest_sender.get(t.msg)
            if o is None:
                raise ValueError(f"receive of {t.msg} before any send")
            steps.append((by_shape[(t.src, o, t.dst)], k))
    return Run(Configuration(r.start.agents), tuple(steps)).normalized()


def mfdo_to_do_run(p: Protocol, pm: Protocol, rm: Run) -> Run:
    """Inverse direction: reinstate sends for a run over the message-free image.

    Each observation of o becomes the receive of o's broadcast message; for
    every message the necessary sends are emitted in one block by the
    earliest-populated sender, at the configuration first populating it, so
    each receive finds its message already in the pool.  Both endpoints stay
    message-free.
    """
    if p.model != "DO":
        raise ValueError("expected a DO target protocol")
    rm = rm.normalized()
    configs = [rm.start.agents]
    c = rm.start
    seen = frozenset(c.agents.support())
    blocks: list[tuple[ObsTrans, int]] = []
    for name, k in rm.steps:
        t = _as_obs(pm, pm.transition(name))
        if c.agents[t.src] < k or t.obs not in seen:
            raise ValueError(f"step {name}^{k} not enabled")
        c = Configuration(c.agents - Multiset({t.src: k}) + Multiset({t.dst: k}))
        seen = seen | {t.dst}
        configs.append(c.agents)
        blocks.append((t, k))

    send_by_state = {q: p.send_of(q)[0] for q in p.states}
    recv_count: dict[str, int] = {}
    for t, k in blocks:
        m = send_by_state[t.obs].msg
        recv_count[m] = recv_count.get(m, 0) + k

    first_pop: dict[str, int] = {}
    for j, agents in enumerate(configs):
        for q, _ in agents.items():
            first_pop.setdefault(q, j)
    inserts: dict[int, list[tuple[str, int]]] = {}
    for m in sorted(recv_count, key=p.msg_index.__getitem__):
        candidates = [
            (first_pop[q], p.state_index[q], q)
            for q in p.states
            if send_by_state[q].msg == m and q in first_pop
        ]
        if not candidates:
            raise ValueError(f"no populated sender for message {m}")
        _, _, qm = min(candidates)
        inserts.setdefault(first_pop[qm], []).append((send_by_state[qm].name, recv_count[m]))

    steps: list[tuple[str, int]] = []
    for j in range(len(configs)):
        steps.extend(inserts.get(j, ()))
        if j < len(blocks):
            t, k = blocks[j]
            m = send_by_state[t.obs].msg
            rt = p.recv_of(t.src, m)
            assert rt and rt[0].dst == t.dst, "observation without a matching receive"
            steps.append((rt[0].name, k))
    return Run(Configuration(rm.start.agents), tuple(steps)).normalized()


def prune_do(p: Protocol, r: Run, L_init: Multiset, L_final: Multiset) -> Run:
    """Covering-preserving pruning for DO runs between message-free configurations."""
    if p.model != "DO":
        raise ValueError(f"expected a DO protocol, not {p.model}")
    final = _covering_check(p, r, L_init, L_final)
    if r.start.messages or final.messages:
        raise ValueError("pruning needs message-free endpoints")
    pm = corresponding_mfdo(p)
    rm = do_to_mfdo_run(p, pm, r)
    pruned = prune(pm, rm, L_init, L_final)
    return mfdo_to_do_run(p, pm, pruned)


def strip_cycles(seg: tuple[str, ...]) -> tuple[str, ...]:
    """Cut every revisit back to the state's first occurrence, left to right."""
    out: list[str] = []
    pos: dict[str, int] = {}
    for q in seg:
        if q in pos:
            for dropped in out[pos[q] + 1 :]:
                del pos[dropped]
            del out[pos[q] + 1 :]
        else:
            pos[q] = len(out)
            out.append(q)
    return tuple(out)


def _shorten_mfdo(p: Protocol, r: Run) -> Run:
    r = r.normalized()
    h = deanonymize(p, r)
    n = h.length
    if n == 1:
        return Run(Configuration(r.start.agents), ())
    orig = h.expand()
    seen = h.seen_sets()
    boundaries = sorted({0, n - 1} | {i + 1 for i in range(n - 1) if seen[i] != seen[i + 1]})
    # Each round replays one seen-growing step verbatim, then compresses the
    # plateau up to the next boundary into cycle-free per-bunch walks.
    new: list[list[str]] = [[t[0]] for t in orig]
    for b0, b1 in zip(boundaries, boundaries[1:]):
        for i, t in enumerate(orig):
            new[i].append(t[b0 + 1])
        bunches: dict[tuple[str, str], list[int]] = {}
        for i, t in enumerate(orig):
            bunches.setdefault((t[b0 + 1], t[b1]), []).append(i)
        order = lambda key: (p.state_index[key[0]], p.state_index[key[1]])
        for key in sorted(bunches, key=order):
            members = bunches[key]
            segment = min(orig[i][b0 + 1 : b1 + 1] for i in members)
            sh = strip_cycles(segment)
            ext = len(sh) - 1
            if ext == 0:
                continue
            member_set = set(members)
            for i, tr in enumerate(new):
                if i in member_set:
                    tr.extend(sh[1:])
                else:
                    tr.extend([tr[-1]] * ext)
    hp = History((tuple(tr), 1) for tr in new)
    assert hp.config_at(hp.length - 1) == h.config_at(n - 1), "endpoint drift"
    out = realize(p, hp)
    bound = len(p.states) ** 4
    assert out.aggregated_length() <= bound, f"{out.aggregated_length()} exceeds {bound}"
    return out


def shorten(p: Protocol, r: Run) -> Run:
    """Equivalent run with aggregated length <= |Q|^4 (message-free) or
    |Q|^4 + |Q| (DO between message-free endpoints); endpoints preserved."""
    if p.model == "MFDO":
        return _shorten_mfdo(p, r)
    if p.model == "DO":
        final = apply_run(p, r)
        if r.start.messages or final.messages:
            raise ValueError("shortening needs message-free endpoints")
        pm = corresponding_mfdo(p)
        rm = do_to_mfdo_run(p, pm, r)
        shortened = _shorten_mfdo(pm, rm)
        out = mfdo_to_do_run(p, pm, shortened)
        bound = len(p.states) ** 4 + len(p.states)
        assert out.aggregated_length() <= bound, f"{out.aggregated_length()} exceeds {bound}"
        return out
    raise ValueError(f"shortening supports MFDO/DO, not {p.model}")
