"""Complete deterministic finite automata over a small ordered alphabet.

States are integers ``0 .. num_states - 1`` and the transition table is dense:
``delta[q][i]`` is the successor of state ``q`` on ``alphabet[i]``.
"""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence


class InputError(ValueError):
    """Raised for malformed arguments (bad symbols, empty splits, ...)."""


class DfaFormatError(ValueError):
    """Raised when a serialized DFA cannot be parsed or fails validation."""


def make_alphabet(symbols: Iterable[str]) -> tuple[str, ...]:
    alphabet = tuple(symbols)
    if not alphabet:
        raise InputError("alphabet must be non-empty")
    if len(set(alphabet)) != len(alphabet):
        raise InputError(f"alphabet has duplicate symbols: {alphabet!r}")
    for a in alphabet:
        if not isinstance(a, str) or len(a) != 1:
            raise InputError(f"alphabet symbols must be single characters, got {a!r}")
    return alphabet


@dataclass(frozen=True)
class Dfa:
    alphabet: tuple[str, ...]
    start: int
    accepting: frozenset[int]
    delta: tuple[tuple[int, ...], ...]
    _index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "alphabet", make_alphabet(self.alphabet))
        object.__setattr__(self, "accepting", frozenset(int(q) for q in self.accepting))
        object.__setattr__(self, "delta", tuple(tuple(int(t) for t in row) for row in self.delta))
        n = len(self.delta)
        if n == 0:
            raise InputError("a DFA needs at least one state")
        if not 0 <= self.start < n:
            raise InputError(f"start state {self.start} out of range for {n} states")
        for q in self.accepting:
            if not 0 <= q < n:
                raise InputError(f"accepting state {q} out of range for {n} states")
        k = len(self.alphabet)
        for q, row in enumerate(self.delta):
            if len(row) != k:
                raise InputError(f"state {q}: delta row has {len(row)} entries, expected {k}")
            for t in row:
                if not 0 <= t < n:
                    raise InputError(f"state {q}: transition target {t} out of range")
        object.__setattr__(self, "_index", {a: i for i, a in enumerate(self.alphabet)})

    @property
    def num_states(self) -> int:
        return len(self.delta)

    def symbol_index(self, a: str, position: int | None = None) -> int:
        try:
            return self._index[a]
        except KeyError:
            where = "" if position is None else f" at position {position}"
            raise InputError(f"symbol {a!r}{where} not in alphabet {self.alphabet!r}") from None

    def run(self, s: str, state: int | None = None) -> int:
        """State reached from ``state`` (default: start) after reading ``s``."""
        q = self.start if state is None else state
        delta = self.delta
        for pos, a in enumerate(s):
            q = delta[q][self.symbol_index(a, pos)]
        return q

    def accepts(self, s: str) -> bool:
        return self.run(s) in self.accepting


def accepts(dfa: Dfa, s: str) -> bool:
    return dfa.accepts(s)


@dataclass
class PartialDfa:
    """Transition map that may be missing edges, e.g. from quantization."""

    alphabet: tuple[str, ...]
    num_states: int
    start: int
    accepting: set[int]
    delta: dict[tuple[int, str], int]


def complete(machine: PartialDfa | Dfa) -> Dfa:
    """Route every missing edge to a fresh rejecting sink with self-loops.

    Complete input is returned unchanged (no sink is added).
    """
    if isinstance(machine, Dfa):
        return machine
    alphabet = make_alphabet(machine.alphabet)
    n = machine.num_states
    missing = any((q, a) not in machine.delta for q in range(n) for a in alphabet)
    sink = n
    rows = []
    for q in range(n):
        rows.append(tuple(machine.delta.get((q, a), sink) for a in alphabet))
    if missing:
        rows.append(tuple(sink for _ in alphabet))
    return Dfa(alphabet, machine.start, frozenset(machine.accepting), tuple(rows))


def enumerate_strings(alphabet: Sequence[str], max_len: int, min_len: int = 0) -> Iterator[str]:
    """All strings with ``min_len <= len <= max_len``, by length then alphabet order."""
    for n in range(min_len, max_len + 1):
        for tup in itertools.product(alphabet, repeat=n):
            yield "".join(tup)


def shortlex_key(alphabet: Sequence[str]):
    order = {a: i for i, a in enumerate(alphabet)}
    return lambda s: (len(s), [order[a] for a in s])


def reachable_states(dfa: Dfa) -> list[int]:
    """Reachable states in BFS order from start, symbols in alphabet order."""
    seen = {dfa.start}
    order = [dfa.start]
    queue = deque(order)
    while queue:
        q = queue.popleft()
        for t in dfa.delta[q]:
            if t not in seen:
                seen.add(t)
                order.append(t)
                queue.append(t)
    return order


def _renumber(dfa: Dfa, block_of: Mapping[int, int]) -> Dfa:
    """Quotient ``dfa`` by ``block_of`` and renumber blocks canonically (BFS)."""
    start_block = block_of[dfa.start]
    rep: dict[int, int] = {}
    for q, b in block_of.items():
        rep.setdefault(b, q)
    number = {start_block: 0}
    order = [start_block]
    queue = deque(order)
    while queue:
        b = queue.popleft()
        for t in dfa.delta[rep[b]]:
            tb = block_of[t]
            if tb not in number:
                number[tb] = len(order)
                order.append(tb)
                queue.append(tb)
    rows = tuple(tuple(number[block_of[t]] for t in dfa.delta[rep[b]]) for b in order)
    accepting = frozenset(number[b] for b in order if rep[b] in dfa.accepting)
    return Dfa(dfa.alphabet, 0, accepting, rows)


def minimize(dfa: Dfa) -> Dfa:
    """Hopcroft partition refinement on the reachable part, canonically numbered."""
    states = reachable_states(dfa)
    live = set(states)
    k = len(dfa.alphabet)
    inverse: list[dict[int, list[int]]] = [dict() for _ in range(k)]
    for q in states:
        for i, t in enumerate(dfa.delta[q]):
            inverse[i].setdefault(t, []).append(q)

    acc = frozenset(q for q in states if q in dfa.accepting)
    rej = frozenset(live - acc)
    partition: list[set[int]] = [set(b) for b in (acc, rej) if b]
    block_of = {}
    for idx, block in enumerate(partition):
        for q in block:
            block_of[q] = idx

    worklist: list[tuple[int, int]] = []
    if len(partition) == 2:
        smaller = 0 if len(partition[0]) <= len(partition[1]) else 1
        worklist = [(smaller, i) for i in range(k)]
    in_work = set(worklist)

    while worklist:
        splitter_idx, i = worklist.pop()
        in_work.discard((splitter_idx, i))
        splitter = partition[splitter_idx]
        preds: dict[int, set[int]] = {}
        for t in splitter:
            for q in inverse[i].get(t, ()):
                preds.setdefault(block_of[q], set()).add(q)
        for b, hit in preds.items():
            block = partition[b]
            if len(hit) == len(block):
                continue
            rest = block - hit
            partition[b] = hit
            new = len(partition)
            partition.append(rest)
            for q in rest:
                block_of[q] = new
            for j in range(k):
                if (b, j) in in_work:
                    worklist.append((new, j))
                    in_work.add((new, j))
                else:
                    pick = b if len(hit) <= len(rest) else new
                    worklist.append((pick, j))
                    in_work.add((pick, j))
    return _renumber(dfa, block_of)


def moore_minimize(dfa: Dfa) -> Dfa:
    """Moore's iterative refinement; slower, kept as an independent cross-check."""
    states = reachable_states(dfa)
    sig = {q: int(q in dfa.accepting) for q in states}
    while True:
        keys = {q: (sig[q],) + tuple(sig[t] for t in dfa.delta[q]) for q in states}
        ids: dict[tuple, int] = {}
        new = {q: ids.setdefault(keys[q], len(ids)) for q in states}
        if len(ids) == len(set(sig.values())):
            return _renumber(dfa, new)
        sig = new


def equivalent(a: Dfa, b: Dfa) -> str | None:
    """Shortest (then alphabet-lexicographic) string on which ``a`` and ``b`` disagree.

    Returns None when the languages are equal.
    """
    if a.alphabet != b.alphabet:
        raise InputError(f"alphabet mismatch: {a.alphabet!r} vs {b.alphabet!r}")
    start = (a.start, b.start)
    parent: dict[tuple[int, int], tuple[tuple[int, int], str] | None] = {start: None}
    queue = deque([start])
    while queue:
        pair = queue.popleft()
        p, q = pair
        if (p in a.accepting) != (q in b.accepting):
            out = []
            while parent[pair] is not None:
                pair, sym = parent[pair]
                out.append(sym)
            return "".join(reversed(out))
        for i, sym in enumerate(a.alphabet):
            nxt = (a.delta[p][i], b.delta[q][i])
            if nxt not in parent:
                parent[nxt] = (pair, sym)
                queue.append(nxt)
    return None


def evaluate(dfa: Dfa, data: Sequence[tuple[str, bool]]) -> float:
    """Fraction of ``(string, label)`` pairs the DFA classifies correctly."""
    if len(data) == 0:
        raise InputError("cannot evaluate on an empty split")
    hits = sum(dfa.accepts(s) == bool(label) for s, label in data)
    return hits / len(data)


# -- serialization ---------------------------------------------------------

def to_dict(dfa: Dfa) -> dict:
    return {
        "alphabet": list(dfa.alphabet),
        "start": dfa.start,
        "accepting": sorted(dfa.accepting),
        "delta": [list(row) for row in dfa.delta],
    }


def serialize(dfa: Dfa) -> str:
    return json.dumps(to_dict(dfa), ensure_ascii=False)


def from_dict(obj) -> Dfa:
    if not isinstance(obj, dict):
        raise DfaFormatError("DFA JSON must be an object")
    for key in ("alphabet", "start", "accepting", "delta"):
        if key not in obj:
            raise DfaFormatError(f"missing field {key!r}")
    alphabet, delta = obj["alphabet"], obj["delta"]
    if not isinstance(alphabet, list) or not isinstance(delta, list):
        raise DfaFormatError("'alphabet' and 'delta' must be lists")
    n = len(delta)
    referenced = [("start", obj["start"])] + [("accepting", q) for q in obj["accepting"]]
    for q, row in enumerate(delta):
        if not isinstance(row, list) or len(row) != len(alphabet):
            raise DfaFormatError(
                f"state {q}: delta row must list {len(alphabet)} targets, got {row!r}")
        referenced += [(f"delta[{q}]", t) for t in row]
    for where, q in referenced:
        if not isinstance(q, int) or isinstance(q, bool) or q < 0:
            raise DfaFormatError(f"{where}: invalid state {q!r}")
        if q >= n:
            raise DfaFormatError(f"state {q} (referenced by {where}) has no delta row")
    try:
        return Dfa(tuple(alphabet), obj["start"], frozenset(obj["accepting"]),
                   tuple(tuple(r) for r in delta))
    except InputError as exc:
        raise DfaFormatError(str(exc)) from None


def deserialize(text: str) -> Dfa:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DfaFormatError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return from_dict(obj)


def emit_dot(dfa: Dfa, name: str = "dfa") -> str:
    """Graphviz text: one node per state, one edge per (state, symbol)."""
    lines = [f"digraph {name} {{", "  rankdir=LR;"]
    for q in range(dfa.num_states):
        shape = "doublecircle" if q in dfa.accepting else "circle"
        extra = ", style=bold" if q == dfa.start else ""
        lines.append(f'  q{q} [shape={shape}{extra}];')
    for q, row in enumerate(dfa.delta):
        for a, t in zip(dfa.alphabet, row):
            label = a.replace("\\", "\\\\").replace('"', '\\"')
            lines.append(f'  q{q} -> q{t} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
