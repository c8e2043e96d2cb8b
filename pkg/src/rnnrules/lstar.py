"""Angluin's L* over an observation table, with exact-DFA and RNN teachers."""

from __future__ import annotations

import random
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .automata import Dfa, enumerate_strings, equivalent, shortlex_key


class ContractError(RuntimeError):
    pass


class BudgetExhausted(RuntimeError):
    """Raised mid-learning when a query, state or time budget runs out."""

    def __init__(self, reason: str, table: "ObservationTable"):
        super().__init__(reason)
        self.reason = reason
        self.table = table


# -- teachers ------------------------------------------------------------------

class Teacher:
    def __init__(self):
        self.membership_queries = 0
        self.equivalence_queries = 0

    def _member(self, strings: list[str]) -> list[bool]:
        raise NotImplementedError

    def membership(self, s: str) -> bool:
        return self.membership_many([s])[0]

    def membership_many(self, strings: Sequence[str]) -> list[bool]:
        strings = list(strings)
        self.membership_queries += len(strings)
        return self._member(strings)

    def equivalence(self, hypothesis: Dfa) -> str | None:
        raise NotImplementedError


class DfaTeacher(Teacher):
    """Answers exactly from a known DFA."""

    def __init__(self, dfa: Dfa):
        super().__init__()
        self.dfa = dfa

    def _member(self, strings):
        return [self.dfa.accepts(s) for s in strings]

    def equivalence(self, hypothesis):
        self.equivalence_queries += 1
        return equivalent(hypothesis, self.dfa)


@dataclass
class EquivalenceConfig:
    samples: int = 2000
    max_len: int = 60
    mean_len: float = 15.0
    exhaustive_len: int = 4
    exhaustive_cap: int = 5000


class RnnTeacher(Teacher):
    """Black-box teacher around a trained classifier.

    Membership is the network's decision. Equivalence is approximate: every
    short string (up to ``exhaustive_len``) plus ``samples`` random strings with
    truncated-geometric lengths are compared with the hypothesis, and the
    shortest disagreement (then alphabet order) is returned.
    """

    def __init__(self, model, config: EquivalenceConfig | None = None, seed: int = 0):
        super().__init__()
        from .nn.model import predict_proba

        self._predict = predict_proba
        self.model = model
        self.alphabet = model.alphabet
        self.config = config or EquivalenceConfig()
        self.rng = random.Random(f"rnn-teacher/{seed}")
        self.cache: dict[str, bool] = {}
        self.samples_checked = 0
        self._short = self._short_strings()

    def _short_strings(self) -> list[str]:
        out: list[str] = []
        n = len(self.alphabet)
        for L in range(self.config.exhaustive_len + 1):
            if len(out) + n ** L > self.config.exhaustive_cap:
                break
            out.extend(enumerate_strings(self.alphabet, L, L))
        return out

    def _member(self, strings):
        todo = sorted({s for s in strings if s not in self.cache})
        if todo:
            probs = self._predict(self.model, todo)
            for s, p in zip(todo, probs):
                self.cache[s] = bool(p >= 0.5)
        return [self.cache[s] for s in strings]

    def _draw_length(self) -> int:
        p = 1.0 / (self.config.mean_len + 1.0)
        while True:
            # geometric on {0, 1, ...} by inversion, truncated by rejection
            u = self.rng.random()
            L = int(np.floor(np.log1p(-u) / np.log1p(-p)))
            if L <= self.config.max_len:
                return L

    def equivalence(self, hypothesis):
        self.equivalence_queries += 1
        batch = list(self._short)
        for _ in range(self.config.samples):
            L = self._draw_length()
            batch.append("".join(self.rng.choice(self.alphabet) for _ in range(L)))
        self.samples_checked += len(batch)
        truth = self._member(batch)
        bad = [s for s, y in zip(batch, truth) if hypothesis.accepts(s) != y]
        if not bad:
            return None
        return min(bad, key=shortlex_key(self.alphabet))


def rnn_teacher(model, config: EquivalenceConfig | None = None, seed: int = 0) -> RnnTeacher:
    return RnnTeacher(model, config, seed)


# -- observation table ---------------------------------------------------------

@dataclass
class LstarBudget:
    max_states: int = 300
    max_membership_queries: int = 5_000_000
    max_equivalence_queries: int = 100
    seconds: float = 120.0


class ObservationTable:
    """Hankel block H(p, e) for p in P and P.A, e in E."""

    def __init__(self, alphabet: Sequence[str]):
        self.alphabet = tuple(alphabet)
        self.key = shortlex_key(self.alphabet)
        self.P: list[str] = [""]
        self.E: list[str] = [""]
        self.H: dict[tuple[str, str], bool] = {}

    def add_prefix(self, p: str) -> None:
        if p not in self.P:
            self.P.append(p)

    def add_suffix(self, e: str) -> None:
        if e not in self.E:
            self.E.append(e)

    def extensions(self) -> list[str]:
        """P.A minus P, in shortlex order."""
        pset = set(self.P)
        ext = {p + a for p in self.P for a in self.alphabet} - pset
        return sorted(ext, key=self.key)

    def missing_cells(self) -> list[tuple[str, str]]:
        return [(p, e) for p in self.P + self.extensions() for e in self.E if (p, e) not in self.H]

    def row(self, p: str) -> tuple[bool, ...]:
        return tuple(self.H[(p, e)] for e in self.E)

    def distinct_rows(self) -> int:
        return len({self.row(p) for p in self.P})

    def cell_count(self) -> int:
        return len(self.H)


def is_closed(table: ObservationTable) -> str | None:
    """First extension whose row is absent from the P-rows, or None."""
    rows = {table.row(p) for p in table.P}
    for t in table.extensions():
        if table.row(t) not in rows:
            return t
    return None


def is_consistent(table: ObservationTable) -> tuple[str, str, str, str] | None:
    """Witness (p1, p2, a, e) with row(p1) = row(p2) but H(p1.a, e) != H(p2.a, e)."""
    first: dict[tuple, str] = {}
    for p2 in sorted(table.P, key=table.key):
        r = table.row(p2)
        p1 = first.setdefault(r, p2)
        if p1 == p2:
            continue
        for a in table.alphabet:
            for e in table.E:
                if table.H[(p1 + a, e)] != table.H[(p2 + a, e)]:
                    return p1, p2, a, e
    return None


class _Guard:
    def __init__(self, teacher: Teacher, budget: LstarBudget | None, started: float | None = None):
        self.teacher = teacher
        self.budget = budget
        self.started = time.monotonic() if started is None else started

    def check(self, table: ObservationTable) -> None:
        b = self.budget
        if b is None:
            return
        if self.teacher.membership_queries > b.max_membership_queries:
            raise BudgetExhausted("max_membership_queries", table)
        if table.distinct_rows() > b.max_states:
            raise BudgetExhausted("max_states", table)
        if time.monotonic() - self.started > b.seconds:
            raise BudgetExhausted("time_limit", table)


def fill(table: ObservationTable, teacher: Teacher) -> None:
    cells = table.missing_cells()
    if cells:
        answers = teacher.membership_many([p + e for p, e in cells])
        table.H.update(zip(cells, answers))


def fix_table(table: ObservationTable, teacher: Teacher, budget: LstarBudget | None = None,
              _guard: _Guard | None = None) -> ObservationTable:
    """Query and extend until the table is closed and consistent."""
    guard = _guard or _Guard(teacher, budget)
    while True:
        fill(table, teacher)
        guard.check(table)
        t = is_closed(table)
        if t is not None:
            table.add_prefix(t)
            continue
        w = is_consistent(table)
        if w is not None:
            _, _, a, e = w
            table.add_suffix(a + e)
            continue
        return table


def hypothesis_dfa(table: ObservationTable) -> Dfa:
    if any((p, e) not in table.H for p in table.P + table.extensions() for e in table.E):
        raise ContractError("observation table has unfilled cells")
    if is_closed(table) is not None or is_consistent(table) is not None:
        raise ContractError("hypothesis requires a closed and consistent table")
    reps: dict[tuple, str] = {}
    for p in sorted(table.P, key=table.key):
        reps.setdefault(table.row(p), p)
    ids = {r: i for i, r in enumerate(reps)}
    delta = tuple(tuple(ids[table.row(p + a)] for a in table.alphabet) for p in reps.values())
    accepting = frozenset(ids[r] for r, p in reps.items() if table.H[(p, "")])
    return Dfa(table.alphabet, ids[table.row("")], accepting, delta)


def process_counterexample(table: ObservationTable, cex: str, teacher: Teacher,
                           budget: LstarBudget | None = None, _guard=None) -> ObservationTable:
    """Angluin's scheme: every prefix of the counterexample joins P."""
    for i in range(1, len(cex) + 1):
        table.add_prefix(cex[:i])
    return fix_table(table, teacher, budget, _guard)


@dataclass
class LstarStats:
    membership_queries: int = 0
    equivalence_queries: int = 0
    hypotheses: list[int] = field(default_factory=list)
    counterexamples: list[str] = field(default_factory=list)
    stop_reason: str = ""
    seconds: float = 0.0

    @property
    def converged(self) -> bool:
        return self.stop_reason == "converged"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["converged"] = self.converged
        return d


def lstar_run(teacher: Teacher, alphabet: Sequence[str], budget: LstarBudget | None = None,
              initial_counterexamples: Iterable[str] = ()) -> tuple[Dfa, LstarStats]:
    """Learn a DFA from ``teacher``.

    On budget exhaustion the last complete hypothesis is returned and
    ``stats.stop_reason`` names the exhausted budget.
    """
    budget = budget or LstarBudget()
    started = time.monotonic()
    guard = _Guard(teacher, budget, started)
    table = ObservationTable(alphabet)
    stats = LstarStats()
    for cex in initial_counterexamples:
        for i in range(1, len(cex) + 1):
            table.add_prefix(cex[:i])
    hypothesis = None
    try:
        fix_table(table, teacher, budget, guard)
        while True:
            hypothesis = hypothesis_dfa(table)
            stats.hypotheses.append(hypothesis.num_states)
            if teacher.equivalence_queries >= budget.max_equivalence_queries:
                stats.stop_reason = "max_equivalence_queries"
                break
            cex = teacher.equivalence(hypothesis)
            if cex is None:
                stats.stop_reason = "converged"
                break
            stats.counterexamples.append(cex)
            process_counterexample(table, cex, teacher, budget, guard)
    except BudgetExhausted as exc:
        stats.stop_reason = exc.reason
    if hypothesis is None:
        eps = table.H.get(("", ""), teacher.membership(""))
        hypothesis = Dfa(tuple(alphabet), 0, frozenset({0} if eps else ()),
                         (tuple(0 for _ in alphabet),))
        stats.hypotheses.append(1)
    stats.membership_queries = teacher.membership_queries
    stats.equivalence_queries = teacher.equivalence_queries
    stats.seconds = time.monotonic() - started
    return hypothesis, stats
