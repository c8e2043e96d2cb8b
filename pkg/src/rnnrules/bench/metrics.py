"""Stability statistics over seeds."""

from __future__ import annotations

import math
import statistics
from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

from ..automata import InputError

REPORT_COLUMNS = (
    "grammar", "cell", "hidden_mult", "method", "n_seeds",
    "acc_mean_bin0", "acc_std_bin0", "acc_mean_bin1", "acc_std_bin1",
    "states_min", "states_mode", "states_max", "e_rms", "failures",
)


def e_rms(values: Sequence[float], target: float | None = None) -> float:
    """Root-mean-square deviation from ``target`` (default: the sample mean)."""
    if len(values) == 0:
        raise InputError("e_rms of an empty sequence")
    if target is None:
        target = statistics.fmean(values)
    return math.sqrt(statistics.fmean([(v - target) ** 2 for v in values]))


def e_rms_vectors(vectors) -> float:
    """RMS Euclidean distance of iterates from their mean vector."""
    import numpy as np

    z = np.asarray(vectors, dtype=np.float64)
    if len(z) == 0:
        raise InputError("e_rms of an empty sequence")
    return float(np.sqrt(np.mean(np.sum((z - z.mean(axis=0)) ** 2, axis=1))))


def mode_smallest(values: Iterable[int]) -> int:
    return min(statistics.multimode(values))


@dataclass
class StabilityRow:
    grammar: str
    cell: str
    hidden_mult: int
    method: str
    n_seeds: int
    acc_mean_bin0: float
    acc_std_bin0: float
    acc_mean_bin1: float
    acc_std_bin1: float
    states_min: int
    states_mode: int
    states_max: int
    e_rms: float
    failures: int
    singleton: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(acc_bin0: Sequence[float], acc_bin1: Sequence[float], states: Sequence[int]):
    """(mean0, std0, mean1, std1, min, mode, max, e_rms) with population std."""
    if not acc_bin0 or not states:
        raise InputError("empty group")
    m0, m1 = statistics.fmean(acc_bin0), statistics.fmean(acc_bin1)
    s0, s1 = statistics.pstdev(acc_bin0), statistics.pstdev(acc_bin1)
    return (m0, s0, m1, s1, min(states), mode_smallest(states), max(states), e_rms(acc_bin0))


GroupKey = tuple  # (grammar, cell, hidden_mult, method)


def stability_metrics(records) -> list[StabilityRow]:
    """One row per (grammar, cell, hidden_mult, method) over the usable records.

    Entries without a DFA (diverged training) only count as failures.
    Discarded partial-mode records are skipped entirely.
    """
    groups: dict[GroupKey, list] = defaultdict(list)
    for rec in records:
        if rec.discarded:
            continue
        for method, entry in rec.extractions.items():
            groups[(rec.grammar, rec.cell, rec.hidden_mult, method)].append(entry)
    rows = []
    for key in sorted(groups):
        entries = groups[key]
        usable = [e for e in entries if e.states is not None]
        failures = sum(e.status != "converged" for e in entries)
        if not usable:
            rows.append(StabilityRow(*key, n_seeds=0, acc_mean_bin0=math.nan, acc_std_bin0=math.nan,
                                     acc_mean_bin1=math.nan, acc_std_bin1=math.nan, states_min=0,
                                     states_mode=0, states_max=0, e_rms=math.nan,
                                     failures=failures, singleton=False))
            continue
        stats = summarize([e.test_bin0 for e in usable], [e.test_bin1 for e in usable],
                          [e.states for e in usable])
        rows.append(StabilityRow(*key, len(usable), *stats, failures=failures,
                                 singleton=len(usable) == 1))
    return rows


@dataclass
class NetworkRow:
    grammar: str
    cell: str
    hidden_mult: int
    n_seeds: int
    acc_mean_bin0: float
    acc_std_bin0: float
    acc_mean_bin1: float
    acc_std_bin1: float
    e_rms: float
    diverged: int


NETWORK_COLUMNS = tuple(f.name for f in fields(NetworkRow))


def network_metrics(records) -> list[NetworkRow]:
    groups: dict[tuple, list] = defaultdict(list)
    for rec in records:
        if not rec.discarded:
            groups[(rec.grammar, rec.cell, rec.hidden_mult)].append(rec)
    rows = []
    for key in sorted(groups):
        recs = groups[key]
        ok = [r for r in recs if r.model.get("test_bin0") is not None]
        diverged = len(recs) - len(ok)
        if not ok:
            rows.append(NetworkRow(*key, 0, *([math.nan] * 5), diverged))
            continue
        b0 = [r.model["test_bin0"] for r in ok]
        b1 = [r.model["test_bin1"] for r in ok]
        rows.append(NetworkRow(*key, len(ok), statistics.fmean(b0), statistics.pstdev(b0),
                               statistics.fmean(b1), statistics.pstdev(b1), e_rms(b0), diverged))
    return rows
