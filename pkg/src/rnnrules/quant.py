"""DFA extraction by clustering recurrent hidden states (k-means or SOM)."""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .automata import Dfa, InputError, PartialDfa, complete, evaluate, minimize
from .nn.model import HiddenTrace, RnnModel, trace_batch


@dataclass
class HiddenTraceSet:
    alphabet: tuple[str, ...]
    h_init: np.ndarray
    traces: list[HiddenTrace]

    def __len__(self):
        return len(self.traces)

    def transitions(self):
        """Yield (symbol, pre-step state, post-step state) for every step of every trace."""
        for tr in self.traces:
            for j, a in enumerate(tr.string):
                yield a, tr.states[j], tr.states[j + 1]

    def num_transitions(self) -> int:
        return sum(len(tr) for tr in self.traces)

    def points(self) -> np.ndarray:
        """h_init once, then every post-step state."""
        rows = [self.h_init[None, :]] + [tr.states[1:] for tr in self.traces if len(tr)]
        return np.concatenate(rows, axis=0)


def collect_traces(model: RnnModel, split: Sequence) -> HiddenTraceSet:
    strings = [item[0] if isinstance(item, tuple) else item for item in split]
    if not strings:
        raise InputError("cannot collect traces from an empty split")
    return HiddenTraceSet(model.alphabet, model.initial_state(), trace_batch(model, strings))


# -- clustering ----------------------------------------------------------------

class ClusterModel:
    method: str
    centers: np.ndarray
    reduced: bool = False

    @property
    def k(self) -> int:
        return len(self.centers)

    def assign(self, points: np.ndarray) -> np.ndarray:
        """Nearest center (Euclidean); ties go to the lowest index."""
        pts = np.atleast_2d(points)
        d = ((pts[:, None, :] - self.centers[None, :, :]) ** 2).sum(-1)
        return np.argmin(d, axis=1)


@dataclass
class KMeansModel(ClusterModel):
    centers: np.ndarray
    inertia: float
    history: list[float] = field(default_factory=list)
    reduced: bool = False
    method: str = "kmeans"


@dataclass
class SOMModel(ClusterModel):
    centers: np.ndarray
    epochs: int
    lr0: float
    radius0: float
    reduced: bool = False
    method: str = "som"


def _sq_dists(points, centers):
    return ((points[:, None, :] - centers[None, :, :]) ** 2).sum(-1)


def _kmeanspp(points, k, rng):
    centers = [points[rng.integers(len(points))]]
    d2 = _sq_dists(points, np.array(centers))[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(len(points))
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, len(points) - 1)
        centers.append(points[idx])
        d2 = np.minimum(d2, _sq_dists(points, points[idx:idx + 1])[:, 0])
    return np.array(centers)


def _lloyd(points, centers, max_iter):
    history = []
    labels = None
    for _ in range(max_iter):
        d = _sq_dists(points, centers)
        new_labels = np.argmin(d, axis=1)
        history.append(float(d[np.arange(len(points)), new_labels].sum()))
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
        for j in range(len(centers)):
            members = points[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    d = _sq_dists(points, centers)
    inertia = float(d.min(axis=1).sum())
    history.append(inertia)
    return centers, inertia, history


def kmeans_fit(points: np.ndarray, k: int, seed: int = 0, restarts: int = 3,
               max_iter: int = 100) -> KMeansModel:
    """Lloyd's algorithm from k-means++ seeding; best of ``restarts`` by inertia."""
    points = np.asarray(points, dtype=np.float64)
    if k < 1:
        raise InputError("k must be >= 1")
    if len(points) < k:
        raise InputError(f"need at least k={k} points, got {len(points)}")
    distinct = len(np.unique(points, axis=0))
    reduced = distinct < k
    k = min(k, distinct)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        centers, inertia, history = _lloyd(points, _kmeanspp(points, k, rng), max_iter)
        if best is None or inertia < best.inertia:
            best = KMeansModel(centers, inertia, history, reduced)
    return best


def som_fit(points: np.ndarray, k: int, seed: int = 0, epochs: int = 10, lr0: float = 0.5,
            lr_final: float = 0.01, radius0: float | None = None, radius_final: float = 0.3) -> SOMModel:
    """Online 1-D self-organizing map with ``k`` units on a line.

    Learning rate and Gaussian neighbourhood radius decay linearly over all
    presentations; each presentation moves every unit toward the sample in
    proportion to its neighbourhood weight around the winner.
    """
    points = np.asarray(points, dtype=np.float64)
    if len(points) < 1:
        raise InputError("SOM needs at least one point")
    if k < 1:
        raise InputError("k must be >= 1")
    rng = np.random.default_rng(seed)
    if radius0 is None:
        radius0 = max(1.0, k / 2.0)
    units = points[rng.integers(len(points), size=k)].copy()
    positions = np.arange(k, dtype=np.float64)
    total = epochs * len(points)
    step = 0
    for _ in range(epochs):
        for i in rng.permutation(len(points)):
            frac = step / max(1, total - 1)
            lr = lr0 + (lr_final - lr0) * frac
            radius = radius0 + (radius_final - radius0) * frac
            x = points[i]
            winner = int(np.argmin(((units - x) ** 2).sum(1)))
            g = np.exp(-((positions - winner) ** 2) / (2.0 * radius * radius))
            units += (lr * g)[:, None] * (x - units)
            step += 1
    return SOMModel(units, epochs, lr0, radius0)


# -- DFA construction ----------------------------------------------------------

def build_dfa(traces: HiddenTraceSet, clusterer: ClusterModel, alphabet: Sequence[str] | None = None) -> Dfa:
    """Read a transition machine off the clustered traces.

    delta(g, a) is the most common destination cluster observed from g on a
    (ties: globally most frequent destination, then lowest index). A cluster
    accepts when strictly more than half of the final states landing in it
    were classified as accepting by the network.
    """
    if len(traces) == 0:
        raise InputError("no traces")
    alphabet = tuple(alphabet or traces.alphabet)
    sym = {a: i for i, a in enumerate(alphabet)}
    k = clusterer.k

    init = int(clusterer.assign(traces.h_init)[0])
    counts = np.zeros((k, len(alphabet), k), dtype=np.int64)
    final_votes = np.zeros((k, 2), dtype=np.int64)
    for tr in traces.traces:
        labels = clusterer.assign(tr.states)
        labels[0] = init
        for j, a in enumerate(tr.string):
            counts[labels[j], sym[a], labels[j + 1]] += 1
        final_votes[labels[-1], int(tr.prediction)] += 1

    overall = counts.sum(axis=(0, 1))
    delta = {}
    for g in range(k):
        for i, a in enumerate(alphabet):
            row = counts[g, i]
            if row.sum() == 0:
                continue
            top = np.flatnonzero(row == row.max())
            if len(top) > 1:
                top = top[overall[top] == overall[top].max()]
            delta[(g, a)] = int(top[0])
    accepting = {g for g in range(k) if final_votes[g, 1] * 2 > final_votes[g].sum() > 0}
    return complete(PartialDfa(alphabet, k, init, accepting, delta))


# -- candidate selection -------------------------------------------------------

@dataclass
class QuantExtractionConfig:
    candidate_counts: list[int]
    method: str = "kmeans"
    kmeans_restarts: int = 3
    kmeans_max_iter: int = 100
    som_epochs: int = 5
    som_lr: float = 0.5
    max_fit_points: int = 20000
    seed: int = 0

    def __post_init__(self):
        c = list(self.candidate_counts)
        if len(c) != 5 or any(b <= a for a, b in zip(c, c[1:])) or c[0] < 1:
            raise InputError(f"need exactly 5 strictly increasing candidate counts, got {c}")
        if self.method not in ("kmeans", "som"):
            raise InputError(f"unknown clustering method {self.method!r}; valid: kmeans, som")

    @classmethod
    def default(cls, n: int, method: str = "kmeans", seed: int = 0, **kw) -> "QuantExtractionConfig":
        return cls([n * m for m in range(1, 6)], method=method, seed=seed, **kw)


@dataclass
class CandidateResult:
    k: int
    clusters: int
    minimized_states: int
    val_acc: float


@dataclass
class QuantReport:
    method: str
    candidates: list[CandidateResult]
    selected_index: int
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "candidates": [asdict(c) for c in self.candidates],
            "selected_index": self.selected_index,
            "degenerate": self.degenerate,
        }


def fit_clusterer(points: np.ndarray, k: int, config: QuantExtractionConfig) -> ClusterModel:
    if config.method == "kmeans":
        k = min(k, len(points))
        return kmeans_fit(points, k, seed=config.seed, restarts=config.kmeans_restarts,
                          max_iter=config.kmeans_max_iter)
    return som_fit(points, k, seed=config.seed, epochs=config.som_epochs, lr0=config.som_lr)


def extract_best(model: RnnModel, dataset, config: QuantExtractionConfig,
                 traces: HiddenTraceSet | None = None) -> tuple[Dfa, QuantReport]:
    """Fit each candidate count on train-split states, minimize, keep the best on val."""
    val = dataset.splits["val"]
    if not val:
        raise InputError("dataset has no validation split")
    if traces is None:
        traces = collect_traces(model, dataset.splits["train"])
    points = traces.points()
    if len(points) > config.max_fit_points:
        rng = np.random.default_rng(config.seed)
        keep = np.sort(rng.choice(len(points) - 1, size=config.max_fit_points - 1, replace=False) + 1)
        points = np.concatenate([points[:1], points[keep]])
    results, dfas = [], []
    for k in config.candidate_counts:
        clusterer = fit_clusterer(points, k, config)
        dfa = minimize(build_dfa(traces, clusterer, model.alphabet))
        acc = evaluate(dfa, val)
        results.append(CandidateResult(k, clusterer.k, dfa.num_states, acc))
        dfas.append(dfa)
    order = sorted(range(len(results)),
                   key=lambda i: (-results[i].val_acc, results[i].minimized_states, results[i].k))
    best = order[0]
    degenerate = all(r.minimized_states == 1 for r in results)
    return dfas[best], QuantReport(config.method, results, best, degenerate)
