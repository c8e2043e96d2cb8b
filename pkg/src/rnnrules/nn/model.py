"""Recurrent binary classifiers: parameters, forward pass, BPTT and checkpoints."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..automata import InputError
from .cells import Cell, CellKind, make_cell, sigmoid

CHECKPOINT_FORMAT = "rnnrules-checkpoint"
CHECKPOINT_VERSION = 1
HEAD_PARAMS = ("head_w", "head_b")


class TrainingError(RuntimeError):
    """Non-finite loss during training; carries the batch index."""

    def __init__(self, message: str, batch_index: int | None = None):
        super().__init__(message)
        self.batch_index = batch_index


class CheckpointError(ValueError):
    pass


@dataclass
class RnnModel:
    kind: CellKind
    alphabet: tuple[str, ...]
    hidden_dim: int
    params: dict[str, np.ndarray]
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = self.kind if isinstance(self.kind, CellKind) else CellKind.parse(self.kind)
        self.alphabet = tuple(self.alphabet)
        self.cell: Cell = make_cell(self.kind, len(self.alphabet), self.hidden_dim)
        self._index = {a: i for i, a in enumerate(self.alphabet)}
        expected = self.param_shapes()
        if set(expected) != set(self.params):
            raise InputError(f"parameter names {sorted(self.params)} do not match {sorted(expected)}")
        for name, shape in expected.items():
            arr = np.asarray(self.params[name], dtype=np.float64)
            if arr.shape != shape:
                raise InputError(f"parameter {name} has shape {arr.shape}, expected {shape}")
            self.params[name] = arr

    @property
    def input_dim(self) -> int:
        return len(self.alphabet)

    @property
    def state_dim(self) -> int:
        return self.cell.state_dim

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = dict(make_cell(self.kind, len(self.alphabet), self.hidden_dim).shapes())
        shapes["head_w"] = (self.hidden_dim,)
        shapes["head_b"] = ()
        return shapes

    def num_params(self) -> int:
        return int(sum(np.prod(s) for s in self.param_shapes().values()))

    def initial_state(self) -> np.ndarray:
        return self.cell.initial_state()

    def copy(self) -> "RnnModel":
        return RnnModel(self.kind, self.alphabet, self.hidden_dim,
                        {k: v.copy() for k, v in self.params.items()}, self.seed, dict(self.meta))

    def encode(self, strings: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Symbol indices padded with -1, plus lengths."""
        lengths = np.array([len(s) for s in strings], dtype=np.int64)
        T = int(lengths.max()) if len(strings) else 0
        idx = np.full((len(strings), T), -1, dtype=np.int64)
        for b, s in enumerate(strings):
            for t, a in enumerate(s):
                try:
                    idx[b, t] = self._index[a]
                except KeyError:
                    raise InputError(
                        f"symbol {a!r} at position {t} not in alphabet {self.alphabet!r}") from None
        return idx, lengths


def init_params(kind: CellKind | str, input_dim: int | Sequence[str], hidden_dim: int,
                seed: int = 0) -> RnnModel:
    """Glorot-uniform weights, every bias (and head bias) set to 1."""
    if isinstance(input_dim, int):
        alphabet = tuple(chr(ord("a") + i) for i in range(input_dim))
    else:
        alphabet = tuple(input_dim)
    if len(alphabet) < 1 or hidden_dim < 1:
        raise InputError("input and hidden dimensions must be >= 1")
    cell = make_cell(kind, len(alphabet), hidden_dim)
    rng = np.random.default_rng(seed)
    params = {}
    shapes = dict(cell.shapes())
    shapes["head_w"] = (hidden_dim,)
    shapes["head_b"] = ()
    for name, shape in shapes.items():
        if name in cell.biases() or name == "head_b":
            params[name] = np.ones(shape)
            continue
        fan_out = shape[0] if len(shape) > 1 else 1
        fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-limit, limit, size=shape)
    return RnnModel(cell.kind, alphabet, hidden_dim, params, seed)


def one_hot(idx: np.ndarray, n: int) -> np.ndarray:
    eye = np.vstack([np.eye(n), np.zeros((1, n))])
    return eye[idx]  # -1 selects the zero row


def forward_step(model: RnnModel, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """One recurrent update on a single (or batched) one-hot input and state."""
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    single = x.ndim == 1
    xb, hb = np.atleast_2d(x), np.atleast_2d(h)
    if xb.shape[1] != model.input_dim or hb.shape[1] != model.state_dim or xb.shape[0] != hb.shape[0]:
        raise InputError(
            f"shape mismatch: x {x.shape}, h {h.shape} for input_dim={model.input_dim}, "
            f"state_dim={model.state_dim}")
    out, _ = model.cell.forward(model.params, xb, hb)
    return out[0] if single else out


def _head(model: RnnModel, s: np.ndarray) -> np.ndarray:
    return s[..., :model.hidden_dim] @ model.params["head_w"] + model.params["head_b"]


def run_batch(model: RnnModel, idx: np.ndarray, keep_caches: bool = False):
    """States s_0..s_T of shape (T+1, B, S) and optional per-step caches."""
    B, T = idx.shape
    X = one_hot(idx, model.input_dim)
    states = np.empty((T + 1, B, model.state_dim))
    states[0] = model.initial_state()
    caches = []
    for t in range(T):
        states[t + 1], cache = model.cell.forward(model.params, X[:, t], states[t])
        if keep_caches:
            caches.append(cache)
    return states, caches


@dataclass
class HiddenTrace:
    string: str
    states: np.ndarray  # (len + 1, S); row 0 is the initial state
    probability: float

    @property
    def prediction(self) -> bool:
        return self.probability >= 0.5

    def __len__(self):
        return len(self.string)


def classify(model: RnnModel, s: str) -> tuple[float, HiddenTrace]:
    idx, _ = model.encode([s])
    states, _ = run_batch(model, idx)
    states = states[:, 0, :]
    prob = float(sigmoid(_head(model, states[-1])))
    return prob, HiddenTrace(s, states, prob)


def predict_proba(model: RnnModel, strings: Sequence[str], chunk: int = 4096) -> np.ndarray:
    out = np.empty(len(strings))
    for lo in range(0, len(strings), chunk):
        part = strings[lo:lo + chunk]
        idx, lengths = model.encode(part)
        states, _ = run_batch(model, idx)
        final = states[lengths, np.arange(len(part))]
        out[lo:lo + chunk] = sigmoid(_head(model, final))
    return out


def trace_batch(model: RnnModel, strings: Sequence[str], chunk: int = 4096) -> list[HiddenTrace]:
    traces = []
    for lo in range(0, len(strings), chunk):
        part = strings[lo:lo + chunk]
        idx, lengths = model.encode(part)
        states, _ = run_batch(model, idx)
        for b, s in enumerate(part):
            st = states[:lengths[b] + 1, b, :].copy()
            prob = float(sigmoid(_head(model, st[-1])))
            traces.append(HiddenTrace(s, st, prob))
    return traces


def evaluate_model(model: RnnModel, split: Sequence[tuple[str, bool]]) -> float:
    if len(split) == 0:
        raise InputError("cannot evaluate on an empty split")
    probs = predict_proba(model, [s for s, _ in split])
    labels = np.array([bool(y) for _, y in split])
    return float(np.mean((probs >= 0.5) == labels))


@dataclass
class Batch:
    idx: np.ndarray          # (B, T) symbol indices, -1 padded
    lengths: np.ndarray      # (B,)
    labels: np.ndarray       # (B,) final labels in {0, 1}
    prefix_labels: np.ndarray | None = None  # (B, T + 1); column t labels the length-t prefix


def make_batch(model: RnnModel, data: Sequence[tuple[str, bool]], prefix_fn=None) -> Batch:
    strings = [s for s, _ in data]
    idx, lengths = model.encode(strings)
    labels = np.array([float(bool(y)) for _, y in data])
    prefix = None
    if prefix_fn is not None:
        prefix = np.zeros((len(strings), idx.shape[1] + 1))
        for b, s in enumerate(strings):
            prefix[b, 1:len(s) + 1] = prefix_fn(s)
            prefix[b, len(s)] = labels[b]
    return Batch(idx, lengths, labels, prefix)


def take(batch: Batch, rows: np.ndarray) -> Batch:
    lengths = batch.lengths[rows]
    T = int(lengths.max()) if len(rows) else 0
    prefix = None if batch.prefix_labels is None else batch.prefix_labels[rows, :T + 1]
    return Batch(batch.idx[rows, :T], lengths, batch.labels[rows], prefix)


def loss_and_grads(model: RnnModel, batch: Batch, per_step_loss: bool = False,
                   batch_index: int | None = None) -> tuple[float, dict[str, np.ndarray]]:
    """Mean binary cross-entropy and its gradient by backpropagation through time.

    Without ``per_step_loss`` only the final step of each string is scored.
    With it, every non-empty prefix is scored against ``batch.prefix_labels``
    and all terms are averaged uniformly.
    """
    B, T = batch.idx.shape
    if B == 0:
        raise InputError("empty batch")
    states, caches = run_batch(model, batch.idx, keep_caches=True)
    logits = _head(model, states)  # (T+1, B)

    mask = np.zeros((T + 1, B))
    targets = np.zeros((T + 1, B))
    cols = np.arange(B)
    if per_step_loss:
        if batch.prefix_labels is None:
            raise InputError("per-step loss needs prefix labels")
        steps = np.arange(T + 1)[:, None]
        mask[:] = (steps >= 1) & (steps <= batch.lengths[None, :])
        targets[:] = batch.prefix_labels.T
        empty = batch.lengths == 0
        mask[0, empty] = 1.0
    mask[batch.lengths, cols] = 1.0
    targets[batch.lengths, cols] = batch.labels
    n_terms = mask.sum()

    with np.errstate(all="ignore"):  # non-finite values are reported below
        loss = float(np.sum(mask * (np.logaddexp(0.0, logits) - targets * logits)) / n_terms)
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss in batch {batch_index}", batch_index)

    dlogit = mask * (sigmoid(logits) - targets) / n_terms
    H = model.hidden_dim
    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    grads["head_w"] = np.einsum("tb,tbh->h", dlogit, states[:, :, :H])
    grads["head_b"] = np.array(dlogit.sum())
    w = model.params["head_w"]
    ds = np.zeros((B, model.state_dim))
    for t in range(T, 0, -1):
        ds[:, :H] += dlogit[t][:, None] * w
        ds = model.cell.backward(model.params, caches[t - 1], ds, grads)
    return loss, grads


# -- checkpoints ---------------------------------------------------------------

def checkpoint_dict(model: RnnModel) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": model.kind.value,
        "alphabet": list(model.alphabet),
        "hidden_dim": model.hidden_dim,
        "seed": model.seed,
        "params": [
            {"name": name, "shape": list(shape), "values": model.params[name].ravel().tolist()}
            for name, shape in model.param_shapes().items()
        ],
        "meta": model.meta,
    }


def model_from_dict(obj: dict) -> RnnModel:
    if obj.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("not a model checkpoint")
    if obj.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {obj.get('version')!r} unsupported (expected {CHECKPOINT_VERSION})")
    params = {p["name"]: np.array(p["values"], dtype=np.float64).reshape(p["shape"])
              for p in obj["params"]}
    return RnnModel(CellKind(obj["kind"]), tuple(obj["alphabet"]), obj["hidden_dim"],
                    params, obj.get("seed", 0), obj.get("meta", {}))


def save_checkpoint(model: RnnModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(checkpoint_dict(model), fh, ensure_ascii=False)


def load_checkpoint(path) -> RnnModel:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"invalid checkpoint JSON: {exc}") from None
    return model_from_dict(obj)
