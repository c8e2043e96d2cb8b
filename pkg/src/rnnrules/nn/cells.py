"""Batched recurrent cells with hand-written backward passes.

Every cell maps a one-hot input batch ``x`` of shape ``(B, I)`` and a state
batch ``s`` of shape ``(B, S)`` to the next state. For LSTM the state packs
``[h, c]`` so that ``S = 2 * hidden``; for the other cells ``S = hidden``.
"""

from __future__ import annotations

import enum

import numpy as np

from ..automata import InputError


class CellKind(str, enum.Enum):
    LSTM = "lstm"
    GRU = "gru"
    O2RNN = "o2rnn"
    MIRNN = "mirnn"

    @classmethod
    def parse(cls, name: str) -> "CellKind":
        try:
            return cls(str(name).lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise InputError(f"unknown cell {name!r}; valid: {valid}") from None


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class Cell:
    kind: CellKind

    def __init__(self, input_dim: int, hidden_dim: int):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim

    @property
    def state_dim(self) -> int:
        return self.hidden_dim

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.state_dim)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        raise NotImplementedError

    def biases(self) -> tuple[str, ...]:
        raise NotImplementedError

    def forward(self, p, x, s):
        raise NotImplementedError

    def backward(self, p, cache, ds, grads):
        """Accumulate parameter gradients into ``grads``; return d(loss)/d(previous state)."""
        raise NotImplementedError


class O2RNNCell(Cell):
    """h'_i = sigmoid(sum_jk W_ijk x_j h_k + b_i)."""

    kind = CellKind.O2RNN

    def initial_state(self):
        # a zero state would erase the first symbol (no first-order input term),
        # so the first unit plays the start neuron of the classic construction
        h = np.zeros(self.hidden_dim)
        h[0] = 1.0
        return h

    def shapes(self):
        H, I = self.hidden_dim, self.input_dim
        return {"W": (H, I, H), "b": (H,)}

    def biases(self):
        return ("b",)

    def forward(self, p, x, s):
        Wx = np.einsum("ijk,bj->bik", p["W"], x)
        h = sigmoid(np.einsum("bik,bk->bi", Wx, s) + p["b"])
        return h, (x, s, Wx, h)

    def backward(self, p, cache, ds, grads):
        x, s, Wx, h = cache
        dz = ds * h * (1.0 - h)
        grads["b"] += dz.sum(0)
        grads["W"] += np.einsum("bj,bik->ijk", x, dz[:, :, None] * s[:, None, :])
        return np.einsum("bik,bi->bk", Wx, dz)


class MIRNNCell(Cell):
    """Multiplicative integration: sigmoid(alpha*Ux*Vh + beta1*Ux + beta2*Vh + b)."""

    kind = CellKind.MIRNN

    def shapes(self):
        H, I = self.hidden_dim, self.input_dim
        return {"U": (H, I), "V": (H, H), "alpha": (H,), "beta1": (H,), "beta2": (H,), "b": (H,)}

    def biases(self):
        return ("alpha", "beta1", "beta2", "b")

    def forward(self, p, x, s):
        ux = x @ p["U"].T
        vh = s @ p["V"].T
        z = p["alpha"] * ux * vh + p["beta1"] * ux + p["beta2"] * vh + p["b"]
        h = sigmoid(z)
        return h, (x, s, ux, vh, h)

    def backward(self, p, cache, ds, grads):
        x, s, ux, vh, h = cache
        dz = ds * h * (1.0 - h)
        grads["alpha"] += (dz * ux * vh).sum(0)
        grads["beta1"] += (dz * ux).sum(0)
        grads["beta2"] += (dz * vh).sum(0)
        grads["b"] += dz.sum(0)
        dux = dz * (p["alpha"] * vh + p["beta1"])
        dvh = dz * (p["alpha"] * ux + p["beta2"])
        grads["U"] += dux.T @ x
        grads["V"] += dvh.T @ s
        return dvh @ p["V"]


class LSTMCell(Cell):
    """Standard LSTM without peepholes; gate order i, f, g, o."""

    kind = CellKind.LSTM

    @property
    def state_dim(self):
        return 2 * self.hidden_dim

    def shapes(self):
        H, I = self.hidden_dim, self.input_dim
        return {"W": (4 * H, I), "U": (4 * H, H), "b": (4 * H,)}

    def biases(self):
        return ("b",)

    def forward(self, p, x, s):
        H = self.hidden_dim
        h, c = s[:, :H], s[:, H:]
        a = x @ p["W"].T + h @ p["U"].T + p["b"]
        i = sigmoid(a[:, :H])
        f = sigmoid(a[:, H:2 * H])
        g = np.tanh(a[:, 2 * H:3 * H])
        o = sigmoid(a[:, 3 * H:])
        c2 = f * c + i * g
        tc = np.tanh(c2)
        h2 = o * tc
        return np.concatenate([h2, c2], axis=1), (x, h, c, i, f, g, o, tc)

    def backward(self, p, cache, ds, grads):
        H = self.hidden_dim
        x, h, c, i, f, g, o, tc = cache
        dh2, dc2 = ds[:, :H], ds[:, H:]
        dc = dc2 + dh2 * o * (1.0 - tc * tc)
        da = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c * f * (1.0 - f),
            dc * i * (1.0 - g * g),
            dh2 * tc * o * (1.0 - o),
        ], axis=1)
        grads["W"] += da.T @ x
        grads["U"] += da.T @ h
        grads["b"] += da.sum(0)
        return np.concatenate([da @ p["U"], dc * f], axis=1)


class GRUCell(Cell):
    """GRU in the original formulation: candidate uses U_n (r * h).

    h' = z * h + (1 - z) * n; gate order z, r, n.
    """

    kind = CellKind.GRU

    def shapes(self):
        H, I = self.hidden_dim, self.input_dim
        return {"W": (3 * H, I), "U": (3 * H, H), "b": (3 * H,)}

    def biases(self):
        return ("b",)

    def forward(self, p, x, s):
        H = self.hidden_dim
        W, U, b = p["W"], p["U"], p["b"]
        a = x @ W[:2 * H].T + s @ U[:2 * H].T + b[:2 * H]
        z = sigmoid(a[:, :H])
        r = sigmoid(a[:, H:])
        rh = r * s
        n = np.tanh(x @ W[2 * H:].T + rh @ U[2 * H:].T + b[2 * H:])
        h2 = z * s + (1.0 - z) * n
        return h2, (x, s, z, r, rh, n)

    def backward(self, p, cache, ds, grads):
        H = self.hidden_dim
        x, s, z, r, rh, n = cache
        U = p["U"]
        dn = ds * (1.0 - z)
        dz = ds * (s - n)
        dh = ds * z
        dan = dn * (1.0 - n * n)
        grads["W"][2 * H:] += dan.T @ x
        grads["U"][2 * H:] += dan.T @ rh
        grads["b"][2 * H:] += dan.sum(0)
        drh = dan @ U[2 * H:]
        dh += drh * r
        dar = drh * s * r * (1.0 - r)
        daz = dz * z * (1.0 - z)
        dazr = np.concatenate([daz, dar], axis=1)
        grads["W"][:2 * H] += dazr.T @ x
        grads["U"][:2 * H] += dazr.T @ s
        grads["b"][:2 * H] += dazr.sum(0)
        dh += dazr @ U[:2 * H]
        return dh


CELLS = {c.kind: c for c in (LSTMCell, GRUCell, O2RNNCell, MIRNNCell)}


def make_cell(kind: CellKind | str, input_dim: int, hidden_dim: int) -> Cell:
    kind = kind if isinstance(kind, CellKind) else CellKind.parse(kind)
    return CELLS[kind](input_dim, hidden_dim)
