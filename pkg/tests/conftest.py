import random

import pytest

from rnnrules.automata import Dfa


def random_dfa(rng: random.Random, max_states: int = 12, alphabet=("a", "b")) -> Dfa:
    n = rng.randint(1, max_states)
    delta = tuple(tuple(rng.randrange(n) for _ in alphabet) for _ in range(n))
    accepting = frozenset(q for q in range(n) if rng.random() < 0.5)
    return Dfa(tuple(alphabet), rng.randrange(n), accepting, delta)


@pytest.fixture
def rng():
    return random.Random(12345)


def finite_difference_error(model, batch, per_step: bool, eps: float = 1e-6) -> dict[str, float]:
    """Max relative error per parameter between BPTT and central differences."""
    import numpy as np

    from rnnrules.nn.model import loss_and_grads

    _, grads = loss_and_grads(model, batch, per_step)
    errors = {}
    for name, value in model.params.items():
        num = np.zeros_like(value)
        flat = value.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up, _ = loss_and_grads(model, batch, per_step)
            flat[i] = old - eps
            down, _ = loss_and_grads(model, batch, per_step)
            flat[i] = old
            num.reshape(-1)[i] = (up - down) / (2 * eps)
        scale = np.maximum(np.abs(num) + np.abs(grads[name]), 1e-7)
        errors[name] = float(np.max(np.abs(num - grads[name]) / scale))
    return errors


def gradcheck_batch(model, seed: int, n: int = 6, max_len: int = 5):
    """Random strings with random prefix labels, including one empty string."""
    import numpy as np

    from rnnrules.nn.model import make_batch

    rng = np.random.default_rng(seed)
    alpha = model.alphabet
    strings = [""] + ["".join(rng.choice(alpha, size=rng.integers(1, max_len + 1))) for _ in range(n - 1)]
    labels = {s: [bool(b) for b in rng.integers(0, 2, size=len(s))] for s in strings}
    data = [(s, bool(labels[s][-1]) if s else bool(rng.integers(0, 2))) for s in strings]
    return make_batch(model, data, prefix_fn=lambda s: labels[s])


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda ln: int(ln.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
