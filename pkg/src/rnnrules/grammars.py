"""Ground-truth languages (Tomita 1-7, Dyck-k), dataset sampling and ring data."""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

from .automata import Dfa, InputError, enumerate_strings, make_alphabet

TOMITA_ALPHABET = ("a", "b")
TOMITA_STATES = {1: 2, 2: 3, 3: 5, 4: 4, 5: 4, 6: 3, 7: 5}
DYCK_KS = (2, 3, 6, 8)

# k-th bracket pair for Dyck-k; beyond four pairs we fall back to letter pairs.
BRACKET_PAIRS = ("()", "[]", "{}", "<>", "aA", "bB", "cC", "dD", "eE", "fF")

BIN0 = (2, 50)
BIN1 = (51, 100)
SPLITS = ("train", "val", "test_bin0", "test_bin1")
SPLIT_BOUNDS = {"train": BIN0, "val": BIN0, "test_bin0": BIN0, "test_bin1": BIN1}
DEFAULT_SIZES = {
    "tomita": {"train": 10000, "val": 2000, "test_bin0": 2000, "test_bin1": 2000},
    "dyck": {"train": 20000, "val": 4000, "test_bin0": 4000, "test_bin1": 4000},
}


@dataclass(frozen=True)
class GrammarSpec:
    kind: str  # "tomita" | "dyck"
    index: int

    def __post_init__(self):
        if self.kind == "tomita":
            if self.index not in TOMITA_STATES:
                raise InputError(f"Tomita id must be in 1..7, got {self.index}")
        elif self.kind == "dyck":
            if self.index not in DYCK_KS:
                raise InputError(f"Dyck k must be one of {DYCK_KS}, got {self.index}")
        else:
            raise InputError(f"unknown grammar kind {self.kind!r}")

    @property
    def name(self) -> str:
        return f"{self.kind}{self.index}"

    @property
    def alphabet(self) -> tuple[str, ...]:
        return TOMITA_ALPHABET if self.kind == "tomita" else dyck_alphabet(self.index)

    @property
    def num_states(self) -> int:
        """Hidden-size unit: minimal DFA states for Tomita, k for Dyck-k."""
        return TOMITA_STATES[self.index] if self.kind == "tomita" else self.index

    def label(self, s: str) -> bool:
        if self.kind == "tomita":
            return tomita_label(self.index, s)
        return dyck_label(self.index, s)

    def prefix_labels(self, s: str) -> list[bool]:
        """Labels of every non-empty prefix ``s[:1] .. s``."""
        if self.kind == "tomita":
            dfa = tomita_dfa(self.index)
            q, out = dfa.start, []
            for pos, a in enumerate(s):
                q = dfa.delta[q][dfa.symbol_index(a, pos)]
                out.append(q in dfa.accepting)
            return out
        return dyck_prefix_labels(self.index, s)


GRAMMAR_NAMES = tuple(f"tomita{i}" for i in TOMITA_STATES) + tuple(f"dyck{k}" for k in DYCK_KS)


def parse_grammar(name: str) -> GrammarSpec:
    m = re.fullmatch(r"(tomita|dyck)[-_ ]?(\d+)", name.strip().lower())
    if not m:
        raise InputError(f"unknown grammar {name!r}; valid: {', '.join(GRAMMAR_NAMES)}")
    return GrammarSpec(m.group(1), int(m.group(2)))


# -- Tomita ----------------------------------------------------------------

# Transition rows are (on 'a', on 'b').
_TOMITA_TABLES = {
    # a*
    1: (0, {0}, ((0, 1), (1, 1))),
    # (ab)*
    2: (0, {0}, ((1, 2), (2, 0), (2, 2))),
    # no odd run of a's later followed by an odd run of b's.
    # 0: clean, even a-run / b-run; 1: clean, odd a-run; 2: armed, odd b-run;
    # 3: armed, even b-run or inside a-run; 4: dead
    3: (0, {0, 1, 3}, ((1, 0), (0, 2), (4, 3), (3, 2), (4, 4))),
    # no aaa: trailing a-count 0,1,2 then dead
    4: (0, {0, 1, 2}, ((1, 0), (2, 0), (3, 0), (3, 3))),
    # (#a mod 2, #b mod 2) packed as 2*pa + pb
    5: (0, {0}, ((2, 1), (3, 0), (0, 3), (1, 2))),
    # (#a - #b) mod 3
    6: (0, {0}, ((1, 2), (2, 0), (0, 1))),
    # b*a*b*a*: phase 0..3 then dead
    7: (0, {0, 1, 2, 3}, ((1, 0), (1, 2), (3, 2), (3, 4), (4, 4))),
}


def _check_tomita_id(i: int) -> None:
    if i not in TOMITA_STATES:
        raise InputError(f"Tomita id must be in 1..7, got {i!r}")


@lru_cache(maxsize=None)
def tomita_dfa(i: int) -> Dfa:
    """Minimal complete ground-truth DFA of Tomita grammar ``i`` over {a, b}."""
    _check_tomita_id(i)
    start, acc, rows = _TOMITA_TABLES[i]
    return Dfa(TOMITA_ALPHABET, start, frozenset(acc), rows)


def _runs(s: str) -> list[tuple[str, int]]:
    return [(m.group(0)[0], len(m.group(0))) for m in re.finditer(r"a+|b+", s)]


def _tomita3_direct(s: str) -> bool:
    odd_a_seen = False
    for sym, n in _runs(s):
        if sym == "a" and n % 2 == 1:
            odd_a_seen = True
        elif sym == "b" and n % 2 == 1 and odd_a_seen:
            return False
    return True


_TOMITA_DIRECT = {
    1: lambda s: "b" not in s,
    2: lambda s: s == "ab" * (len(s) // 2),
    3: _tomita3_direct,
    4: lambda s: "aaa" not in s,
    5: lambda s: s.count("a") % 2 == 0 and s.count("b") % 2 == 0,
    6: lambda s: (s.count("a") - s.count("b")) % 3 == 0,
    7: lambda s: re.fullmatch(r"b*a*b*a*", s) is not None,
}


def tomita_label(i: int, s: str) -> bool:
    """Membership by scanning the string against the grammar's definition.

    Deliberately independent of :func:`tomita_dfa`; the two cross-check each other.
    """
    _check_tomita_id(i)
    for pos, a in enumerate(s):
        if a not in TOMITA_ALPHABET:
            raise InputError(f"symbol {a!r} at position {pos} not in alphabet {TOMITA_ALPHABET!r}")
    return _TOMITA_DIRECT[i](s)


# -- Dyck ------------------------------------------------------------------

def dyck_alphabet(k: int) -> tuple[str, ...]:
    if not 1 <= k <= len(BRACKET_PAIRS):
        raise InputError(f"Dyck k must be in 1..{len(BRACKET_PAIRS)}, got {k}")
    return make_alphabet("".join(BRACKET_PAIRS[:k]))


def _dyck_scan(k: int, s: str):
    alphabet = dyck_alphabet(k)
    opens = {alphabet[2 * j]: j for j in range(k)}
    closes = {alphabet[2 * j + 1]: j for j in range(k)}
    stack: list[int] = []
    ok = True
    for pos, a in enumerate(s):
        if a in opens:
            if ok:
                stack.append(opens[a])
        elif a in closes:
            if ok and (not stack or stack.pop() != closes[a]):
                ok = False
        else:
            raise InputError(f"symbol {a!r} at position {pos} not in Dyck-{k} alphabet {alphabet!r}")
        yield ok and not stack


def dyck_label(k: int, s: str) -> bool:
    """True iff ``s`` is well nested over the first ``k`` bracket pairs."""
    result = True
    for result in _dyck_scan(k, s):
        pass
    return result


def dyck_prefix_labels(k: int, s: str) -> list[bool]:
    return list(_dyck_scan(k, s))


@lru_cache(maxsize=None)
def _ballot(remaining: int, depth: int) -> int:
    """Number of bracket-depth paths of length ``remaining`` from ``depth`` down to 0."""
    if depth < 0 or depth > remaining or (remaining - depth) % 2:
        return 0
    if remaining == 0:
        return 1
    return _ballot(remaining - 1, depth + 1) + _ballot(remaining - 1, depth - 1)


def generate_dyck_positive(k: int, target_len: int, rng: random.Random) -> str:
    """Uniformly random Dyck-k word of exactly ``target_len`` symbols.

    The open/close shape is drawn uniformly via ballot counts (length steering);
    each matched pair then gets a uniformly random bracket type.
    """
    if target_len < 2 or target_len % 2:
        raise InputError(f"Dyck target length must be even and >= 2, got {target_len}")
    alphabet = dyck_alphabet(k)
    out: list[str] = []
    stack: list[int] = []
    depth = 0
    for pos in range(target_len):
        remaining = target_len - pos
        total = _ballot(remaining, depth)
        up = _ballot(remaining - 1, depth + 1)
        if rng.randrange(total) < up:
            j = rng.randrange(k)
            stack.append(j)
            out.append(alphabet[2 * j])
            depth += 1
        else:
            out.append(alphabet[2 * stack.pop() + 1])
            depth -= 1
    return "".join(out)


def _mutate(s: str, alphabet: Sequence[str], rng: random.Random) -> str:
    op = rng.choice(("swap", "insert", "delete", "replace"))
    if op == "swap" and len(s) >= 2:
        i = rng.randrange(len(s) - 1)
        return s[:i] + s[i + 1] + s[i] + s[i + 2:]
    if op == "insert" or len(s) == 0:
        i = rng.randrange(len(s) + 1)
        return s[:i] + rng.choice(alphabet) + s[i:]
    if op == "delete":
        i = rng.randrange(len(s))
        return s[:i] + s[i + 1:]
    i = rng.randrange(len(s))
    return s[:i] + rng.choice([a for a in alphabet if a != s[i]]) + s[i + 1:]


def perturb_negative(positive: str, rng: random.Random, k: int | None = None,
                     max_tries: int = 50, label=None, alphabet=None) -> str | None:
    """One swap/insert/delete/replace edit that makes a Dyck word fall out of the language.

    Returns None when every retry stayed in the language; callers count that as
    a discarded sample. ``label``/``alphabet`` let other grammars reuse the mutator.
    """
    if k is None:
        k = _infer_dyck_k(positive)
    if alphabet is None:
        alphabet = dyck_alphabet(k)
    if label is None:
        label = lambda s: dyck_label(k, s)  # noqa: E731
    for _ in range(max_tries):
        cand = _mutate(positive, alphabet, rng)
        if cand != positive and not label(cand):
            return cand
    return None


def _infer_dyck_k(s: str) -> int:
    k = 1
    for a in s:
        for j, pair in enumerate(BRACKET_PAIRS):
            if a in pair:
                k = max(k, j + 1)
                break
    return k


# -- datasets ----------------------------------------------------------------

@dataclass
class LabeledDataset:
    grammar: GrammarSpec
    seed: int
    sizes: dict[str, int]
    splits: dict[str, list[tuple[str, bool]]]
    bounds: dict[str, tuple[int, int]] = field(default_factory=lambda: dict(SPLIT_BOUNDS))
    imbalanced: dict[str, bool] = field(default_factory=dict)
    discarded: int = 0

    @property
    def alphabet(self) -> tuple[str, ...]:
        return self.grammar.alphabet

    def header(self) -> dict:
        return {
            "header": True,
            "grammar": self.grammar.name,
            "seed": self.seed,
            "sizes": self.sizes,
            "alphabet": list(self.alphabet),
            "bounds": {k: list(v) for k, v in self.bounds.items()},
            "imbalanced": self.imbalanced,
            "discarded": self.discarded,
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header(), sort_keys=True, ensure_ascii=False)]
        for split in SPLITS:
            for s, label in self.splits.get(split, ()):
                lines.append(json.dumps({"s": s, "label": int(label), "split": split}, ensure_ascii=False))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "LabeledDataset":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise InputError("empty dataset file")
        head = json.loads(lines[0])
        if not head.get("header"):
            raise InputError("dataset file must start with a header record")
        splits: dict[str, list[tuple[str, bool]]] = {s: [] for s in SPLITS}
        for ln in lines[1:]:
            rec = json.loads(ln)
            splits.setdefault(rec["split"], []).append((rec["s"], bool(rec["label"])))
        return cls(
            grammar=parse_grammar(head["grammar"]),
            seed=head["seed"],
            sizes=head["sizes"],
            splits=splits,
            bounds={k: tuple(v) for k, v in head["bounds"].items()},
            imbalanced=head.get("imbalanced", {}),
            discarded=head.get("discarded", 0),
        )

    @classmethod
    def load(cls, path) -> "LabeledDataset":
        with open(path, encoding="utf-8") as fh:
            return cls.from_jsonl(fh.read())


class _DfaSampler:
    """Uniform sampling of strings of a given length and label through a DFA."""

    def __init__(self, dfa: Dfa, max_len: int):
        self.dfa = dfa
        n = dfa.num_states
        # count[label][r][q]: strings of length r leading from q to a state with that label
        self.count = {}
        for label in (True, False):
            table = [[int((q in dfa.accepting) == label) for q in range(n)]]
            for _ in range(max_len):
                prev = table[-1]
                table.append([sum(prev[t] for t in dfa.delta[q]) for q in range(n)])
            self.count[label] = table

    def available(self, label: bool, length: int) -> int:
        return self.count[label][length][self.dfa.start]

    def sample(self, label: bool, length: int, rng: random.Random) -> str:
        table = self.count[label]
        q, out = self.dfa.start, []
        for r in range(length, 0, -1):
            pick = rng.randrange(table[r][q])
            for i, t in enumerate(self.dfa.delta[q]):
                c = table[r - 1][t]
                if pick < c:
                    out.append(self.dfa.alphabet[i])
                    q = t
                    break
                pick -= c
        return "".join(out)

    def exhaustive(self, label: bool, lo: int, hi: int) -> list[str]:
        out = []
        for length in range(lo, hi + 1):
            out.extend(self._walk(label, length))
        return out

    def _walk(self, label, length):
        table = self.count[label]
        stack = [(self.dfa.start, "")]
        while stack:
            q, pre = stack.pop()
            r = length - len(pre)
            if r == 0:
                yield pre
                continue
            for i in reversed(range(len(self.dfa.alphabet))):
                t = self.dfa.delta[q][i]
                if table[r - 1][t]:
                    stack.append((t, pre + self.dfa.alphabet[i]))


# A language is "sparse" in a bin when fewer than this many times the requested
# count exists; then we enumerate instead of rejection-sampling.
_SPARSE_FACTOR = 4
_MAX_RETRIES = 200
_NEAR_MISS_ENUM = 200_000


def _split_groups(sizes):
    groups: dict[tuple[int, int], list[str]] = {}
    for split in SPLITS:
        if sizes.get(split, 0) > 0:
            groups.setdefault(SPLIT_BOUNDS[split], []).append(split)
    return groups


def _sample_tomita(spec, sizes, rng):
    dfa = tomita_dfa(spec.index)
    sampler = _DfaSampler(dfa, BIN1[1])
    seen: set[str] = set()
    splits = {s: [] for s in SPLITS}
    imbalanced = {}
    discarded = 0
    for (lo, hi), names in _split_groups(sizes).items():
        want = {n: {True: sizes[n] // 2, False: sizes[n] - sizes[n] // 2} for n in names}
        pools = {}
        for label in (True, False):
            total = sum(sampler.available(label, L) for L in range(lo, hi + 1))
            need = sum(w[label] for w in want.values())
            if total < _SPARSE_FACTOR * need:
                pool = sampler.exhaustive(label, lo, hi)
                rng.shuffle(pool)
                pools[label] = pool
        lengths = {lab: [L for L in range(lo, hi + 1) if sampler.available(lab, L)] for lab in (True, False)}
        for label in (True, False):
            if label not in pools:
                continue
            pool = pools[label]
            need = sum(w[label] for w in want.values())
            if len(pool) >= need:
                continue
            # Too few strings overall: share the pool proportionally, top up with the other label.
            shares = _proportional([sizes[n] for n in names], len(pool))
            for n, share in zip(names, shares):
                short = want[n][label] - share
                want[n][label] = share
                want[n][not label] += short
                imbalanced[n] = True
        near = {}
        if any(imbalanced.get(n) for n in names):
            # hard negatives are scarce too; share them out like the positives
            pool = _near_miss_pool(spec, sampler, lo, hi, want, rng)
            seen.update(pool)
            shares = _proportional([sizes[n] for n in names], len(pool))
            for n, share in zip(names, shares):
                near[n] = [pool.pop() for _ in range(min(share, want[n][False] // 2))] if imbalanced.get(n) else []
        for n in names:
            items = [(s, False) for s in near.get(n, ())]
            for label in (True, False):
                for _ in range(want[n][label] - (0 if label else len(near.get(n, ())))):
                    if label in pools:
                        s = pools[label].pop()
                    else:
                        s = None
                        for _ in range(_MAX_RETRIES):
                            cand = sampler.sample(label, rng.choice(lengths[label]), rng)
                            if cand is not None and cand not in seen:
                                s = cand
                                break
                        if s is None:
                            discarded += 1
                            continue
                    seen.add(s)
                    items.append((s, tomita_label(spec.index, s)))
            rng.shuffle(items)
            splits[n] = items
    return splits, {n: imbalanced.get(n, False) for n in SPLITS if sizes.get(n)}, discarded


def _near_miss_pool(spec, sampler, lo, hi, want, rng):
    """Negatives one substitution away from a positive, shuffled.

    Enumerated when the positives are few enough; sampled otherwise.
    """
    cap = sum(w[False] for w in want.values())
    out: set[str] = set()
    if sum(sampler.available(True, L) * L for L in range(lo, hi + 1)) <= _NEAR_MISS_ENUM:
        for pos in sampler.exhaustive(True, lo, hi):
            for i, c in enumerate(pos):
                cand = pos[:i] + ("b" if c == "a" else "a") + pos[i + 1:]
                if not tomita_label(spec.index, cand):
                    out.add(cand)
    else:
        for _ in range(cap * 2):
            cand = _near_miss(spec, sampler, lo, hi, rng)
            if cand is not None:
                out.add(cand)
    pool = sorted(out)
    rng.shuffle(pool)
    return pool


def _near_miss(spec, sampler, lo, hi, rng):
    """Single-symbol substitution of a positive, for grammars with too few positives."""
    length = rng.randrange(lo, hi + 1)
    while not sampler.available(True, length):
        length = rng.randrange(lo, hi + 1)
    pos = sampler.sample(True, length, rng)
    i = rng.randrange(len(pos))
    cand = pos[:i] + ("b" if pos[i] == "a" else "a") + pos[i + 1:]
    return None if tomita_label(spec.index, cand) else cand


def _proportional(weights, total):
    wsum = sum(weights)
    shares = [total * w // wsum for w in weights]
    for i in range(total - sum(shares)):
        shares[i % len(shares)] += 1
    return shares


def _sample_dyck(spec, sizes, rng):
    k = spec.index
    seen: set[str] = set()
    splits = {s: [] for s in SPLITS}
    discarded = 0
    for (lo, hi), names in _split_groups(sizes).items():
        even = [L for L in range(lo, hi + 1) if L % 2 == 0 and L >= 2]
        for n in names:
            items = []
            npos = sizes[n] // 2
            for idx in range(sizes[n]):
                positive = idx < npos
                s = None
                for _ in range(_MAX_RETRIES):
                    base = generate_dyck_positive(k, rng.choice(even), rng)
                    cand = base if positive else perturb_negative(base, rng, k)
                    if cand is None:
                        discarded += 1
                        continue
                    if lo <= len(cand) <= hi and cand not in seen:
                        s = cand
                        break
                if s is None:
                    discarded += 1
                    continue
                seen.add(s)
                items.append((s, dyck_label(k, s)))
            rng.shuffle(items)
            splits[n] = items
    return splits, {n: False for n in SPLITS if sizes.get(n)}, discarded


def sample_dataset(spec: GrammarSpec, sizes: dict[str, int] | None = None, seed: int = 0) -> LabeledDataset:
    """Sample disjoint train/val/test_bin0/test_bin1 splits, labelled by the oracles."""
    base = DEFAULT_SIZES[spec.kind]
    sizes = dict(base if sizes is None else sizes)
    for name, n in sizes.items():
        if name not in SPLITS:
            raise InputError(f"unknown split {name!r}; valid: {', '.join(SPLITS)}")
        if n < 0:
            raise InputError(f"split size must be non-negative, got {name}={n}")
    if not any(sizes.values()):
        raise InputError("at least one split size must be positive")
    rng = random.Random(f"{spec.name}/{seed}")
    if spec.kind == "tomita":
        splits, imbalanced, discarded = _sample_tomita(spec, sizes, rng)
    else:
        splits, imbalanced, discarded = _sample_dyck(spec, sizes, rng)
    return LabeledDataset(spec, seed, sizes, splits, imbalanced=imbalanced, discarded=discarded)


# -- ring representation -------------------------------------------------------

@dataclass
class RingData:
    alphabet: tuple[str, ...]
    # length -> (labels, indices); indices is None when every string is present
    rings: dict[int, tuple[list[int], list[int] | None]]

    def to_csv(self) -> str:
        rows = ["length,index,label"]
        for length in sorted(self.rings):
            labels, indices = self.rings[length]
            idx = indices if indices is not None else range(len(labels))
            rows.extend(f"{length},{i},{lab}" for i, lab in zip(idx, labels))
        return "\n".join(rows) + "\n"


def string_at(alphabet: Sequence[str], length: int, index: int) -> str:
    """The ``index``-th string of ``length`` in alphabet-lexicographic order."""
    base = len(alphabet)
    out = []
    for _ in range(length):
        index, r = divmod(index, base)
        out.append(alphabet[r])
    return "".join(reversed(out))


def ring_representation(spec: GrammarSpec, max_len: int, cap: int = 4096, min_len: int = 1) -> RingData:
    if max_len < 1:
        raise InputError("max_len must be >= 1")
    alphabet = spec.alphabet
    rings = {}
    for length in range(min_len, max_len + 1):
        total = len(alphabet) ** length
        if total <= cap:
            labels = [int(spec.label(s)) for s in enumerate_strings(alphabet, length, length)]
            rings[length] = (labels, None)
        else:
            # evenly strided indices: deterministic and spread over the whole ring
            indices = [i * total // cap for i in range(cap)]
            labels = [int(spec.label(string_at(alphabet, length, i))) for i in indices]
            rings[length] = (labels, indices)
    return RingData(alphabet, rings)


def iter_split_strings(data: Iterable[tuple[str, bool]]) -> list[str]:
    return [s for s, _ in data]
