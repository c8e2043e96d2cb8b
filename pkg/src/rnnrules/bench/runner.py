"""Experiment matrix: datasets, training, extraction, persistence and resume."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..automata import Dfa, InputError, emit_dot, evaluate, serialize
from ..grammars import GrammarSpec, LabeledDataset, parse_grammar, sample_dataset
from ..lstar import EquivalenceConfig, LstarBudget, RnnTeacher, lstar_run
from ..nn.cells import CellKind
from ..nn.model import (RnnModel, TrainingError, evaluate_model, init_params, load_checkpoint,
                        run_batch, save_checkpoint)
from ..nn.train import TrainConfig, train
from ..quant import QuantExtractionConfig, collect_traces, extract_best
from .metrics import e_rms_vectors

log = logging.getLogger(__name__)

METHODS = ("kmeans", "som", "lstar")
STATUSES = ("converged", "budget_exhausted", "degenerate", "training_diverged")
PARTIAL_CAP = 0.90
PARTIAL_ATTEMPTS = 3


@dataclass
class ExperimentPlan:
    grammars: list[str]
    cells: list[str]
    multipliers: list[int] = field(default_factory=lambda: [2])
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    methods: list[str] = field(default_factory=lambda: ["kmeans", "som", "lstar"])
    mode: str = "full"
    threshold: float = 0.85
    out: str = "runs"
    data_seed: int = 0
    workers: int = 1
    sizes: dict | None = None
    train: dict = field(default_factory=dict)
    quant: dict = field(default_factory=dict)
    lstar: dict = field(default_factory=dict)
    equivalence: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, axis in (("grammars", self.grammars), ("cells", self.cells),
                           ("multipliers", self.multipliers), ("seeds", self.seeds),
                           ("methods", self.methods)):
            if not axis:
                raise InputError(f"plan axis {name!r} must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise InputError("plan seeds must be distinct")
        for g in self.grammars:
            parse_grammar(g)
        for c in self.cells:
            CellKind.parse(c)
        for m in self.methods:
            if m not in METHODS:
                raise InputError(f"unknown method {m!r}; valid: {', '.join(METHODS)}")
        for s in self.multipliers:
            if not 1 <= int(s) <= 5:
                raise InputError(f"hidden-size multiplier must be in 1..5, got {s}")
        if self.mode not in ("full", "partial"):
            raise InputError(f"mode must be 'full' or 'partial', got {self.mode!r}")
        self.grammars = [parse_grammar(g).name for g in self.grammars]
        self.cells = [CellKind.parse(c).value for c in self.cells]

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentPlan":
        known = {k: v for k, v in obj.items() if k in cls.__dataclass_fields__}
        unknown = sorted(set(obj) - set(known))
        if unknown:
            raise InputError(f"unknown plan keys: {', '.join(unknown)}")
        return cls(**known)

    @classmethod
    def load(cls, path) -> "ExperimentPlan":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix == ".json":
            obj = json.loads(text)
        else:
            obj = toml_loads(text, path)
        return cls.from_dict(obj)

    def to_dict(self) -> dict:
        return asdict(self)

    def coordinates(self):
        for g in self.grammars:
            for c in self.cells:
                for s in self.multipliers:
                    for seed in self.seeds:
                        yield (g, c, int(s), int(seed))

    def train_config(self) -> TrainConfig:
        cfg = dict(self.train)
        if self.mode == "partial":
            cfg["partial_threshold"] = self.threshold
        return TrainConfig.from_dict(cfg)


@dataclass
class ExtractionEntry:
    method: str
    status: str
    states: int | None = None
    test_bin0: float | None = None
    test_bin1: float | None = None
    val_acc: float | None = None
    fixed_point_rms: float | None = None
    dfa_file: str | None = None
    stats: dict = field(default_factory=dict)


@dataclass
class RunRecord:
    grammar: str
    cell: str
    hidden_mult: int
    hidden_dim: int
    seed: int
    mode: str
    model: dict = field(default_factory=dict)
    extractions: dict[str, ExtractionEntry] = field(default_factory=dict)
    discarded: bool = False
    attempts: list[dict] = field(default_factory=list)
    seconds: float = 0.0
    error: str | None = None

    @property
    def key(self) -> str:
        return coord_key((self.grammar, self.cell, self.hidden_mult, self.seed))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["extractions"] = {m: asdict(e) for m, e in self.extractions.items()}
        return d

    @classmethod
    def from_dict(cls, obj: dict) -> "RunRecord":
        obj = dict(obj)
        obj["extractions"] = {m: ExtractionEntry(**e) for m, e in obj.get("extractions", {}).items()}
        return cls(**obj)


def toml_loads(text: str, path="<plan>") -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"invalid plan file {path}: {exc}") from None


def coord_key(coord) -> str:
    g, c, s, seed = coord
    return f"{g}/{c}/x{s}/seed{seed}"


def dataset_for(plan: ExperimentPlan, grammar: str) -> LabeledDataset:
    """Generate (or load the cached) dataset for ``grammar`` under the plan's data seed."""
    spec = parse_grammar(grammar)
    path = Path(plan.out) / "data" / f"{spec.name}_seed{plan.data_seed}.jsonl"
    if path.exists():
        return LabeledDataset.load(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ds = sample_dataset(spec, plan.sizes, plan.data_seed)
    tmp = path.with_suffix(".tmp")
    ds.save(tmp)
    os.replace(tmp, path)
    return ds


def self_loop_drift(model: RnnModel, dfa: Dfa, steps: int = 30) -> float | None:
    """Mean RMS drift of hidden states while repeating a self-loop symbol.

    For each reachable state q and symbol a with delta(q, a) = q, the network
    is driven to q by a shortest access string and then fed a repeatedly.
    """
    access = {dfa.start: ""}
    queue = deque([dfa.start])
    while queue:
        q = queue.popleft()
        for a, t in zip(dfa.alphabet, dfa.delta[q]):
            if t not in access:
                access[t] = access[q] + a
                queue.append(t)
    probes = [access[q] + a * steps for q in sorted(access)
              for i, a in enumerate(dfa.alphabet) if dfa.delta[q][i] == q]
    if not probes:
        return None
    idx, _ = model.encode(probes)
    states, _ = run_batch(model, idx)
    out = []
    for b, s in enumerate(probes):
        start = len(s) - steps
        out.append(e_rms_vectors(states[start:len(s) + 1, b, :]))
    return float(np.mean(out))


def _train_model(plan, spec: GrammarSpec, cell: str, mult: int, seed: int, ds, cfg, run_dir):
    """Train one model; partial mode retries with fresh seeds when the cap is overshot."""
    attempts = []
    model = None
    for attempt in range(PARTIAL_ATTEMPTS if plan.mode == "partial" else 1):
        init_seed = seed + 1000 * attempt
        m0 = init_params(cell, spec.alphabet, mult * spec.num_states, init_seed)
        model = train(m0, ds, cfg, log_path=run_dir / "train_log.csv")
        info = {"init_seed": init_seed, "stop_reason": model.meta["stop_reason"],
                "val_acc": model.meta["val_acc"]}
        attempts.append(info)
        if plan.mode != "partial":
            break
        if model.meta["stop_reason"] == "partial_threshold" and model.meta["val_acc"] <= PARTIAL_CAP:
            break
    ok = plan.mode != "partial" or (
        model.meta["stop_reason"] == "partial_threshold" and model.meta["val_acc"] <= PARTIAL_CAP)
    return model, attempts, not ok


def _extract(plan, method: str, model: RnnModel, spec: GrammarSpec, ds, seed: int, run_dir, traces):
    if method in ("kmeans", "som"):
        n = spec.num_states if spec.kind == "tomita" else 2 * spec.index
        qcfg = QuantExtractionConfig.default(n, method, seed=seed, **plan.quant)
        dfa, report = extract_best(model, ds, qcfg, traces=traces)
        status = "degenerate" if report.degenerate else "converged"
        stats = report.to_dict()
        val_acc = report.candidates[report.selected_index].val_acc
    else:
        budget = LstarBudget(**plan.lstar)
        teacher = RnnTeacher(model, EquivalenceConfig(**plan.equivalence), seed=seed)
        dfa, lstats = lstar_run(teacher, model.alphabet, budget)
        status = "converged" if lstats.converged else "budget_exhausted"
        stats = lstats.to_dict()
        stats["samples_checked"] = teacher.samples_checked
        val_acc = evaluate(dfa, ds.splits["val"])
    (run_dir / f"{method}.dfa.json").write_text(serialize(dfa) + "\n", encoding="utf-8")
    (run_dir / f"{method}.dot").write_text(emit_dot(dfa, method), encoding="utf-8")
    (run_dir / f"{method}.stats.json").write_text(json.dumps(stats, indent=1, sort_keys=True) + "\n",
                                                  encoding="utf-8")
    return ExtractionEntry(
        method=method, status=status, states=dfa.num_states,
        test_bin0=evaluate(dfa, ds.splits["test_bin0"]),
        test_bin1=evaluate(dfa, ds.splits["test_bin1"]),
        val_acc=val_acc, fixed_point_rms=self_loop_drift(model, dfa),
        dfa_file=f"{method}.dfa.json", stats=stats)


def run_coordinate(plan: ExperimentPlan, coord) -> RunRecord:
    grammar, cell, mult, seed = coord
    started = time.monotonic()
    spec = parse_grammar(grammar)
    run_dir = Path(plan.out) / "runs" / coord_key(coord)
    run_dir.mkdir(parents=True, exist_ok=True)
    rec = RunRecord(grammar, cell, mult, mult * spec.num_states, seed, plan.mode)
    ds = dataset_for(plan, grammar)
    try:
        model, attempts, discarded = _train_model(plan, spec, cell, mult, seed, ds, plan.train_config(), run_dir)
    except TrainingError as exc:
        rec.error = str(exc)
        rec.model = {"stop_reason": "training_diverged"}
        rec.extractions = {m: ExtractionEntry(m, "training_diverged", stats={"error": str(exc)})
                           for m in plan.methods}
        rec.seconds = time.monotonic() - started
        return rec
    save_checkpoint(model, run_dir / "model.json")
    rec.attempts = attempts
    rec.discarded = discarded
    rec.model = {
        "stop_reason": model.meta["stop_reason"],
        "iterations": model.meta["iterations"],
        "val_acc": model.meta["val_acc"],
        "test_bin0": evaluate_model(model, ds.splits["test_bin0"]),
        "test_bin1": evaluate_model(model, ds.splits["test_bin1"]),
        "num_params": model.num_params(),
    }
    traces = None
    if any(m in ("kmeans", "som") for m in plan.methods):
        traces = collect_traces(model, ds.splits["train"])
    for method in plan.methods:
        try:
            rec.extractions[method] = _extract(plan, method, model, spec, ds, seed, run_dir, traces)
        except Exception as exc:  # one failed extraction must not sink the matrix
            log.exception("extraction %s failed for %s", method, coord_key(coord))
            rec.extractions[method] = ExtractionEntry(method, "budget_exhausted", stats={"error": repr(exc)})
    rec.seconds = time.monotonic() - started
    return rec


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load_manifest(out: Path) -> dict:
    path = out / "manifest.json"
    if path.exists():
        return json.loads(path.read_text(encoding="utf-8"))
    return {"plan": None, "runs": {}}


def _save_manifest(out: Path, manifest: dict) -> None:
    tmp = out / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, out / "manifest.json")


def _persist(out: Path, manifest: dict, rec: RunRecord) -> None:
    path = out / "runs" / rec.key / "record.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(rec.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    manifest["runs"][rec.key] = {"record": str(path.relative_to(out)), "sha256": _sha256(path)}
    _save_manifest(out, manifest)


def _cached(out: Path, manifest: dict, key: str) -> RunRecord | None:
    entry = manifest["runs"].get(key)
    if not entry:
        return None
    path = out / entry["record"]
    if not path.exists() or _sha256(path) != entry["sha256"]:
        return None
    return RunRecord.from_dict(json.loads(path.read_text(encoding="utf-8")))


def _run_job(args):
    plan_dict, coord = args
    plan = ExperimentPlan.from_dict(plan_dict)
    try:
        return run_coordinate(plan, coord)
    except Exception as exc:
        g, c, s, seed = coord
        spec = parse_grammar(g)
        rec = RunRecord(g, c, s, s * spec.num_states, seed, plan.mode, error=repr(exc))
        rec.extractions = {m: ExtractionEntry(m, "training_diverged", stats={"error": repr(exc)})
                           for m in plan.methods}
        return rec


def run_matrix(plan: ExperimentPlan, progress=None) -> list[RunRecord]:
    """Run every plan coordinate, skipping those already recorded in the manifest."""
    out = Path(plan.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise InputError(f"output directory {out} is not writable: {exc}") from None
    manifest = _load_manifest(out)
    manifest["plan"] = plan.to_dict()
    coords = list(plan.coordinates())
    done: dict[str, RunRecord] = {}
    todo = []
    for coord in coords:
        cached = _cached(out, manifest, coord_key(coord))
        if cached is not None:
            done[coord_key(coord)] = cached
        else:
            todo.append(coord)
    # datasets first, so parallel workers never race on generation
    for g in plan.grammars:
        dataset_for(plan, g)
    jobs = [(plan.to_dict(), coord) for coord in todo]
    if plan.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            for rec in pool.map(_run_job, jobs):
                _persist(out, manifest, rec)
                done[rec.key] = rec
                if progress:
                    progress(rec)
    else:
        for job in jobs:
            rec = _run_job(job)
            _persist(out, manifest, rec)
            done[rec.key] = rec
            if progress:
                progress(rec)
    records = [done[coord_key(c)] for c in coords]
    with open(out / "records.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
    return records


def load_records(path) -> list[RunRecord]:
    path = Path(path)
    if path.is_dir():
        path = path / "records.jsonl"
    with open(path, encoding="utf-8") as fh:
        return [RunRecord.from_dict(json.loads(ln)) for ln in fh if ln.strip()]


def load_model(path) -> RnnModel:
    return load_checkpoint(path)
