"""Command-line interface: ``rnnrules <subcommand>``.

Every failure prints a single ``error: <kind>: <message>`` line on stderr and
exits with status 1; bad arguments are click usage errors (status 2).
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .automata import DfaFormatError, InputError, deserialize, emit_dot, evaluate, serialize
from .grammars import GRAMMAR_NAMES, LabeledDataset, parse_grammar, ring_representation, sample_dataset
from .lstar import EquivalenceConfig, LstarBudget, RnnTeacher, lstar_run
from .nn.cells import CellKind
from .nn.model import CheckpointError, TrainingError, evaluate_model, init_params, load_checkpoint, save_checkpoint
from .nn.train import TrainConfig, train
from .quant import QuantExtractionConfig, extract_best

GRAMMAR = click.Choice(GRAMMAR_NAMES, case_sensitive=False)
CELL = click.Choice([c.value for c in CellKind], case_sensitive=False)
METHOD = click.Choice(["kmeans", "som", "lstar"])

ERRORS = (InputError, DfaFormatError, CheckpointError, TrainingError, OSError, ValueError, KeyError)


def _error_kind(exc: BaseException) -> str:
    if isinstance(exc, OSError):
        return "io"
    return {
        "InputError": "input",
        "DfaFormatError": "dfa-format",
        "CheckpointError": "checkpoint",
        "TrainingError": "training",
    }.get(type(exc).__name__, "value")


def _one_line(msg: str) -> str:
    return " ".join(str(msg).split())


def _common(f):
    """--seed/--out/--config on a subcommand; unset values fall back to the group's."""
    f = click.option("--config", "config", type=click.Path(dir_okay=False), default=None,
                     help="Declarative plan file (TOML or JSON).")(f)
    f = click.option("--out", "out", type=click.Path(), default=None, help="Output location.")(f)
    f = click.option("--seed", "seed", type=int, default=None, help="Random seed.")(f)
    return f


def _resolve(ctx, seed, out, config, default_out="."):
    g = ctx.obj or {}
    seed = seed if seed is not None else g.get("seed")
    out = out if out is not None else g.get("out")
    config = config if config is not None else g.get("config")
    cfg = _load_config(config) if config else {}
    return (0 if seed is None else seed), Path(out if out is not None else default_out), cfg, config


def _load_config(path) -> dict:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        return json.loads(text)
    from .bench.runner import toml_loads

    return toml_loads(text, path)


def _dataset(data, grammar, data_seed, sizes=None) -> LabeledDataset:
    if data:
        return LabeledDataset.load(data)
    if grammar is None:
        raise InputError("pass --data or --grammar")
    return sample_dataset(parse_grammar(grammar), sizes, data_seed)


def _echo_json(obj) -> None:
    click.echo(json.dumps(obj, indent=1, sort_keys=True))


@click.group()
@click.option("--seed", type=int, default=None, help="Default seed for subcommands.")
@click.option("--out", type=click.Path(), default=None, help="Default output location.")
@click.option("--config", type=click.Path(dir_okay=False), default=None, help="Plan file.")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
@click.pass_context
def main(ctx, seed, out, config, verbose):
    """Train recurrent networks on formal languages and extract automata from them."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")
    ctx.obj = {"seed": seed, "out": out, "config": config}


@main.command("gen-data")
@click.option("--grammar", type=GRAMMAR, required=True)
@click.option("--size", "sizes", multiple=True, metavar="SPLIT=N", help="Override a split size.")
@_common
@click.pass_context
def gen_data(ctx, grammar, sizes, seed, out, config):
    """Sample a labelled dataset (JSONL) for a grammar."""
    seed, out, cfg, _ = _resolve(ctx, seed, out, config)
    spec = parse_grammar(grammar)
    chosen = dict(cfg.get("sizes") or {})
    for item in sizes:
        name, _, n = item.partition("=")
        if not n.isdigit():
            raise InputError(f"--size expects SPLIT=N, got {item!r}")
        chosen[name] = int(n)
    ds = sample_dataset(spec, chosen or None, seed)
    path = out if out.suffix == ".jsonl" else out / f"{spec.name}_seed{seed}.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    ds.save(path)
    click.echo(str(path))


@main.command("train")
@click.option("--grammar", type=GRAMMAR, default=None, help="Generate data on the fly.")
@click.option("--data", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--data-seed", type=int, default=0, show_default=True)
@click.option("--cell", type=CELL, required=True)
@click.option("--mult", type=click.IntRange(1, 5), default=2, show_default=True,
              help="Hidden size as a multiple of the grammar's size unit.")
@click.option("--hidden", type=int, default=None, help="Explicit hidden size (overrides --mult).")
@click.option("--lr", type=float, default=None)
@click.option("--max-iterations", type=int, default=None)
@click.option("--partial-threshold", type=float, default=None)
@_common
@click.pass_context
def train_cmd(ctx, grammar, data, data_seed, cell, mult, hidden, lr, max_iterations,
              partial_threshold, seed, out, config):
    """Train one network and write its checkpoint plus a training log."""
    seed, out, cfg, _ = _resolve(ctx, seed, out, config)
    ds = _dataset(data, grammar, data_seed, cfg.get("sizes"))
    tcfg = dict(cfg.get("train", {}))
    for key, val in (("initial_lr", lr), ("max_iterations", max_iterations),
                     ("partial_threshold", partial_threshold)):
        if val is not None:
            tcfg[key] = val
    tc = TrainConfig.from_dict(tcfg)
    spec = ds.grammar
    h = hidden if hidden is not None else mult * spec.num_states
    out.mkdir(parents=True, exist_ok=True)
    model = train(init_params(cell, spec.alphabet, h, seed), ds, tc, log_path=out / "train_log.csv")
    model.meta["grammar"] = spec.name
    model.meta["data_seed"] = ds.seed
    for split in ("test_bin0", "test_bin1"):
        if ds.splits.get(split):
            model.meta[split] = evaluate_model(model, ds.splits[split])
    path = out / "model.ckpt"
    save_checkpoint(model, path)
    _echo_json({"checkpoint": str(path), **{k: model.meta[k] for k in sorted(model.meta)}})


def _model_dataset(model, data, sizes):
    if data:
        return LabeledDataset.load(data)
    grammar = model.meta.get("grammar")
    if grammar is None:
        raise InputError("checkpoint has no grammar metadata; pass --data")
    return sample_dataset(parse_grammar(grammar), sizes, model.meta.get("data_seed", 0))


@main.command("extract")
@click.option("--method", type=METHOD, required=True)
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--data", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Dataset; defaults to regenerating the one recorded in the checkpoint.")
@_common
@click.pass_context
def extract_cmd(ctx, method, model_path, data, seed, out, config):
    """Extract a DFA from a trained checkpoint; writes DFA JSON, DOT and stats JSON."""
    seed, out, cfg, _ = _resolve(ctx, seed, out, config)
    model = load_checkpoint(model_path)
    ds = _model_dataset(model, data, cfg.get("sizes"))
    if method == "lstar":
        teacher = RnnTeacher(model, EquivalenceConfig(**cfg.get("equivalence", {})), seed=seed)
        dfa, lstats = lstar_run(teacher, model.alphabet, LstarBudget(**cfg.get("lstar", {})))
        stats = lstats.to_dict()
        stats["samples_checked"] = teacher.samples_checked
    else:
        spec = ds.grammar
        n = spec.num_states if spec.kind == "tomita" else 2 * spec.index
        qcfg = QuantExtractionConfig.default(n, method, seed=seed, **cfg.get("quant", {}))
        dfa, report = extract_best(model, ds, qcfg)
        stats = report.to_dict()
    stats["test_bin0"] = evaluate(dfa, ds.splits["test_bin0"]) if ds.splits.get("test_bin0") else None
    stats["test_bin1"] = evaluate(dfa, ds.splits["test_bin1"]) if ds.splits.get("test_bin1") else None
    out.mkdir(parents=True, exist_ok=True)
    paths = {"dfa": out / f"{method}.dfa.json", "dot": out / f"{method}.dot",
             "stats": out / f"{method}.stats.json"}
    paths["dfa"].write_text(serialize(dfa) + "\n", encoding="utf-8")
    paths["dot"].write_text(emit_dot(dfa, method), encoding="utf-8")
    paths["stats"].write_text(json.dumps(stats, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    _echo_json({"states": dfa.num_states, **{k: str(p) for k, p in paths.items()}})


@main.command("evaluate")
@click.option("--dfa", "dfa_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--data", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--grammar", type=GRAMMAR, default=None)
@_common
@click.pass_context
def evaluate_cmd(ctx, dfa_path, model_path, data, grammar, seed, out, config):
    """Accuracy of a DFA and/or a checkpoint on every split of a dataset."""
    seed, _, cfg, _ = _resolve(ctx, seed, out, config)
    if not dfa_path and not model_path:
        raise InputError("pass --dfa and/or --model")
    ds = _dataset(data, grammar, seed, cfg.get("sizes"))
    result = {}
    if dfa_path:
        dfa = deserialize(Path(dfa_path).read_text(encoding="utf-8"))
        result["dfa"] = {k: evaluate(dfa, v) for k, v in ds.splits.items() if v}
    if model_path:
        model = load_checkpoint(model_path)
        result["model"] = {k: evaluate_model(model, v) for k, v in ds.splits.items() if v}
    _echo_json(result)


@main.command("sweep")
@click.option("--workers", type=int, default=None, help="Override the plan's worker count.")
@click.option("--no-figures", is_flag=True, help="Skip SVG figures.")
@_common
@click.pass_context
def sweep_cmd(ctx, workers, no_figures, seed, out, config):
    """Run an experiment plan (resumable) and emit reports under <out>/reports."""
    from .bench.reports import emit_reports
    from .bench.runner import ExperimentPlan, run_matrix

    seed, _, cfg, config = _resolve(ctx, seed, out, config)
    if not config:
        raise InputError("sweep needs --config <plan file>")
    plan_dict = dict(cfg)
    if out is not None or (ctx.obj or {}).get("out") is not None:
        plan_dict["out"] = str(out if out is not None else ctx.obj["out"])
    if workers is not None:
        plan_dict["workers"] = workers
    plan = ExperimentPlan.from_dict(plan_dict)

    def progress(rec):
        states = {m: e.states for m, e in rec.extractions.items()}
        click.echo(f"{rec.key} {rec.model.get('stop_reason')} states={states}", err=True)

    records = run_matrix(plan, progress)
    written = emit_reports(records, Path(plan.out) / "reports", Path(plan.out) / "runs",
                           figures=not no_figures)
    _echo_json({"records": len(records), "manifest": str(Path(plan.out) / "manifest.json"),
                "reports": sorted(written)})


@main.command("report")
@click.option("--runs", "runs", type=click.Path(exists=True), required=True,
              help="Sweep output directory (or a records.jsonl file).")
@click.option("--no-figures", is_flag=True)
@_common
@click.pass_context
def report_cmd(ctx, runs, no_figures, seed, out, config):
    """Re-emit reports from stored run records."""
    from .bench.reports import emit_reports
    from .bench.runner import load_records

    runs = Path(runs)
    _, out_dir, _, _ = _resolve(ctx, seed, out, config, default_out=str(
        (runs if runs.is_dir() else runs.parent) / "reports"))
    base = runs if runs.is_dir() else runs.parent
    written = emit_reports(load_records(runs), out_dir, base / "runs", figures=not no_figures)
    _echo_json(sorted(str(p) for p in written.values()))


@main.command("ring")
@click.option("--grammar", type=GRAMMAR, default=None)
@click.option("--dfa", "dfa_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Render the language of an extracted DFA instead.")
@click.option("--rings", "num_rings", type=click.IntRange(1, 20), default=6, show_default=True)
@click.option("--min-len", type=click.IntRange(0), default=2, show_default=True)
@click.option("--cap", type=click.IntRange(1), default=1024, show_default=True,
              help="Maximum wedges per ring.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None)
@_common
@click.pass_context
def ring_cmd(ctx, grammar, dfa_path, num_rings, min_len, cap, csv_path, seed, out, config):
    """Concentric-ring SVG of a language (innermost ring = shortest strings)."""
    from .bench.plotting import ring_figure, safe_name

    _, out, _, _ = _resolve(ctx, seed, out, config, default_out="ring.svg")
    if (grammar is None) == (dfa_path is None):
        raise InputError("pass exactly one of --grammar or --dfa")
    if grammar is not None:
        spec = parse_grammar(grammar)
        title = spec.name
    else:
        dfa = deserialize(Path(dfa_path).read_text(encoding="utf-8"))
        spec = _DfaLanguage(dfa)
        title = Path(dfa_path).name
    rings = ring_representation(spec, min_len + num_rings - 1, cap=cap, min_len=min_len)
    path = out if out.suffix == ".svg" else out / f"{safe_name(title)}_rings.svg"
    ring_figure(rings, path, title=title)
    if csv_path:
        Path(csv_path).write_text(rings.to_csv(), encoding="utf-8")
    click.echo(str(path))


class _DfaLanguage:
    """Duck-typed stand-in for a grammar so rings can show an extracted DFA."""

    def __init__(self, dfa):
        self.dfa = dfa
        self.alphabet = dfa.alphabet

    def label(self, s: str) -> bool:
        return self.dfa.accepts(s)


def run(argv=None) -> int:
    """Entry point; converts domain errors into one machine-parsable line."""
    try:
        main.main(args=argv, prog_name="rnnrules", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("error: aborted: interrupted", err=True)
        return 1
    except ERRORS as exc:
        click.echo(f"error: {_error_kind(exc)}: {_one_line(exc)}", err=True)
        return 1
    return 0


def entry() -> None:
    sys.exit(run())


if __name__ == "__main__":
    entry()
