"""Report emission: CSV tables, a JSON dump, DOT automata and SVG figures."""

from __future__ import annotations

import csv
import io
import json
import math
import shutil
from dataclasses import asdict
from pathlib import Path

from ..grammars import parse_grammar, ring_representation
from . import plotting
from .metrics import NETWORK_COLUMNS, REPORT_COLUMNS, network_metrics, stability_metrics

RING_LENGTHS = 6
RING_MIN_LEN = 2

REPORT_HEADER = """\
# Extraction stability per (grammar, cell, hidden_mult, method) over seeds.
# n_seeds: seeds with an extracted DFA; failures: entries not 'converged'.
# acc_*_bin0 / acc_*_bin1: DFA test accuracy on lengths 2-50 / 51-100 (mean, population std).
# states_*: minimized state counts (mode ties resolved to the smallest value).
# e_rms: RMS deviation of per-seed bin-0 accuracy from the group mean.
"""

NETWORK_HEADER = """\
# Network test accuracy per (grammar, cell, hidden_mult); diverged: runs without a model.
"""


def fmt(x) -> str:
    """Deterministic cell formatting: ints as-is, floats to 6 decimals, NaN as empty."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return "" if math.isnan(x) else f"{x:.6f}"
    return str(x)


def _csv_text(header: str, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(getattr(r, c)) for c in columns])
    return buf.getvalue()


def report_csv(rows) -> str:
    return _csv_text(REPORT_HEADER, REPORT_COLUMNS, rows)


def _jsonable(x):
    if isinstance(x, float) and math.isnan(x):
        return None
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_jsonable(v) for v in x]
    return x


def _selected_dfas(records, runs_dir: Path | None):
    """Per (grammar, cell, size, method), the DFA of the best seed (test bin 0, then fewest states)."""
    best = {}
    for rec in records:
        if rec.discarded:
            continue
        for method, e in rec.extractions.items():
            if e.states is None or e.dfa_file is None:
                continue
            key = (rec.grammar, rec.cell, rec.hidden_mult, method)
            rank = (-e.test_bin0, e.states, rec.seed)
            if key not in best or rank < best[key][0]:
                best[key] = (rank, rec)
    out = {}
    for key, (_, rec) in sorted(best.items()):
        if runs_dir is None:
            continue
        dot = runs_dir / rec.key / f"{key[3]}.dot"
        if dot.exists():
            out[key] = dot
    return out


def emit_reports(records, out, runs_dir=None, figures: bool = True) -> dict[str, Path]:
    """Write report.csv, networks.csv, report.json, selected DOT files and SVG figures.

    ``runs_dir`` is the sweep's per-run directory; DOT files are copied from it
    when present. Returns a map of artifact name to path.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    records = list(records)
    rows = stability_metrics(records)
    nets = network_metrics(records)
    written: dict[str, Path] = {}

    path = out / "report.csv"
    path.write_text(report_csv(rows), encoding="utf-8", newline="")
    written["report.csv"] = path
    path = out / "networks.csv"
    path.write_text(_csv_text(NETWORK_HEADER, NETWORK_COLUMNS, nets), encoding="utf-8", newline="")
    written["networks.csv"] = path

    dump = {
        "columns": list(REPORT_COLUMNS),
        "groups": [_jsonable(r.to_dict()) for r in rows],
        "networks": [_jsonable(asdict(r)) for r in nets],
        "accounting": {
            "records": len(records),
            "entries": sum(len(r.extractions) for r in records),
            "discarded": sum(r.discarded for r in records),
        },
    }
    path = out / "report.json"
    path.write_text(json.dumps(dump, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    written["report.json"] = path

    runs_dir = Path(runs_dir) if runs_dir is not None else None
    for (g, c, s, m), dot in _selected_dfas(records, runs_dir).items():
        dest = out / "dfa" / f"{g}_{c}_x{s}_{m}.dot"
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(dot, dest)
        written[str(dest.relative_to(out))] = dest

    if figures:
        fig_dir = out / "figures"
        grammars = sorted({r.grammar for r in rows})
        for g in grammars:
            name = plotting.safe_name(g)
            written[f"figures/{name}_accuracy.svg"] = plotting.accuracy_vs_size(
                rows, g, fig_dir / f"{name}_accuracy.svg")
            written[f"figures/{name}_states.svg"] = plotting.state_counts(
                rows, g, fig_dir / f"{name}_states.svg")
            spec = parse_grammar(g)
            rings = ring_representation(spec, RING_MIN_LEN + RING_LENGTHS - 1, min_len=RING_MIN_LEN)
            written[f"figures/{name}_rings.svg"] = plotting.ring_figure(
                rings, fig_dir / f"{name}_rings.svg", title=g)
        if nets:
            written["figures/networks.svg"] = plotting.network_accuracy(nets, fig_dir / "networks.svg")
    return written
