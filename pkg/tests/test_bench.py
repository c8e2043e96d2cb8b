import json
import math
import random
import re
from collections import Counter

import pytest

from rnnrules.automata import InputError
from rnnrules.bench.metrics import (REPORT_COLUMNS, e_rms, mode_smallest, network_metrics,
                                    stability_metrics)
from rnnrules.bench.reports import emit_reports, report_csv
from rnnrules.bench.runner import ExperimentPlan, ExtractionEntry, RunRecord, load_records, run_matrix
from rnnrules.bench import runner as runner_mod

SMALL = {"train": 200, "val": 100, "test_bin0": 60, "test_bin1": 30}


def naive_row(entries):
    """Two-pass reference: plain loops, population variance, smallest mode."""
    b0 = [e.test_bin0 for e in entries]
    b1 = [e.test_bin1 for e in entries]
    n = len(b0)
    m0 = sum(b0) / n
    m1 = sum(b1) / n
    s0 = math.sqrt(sum((x - m0) ** 2 for x in b0) / n)
    s1 = math.sqrt(sum((x - m1) ** 2 for x in b1) / n)
    counts = Counter(e.states for e in entries)
    top = max(counts.values())
    mode = min(s for s, c in counts.items() if c == top)
    states = [e.states for e in entries]
    return m0, s0, m1, s1, min(states), mode, max(states), s0


def make_record(grammar, cell, mult, seed, entries, discarded=False):
    rec = RunRecord(grammar, cell, mult, mult * 2, seed, "full", discarded=discarded)
    rec.model = {"test_bin0": 1.0, "test_bin1": 0.9, "stop_reason": "perfect_val", "val_acc": 1.0}
    rec.extractions = {e.method: e for e in entries}
    return rec


def entry(method, acc0, acc1, states, status="converged"):
    return ExtractionEntry(method, status, states, acc0, acc1)


class TestMetrics:
    def test_closed_forms(self):
        assert e_rms([0.9, 1.1]) == pytest.approx(0.1)
        assert e_rms([0.7] * 5) == 0.0
        assert mode_smallest([4, 4, 200]) == 4
        assert mode_smallest([5, 3, 5, 3, 9]) == 3
        with pytest.raises(InputError):
            e_rms([])

    def test_constant_group(self):
        recs = [make_record("tomita1", "o2rnn", 2, s, [entry("kmeans", 1.0, 1.0, 2)]) for s in range(4)]
        (row,) = stability_metrics(recs)
        assert row.acc_std_bin0 == 0.0 and row.e_rms == 0.0
        assert (row.states_min, row.states_mode, row.states_max) == (2, 2, 2)
        assert row.n_seeds == 4 and row.failures == 0

    def test_singleton_flag(self):
        (row,) = stability_metrics([make_record("tomita1", "gru", 1, 0, [entry("som", 0.8, 0.7, 3)])])
        assert row.singleton and row.acc_std_bin0 == 0.0

    def test_failures_and_discarded(self):
        recs = [
            make_record("tomita5", "gru", 2, 0, [entry("lstar", 0.6, 0.5, 250, "budget_exhausted")]),
            make_record("tomita5", "gru", 2, 1, [ExtractionEntry("lstar", "training_diverged")]),
            make_record("tomita5", "gru", 2, 2, [entry("lstar", 0.9, 0.9, 4)]),
            make_record("tomita5", "gru", 2, 3, [entry("lstar", 0.1, 0.1, 1)], discarded=True),
        ]
        (row,) = stability_metrics(recs)
        assert row.n_seeds == 2 and row.failures == 2
        assert row.states_max == 250

    def test_against_naive_reference(self):
        rng = random.Random(0)
        for _ in range(100):
            recs = []
            for seed in range(rng.randint(1, 10)):
                ents = [entry(m, rng.random(), rng.random(), rng.randint(1, 8))
                        for m in rng.sample(["kmeans", "som", "lstar"], rng.randint(1, 3))]
                recs.append(make_record(rng.choice(["tomita2", "dyck2"]), rng.choice(["gru", "lstm"]),
                                        rng.randint(1, 2), seed, ents))
            rows = stability_metrics(recs)
            groups = {}
            for r in recs:
                for m, e in r.extractions.items():
                    groups.setdefault((r.grammar, r.cell, r.hidden_mult, m), []).append(e)
            assert [(r.grammar, r.cell, r.hidden_mult, r.method) for r in rows] == sorted(groups)
            for row in rows:
                ref = naive_row(groups[(row.grammar, row.cell, row.hidden_mult, row.method)])
                got = (row.acc_mean_bin0, row.acc_std_bin0, row.acc_mean_bin1, row.acc_std_bin1,
                       row.states_min, row.states_mode, row.states_max, row.e_rms)
                assert got == pytest.approx(ref, abs=1e-12)
                assert row.states_min <= row.states_mode <= row.states_max

    def test_network_rows(self):
        recs = [make_record("tomita1", "o2rnn", 2, s, [entry("kmeans", 1.0, 1.0, 2)]) for s in range(3)]
        (row,) = network_metrics(recs)
        assert row.n_seeds == 3 and row.acc_mean_bin0 == 1.0 and row.diverged == 0


class TestReports:
    def test_empty_csv_has_header(self, tmp_path):
        written = emit_reports([], tmp_path)
        text = written["report.csv"].read_text()
        lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
        assert lines == [",".join(REPORT_COLUMNS)]
        assert text.startswith("#")

    def test_row_per_group_and_deterministic(self, tmp_path):
        recs = [make_record(g, "o2rnn", 2, s, [entry("kmeans", 0.9 + s / 100, 0.8, 2 + s),
                                               entry("som", 0.95, 0.9, 3)])
                for g in ("tomita1", "tomita2") for s in range(3)]
        a = emit_reports(recs, tmp_path / "a")
        b = emit_reports(recs, tmp_path / "b")
        body = [ln for ln in a["report.csv"].read_text().splitlines() if not ln.startswith("#")]
        assert len(body) == 1 + 4
        for name in a:
            assert a[name].read_bytes() == b[name].read_bytes(), name
        dump = json.loads(a["report.json"].read_text())
        assert dump["accounting"]["entries"] == 12

    def test_nan_cells_empty(self):
        recs = [make_record("tomita1", "gru", 1, 0, [ExtractionEntry("lstar", "training_diverged")])]
        line = report_csv(stability_metrics(recs)).splitlines()[-1]
        assert line.startswith("tomita1,gru,1,lstar,0,,")

    def test_ring_svg_tomita1(self, tmp_path):
        from rnnrules.bench.plotting import ring_figure
        from rnnrules.grammars import parse_grammar, ring_representation

        path = ring_figure(ring_representation(parse_grammar("tomita1"), 4, min_len=2), tmp_path / "r.svg")
        svg = path.read_text()
        fills = []
        for i in range(4):
            m = re.search(rf'<g id="ring2-{i}">\s*<path[^>]*style="fill: (#[0-9a-f]+)', svg)
            assert m, i
            fills.append(m.group(1))
        assert fills.count("#ffffff") == 1 and fills[0] == "#ffffff"
        assert len(re.findall(r'<g id="ring3-', svg)) == 8


def tiny_plan(tmp_path, **kw):
    base = dict(grammars=["tomita1"], cells=["o2rnn"], multipliers=[1], seeds=[0, 1],
                methods=["kmeans", "lstar"], out=str(tmp_path / "sweep"), sizes=SMALL,
                train={"batch_size": 64, "max_iterations": 40, "initial_lr": 0.5, "eval_every": 10},
                lstar={"seconds": 10, "max_states": 30}, equivalence={"samples": 100})
    base.update(kw)
    return ExperimentPlan.from_dict(base)


class TestRunner:
    def test_plan_validation(self, tmp_path):
        with pytest.raises(InputError):
            tiny_plan(tmp_path, seeds=[0, 0])
        with pytest.raises(InputError):
            tiny_plan(tmp_path, grammars=[])
        with pytest.raises(InputError):
            tiny_plan(tmp_path, methods=["pca"])
        with pytest.raises(InputError):
            tiny_plan(tmp_path, multipliers=[6])
        with pytest.raises(InputError, match="unknown plan keys"):
            ExperimentPlan.from_dict({"grammars": ["tomita1"], "cells": ["gru"], "colour": 1})

    def test_plan_file(self, tmp_path):
        p = tmp_path / "plan.toml"
        p.write_text('grammars = ["tomita2"]\ncells = ["lstm"]\nseeds = [3]\n[train]\nbatch_size = 32\n')
        plan = ExperimentPlan.load(p)
        assert plan.seeds == [3] and plan.train_config().batch_size == 32
        p.write_text("grammars = [")
        with pytest.raises(InputError):
            ExperimentPlan.load(p)

    def test_cardinality_and_resume(self, tmp_path, monkeypatch):
        plan = tiny_plan(tmp_path)
        recs = run_matrix(plan)
        assert len(recs) == 2
        assert all(set(r.extractions) == {"kmeans", "lstar"} for r in recs)
        assert sum(len(r.extractions) for r in recs) == 2 * 2
        for r in recs:
            for e in r.extractions.values():
                assert e.states >= 1 and 0 <= e.test_bin0 <= 1 and 0 <= e.test_bin1 <= 1
        out = tmp_path / "sweep"
        assert (out / "manifest.json").exists()
        assert (out / "runs" / "tomita1/o2rnn/x1/seed0" / "kmeans.dfa.json").exists()
        assert (out / "runs" / "tomita1/o2rnn/x1/seed0" / "lstar.stats.json").exists()

        def boom(*a, **k):
            raise AssertionError("completed coordinate was rerun")

        monkeypatch.setattr(runner_mod, "run_coordinate", boom)
        again = run_matrix(plan)
        assert [r.to_dict() for r in again] == [r.to_dict() for r in recs]
        assert [r.to_dict() for r in load_records(out)] == [r.to_dict() for r in recs]

    def test_crash_is_recorded(self, tmp_path, monkeypatch):
        def boom(plan, coord):
            raise RuntimeError("simulated crash")

        monkeypatch.setattr(runner_mod, "run_coordinate", boom)
        recs = run_matrix(tiny_plan(tmp_path, seeds=[0]))
        assert recs[0].error and "simulated crash" in recs[0].error
        assert set(recs[0].extractions) == {"kmeans", "lstar"}

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(InputError, match="not writable"):
            run_matrix(tiny_plan(tmp_path, out=str(blocker / "sub")))

    def test_partial_filter(self, tmp_path):
        plan = tiny_plan(tmp_path, mode="partial", threshold=0.6, methods=["kmeans"],
                         train={"batch_size": 64, "max_iterations": 200, "initial_lr": 0.5,
                                "eval_every": 5, "per_step_loss": True, "momentum": 0.9})
        for r in run_matrix(plan):
            assert r.discarded or 0.6 < r.model["val_acc"] <= 0.90
            assert 1 <= len(r.attempts) <= 3
