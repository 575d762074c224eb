import csv
import os
import tempfile
from dataclasses import replace
from pathlib import Path
from unittest import TestCase

import numpy as np
from click.testing import CliRunner

from gridstrain.app.manage import manage
from gridstrain.app.settings import settings
from gridstrain.app.util import read_json, read_jsonl, write_csv, write_jsonl
from gridstrain.exceptions import ManifestError
from gridstrain.grid import dump_grid
from gridstrain.tasking import experiment
from gridstrain.tasking.pool import WorkerPool, shared
from gridstrain.tasking.report import build_report
from gridstrain.tests.utils import two_bus_grid

SMALL_MANIFEST = """
name: small
grids:
  - builtin:ieee14
parameters:
  alpha_set: [2, 5]
  p_set: [0.1]
  f_set: [0.5]
  q_set: [0.1]
  include_proportional: true
n_runs: 2
master_seed: 7
"""


class TempDirMixin:
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write(self, name, text):
        path = self.tmp / name
        path.write_text(text)
        return path


class TestLoadManifest(TempDirMixin, TestCase):
    def test_small_manifest(self):
        manifest = experiment.load_manifest(self.write("m.yaml", SMALL_MANIFEST))
        self.assertEqual(manifest.name, "small")
        self.assertEqual(manifest.grids, (experiment.GridSource("builtin:ieee14"),))
        self.assertEqual(manifest.alpha_set, (2, 5))
        self.assertTrue(manifest.include_proportional)
        self.assertEqual((manifest.n_runs, manifest.master_seed), (2, 7))

    def test_grid_paths_are_relative_to_the_manifest(self):
        dump_grid(two_bus_grid(), self.tmp / "two.json")
        manifest = experiment.load_manifest(self.write("m.yaml", "grids: [two.json]\n"))
        self.assertEqual(manifest.grids[0].path, str(self.tmp / "two.json"))
        self.assertEqual(manifest.grids[0].load(), two_bus_grid())
        self.assertEqual(manifest.name, "m")

    def test_defaults_come_from_settings(self):
        manifest = experiment.load_manifest(self.write("m.yaml", "grids: [builtin:ieee14]\n"))
        self.assertEqual(len(manifest.alpha_set), 11)
        self.assertEqual(manifest.n_runs, 100)

    def test_bad_manifests(self):
        bad = {
            "unknown key": "grids: [builtin:ieee14]\nreplicates: 3\n",
            "unknown parameter": "grids: [builtin:ieee14]\nparameters: {beta_set: [1]}\n",
            "unknown setting": "grids: [builtin:ieee14]\nsettings: {not_a_setting: 1}\n",
            "no grids": "name: empty\n",
            "grid without path": "grids: [{format: canonical_json}]\n",
            "not a list": "grids: [builtin:ieee14]\nparameters: {alpha_set: 2}\n",
            "no runs": "grids: [builtin:ieee14]\nn_runs: 0\n",
            "not a mapping": "- a\n- b\n",
            "bad yaml": "grids: [\n",
        }
        for label, text in bad.items():
            with self.subTest(label), self.assertRaises(ManifestError):
                experiment.load_manifest(self.write("bad.yaml", text))

    def test_unknown_builtin_grid(self):
        with self.assertRaises(ManifestError):
            experiment.GridSource("builtin:ieee9999").load()

    def test_manifest_id(self):
        manifest = experiment.load_manifest(self.write("m.yaml", SMALL_MANIFEST))
        grids = [source.load() for source in manifest.grids]
        self.assertEqual(manifest.manifest_id(grids), manifest.manifest_id(grids))
        self.assertEqual(len(manifest.manifest_id(grids)), 16)
        other = replace(manifest, n_runs=3)
        self.assertNotEqual(manifest.manifest_id(grids), other.manifest_id(grids))
        renamed_file = replace(manifest, grids=(experiment.GridSource("elsewhere.json"),))
        self.assertEqual(manifest.manifest_id(grids), renamed_file.manifest_id(grids))


class TestWorkerPool(TestCase):
    def test_in_process_pool_restores_shared_inputs(self):
        with WorkerPool(1, {"value": 3}) as pool:
            results = list(pool.imap(lambda unit: unit * shared()["value"], [1, 2, 3]))
        self.assertEqual(results, [3, 6, 9])
        self.assertNotIn("value", shared())

    def test_in_process_pool_scopes_setting_overrides(self):
        before = settings.N_RUNS
        with WorkerPool(1, {"settings": {"N_RUNS": before + 9}}):
            self.assertEqual(settings.N_RUNS, before + 9)
        self.assertEqual(settings.N_RUNS, before)

    def test_needs_a_worker(self):
        with self.assertRaises(ValueError):
            WorkerPool(0, {})


class TestRunExperiment(TempDirMixin, TestCase):
    def setUp(self):
        super().setUp()
        self.manifest = experiment.load_manifest(self.write("m.yaml", SMALL_MANIFEST))
        self.out = self.tmp / "out"

    def run_attacks(self):
        return experiment.run_experiment(self.manifest, self.out, workers=1, stages=("attack",))

    def test_artifacts(self):
        outcome = self.run_attacks()
        self.assertTrue(outcome.ok)
        self.assertEqual(len(outcome.computed), 6)
        for name in (
            "manifest.json",
            "grid_summary.json",
            "base_flow.csv",
            "profiles.jsonl",
            "skipped_profiles.jsonl",
            "campaigns.jsonl",
            "campaigns.csv",
            "metrics.csv",
            "ledger.jsonl",
            "errors.jsonl",
        ):
            self.assertTrue((self.out / name).exists(), name)
        self.assertEqual(read_json(self.out / "manifest.json")["manifest_id"], outcome.manifest_id)
        campaigns = read_jsonl(self.out / "campaigns.jsonl")
        self.assertEqual(
            [c["profile_id"] for c in campaigns],
            [
                "prop-a2",
                "a2-p0.1-f0.5-q0.1-most_to_least",
                "a2-p0.1-f0.5-q0.1-least_to_most",
                "prop-a5",
                "a5-p0.1-f0.5-q0.1-most_to_least",
                "a5-p0.1-f0.5-q0.1-least_to_most",
            ],
        )
        self.assertTrue(all(c["n_runs"] == 2 for c in campaigns))
        self.assertTrue(all(c["manifest_id"] == outcome.manifest_id for c in campaigns))
        ledger = read_jsonl(self.out / "ledger.jsonl")
        self.assertEqual(len(ledger), 6)
        self.assertEqual({entry["stage"] for entry in ledger}, {"attack"})
        self.assertEqual(read_jsonl(self.out / "errors.jsonl"), [])

    def test_rerun_reuses_records_and_reproduces_bytes(self):
        first = self.run_attacks()
        metrics = (self.out / "metrics.csv").read_bytes()
        campaigns = (self.out / "campaigns.csv").read_bytes()
        second = self.run_attacks()
        self.assertEqual(second.manifest_id, first.manifest_id)
        self.assertEqual(second.computed, [])
        self.assertEqual(len(second.reused), 6)
        self.assertEqual((self.out / "metrics.csv").read_bytes(), metrics)
        self.assertEqual((self.out / "campaigns.csv").read_bytes(), campaigns)

    def test_interrupted_run_resumes(self):
        self.run_attacks()
        os.remove(experiment.record_path(self.out, "ieee14", "prop-a5"))
        outcome = self.run_attacks()
        self.assertEqual(outcome.computed, [("ieee14", "prop-a5")])
        self.assertEqual(len(outcome.reused), 5)

    def test_rebuild_metrics(self):
        self.run_attacks()
        before = (self.out / "metrics.csv").read_bytes()
        (self.out / "metrics.csv").unlink()
        normalized = experiment.rebuild_metrics(self.out)
        self.assertEqual(len(normalized), 12)
        self.assertEqual((self.out / "metrics.csv").read_bytes(), before)

    def test_rebuild_metrics_needs_an_experiment(self):
        with self.assertRaises(ManifestError):
            experiment.rebuild_metrics(self.tmp)

    def test_report_lists_unscorable_pairs(self):
        self.run_attacks()
        report = build_report(self.out, repeats=1, folds=5)
        self.assertEqual(report.entries, {})
        self.assertEqual(
            sorted(report.skipped), [("ieee14", "mean_alpha"), ("ieee14", "mean_line_load")]
        )
        document = read_json(self.out / "report" / "evaluation.json")
        self.assertEqual(document["x"], "kappa")
        self.assertTrue((self.out / "report" / "plot_mean_alpha.csv").exists())

    def test_manifest_settings_do_not_outlive_the_run(self):
        before = settings.K_MIN
        manifest = replace(self.manifest, settings={"k_min": before + 50.0})
        experiment.run_experiment(manifest, self.out, workers=1, stages=("attack",))
        self.assertEqual(settings.K_MIN, before)

    def test_duplicate_grid_names(self):
        manifest = replace(self.manifest, grids=self.manifest.grids * 2)
        with self.assertRaises(ManifestError):
            experiment.run_experiment(manifest, self.out, workers=1, stages=("attack",))


class TestCommandLine(TempDirMixin, TestCase):
    def test_ingest(self):
        grid_path = self.tmp / "two.json"
        dump_grid(two_bus_grid(), grid_path)
        out = self.tmp / "out"
        result = CliRunner().invoke(manage, ["--out", str(out), "ingest", str(grid_path)])
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("two-bus: 2 buses, 1 lines", result.output)
        self.assertEqual(read_json(out / "grid_summary.json")["node_count"], 2)
        self.assertTrue((out / "base_flow.csv").exists())

    def test_bad_grid_exits_with_error(self):
        grid_path = self.write("broken.json", "{not json")
        result = CliRunner().invoke(manage, ["--out", str(self.tmp), "ingest", str(grid_path)])
        self.assertEqual(result.exit_code, 2)

    def test_timeseries_on_alpha_rated_lines(self):
        grid_path = self.tmp / "two.json"
        dump_grid(two_bus_grid(), grid_path)
        batch = self.write("batch.csv", "period,bus_id,generation,demand\n1,A,5,0\n1,B,0,5\n")
        out = self.tmp / "out"
        args = ["--out", str(out), "timeseries", str(grid_path), str(batch), "--n-runs", "2"]
        self.assertEqual(CliRunner().invoke(manage, args).exit_code, 2)
        result = CliRunner().invoke(manage, args + ["--alpha", "2"])
        self.assertEqual(result.exit_code, 0, result.output)
        rows = (out / "timeseries.csv").read_text().splitlines()
        self.assertEqual(len(rows), 2)

    def test_metrics_on_an_empty_directory(self):
        result = CliRunner().invoke(manage, ["metrics", str(self.tmp)])
        self.assertEqual(result.exit_code, 2)


class TestBuildReport(TempDirMixin, TestCase):
    def write_experiment(self, target):
        loads = np.linspace(0.1, 0.9, 40)
        ids = ["p{:02d}".format(i) for i in range(len(loads))]
        write_jsonl(
            self.tmp / "campaigns.jsonl",
            [
                {"network": "synthetic", "profile_id": pid, "mean_collapse_round": target(x)}
                for pid, x in zip(ids, loads)
            ],
        )
        write_csv(
            self.tmp / "metrics.csv",
            ["network", "profile_id", "measure", "raw", "kappa"],
            [
                {
                    "network": "synthetic",
                    "profile_id": pid,
                    "measure": "mean_line_load",
                    "raw": x,
                    "kappa": x / loads.mean(),
                }
                for pid, x in zip(ids, loads)
            ],
        )

    def test_noiseless_target_scores_perfectly(self):
        self.write_experiment(lambda load: 2.0 + 6.0 * load)
        for use_raw in (False, True):
            with self.subTest(use_raw=use_raw):
                report = build_report(self.tmp, use_raw=use_raw, repeats=2, folds=5, seed=0)
                entry = report.entries[("synthetic", "mean_line_load")]
                self.assertGreater(entry.mean_r2, 0.999)
                self.assertLess(entry.mean_smape, 0.1)
                self.assertEqual(entry.undefined_r2, 0)
        with open(self.tmp / "report" / "plot_mean_line_load.csv", newline="") as fp:
            rows = list(csv.DictReader(fp))
        self.assertEqual(len(rows), 40)
        for row in rows:
            self.assertAlmostEqual(float(row["prediction"]), float(row["y"]), places=6)
