"""
Unit tests for run files, run directories and the command line.

Tests cover:
- Run-file parsing, defaults and key errors
- Canonical config text and hash
- Atomic writes, CSV tables and checkpoint files
- save_run / load_series on a recorded run
- cli run, check, report and render with their exit codes
"""

import csv
import os
import sys
import tempfile
import unittest
from unittest import mock

import numpy as np

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from artifacts import (CERTIFICATE_JSON, CERTIFICATE_TEXT, CHECKPOINT_DIR, MANIFEST, TIMESERIES,
                       atomic_write_text, checkpoint_name, decode_checkpoint, encode_checkpoint, load_series,
                       read_json, read_series_csv, save_run, write_table)
from cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, EXIT_STRICT_FAILURE, main
from dynamics import SERIES_COLUMNS, run
from errors import ArtifactError, ConfigError, DomainError
from grid import make_grid
from run_config import known_keys, parse_run_config
from tests.conftest import MINIMAL_RUN_FILE


def run_file(directory: str, text: str = MINIMAL_RUN_FILE, name: str = "out") -> str:
    """Write a run file whose output goes to `directory`/`name` and return its path."""
    path = os.path.join(directory, "run.ini")
    with open(path, "w", encoding="utf-8") as f:
        f.write(text + f"\n[output]\ndirectory = {os.path.join(directory, name)}\n")
    return path


class TestRunConfig(unittest.TestCase):
    """Tests for parse_run_config."""

    def test_minimal_file(self):
        run_config = parse_run_config(MINIMAL_RUN_FILE)
        self.assertEqual(run_config.sim.nu, 1.0)
        self.assertEqual((run_config.sim.Nr, run_config.sim.Nz), (8, 8))
        self.assertEqual(run_config.sim.case, "rest")
        self.assertEqual(run_config.certificates.s_values, (4.0, 6.0, 10.0))

    def test_unknown_key(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_run_config(MINIMAL_RUN_FILE + "\n[solver]\nNx = 4\n")
        self.assertEqual(ctx.exception.key, "Nx")

    def test_unknown_section(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_run_config(MINIMAL_RUN_FILE + "\n[mesh]\nNr = 4\n")
        self.assertEqual(ctx.exception.key, "mesh")

    def test_missing_viscosity(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_run_config("[grid]\nNr = 8\n")
        self.assertEqual(ctx.exception.key, "nu")

    def test_bad_values_name_their_key(self):
        for text, key in (("[physics]\nnu = fast\n", "nu"),
                          ("[physics]\nnu = 1\n[grid]\nNr = 8.5\n", "Nr"),
                          ("[physics]\nnu = 1\n[solver]\ntrack_phi = maybe\n", "track_phi"),
                          ("[physics]\nnu = 1\n[time]\ndt = -1\n", "dt"),
                          ("[physics]\nnu = 1\n[scenario]\nname = hill_vortex\n", "name")):
            with self.subTest(key=key):
                with self.assertRaises(ConfigError) as ctx:
                    parse_run_config(text)
                self.assertEqual(ctx.exception.key, key)

    def test_certificate_options(self):
        run_config = parse_run_config(MINIMAL_RUN_FILE + "\n[certificates]\ns_values = 4, 8\neps0 = 0.2\n")
        self.assertEqual(run_config.certificates.s_values, (4.0, 8.0))
        self.assertEqual(run_config.certificates.eps0, 0.2)
        with self.assertRaises(ConfigError):
            parse_run_config(MINIMAL_RUN_FILE + "\n[certificates]\neps0 = 3\n")

    def test_canonical_text_is_stable(self):
        first = parse_run_config(MINIMAL_RUN_FILE)
        reordered = parse_run_config("[physics]\nnu = 1.0\n[scenario]\nname = rest\n"
                                     "[time]\nT = 0.01\ndt = 0.001\n[grid]\nNz = 8\nNr = 8\n")
        self.assertEqual(first.canonical_text(), reordered.canonical_text())
        self.assertEqual(first.config_hash(), reordered.config_hash())
        self.assertEqual(parse_run_config(first.canonical_text()).config_hash(), first.config_hash())

    def test_hash_changes_with_settings(self):
        base = parse_run_config(MINIMAL_RUN_FILE)
        other = parse_run_config(MINIMAL_RUN_FILE.replace("nu = 1.0", "nu = 0.5"))
        self.assertNotEqual(base.config_hash(), other.config_hash())

    def test_known_keys(self):
        keys = known_keys()
        self.assertIn("nu", keys["physics"])
        self.assertIn("s_values", keys["certificates"])

    def test_relative_output_under_root(self):
        run_config = parse_run_config(MINIMAL_RUN_FILE + "\n[output]\ndirectory = rest_8\n")
        self.assertTrue(os.path.isabs(run_config.resolve_output()))
        self.assertEqual(os.path.basename(run_config.resolve_output()), "rest_8")


class TestFiles(unittest.TestCase):
    """Tests for atomic writes, tables and checkpoints."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_atomic_write_leaves_no_temporaries(self):
        path = os.path.join(self.tmp.name, "nested", "note.txt")
        atomic_write_text(path, "hello\n")
        with open(path, encoding="utf-8") as f:
            self.assertEqual(f.read(), "hello\n")
        self.assertEqual(os.listdir(os.path.dirname(path)), ["note.txt"])

    def test_table_columns_and_blanks(self):
        path = os.path.join(self.tmp.name, "table.csv")
        write_table(path, ["a", "b"], [{"a": 0.1, "b": None}, {"a": 2}])
        with open(path, encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
        self.assertEqual(rows, [["a", "b"], ["0.1", ""], ["2", ""]])

    def test_series_csv_rejects_foreign_header(self):
        path = os.path.join(self.tmp.name, "bad.csv")
        atomic_write_text(path, "time,energy\n0,1\n")
        with self.assertRaises(ArtifactError):
            read_series_csv(path)

    def test_missing_series_csv(self):
        with self.assertRaises(ArtifactError):
            read_series_csv(os.path.join(self.tmp.name, "absent.csv"))

    def test_checkpoint_encoding(self):
        grid = make_grid(1.0, 0.5, 4, 6)
        arrays = {"u": np.arange(24.0).reshape(4, 6), "Gamma": -np.ones((4, 6))}
        header, decoded = decode_checkpoint(encode_checkpoint(grid, 0.25, arrays, 1e-12))
        self.assertEqual((header["Nr"], header["Nz"], header["t"], header["a"]), (4, 6, 0.25, 0.5))
        self.assertEqual(header["fields"], ["u", "Gamma"])
        np.testing.assert_array_equal(decoded["u"], arrays["u"])
        np.testing.assert_array_equal(decoded["Gamma"], arrays["Gamma"])

    def test_checkpoint_corruption(self):
        grid = make_grid(1.0, 1.0, 4, 4)
        data = encode_checkpoint(grid, 0.0, {"u": np.zeros((4, 4))})
        with self.assertRaises(ArtifactError):
            decode_checkpoint(data[:-8])
        with self.assertRaises(ArtifactError):
            decode_checkpoint(b"PNG" + data)
        with self.assertRaises(ArtifactError):
            decode_checkpoint(data.replace(b"version=1", b"version=9"))


class TestRunDirectory(unittest.TestCase):
    """Tests for save_run and load_series."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.run_config = parse_run_config(MINIMAL_RUN_FILE.replace("name = rest", "name = swirl_decay"))
        self.series = run(self.run_config.sim)

    def test_save_and_load(self):
        manifest = save_run(self.tmp.name, self.run_config, self.series)
        self.assertEqual(manifest["status"], "completed")
        self.assertEqual(manifest["config_hash"], self.run_config.config_hash())
        self.assertEqual(manifest["snapshots"], len(self.series))
        self.assertTrue(os.path.isfile(os.path.join(self.tmp.name, CHECKPOINT_DIR, checkpoint_name(0))))

        loaded, run_config = load_series(self.tmp.name)
        self.assertEqual(run_config.config_hash(), self.run_config.config_hash())
        np.testing.assert_allclose(loaded.times, self.series.times)
        np.testing.assert_array_equal(loaded.final.state.u.values, self.series.final.state.u.values)
        np.testing.assert_array_equal(loaded.final.state.psi1.values, self.series.final.state.psi1.values)
        self.assertEqual(loaded.final.diagnostics["v_l2"], self.series.final.diagnostics["v_l2"])

    def test_csv_header(self):
        save_run(self.tmp.name, self.run_config, self.series)
        with open(os.path.join(self.tmp.name, TIMESERIES), encoding="utf-8") as f:
            self.assertEqual(tuple(f.readline().strip().split(",")), SERIES_COLUMNS)

    def test_failed_run_cannot_be_loaded(self):
        save_run(self.tmp.name, self.run_config, None, status="failed", error=ConfigError("boom", key="nu"))
        manifest = read_json(os.path.join(self.tmp.name, MANIFEST))
        self.assertEqual(manifest["error"]["category"], "config")
        with self.assertRaises(ArtifactError):
            load_series(self.tmp.name)

    def test_missing_directory(self):
        with self.assertRaises(ArtifactError):
            load_series(os.path.join(self.tmp.name, "nowhere"))


class TestCommandLine(unittest.TestCase):
    """Tests for cli.main."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.out = os.path.join(self.tmp.name, "out")

    def test_run_then_check(self):
        self.assertEqual(main(["run", run_file(self.tmp.name)]), EXIT_OK)
        rows = read_series_csv(os.path.join(self.out, TIMESERIES))
        self.assertEqual(len(rows), 11)
        self.assertEqual(read_json(os.path.join(self.out, MANIFEST))["status"], "completed")

        self.assertEqual(main(["check", self.out]), EXIT_OK)
        certificate = read_json(os.path.join(self.out, CERTIFICATE_JSON))
        self.assertTrue(certificate["passed"])
        with open(os.path.join(self.out, CERTIFICATE_TEXT), encoding="utf-8") as f:
            self.assertIn("max_principle", f.read())

    def test_tampered_series_fails_check(self):
        self.assertEqual(main(["run", run_file(self.tmp.name)]), EXIT_OK)
        path = os.path.join(self.out, TIMESERIES)
        rows = read_series_csv(path)
        rows[-1]["u_max"] = 1.0
        write_table(path, SERIES_COLUMNS, rows)
        self.assertEqual(main(["check", self.out]), EXIT_STRICT_FAILURE)

    def test_unknown_key_exit_code(self):
        path = run_file(self.tmp.name, MINIMAL_RUN_FILE.replace("Nr = 8", "Nx = 8"))
        self.assertEqual(main(["run", path]), EXIT_CONFIG)
        self.assertFalse(os.path.exists(self.out))

    def test_missing_run_file(self):
        self.assertEqual(main(["run", os.path.join(self.tmp.name, "absent.ini")]), EXIT_CONFIG)

    def test_numerical_failure_saves_partial_run(self):
        text = MINIMAL_RUN_FILE.replace("dt = 0.001", "dt = 100.0").replace("T = 0.01", "T = 200.0")
        path = run_file(self.tmp.name, text.replace("name = rest", "name = vortex_ring"))
        self.assertEqual(main(["run", path]), EXIT_NUMERICAL)
        manifest = read_json(os.path.join(self.out, MANIFEST))
        self.assertEqual(manifest["status"], "failed")
        self.assertEqual(manifest["error"]["category"], "numerical")
        self.assertEqual(manifest["snapshots"], 1)
        self.assertEqual(manifest["error"]["step"], 1)
        self.assertEqual(manifest["error"]["t"], 0.0)
        self.assertEqual(main(["check", self.out]), EXIT_CONFIG)

    def test_failed_save_keeps_the_run_error(self):
        path = run_file(self.tmp.name)
        with mock.patch("dynamics.run", side_effect=DomainError("scenario rejected")), \
                mock.patch("artifacts.save_run", side_effect=ArtifactError("disk full")) as save, \
                self.assertLogs("cli", level="ERROR") as logs:
            self.assertEqual(main(["run", path]), EXIT_CONFIG)
        save.assert_called_once()
        self.assertEqual(save.call_args.kwargs["status"], "failed")
        self.assertTrue(any("disk full" in line for line in logs.output))

    def test_config_failure_is_recorded(self):
        path = run_file(self.tmp.name)
        with mock.patch("dynamics.run", side_effect=DomainError("scenario rejected")):
            self.assertEqual(main(["run", path]), EXIT_CONFIG)
        manifest = read_json(os.path.join(self.out, MANIFEST))
        self.assertEqual(manifest["status"], "failed")
        self.assertEqual(manifest["error"]["category"], "config")
        self.assertIsNone(manifest["error"]["step"])

    def test_check_missing_run(self):
        self.assertEqual(main(["check", os.path.join(self.tmp.name, "nothing")]), EXIT_CONFIG)

    def test_report_tables(self):
        self.assertEqual(main(["run", run_file(self.tmp.name)]), EXIT_OK)
        finer = MINIMAL_RUN_FILE.replace("Nr = 8", "Nr = 12").replace("Nz = 8", "Nz = 12")
        self.assertEqual(main(["run", run_file(self.tmp.name, finer, "fine")]), EXIT_OK)
        other_out = os.path.join(self.tmp.name, "fine")

        self.assertEqual(main(["report", self.out, other_out, "--output", self.tmp.name]), EXIT_OK)
        for name in ("x_trajectory.csv", "energy_budget.csv", "lambda.csv"):
            self.assertTrue(os.path.isfile(os.path.join(self.out, name)), name)
        with open(os.path.join(self.tmp.name, "ratio_stability.csv"), encoding="utf-8") as f:
            header = f.readline().strip().split(",")
        self.assertEqual(header[0], "name")
        self.assertEqual(header[-2:], ["spread", "verdict"])

    def test_render(self):
        self.assertEqual(main(["run", run_file(self.tmp.name)]), EXIT_OK)
        self.assertEqual(main(["render", self.out, "--field", "u"]), EXIT_OK)
        frames = os.path.join(self.out, "frames")
        self.assertTrue(os.path.isfile(os.path.join(frames, "u_000000.png")))
        self.assertTrue(os.path.isfile(os.path.join(frames, "u.gif")))
        self.assertEqual(main(["render", self.out, "--field", "pressure"]), EXIT_CONFIG)


if __name__ == "__main__":
    unittest.main()
