"""
Unit tests for the read-only HTTP view of run directories.

Tests cover:
- Run listing (JSON and HTML)
- Manifest, certificate and time-series routes
- PNG frames and their parameter errors
- Unknown runs
"""

import os
import sys
import tempfile
import unittest

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from fastapi.testclient import TestClient

from artifacts import save_run
from cli import cmd_check
from dynamics import SERIES_COLUMNS, run
from run_config import parse_run_config
from service import create_app
from tests.conftest import MINIMAL_RUN_FILE


class TestRunService(unittest.TestCase):
    """Tests for create_app routes."""

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.root = cls.tmp.name
        run_config = parse_run_config(MINIMAL_RUN_FILE.replace("name = rest", "name = swirl_decay"))
        save_run(os.path.join(cls.root, "swirl"), run_config, run(run_config.sim))
        os.makedirs(os.path.join(cls.root, "not_a_run"))
        cls.client = TestClient(create_app(cls.root))

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_list_runs(self):
        response = self.client.get("/runs")
        self.assertEqual(response.status_code, 200)
        runs = response.json()
        self.assertEqual([item["name"] for item in runs], ["swirl"])
        self.assertEqual(runs[0]["status"], "completed")
        self.assertEqual(runs[0]["scenario"], "swirl_decay")
        self.assertEqual(runs[0]["snapshots"], 11)

    def test_index_page(self):
        response = self.client.get("/")
        self.assertEqual(response.status_code, 200)
        self.assertIn("text/html", response.headers["content-type"])
        self.assertIn('href="/runs/swirl/manifest"', response.text)

    def test_manifest(self):
        manifest = self.client.get("/runs/swirl/manifest").json()
        self.assertEqual(manifest["grid"]["Nr"], 8)
        self.assertIn("config_hash", manifest)

    def test_timeseries(self):
        rows = self.client.get("/runs/swirl/timeseries").json()
        self.assertEqual(len(rows), 11)
        self.assertEqual(tuple(rows[0]), SERIES_COLUMNS)
        self.assertIsNone(rows[0]["phi_drift"])
        self.assertEqual(rows[0]["t"], 0.0)

    def test_certificate_after_check(self):
        path = os.path.join(self.root, "swirl")
        if not os.path.exists(os.path.join(path, "certificate.json")):
            self.assertEqual(self.client.get("/runs/swirl/certificate").status_code, 404)
            cmd_check(path)
        response = self.client.get("/runs/swirl/certificate")
        self.assertEqual(response.status_code, 200)
        self.assertIn("entries", response.json())
        self.assertTrue(self.client.get("/runs").json()[0]["checked"])

    def test_frame_png(self):
        response = self.client.get("/runs/swirl/frame.png", params={"field": "u", "index": 3})
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.headers["content-type"], "image/png")
        self.assertTrue(response.content.startswith(b"\x89PNG"))

    def test_frame_errors(self):
        self.assertEqual(self.client.get("/runs/swirl/frame.png", params={"field": "Phi"}).status_code, 400)
        self.assertEqual(self.client.get("/runs/swirl/frame.png", params={"index": 99}).status_code, 404)
        self.assertEqual(self.client.get("/runs/swirl/frame.png", params={"index": -1}).status_code, 422)

    def test_unknown_run(self):
        for route in ("manifest", "certificate", "timeseries", "frame.png"):
            with self.subTest(route=route):
                self.assertEqual(self.client.get(f"/runs/not_a_run/{route}").status_code, 404)
                self.assertEqual(self.client.get(f"/runs/missing/{route}").status_code, 404)


if __name__ == "__main__":
    unittest.main()
