import json
import os
import socket
import subprocess
import sys
import time

import httpx
import pytest

CONFIG = """
rounds = 2
clients = 4
fraction = 0.5
local_epochs = 1
model = logistic_regression
data.input_dim = 3
data.num_classes = 3
data.examples_per_class = 20
partition = iid
aggregator = fedavg
seed = 5
"""

SWEEP = CONFIG + """
sweep.axis = rounds
sweep.values = 1, 2
sweep.seeds = 3, 4
"""


def fedsim(*args, threads=None):
    env = dict(os.environ)
    if threads is not None:
        env["FEDSIM_THREADS"] = str(threads)
    return subprocess.run(
        [sys.executable, "-m", "fedsim.cli", *args],
        capture_output=True,
        text=True,
        env=env,
    )


class TestRunCommand:
    def test_run_writes_artifacts(self, tmp_path):
        config = tmp_path / "exp.cfg"
        config.write_text(CONFIG)
        out = tmp_path / "out"
        proc = fedsim("run", "--config", str(config), "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        metrics = (out / "metrics.csv").read_text()
        assert len(metrics.strip().split("\n")) == 3  # header + 2 rounds
        summary = json.loads((out / "summary.json").read_text())
        assert summary["config"]["rounds"] == 2
        assert (out / "partition.txt").exists()

    def test_repeat_runs_byte_identical(self, tmp_path):
        config = tmp_path / "exp.cfg"
        config.write_text(CONFIG)
        outputs = []
        for name, threads in (("a", 1), ("b", 8)):
            out = tmp_path / name
            proc = fedsim("run", "--config", str(config), "--out", str(out), threads=threads)
            assert proc.returncode == 0, proc.stderr
            outputs.append((out / "metrics.csv").read_bytes())
        assert outputs[0] == outputs[1]

    def test_seed_override(self, tmp_path):
        config = tmp_path / "exp.cfg"
        config.write_text(CONFIG)
        out1, out2 = tmp_path / "s5", tmp_path / "s9"
        assert fedsim("run", "--config", str(config), "--out", str(out1)).returncode == 0
        assert fedsim("run", "--config", str(config), "--seed", "9", "--out", str(out2)).returncode == 0
        assert (out1 / "metrics.csv").read_text() != (out2 / "metrics.csv").read_text()

    def test_invalid_config_exits_2(self, tmp_path):
        config = tmp_path / "bad.cfg"
        config.write_text("fraction = 0\n")
        proc = fedsim("run", "--config", str(config), "--out", str(tmp_path / "o"))
        assert proc.returncode == 2
        assert "fraction" in proc.stderr

    def test_parse_error_exits_2_with_line(self, tmp_path):
        config = tmp_path / "bad.cfg"
        config.write_text("rounds = 2\nwat\n")
        proc = fedsim("run", "--config", str(config), "--out", str(tmp_path / "o"))
        assert proc.returncode == 2
        assert "line 2" in proc.stderr

    def test_missing_config_exits_3(self, tmp_path):
        proc = fedsim("run", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "o"))
        assert proc.returncode == 3


class TestSweepCommand:
    def test_sweep_writes_cells(self, tmp_path):
        spec = tmp_path / "sweep.cfg"
        spec.write_text(SWEEP)
        out = tmp_path / "out"
        proc = fedsim("sweep", "--spec", str(spec), "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        rows = (out / "sweep.csv").read_text().strip().split("\n")
        assert rows[0] == "axis_value,seed,final_accuracy,total_sim_duration_s"
        assert len(rows) == 5  # 2 values x 2 seeds
        cell_dirs = sorted(p.name for p in (out / "cells").iterdir())
        assert cell_dirs == [
            "rounds=1_seed=3",
            "rounds=1_seed=4",
            "rounds=2_seed=3",
            "rounds=2_seed=4",
        ]
        for name in cell_dirs:
            assert (out / "cells" / name / "metrics.csv").exists()
            assert (out / "cells" / name / "summary.json").exists()

    def test_sweep_csv_deterministic(self, tmp_path):
        spec = tmp_path / "sweep.cfg"
        spec.write_text(SWEEP)
        contents = []
        for name, threads in (("x", 1), ("y", 4)):
            out = tmp_path / name
            proc = fedsim("sweep", "--spec", str(spec), "--out", str(out), threads=threads)
            assert proc.returncode == 0, proc.stderr
            contents.append((out / "sweep.csv").read_bytes())
        assert contents[0] == contents[1]

    def test_invalid_spec_exits_2(self, tmp_path):
        spec = tmp_path / "sweep.cfg"
        spec.write_text("rounds = 2\n")
        proc = fedsim("sweep", "--spec", str(spec), "--out", str(tmp_path / "o"))
        assert proc.returncode == 2
        assert "sweep.axis" in proc.stderr


class TestStatsCommand:
    def test_stats_writes_csvs(self, tmp_path):
        labels = tmp_path / "labels"
        labels.mkdir()
        (labels / "img1.txt").write_text("3 0.5 0.5 0.2 0.1\n")
        (labels / "img2.txt").write_text("3 0.4 0.4 0.1 0.1\n1 0.2 0.2 0.1 0.1\n")
        out = tmp_path / "out"
        proc = fedsim("stats", "--labels", str(labels), "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        histogram = (out / "class_histogram.csv").read_text()
        assert histogram == "class_id,count\n1,1\n3,2\n"
        points = (out / "box_points.csv").read_text().strip().split("\n")
        assert len(points) == 4

    def test_empty_directory_gives_headers_only(self, tmp_path):
        labels = tmp_path / "labels"
        labels.mkdir()
        out = tmp_path / "out"
        proc = fedsim("stats", "--labels", str(labels), "--out", str(out))
        assert proc.returncode == 0
        assert (out / "class_histogram.csv").read_text() == "class_id,count\n"
        assert (out / "box_points.csv").read_text() == "x_center,y_center,width,height\n"

    def test_malformed_file_exits_2_naming_file_and_line(self, tmp_path):
        labels = tmp_path / "labels"
        labels.mkdir()
        (labels / "broken.txt").write_text("0 0.5 0.5 0.2 0.2\n1 2 3\n")
        proc = fedsim("stats", "--labels", str(labels), "--out", str(tmp_path / "o"))
        assert proc.returncode == 2
        assert "broken.txt" in proc.stderr
        assert "line 2" in proc.stderr

    def test_missing_directory_exits_3(self, tmp_path):
        proc = fedsim("stats", "--labels", str(tmp_path / "nope"), "--out", str(tmp_path / "o"))
        assert proc.returncode == 3

    def test_non_utf8_file_exits_2(self, tmp_path):
        labels = tmp_path / "labels"
        labels.mkdir()
        (labels / "binary.txt").write_bytes(b"\xff\xfe junk")
        proc = fedsim("stats", "--labels", str(labels), "--out", str(tmp_path / "o"))
        assert proc.returncode == 2
        assert "UTF-8" in proc.stderr


@pytest.fixture(scope="module")
def server_url():
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    proc = subprocess.Popen(
        [sys.executable, "-m", "fedsim.cli", "serve", "--port", str(port)],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    url = f"http://127.0.0.1:{port}"
    try:
        for _ in range(50):
            try:
                if httpx.get(f"{url}/health", timeout=1.0).status_code == 200:
                    break
            except httpx.HTTPError:
                time.sleep(0.2)
        else:
            pytest.fail("fedsim serve did not come up")
        yield url
    finally:
        proc.terminate()
        proc.wait(timeout=10)


class TestRemoteServer:
    def test_remote_run_matches_in_process(self, tmp_path, server_url):
        config = tmp_path / "exp.cfg"
        config.write_text(CONFIG)
        local_out, remote_out = tmp_path / "local", tmp_path / "remote"
        assert fedsim("run", "--config", str(config), "--out", str(local_out)).returncode == 0
        proc = fedsim(
            "run", "--config", str(config), "--out", str(remote_out), "--server", server_url
        )
        assert proc.returncode == 0, proc.stderr
        assert (local_out / "metrics.csv").read_bytes() == (remote_out / "metrics.csv").read_bytes()
        assert (local_out / "partition.txt").read_bytes() == (remote_out / "partition.txt").read_bytes()

    def test_remote_validation_error_exits_2(self, tmp_path, server_url):
        config = tmp_path / "bad.cfg"
        config.write_text("fraction = 0\n")
        proc = fedsim("run", "--config", str(config), "--out", str(tmp_path / "o"),
                      "--server", server_url)
        assert proc.returncode == 2
        assert "fraction" in proc.stderr

    def test_unreachable_server_exits_3(self, tmp_path):
        config = tmp_path / "exp.cfg"
        config.write_text(CONFIG)
        proc = fedsim("run", "--config", str(config), "--out", str(tmp_path / "o"),
                      "--server", "http://127.0.0.1:9")
        assert proc.returncode == 3


class TestMisc:
    def test_help(self):
        assert fedsim("--help").returncode == 0

    def test_version(self):
        proc = fedsim("--version")
        assert proc.returncode == 0
        assert "fedsim" in proc.stdout
