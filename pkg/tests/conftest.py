"""Session fixtures for the acceptance suite.

The heavyweight acceptance tests all consume full pipeline runs produced by
the real command-line entry point. Runs are created once per session, keyed
by (seed, tag), and every acceptance check records a verdict line that is
echoed after the test summary.
"""

import csv
import json
import os
import time
from dataclasses import dataclass

import pytest

from tsalign.cli import main as cli_main


_ACCEPTANCE_RESULTS = []


@pytest.fixture
def check():
    """Record a named acceptance verdict, then enforce it."""

    def _check(name, passed, detail):
        _ACCEPTANCE_RESULTS.append((name, bool(passed), detail))
        assert passed, f"{name}: {detail}"

    return _check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE_RESULTS:
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}: {detail}")


@dataclass(frozen=True)
class ReproRun:
    """One finished repro-fig3 run plus the wall time it took."""

    out_dir: str
    seed: int
    seconds: float

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def report(self, tag, space):
        """report_{tag}_{space}.csv parsed into a metric -> float dict."""
        out = {}
        with open(self.path(f"report_{tag}_{space}.csv"), newline="") as fh:
            for row in csv.reader(fh):
                if row[0] in ("metric", "space") or row[0].startswith("bin_"):
                    continue
                out[row[0]] = float(row[1])
        return out

    def traces(self):
        with open(self.path("simulation_traces.jsonl")) as fh:
            return [json.loads(line) for line in fh]

    def summary(self):
        with open(self.path("summary.txt")) as fh:
            return fh.read()


@pytest.fixture(scope="session")
def repro(tmp_path_factory):
    """Factory: repro(seed, tag) -> ReproRun, cached per (seed, tag)."""
    cache = {}

    def run(seed, tag="a"):
        key = (seed, tag)
        if key not in cache:
            out = str(tmp_path_factory.mktemp(f"repro-s{seed}{tag}"))
            t0 = time.perf_counter()
            code = cli_main(["repro-fig3", "--seed", str(seed),
                             "--out-dir", out])
            seconds = time.perf_counter() - t0
            assert code == 0, f"repro-fig3 exited {code} for seed {seed}"
            cache[key] = ReproRun(out_dir=out, seed=seed, seconds=seconds)
        return cache[key]

    return run
