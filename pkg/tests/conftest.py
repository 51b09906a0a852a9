"""Shared fixtures plus a terminal summary of the acceptance criteria.

The expensive replicated studies run once per session and are shared by
every criterion that reads them.  Each acceptance test carries a
``criterion`` marker; the summary hook prints one pass/fail line per
criterion at the end of the run.
"""
import time

import pytest

from kgsa.experiments import (
    reproduce_categorical,
    reproduce_ishigami,
    reproduce_sir,
    reproduce_stochastic,
)


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(num, text): acceptance criterion exercised by this test",
    )
    config._criterion_results = {}


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        num, text = marker.args
        results = item.config._criterion_results
        if report.when == "call":
            results[num] = (text, report.outcome)
        elif report.outcome != "passed" and num not in results:
            # setup/teardown crash counts as a failure of the criterion
            results[num] = (text, report.outcome)
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_criterion_results", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        text, outcome = results[num]
        word = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d} {word}  {text}")


def _timed(fn, *args, **kwargs):
    t0 = time.monotonic()
    bundle = fn(*args, **kwargs)
    return bundle, time.monotonic() - t0


@pytest.fixture(scope="session")
def ishigami_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("ishigami")
    return _timed(reproduce_ishigami, out, n=1000, reps=50, seed=7)


@pytest.fixture(scope="session")
def stochastic_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("stochastic")
    return _timed(reproduce_stochastic, out, n=1000, n_small=200, reps=50, seed=11)


@pytest.fixture(scope="session")
def sir_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("sir")
    return _timed(reproduce_sir, out, n=200, reps=50, seed=5)


@pytest.fixture(scope="session")
def categorical_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("categorical")
    return _timed(reproduce_categorical, out, n=1000, reps=50, seed=3)
