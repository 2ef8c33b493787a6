"""Shared fixtures, the optimizer-trace recorder and the acceptance summary.

Every call to the minimizer made in this process (directly or through the
zooming loop) is wrapped so that its cost trace is kept; the descent check
runs over all of them at the end of the session.
"""

import functools
import os
from pathlib import Path

import numpy as np
import pytest

import imsasom.imsa
import imsasom.som

DESCENT_TOL = 1e-12

RECORDED_TRACES = []  # (label, list of F)
ACCEPTANCE = {}  # criterion number -> (passed, message)

_original_minimize = imsasom.som.minimize


@functools.wraps(_original_minimize)
def _recording_minimize(problem, state, iterations, options=None, truth=None):
    # F before the first iteration is part of the sequence
    F0 = imsasom.som.cost(problem, state).total
    out, trace = _original_minimize(problem, state, iterations, options, truth)
    RECORDED_TRACES.append((f"Q={problem.Q} V={problem.V} I={iterations}", [F0] + list(trace.F)))
    return out, trace


imsasom.som.minimize = _recording_minimize
imsasom.imsa.minimize = _recording_minimize


def descent_violations(traces=None, tol=DESCENT_TOL):
    """Largest increase of F between consecutive iterations, per offending run."""
    bad = []
    for label, F in (RECORDED_TRACES if traces is None else traces):
        if len(F) < 2:
            continue
        rise = float(np.max(np.diff(np.asarray(F))))
        if rise > tol:
            bad.append((label, rise))
    return bad


def report(criterion: int, passed, message: str):
    """Remember an acceptance outcome for the end-of-session summary.

    ``passed=None`` marks a criterion that could not be evaluated.
    """
    ACCEPTANCE[criterion] = (None if passed is None else bool(passed), message)


@pytest.fixture(scope="session")
def record():
    return report


@pytest.fixture(scope="session")
def recorded_runs():
    """The live list of (label, F trace) pairs recorded so far."""
    return RECORDED_TRACES


@pytest.fixture(scope="session")
def fresnel_file():
    """Path to the rectTM_cent dataset, or None when it is not available."""
    candidates = []
    if os.environ.get("IMSASOM_FRESNEL_FILE"):
        candidates.append(Path(os.environ["IMSASOM_FRESNEL_FILE"]))
    for root in (os.environ.get("IMSASOM_FRESNEL_DIR"), Path(__file__).parent / "data"):
        if root:
            candidates += sorted(Path(root).glob("rectTM_cent*"))
    for c in candidates:
        if c.is_file():
            return c
    return None


def pytest_collection_modifyitems(session, config, items):
    # acceptance runs last so that its descent check covers the whole suite
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")


def pytest_sessionfinish(session, exitstatus):
    bad = descent_violations()
    if RECORDED_TRACES:
        report(4, not bad, f"{len(RECORDED_TRACES)} recorded runs, "
                           f"{len(bad)} with an F increase above {DESCENT_TOL:g}"
               + (f" (worst {max(r for _, r in bad):.3e})" if bad else ""))
        if bad and session.exitstatus == 0:
            session.exitstatus = 1


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        passed, msg = ACCEPTANCE[k]
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        tr.write_line(f"criterion {k:2d}: {status}  {msg}")
