import functools

import pytest

from tailmle.simulation import MonteCarloConfig, SecondOrderModel, run_monte_carlo

# fixed master seed for every Monte Carlo run used in assertions
MASTER_SEED = 20040301

_acceptance = []


@functools.lru_cache(maxsize=None)
def monte_carlo(gamma0, n, k=None, replications=2000, estimators=("mle",), rho=-1.0, c=0.0, lam=None):
    """Session-wide cache so acceptance and invariant tests share runs."""
    cfg = MonteCarloConfig(SecondOrderModel(gamma0, rho, c), n=n, k=k, lam=lam,
                           replications=replications, estimators=estimators, seed=MASTER_SEED)
    return run_monte_carlo(cfg)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance.append((marker.args[0], item.name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    by_number = {}
    for number, name, outcome in _acceptance:
        by_number.setdefault(number, []).append((name, outcome))
    for number in sorted(by_number):
        cases = by_number[number]
        verdict = "PASS" if all(o == "passed" for _, o in cases) else "FAIL"
        tr.write_line(f"criterion {number:>2}: {verdict}")
        for name, outcome in cases:
            tr.write_line(f"    {'pass' if outcome == 'passed' else 'FAIL'}  {name}")
