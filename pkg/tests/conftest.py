from __future__ import annotations

import copy

import pytest

_RESULTS: dict[int, tuple[bool, str]] = {}

# A pipeline small enough to run end to end in seconds.
TINY_CONFIG = {
    "seed": 21,
    "market": {"n_assets": 8, "n_etfs": 2, "n_days": 1680, "start": "2003-01-01", "idio_vol": 0.01,
               "coupling": {"dfy": -0.05},
               "regimes": [{"start": "2007-12", "end": "2008-06", "predictor_shift": {"dfy": 3.0}}]},
    "cohort": {"n_investors": 100, "start": "2005-01", "disposition": 0.4, "disposition_dispersion": 0.3},
    "forecast": {"window_months": 48, "step_months": 5, "en_alphas": [1.0], "en_n_lambdas": 8,
                 "rf_trees": [10], "rf_depths": [3], "rf_subsets": [5], "nn_learning_rates": [0.01],
                 "nn_l2s": [0.001], "nn_max_epochs": 20, "nn_patience": 5},
    "report": {"repetitions": 200, "regression_repetitions": 200},
}


@pytest.fixture
def tiny_config():
    return copy.deepcopy(TINY_CONFIG)


@pytest.fixture
def criterion():
    """Record the outcome of a numbered acceptance criterion for the summary."""

    def record(number: int, passed: bool, detail: str) -> bool:
        _RESULTS[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        ok, detail = _RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
