from __future__ import annotations

import numpy as np
import pytest

from private_ate.nuisance import NuisanceModel


def constant_model(pi, mu1, mu0, clip=0.05, y_lo=-1e9, y_hi=1e9):
    """Nuisance model with constant evaluators, for hand-checkable scores."""
    return NuisanceModel(
        propensity_raw=lambda x: np.full(np.atleast_2d(x).shape[0], float(pi)),
        outcome_raw=lambda x, a: np.full(np.atleast_2d(x).shape[0], float(mu1 if a == 1 else mu0)),
        clip=clip, y_lo=y_lo, y_hi=y_hi,
    )


@pytest.fixture
def const_model():
    return constant_model


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1][1:])):
            terminalreporter.write_line(line)
