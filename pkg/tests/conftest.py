import numpy as np
import pytest

from mlblock.dataset import PanelDataset
from mlblock.sim import SyntheticDGPSpec, generate_synthetic_panel


def make_panel(n=40, K=3, periods=("pre1", "pre2"), seed=0, rho=0.8):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, K))
    base = X[:, 0] if K else np.zeros(n)
    Y = np.column_stack([base + rho * t + rng.standard_normal(n) for t in range(len(periods))])
    return PanelDataset(
        unit_ids=tuple(f"u{i}" for i in range(n)),
        outcomes=Y,
        periods=periods,
        covariates=X,
        covariate_names=tuple(f"x{k + 1}" for k in range(K)),
    )


@pytest.fixture
def panel():
    return make_panel()


@pytest.fixture
def synth():
    return generate_synthetic_panel(SyntheticDGPSpec(n=60, K=5, n_periods=3, seed=1))


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
