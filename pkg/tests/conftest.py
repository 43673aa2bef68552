import numpy as np
import pytest

from roma_sim.scenario import Scenario


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_scenario():
    """Two users with 2 x 2 panels; fast enough for optimiser unit tests."""
    return Scenario(users=2, bs_grid=(2, 2), user_grid=(2, 2), paths=4, opt_draws=4, eval_draws=8)


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """Record one acceptance criterion's outcome for the terminal summary."""
    store = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(criterion, passed, detail):
        store[criterion] = (bool(passed), detail)
        print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} ({detail})")
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(ACCEPTANCE, None)
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in range(1, 9):
        if criterion in store:
            passed, detail = store[criterion]
            terminalreporter.write_line(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} ({detail})")
        else:
            terminalreporter.write_line(f"criterion {criterion}: no verdict (deselected or errored)")
