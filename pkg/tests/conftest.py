import numpy as np
import pytest

from chaosgen import dynamics as dy


def pytest_configure(config):
    config._acceptance_lines = []
    config.addinivalue_line("markers", "slow: long-running end-to-end checks")


@pytest.fixture
def record_criterion(request):
    """Log one pass/fail line per acceptance criterion for the terminal summary."""
    lines = request.config._acceptance_lines

    def record(number, passed, detail):
        lines.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
        print(lines[-1])
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def reference_sim():
    return dy.SimConfig(dt=1.0, tau=10.0, t_target=100.0)


def random_restricted(n_v, n_h, seed, g=1.5, trained_scale=0.3):
    """Restricted parameters with non-zero trainables, for oracle comparisons."""
    p = dy.init_restricted(n_v, n_h, g, seed)
    gen = np.random.default_rng(1000 + seed)
    return p.with_trainables(
        A=trained_scale * gen.standard_normal((n_v, n_h)),
        b=trained_scale * gen.standard_normal(n_v),
        c=trained_scale * gen.standard_normal(n_h),
    )
