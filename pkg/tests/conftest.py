import numpy as np
import pytest

from bmccsp.panel import PanelData, TreatmentSpec, build_mask

CRITERIA = {
    1: "conditional posteriors",
    2: "Stiefel invariants",
    3: "getting it right",
    4: "independent DGP (5,10)",
    5: "weighted DGP (10,10)",
    6: "dependent DGP (5,10)",
    7: "Geweke protocol",
    8: "California replication",
    9: "determinism",
}
_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _RESULTS[crit] = (status, dict(report.user_properties).get("detail", ""))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_RESULTS):
        status, detail = _RESULTS[k]
        line = f"criterion {k} ({CRITERIA[k]}): {status}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_panel():
    """5 x 8 panel, last unit treated from period 5, one covariate."""
    r = np.random.default_rng(3)
    J, T = 5, 8
    mask = build_mask(TreatmentSpec("single-unit-block", (J - 1,), 5), J, T)
    y = r.standard_normal((J, 2)) @ r.standard_normal((2, T)) + 0.3 * r.standard_normal((J, T))
    x = r.standard_normal((J, T, 1))
    return PanelData(y, mask, x)
