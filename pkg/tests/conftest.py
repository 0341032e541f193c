import pytest

from rhythmic_uam.config import reference_config
from rhythmic_uam.optimizer import Demand, optimize


@pytest.fixture(scope="session")
def cfg():
    return reference_config()


@pytest.fixture(scope="session")
def eval_solution(cfg):
    """Optimum at the evaluation setting, solved once per session."""
    return optimize(cfg, Demand.from_config(cfg, 0.5), 0.9845)


_VERDICTS: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not rep.failed:
        return
    num, title = mark.args
    verdict = "PASS" if rep.passed else "FAIL"
    if rep.when == "call" or num not in _VERDICTS:
        _VERDICTS[num] = (verdict, title)
        print(f"\ncriterion {num}: {verdict} - {title}")


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_VERDICTS):
        verdict, title = _VERDICTS[num]
        terminalreporter.write_line(f"criterion {num:2d}: {verdict}  {title}")
