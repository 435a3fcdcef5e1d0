import pytest

from phaselock.model import LeadLag, PhaseModel

FIG_FILTER = LeadLag(0.2922, 63.1656, 63.1656)


@pytest.fixture
def fig_filter():
    return FIG_FILTER


@pytest.fixture
def coexist_model():
    """Lead-lag loop with a stable and an unstable rotating cycle around a stable focus."""
    return PhaseModel(FIG_FILTER, 1000.0, 720.0)


_LINES = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(request):
    """Collects one verdict line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(_LINES, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
