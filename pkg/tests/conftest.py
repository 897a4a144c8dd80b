import pytest

from hyperfractal_dtn.mobility import SpeedProfile, kmh_to_units

V40 = kmh_to_units(40.0)
H = 0.06


@pytest.fixture
def v40():
    return SpeedProfile.constant(V40)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
