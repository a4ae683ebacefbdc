import os
from copolymer_emulsion.frequencies import FrequencyConfig
from copolymer_emulsion.interface import EstimatorConfig

FIXTURES = os.path.join(os.path.dirname(os.path.dirname(__file__)), "fixtures")

# small settings for module tests; the acceptance suite uses the defaults
FAST_ESTIMATOR = EstimatorConfig(L_ladder=(8, 16, 32), samples=12, mu_max=8.0, stderr_warn=1.0)
FAST_FREQ = FrequencyConfig(M=128, T=512, fields=4)

ACCEPTANCE_LINES = {}


def record(criterion, passed, detail):
    ACCEPTANCE_LINES[criterion] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        passed, detail = ACCEPTANCE_LINES[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if passed else 'FAIL'}  {detail}")
