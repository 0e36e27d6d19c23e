import sys


def pytest_terminal_summary(terminalreporter):
    # one PASS/FAIL line per acceptance criterion, printed even when output is captured
    verdicts = getattr(sys.modules.get("test_acceptance"), "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(verdicts):
        terminalreporter.write_line(verdicts[n])
