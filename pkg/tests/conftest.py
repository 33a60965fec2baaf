import pytest


def pytest_configure(config):
    config.acceptance_lines = {}


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", {})
    if not lines:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])


@pytest.fixture
def record(request):
    """record(k, ok, detail) stores and prints the summary line of criterion k."""
    def _record(k, ok, detail):
        line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.acceptance_lines[k] = line
        print(line)
        return ok
    return _record
