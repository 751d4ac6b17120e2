"""Shared test plumbing: collect acceptance lines and echo them at the end."""

acceptance_lines: list[str] = []


def record(line: str) -> None:
    """Register one acceptance result line; printed in the terminal summary."""
    acceptance_lines.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)
