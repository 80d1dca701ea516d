def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one PASS/FAIL line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if ("test_acceptance.py" in rep.nodeid
                    and getattr(rep, "when", None) == "call"):
                status = "PASS" if rep.passed else "FAIL"
                lines.append((rep.nodeid.split("::")[-1], status))
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, status in lines:
            terminalreporter.write_line(f"{status}  {name}")
