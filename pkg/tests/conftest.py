from _support import ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted({c for c, _, _ in ACCEPTANCE}):
        lines = [(ok, d) for c, ok, d in ACCEPTANCE if c == n]
        verdict = "PASS" if all(ok for ok, _ in lines) else "FAIL"
        tr.write_line(f"criterion {n:>2}: {verdict}")
        for ok, d in lines:
            tr.write_line(f"    {'ok ' if ok else 'BAD'} {d}")
