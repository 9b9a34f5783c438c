import pytest

_RESULTS: dict[int, tuple[bool, str, str]] = {}


class Criterion:
    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.notes: list[str] = []
        self.ok = True

    def check(self, ok: bool, note: str) -> None:
        self.ok &= bool(ok)
        self.notes.append(("" if ok else "!! ") + note)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        ok = self.ok and exc_type is None
        if exc_type is not None:
            self.notes.append(f"!! {exc_type.__name__}: {exc}")
        _RESULTS[self.number] = (ok, self.title, "; ".join(self.notes))
        line = f"criterion {self.number:2d} {'PASS' if ok else 'FAIL'}  {self.title}"
        print(line)
        if exc_type is None:
            assert ok, "; ".join(self.notes)
        return False


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_RESULTS):
        ok, title, notes = _RESULTS[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title} | {notes}")
