import contextlib

import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Context manager that records one PASS/FAIL/SKIP line for an acceptance criterion."""
    lines = request.config.stash[_LINES]

    @contextlib.contextmanager
    def run(name):
        notes = []
        status = "FAIL"
        try:
            yield notes.append
            status = "PASS"
        except pytest.skip.Exception as exc:
            status = "SKIP"
            notes.append(str(exc.msg))
            raise
        except BaseException as exc:
            notes.append(f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
            raise
        finally:
            line = f"{status} {name}" + (f": {'; '.join(notes)}" if notes else "")
            lines.append(line)
            print(line)

    return run
