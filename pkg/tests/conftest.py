import pytest

_verdicts = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_verdicts] = []
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion reported in the summary")


class Verdict:
    """Collects one PASS/FAIL line for an acceptance criterion."""

    def __init__(self, sink, number, title):
        self.sink, self.number, self.title = sink, number, title
        self.details = []

    def note(self, text):
        self.details.append(text)

    def emit(self, ok):
        line = f"{'PASS' if ok else 'FAIL'} criterion {self.number}: {self.title}"
        if self.details:
            line += " (" + "; ".join(self.details) + ")"
        print(line)
        self.sink.append(line)


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    number, title = marker.args
    v = Verdict(request.config.stash[_verdicts], number, title)
    yield v
    rep = getattr(request.node, "_call_report", None)
    v.emit(rep is not None and rep.passed)


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    rep = yield
    if call.when == "call":
        item._call_report = rep
    return rep


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[_verdicts]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
