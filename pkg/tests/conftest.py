import pytest

from ollo.mockd import MockConfig, MockServer
from ollo.transport import OllamaClient
from ollo.types import ServerConfig


@pytest.fixture
def make_mock():
    """Factory for fresh mock servers; all are shut down after the test."""
    servers = []

    def factory(**kwargs) -> MockServer:
        server = MockServer(MockConfig(**kwargs)).start()
        servers.append(server)
        return server

    yield factory
    for server in servers:
        server.shutdown()


@pytest.fixture
def mock(make_mock):
    return make_mock()


@pytest.fixture
def client(mock):
    with OllamaClient(ServerConfig(mock.base_url, timeout=10)) as c:
        yield c


@pytest.fixture
def closed_url():
    import socket

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    return f"http://127.0.0.1:{port}"


_acceptance: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    entry = _acceptance.setdefault(number, {"title": title, "status": "PASS"})
    if report.failed:
        entry["status"] = "FAIL"
    elif report.skipped and entry["status"] == "PASS" and report.when in ("setup", "call"):
        entry["status"] = "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        entry = _acceptance[number]
        terminalreporter.write_line(f"[{entry['status']}] criterion {number}: {entry['title']}")
