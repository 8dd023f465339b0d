import socket

import pytest

from httpburst.bench import ExperimentConfig, generate_fixture
from httpburst.server import ServerConfig, running_server
from httpburst.wire import StreamReader

SMALL = ExperimentConfig(image_size=2048, font_size=1500, css_size=3000, js_size=2500)


@pytest.fixture
def docroot(tmp_path):
    """Four-image fixture page with small assets."""
    return generate_fixture(tmp_path / "www", 4, SMALL)


@pytest.fixture
def server(docroot):
    with running_server(ServerConfig(docroot, port=0)) as srv:
        yield srv


class RawConn:
    def __init__(self, port):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=10)
        self.reader = StreamReader(self.sock.recv)

    def send(self, data):
        self.sock.sendall(data)

    def close(self):
        self.sock.close()


@pytest.fixture
def raw_conn(server):
    conn = RawConn(server.port)
    yield conn
    conn.close()


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
