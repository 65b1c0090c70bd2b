import socket

import pytest

from hypobroker.config import load_config, write_demo_tree
from hypobroker.daemon import Daemon


def free_tcp_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture
def demo_daemon(tmp_path):
    """Daemon built from the stock demo tree; servers not started, no
    provider thread. Tests drive the hub and broker directly."""
    config_path = write_demo_tree(tmp_path / "demo", listen=f"unix:{tmp_path}/bus.sock")
    config = load_config(config_path)
    config.provider = "none"
    config.admin = "127.0.0.1:0"
    daemon = Daemon(config)
    yield daemon


@pytest.fixture
def live_daemon(tmp_path):
    """Demo daemon with bus and admin servers running."""
    config_path = write_demo_tree(tmp_path / "demo", listen=f"unix:{tmp_path}/bus.sock")
    config = load_config(config_path)
    config.provider = "none"
    config.admin = "127.0.0.1:0"
    daemon = Daemon(config)
    daemon.start()
    yield daemon
    daemon.stop()


def pytest_runtest_logreport(report):
    # One visible pass/fail line per acceptance criterion.
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        print(f"\nACCEPTANCE {name}: {report.outcome.upper()}")
