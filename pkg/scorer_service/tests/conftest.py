import importlib.util
import sys
from pathlib import Path

import pytest

from scorer_service.config import ServiceConfig
from scorer_service.server import ScorerService

# the shared wire-protocol conformance suite lives with the client package
_SUITE_PATH = Path(__file__).resolve().parents[2] / "tests" / "protocol_suite.py"


@pytest.fixture(scope="session")
def protocol_suite():
    spec = importlib.util.spec_from_file_location("protocol_suite", _SUITE_PATH)
    module = importlib.util.module_from_spec(spec)
    sys.modules.setdefault("protocol_suite", module)
    spec.loader.exec_module(module)
    return module


@pytest.fixture(scope="session")
def service():
    server = ScorerService(ServiceConfig(port=0))
    server.start_background()
    yield server
    server.shutdown()
    server.server_close()
