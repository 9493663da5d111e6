import importlib.util
import sys
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parents[1]


def _load_script(name):
    path = REPO_ROOT / "scripts" / f"{name}.py"
    spec = importlib.util.spec_from_file_location(name, path)
    module = importlib.util.module_from_spec(spec)
    sys.modules[name] = module
    spec.loader.exec_module(module)
    return module


toyfactory = _load_script("make_toy_corpus")


@pytest.fixture(scope="session")
def toy_corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("toycorpus")
    toyfactory.build_toy_corpus(root)
    return root


@pytest.fixture()
def toy_corpus(toy_corpus_dir):
    from whymine.corpus import load_corpus

    return load_corpus(toy_corpus_dir)


@pytest.fixture(scope="session")
def stub_server():
    from whymine.stubscorer import StubScorerServer

    server = StubScorerServer()
    server.start_background()
    yield server
    server.shutdown()
