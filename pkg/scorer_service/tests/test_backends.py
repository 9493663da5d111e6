import math

import numpy as np
import pytest

from scorer_service.backends import BLANK, BackendError, DeterministicBackend
from scorer_service.config import ConfigError, ServiceConfig, load_config


@pytest.fixture()
def backend():
    return DeterministicBackend(ServiceConfig())


class TestEmbed:
    def test_shape_and_unit_norm(self, backend):
        vectors = backend.embed(["a", "b", "c"])
        assert len(vectors) == 3
        for v in vectors:
            assert len(v) == ServiceConfig().embed_dim
            assert abs(np.linalg.norm(v) - 1.0) < 1e-5

    def test_deterministic(self, backend):
        assert backend.embed(["hello"]) == backend.embed(["hello"])

    def test_distinct_texts_distinct_vectors(self, backend):
        a, b = backend.embed(["one", "two"])
        assert not np.allclose(a, b)

    def test_large_dimension(self):
        backend = DeterministicBackend(ServiceConfig(embed_dim=384))
        (v,) = backend.embed(["x"])
        assert len(v) == 384 and abs(np.linalg.norm(v) - 1.0) < 1e-5

    def test_seed_changes_vectors(self):
        a = DeterministicBackend(ServiceConfig(seed=0)).embed(["x"])[0]
        b = DeterministicBackend(ServiceConfig(seed=1)).embed(["x"])[0]
        assert not np.allclose(a, b)


class TestNli:
    def test_range_and_alignment(self, backend):
        scores = backend.nli("p", ["h1", "h2", "h3"])
        assert len(scores) == 3
        assert all(0.0 <= s < 1.0 for s in scores)
        permuted = backend.nli("p", ["h3", "h1", "h2"])
        assert permuted == [scores[2], scores[0], scores[1]]


class TestFitb:
    PROMPT = f"i clean the kitchen because {BLANK}."

    def test_scores_finite_and_aligned(self, backend):
        candidates = ["remove dirt", "company was coming", "declutter"]
        scores = backend.fitb(self.PROMPT, candidates)
        assert all(math.isfinite(s) for s in scores)
        permuted = backend.fitb(self.PROMPT, candidates[::-1])
        assert permuted == scores[::-1]

    def test_blank_count_enforced(self, backend):
        with pytest.raises(BackendError):
            backend.fitb("no blank", ["x"])
        with pytest.raises(BackendError):
            backend.fitb(f"{BLANK} and {BLANK}", ["x"])

    def test_empty_visual_features_reduce_to_text_only(self, backend):
        candidates = ["remove dirt"]
        assert backend.fitb(self.PROMPT, candidates, []) == \
            backend.fitb(self.PROMPT, candidates, None)

    def test_visual_features_shift_scores_deterministically(self, backend):
        features = [[0.1, 0.2], [0.3, 0.4]]
        with_vf = backend.fitb(self.PROMPT, ["remove dirt"], features)
        again = backend.fitb(self.PROMPT, ["remove dirt"], features)
        plain = backend.fitb(self.PROMPT, ["remove dirt"])
        assert with_vf == again
        assert with_vf != plain

    def test_ragged_features_rejected(self, backend):
        with pytest.raises(BackendError):
            backend.fitb(self.PROMPT, ["x"], [[0.1, 0.2], [0.3]])

    def test_length_normalization(self, backend):
        # the oracle: mean of per-token log-probabilities, so a candidate
        # repeated once scores identically to itself doubled
        single = backend.candidate_loglik("dirt")
        doubled = backend.candidate_loglik("dirt dirt")
        assert single == pytest.approx(doubled)


class TestConfig:
    def test_unknown_backend_rejected(self):
        with pytest.raises(ConfigError):
            ServiceConfig(backend="oracle")

    def test_nonpositive_dim_rejected(self):
        with pytest.raises(ConfigError):
            ServiceConfig(embed_dim=0)

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "service.cfg"
        path.write_text("backend = deterministic\nembed_dim = 64\nport = 7500\n")
        config = load_config(path)
        assert config.embed_dim == 64 and config.port == 7500

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "service.cfg"
        path.write_text("frobnication = 3\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_override_wins_over_file(self, tmp_path):
        path = tmp_path / "service.cfg"
        path.write_text("embed_dim = 64\n")
        assert load_config(path, {"embed_dim": "128"}).embed_dim == 128
