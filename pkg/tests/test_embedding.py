import hashlib
import math
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from llmsched.embedding import (
    CachingEmbedder,
    EmbedderConfig,
    HashedTokenEmbedder,
    PluginEmbedder,
    cosine,
    embed,
    make_embedder,
)
from llmsched.errors import InvalidInputError, PluginProtocolError


CFG = EmbedderConfig(dimension=32)


def reference_embedding(payload: str, dimension: int) -> np.ndarray:
    """Independent re-implementation of the hashed bag-of-tokens scheme."""
    import re

    vec = np.zeros(dimension)
    for token in re.findall(r"\w+", payload):
        digest = hashlib.blake2b(
            token.encode("utf-8"), digest_size=8, key=b"llmsched-embed-v1"
        ).digest()
        vec[int.from_bytes(digest, "big") % dimension] += 1.0
    norm = np.linalg.norm(vec)
    if norm == 0:
        vec[0] = 1.0
        return vec
    return vec / norm


class TestHashedEmbedder:
    def test_deterministic(self):
        e = HashedTokenEmbedder(CFG)
        assert np.array_equal(e("abc def"), e("abc def"))

    def test_unit_norm(self):
        e = HashedTokenEmbedder(CFG)
        assert np.linalg.norm(e("any text at all")) == pytest.approx(1.0, abs=1e-9)

    def test_shared_token_raises_similarity(self):
        # "GET /a" and "GET /b" share the GET bucket; "zzz" shares nothing.
        # Verified against an independent re-implementation of the scheme.
        e = HashedTokenEmbedder(CFG)
        near = cosine(e("GET /a"), e("GET /b"))
        far = cosine(e("GET /a"), e("zzz"))
        assert near > far
        ref_near = cosine(reference_embedding("GET /a", 32), reference_embedding("GET /b", 32))
        ref_far = cosine(reference_embedding("GET /a", 32), reference_embedding("zzz", 32))
        assert near == pytest.approx(ref_near, abs=1e-12)
        assert far == pytest.approx(ref_far, abs=1e-12)

    def test_matches_reference_scheme(self):
        e = HashedTokenEmbedder(CFG)
        for payload in ("one two three", "repeated repeated token", "x"):
            assert np.allclose(e(payload), reference_embedding(payload, 32), atol=1e-12)

    def test_punctuation_only_payload_gets_basis_vector(self):
        e = HashedTokenEmbedder(CFG)
        vec = e("!!! ---")
        expected = np.zeros(32)
        expected[0] = 1.0
        assert np.array_equal(vec, expected)

    def test_empty_payload_rejected(self):
        with pytest.raises(InvalidInputError):
            HashedTokenEmbedder(CFG)("")

    def test_output_is_read_only(self):
        vec = HashedTokenEmbedder(CFG)("abc")
        with pytest.raises(ValueError):
            vec[0] = 5.0

    @given(st.text(min_size=1, max_size=60))
    @settings(max_examples=60)
    def test_embed_is_pure(self, payload):
        assert np.array_equal(embed(payload, CFG), embed(payload, CFG))

    def test_dimension_must_be_at_least_two(self):
        with pytest.raises(InvalidInputError):
            EmbedderConfig(dimension=1)


class TestCosine:
    def test_identity(self):
        assert cosine(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 1.0

    def test_orthogonal(self):
        assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_scale_invariance(self):
        assert cosine(np.array([1.0, 1.0]), np.array([2.0, 2.0])) == pytest.approx(1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            cosine(np.array([1.0, 0.0]), np.array([1.0, 0.0, 0.0]))

    def test_zero_vector_rejected(self):
        with pytest.raises(InvalidInputError):
            cosine(np.zeros(3), np.ones(3))

    @given(st.lists(st.floats(min_value=-100, max_value=100), min_size=3, max_size=3),
           st.lists(st.floats(min_value=-100, max_value=100), min_size=3, max_size=3))
    @settings(max_examples=100)
    def test_symmetry_and_range(self, a, b):
        a, b = np.array(a), np.array(b)
        if not a.any() or not b.any():
            return
        s = cosine(a, b)
        assert -1.0 - 1e-12 <= s <= 1.0 + 1e-12
        assert s == pytest.approx(cosine(b, a), abs=1e-12)

    @given(st.lists(st.floats(min_value=-50, max_value=50), min_size=4, max_size=4),
           st.floats(min_value=0.01, max_value=100))
    @settings(max_examples=60)
    def test_positive_scaling_gives_one(self, a, c):
        a = np.array(a)
        if not a.any():
            return
        assert cosine(a, c * a) == pytest.approx(1.0, abs=1e-9)


PLUGIN_OK = [
    sys.executable, "-c",
    "import sys, json; sys.stdin.read(); print(json.dumps([1.0, 2.0, 2.0, 0.0]))",
]


class TestPluginEmbedder:
    def cfg(self, command):
        return EmbedderConfig(dimension=4, kind="external-plugin", plugin_command=tuple(command))

    def test_valid_plugin_response_normalized(self):
        vec = PluginEmbedder(self.cfg(PLUGIN_OK))("payload")
        assert np.allclose(vec, np.array([1.0, 2.0, 2.0, 0.0]) / 3.0)

    def test_whitespace_format_accepted(self):
        cmd = [sys.executable, "-c", "import sys; sys.stdin.read(); print('1 0 0 0')"]
        vec = PluginEmbedder(self.cfg(cmd))("payload")
        assert np.allclose(vec, [1, 0, 0, 0])

    def test_wrong_count_is_protocol_error(self):
        cmd = [sys.executable, "-c", "import sys; sys.stdin.read(); print('[1.0, 2.0]')"]
        with pytest.raises(PluginProtocolError, match="expected 4"):
            PluginEmbedder(self.cfg(cmd))("payload")

    def test_non_numeric_output_is_protocol_error(self):
        cmd = [sys.executable, "-c", "print('not numbers at all')"]
        with pytest.raises(PluginProtocolError):
            PluginEmbedder(self.cfg(cmd))("payload")

    def test_non_finite_is_protocol_error(self):
        cmd = [sys.executable, "-c", "print('nan 1 2 3')"]
        with pytest.raises(PluginProtocolError, match="non-finite"):
            PluginEmbedder(self.cfg(cmd))("payload")

    def test_nonzero_exit_is_protocol_error(self):
        cmd = [sys.executable, "-c", "raise SystemExit(3)"]
        with pytest.raises(PluginProtocolError, match="status 3"):
            PluginEmbedder(self.cfg(cmd))("payload")

    def test_plugin_config_requires_command(self):
        with pytest.raises(InvalidInputError):
            EmbedderConfig(dimension=4, kind="external-plugin")


def test_caching_embedder_reuses_arrays():
    calls = []

    def base(payload):
        calls.append(payload)
        return HashedTokenEmbedder(CFG)(payload)

    memo = CachingEmbedder(base)
    a = memo("same text")
    b = memo("same text")
    assert a is b
    assert calls == ["same text"]


def test_make_embedder_dispatches():
    assert isinstance(make_embedder(CFG), HashedTokenEmbedder)
    plugin_cfg = EmbedderConfig(dimension=4, kind="external-plugin",
                                plugin_command=tuple(PLUGIN_OK))
    assert isinstance(make_embedder(plugin_cfg), PluginEmbedder)
