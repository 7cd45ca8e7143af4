"""Event extraction: segmentation, randomness detection, vocabulary."""

from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eventcast.errors import FitError
from eventcast.extractor import (
    ALPHABET_SIZE,
    MASK_ID,
    MASK_TOKEN,
    PAD_ID,
    RARE_ID,
    RARE_TOKEN,
    CharMarkovModel,
    Event,
    EventVocabulary,
    build_vocabulary,
    bundled_word_corpus,
    canonicalize,
    fit_char_markov,
    is_random_element,
    segment_path,
)
from eventcast.ingest import RawRequest


def req(method: str, path: str, count: int = 0) -> RawRequest:
    return RawRequest(
        timestamp=datetime(2020, 1, 6, tzinfo=timezone.utc),
        method=method,
        path=path,
        query_param_count=count,
    )


# the pipeline always fits on the word list plus the training split's own
# digit-free path elements; mirror that here
_DOMAIN_ELEMENTS = ["api", "jobs", "users", "log", "queue", "item", "view", "rare"]


@pytest.fixture(scope="module")
def word_model() -> CharMarkovModel:
    return fit_char_markov(sorted(set(bundled_word_corpus() + _DOMAIN_ELEMENTS)))


class TestSegmentPath:
    def test_slash_and_dash(self):
        assert [e.text for e in segment_path("/api/user-profile/list")] == [
            "api",
            "user",
            "profile",
            "list",
        ]

    def test_root_is_empty(self):
        assert segment_path("/") == []

    def test_underscore_and_dot(self):
        assert [e.text for e in segment_path("/a_b.c")] == ["a", "b", "c"]

    def test_order_preserved_and_no_empties(self):
        assert [e.text for e in segment_path("//x//y--z")] == ["x", "y", "z"]


class TestCharMarkov:
    def test_single_word_corpus_mode(self):
        model = fit_char_markov(["aaaa"], theta=-10.0)
        probs = np.exp(model.log_probs)
        # context "aa": the observed next char 'a' beats any other character
        a = ord("a") - ord("a")
        assert probs[a, a, a] > probs[a, a, 1:].max()

    def test_rows_normalize(self, word_model):
        probs = np.exp(word_model.log_probs)
        totals = probs.sum(axis=2)
        assert np.allclose(totals, 1.0, atol=1e-9)
        assert probs.shape == (ALPHABET_SIZE,) * 3

    def test_wordlike_scores_above_gibberish(self, word_model):
        assert word_model.score("status") > word_model.score("q9z3k1x7")

    def test_empty_corpus_rejected(self):
        with pytest.raises(FitError):
            fit_char_markov([])

    def test_persistence_round_trip(self, word_model, tmp_path):
        path = tmp_path / "markov.tsv"
        word_model.save(path)
        loaded = CharMarkovModel.load(path)
        assert loaded.theta == word_model.theta
        assert np.array_equal(loaded.log_probs, word_model.log_probs)

    def test_theta_override(self):
        model = fit_char_markov(["alpha", "beta"], theta=-2.5)
        assert model.theta == -2.5


class TestIsRandom:
    def test_english_word_not_random(self, word_model):
        assert not is_random_element(word_model, "status")

    def test_gibberish_random(self, word_model):
        assert is_random_element(word_model, "a8f3k2x9q1")

    def test_numeric_always_random(self, word_model):
        assert is_random_element(word_model, "42")
        assert is_random_element(word_model, "123456")

    def test_short_always_random(self, word_model):
        assert is_random_element(word_model, "ab")

    def test_separation_accuracy(self, word_model):
        rng = np.random.default_rng(99)
        words = [w for w in bundled_word_corpus() if len(w) >= 3]
        sample = [words[i] for i in rng.choice(len(words), size=1000, replace=False)]
        chars = np.array(list("abcdefghijklmnopqrstuvwxyz0123456789"))
        randoms = [
            "".join(rng.choice(chars, size=rng.integers(8, 13))) for _ in range(1000)
        ]
        correct = sum(not is_random_element(word_model, w) for w in sample)
        correct += sum(is_random_element(word_model, s) for s in randoms)
        assert correct / 2000 >= 0.95


class TestCanonicalize:
    def test_plain_path(self, word_model):
        event = canonicalize(req("GET", "/api/users", 2), word_model)
        assert event == Event("GET /api/users 2")

    def test_random_element_replaced(self, word_model):
        event = canonicalize(req("GET", "/jobs/a8f3k2x9q1/log"), word_model)
        assert event.token == "GET /jobs/RANDOM/log 0"

    def test_empty_path(self, word_model):
        assert canonicalize(req("POST", "/"), word_model).token == "POST / 0"

    def test_deterministic(self, word_model):
        r = req("GET", "/queue/item-view/42", 3)
        assert canonicalize(r, word_model) == canonicalize(r, word_model)

    def test_reserved_tokens_never_collide(self, word_model):
        # canonical tokens always contain two spaces; reserved tokens none
        event = canonicalize(req("GET", "/rare"), word_model)
        assert event.token.count(" ") == 2
        assert event.token not in ("PAD", "MASK", "RARE")


class TestVocabulary:
    def test_threshold_rule(self):
        events = [Event("A A 0")] * 5 + [Event("B B 0")]
        vocab = build_vocabulary(events, rare_threshold=2)
        assert "A A 0" in vocab.token_to_id
        assert "B B 0" not in vocab.token_to_id
        assert vocab.encode("B B 0") == RARE_ID

    def test_degenerate_threshold_keeps_all(self):
        events = [Event("A A 0"), Event("B B 0")]
        vocab = build_vocabulary(events, rare_threshold=1)
        assert vocab.size == 5

    def test_unseen_token_folds_to_rare(self):
        vocab = build_vocabulary([Event("A A 0")] * 2, rare_threshold=2)
        assert vocab.encode("NEVER SEEN 9") == RARE_ID

    def test_reserved_ids(self):
        vocab = build_vocabulary([Event("A A 0")] * 2, rare_threshold=2)
        assert vocab.encode(MASK_TOKEN) == MASK_ID == 1
        assert vocab.encode(RARE_TOKEN) == RARE_ID == 2
        assert vocab.decode(PAD_ID) == "PAD"

    def test_decode_encode_identity_for_retained(self):
        events = [Event(f"GET /p{i} 0") for i in range(6)] * 3
        vocab = build_vocabulary(events, rare_threshold=2)
        for token, idx in vocab.token_to_id.items():
            assert vocab.decode(vocab.encode(token)) == token
            assert idx < vocab.size

    @given(
        counts=st.dictionaries(
            st.from_regex(r"GET /[a-z]{1,6} [0-9]", fullmatch=True),
            st.integers(min_value=1, max_value=9),
            min_size=1,
            max_size=12,
        ),
        t1=st.integers(min_value=1, max_value=6),
        t2=st.integers(min_value=1, max_value=6),
    )
    @settings(max_examples=50, deadline=None)
    def test_threshold_monotonicity(self, counts, t1, t2):
        events = [tok for tok, c in counts.items() for _ in range(c)]
        low, high = min(t1, t2), max(t1, t2)
        assert build_vocabulary(events, high).size <= build_vocabulary(events, low).size

    def test_empty_stream_rejected(self):
        with pytest.raises(FitError):
            build_vocabulary([], rare_threshold=2)

    def test_golden_file_format(self, tmp_path):
        events = [Event("GET /a 0")] * 3 + [Event("GET /b 1")] * 2 + [Event("GET /c 0")]
        vocab = build_vocabulary(events, rare_threshold=2)
        path = tmp_path / "vocab.tsv"
        vocab.save(path)
        assert path.read_text() == (
            "0\tPAD\t0\n"
            "1\tMASK\t0\n"
            "2\tRARE\t1\n"
            "3\tGET /a 0\t3\n"
            "4\tGET /b 1\t2\n"
        )
        loaded = EventVocabulary.load(path)
        assert loaded.token_to_id == vocab.token_to_id
        assert loaded.sha256() == vocab.sha256()
