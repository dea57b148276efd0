import threading

import pytest

from gestura.judge import (
    ACCEPT_THRESHOLD,
    JUDGE_PROMPT_VARIANTS,
    SCORE_BANDS,
    BackendUnavailableError,
    DeterministicJudge,
    JudgeCache,
    JudgeRequest,
    JudgeScore,
    RemoteJudge,
    accept,
    f1_to_score,
    score,
    stability_probe,
    token_f1,
)


class TestTokenF1:
    def test_exact_match(self):
        assert token_f1("a wave of greeting", "a wave of greeting") == 1.0

    def test_disjoint(self):
        assert token_f1("alpha beta", "gamma delta") == 0.0

    def test_known_value(self):
        # pred: {a, b}; gold: {a, c}; overlap 1, p = r = 0.5 -> f1 = 0.5
        assert token_f1("a b", "a c") == 0.5

    def test_case_insensitive(self):
        assert token_f1("Thumbs Up", "thumbs up") == 1.0

    def test_clipped_repeats(self):
        # pred: a a a; gold: a -> overlap 1, p = 1/3, r = 1 -> f1 = 0.5
        assert token_f1("a a a", "a") == 0.5

    def test_symmetric(self):
        assert token_f1("one two three", "two three four") == token_f1(
            "two three four", "one two three")


class TestScoreBands:
    def test_bands_partition_unit_interval(self):
        assert SCORE_BANDS[0][0] == 0.0
        assert SCORE_BANDS[-1][1] == 1.0
        for (_, hi), (lo, _) in zip(SCORE_BANDS, SCORE_BANDS[1:]):
            assert hi == lo

    def test_mapping_edges(self):
        assert f1_to_score(0.0) == 0
        assert f1_to_score(0.1) == 1
        assert f1_to_score(0.35) == 2
        assert f1_to_score(0.55) == 3
        assert f1_to_score(0.7) == 4
        assert f1_to_score(0.85) == 5
        assert f1_to_score(1.0) == 5

    def test_monotone(self):
        values = [f1_to_score(x / 100) for x in range(101)]
        assert values == sorted(values)


class TestDeterministicJudge:
    def test_exact_match_scores_five(self):
        judge = DeterministicJudge()
        result = judge.score(JudgeRequest(prediction="thumbs up", gold="thumbs up"))
        assert result.score == 5

    def test_unrelated_scores_zero(self):
        judge = DeterministicJudge()
        result = judge.score(JudgeRequest(prediction="alpha beta", gold="gamma delta"))
        assert result.score == 0

    def test_reproducible(self):
        judge = DeterministicJudge()
        req = JudgeRequest(prediction="a partial match here", gold="a partial phrase there")
        assert judge.score(req).score == judge.score(req).score

    def test_variant_does_not_change_deterministic_verdict(self):
        judge = DeterministicJudge()
        scores = {judge.score(JudgeRequest("some words", "some words match", v)).score
                  for v in range(len(JUDGE_PROMPT_VARIANTS))}
        assert len(scores) == 1


class TestAccept:
    def test_threshold(self):
        assert ACCEPT_THRESHOLD == 4
        assert accept(JudgeScore(4))
        assert accept(JudgeScore(5))
        assert not accept(JudgeScore(3))

    def test_plain_int(self):
        assert accept(4) and not accept(0)


class TestJudgeScoreValidation:
    def test_range(self):
        with pytest.raises(ValueError):
            JudgeScore(6)
        with pytest.raises(ValueError):
            JudgeScore(-1)

    def test_request_rejects_empty(self):
        with pytest.raises(ValueError):
            JudgeRequest(prediction="", gold="x")


class TestJudgeCache:
    def test_hit_skips_backend(self):
        calls = []

        class CountingJudge(DeterministicJudge):
            def score(self, request):
                calls.append(request)
                return super().score(request)

        cache = JudgeCache()
        backend = CountingJudge()
        req = JudgeRequest(prediction="p text", gold="g text")
        first = score(req, backend, cache)
        second = score(req, backend, cache)
        assert first.score == second.score
        assert len(calls) == 1
        assert len(cache) == 1

    def test_variant_changes_key(self):
        a = JudgeCache.key(JudgeRequest("p", "g", 0))
        b = JudgeCache.key(JudgeRequest("p", "g", 1))
        assert a != b

    def test_key_separator_is_unambiguous(self):
        a = JudgeCache.key(JudgeRequest("ab", "c", 0))
        b = JudgeCache.key(JudgeRequest("a", "bc", 0))
        assert a != b

    def test_persistence_round_trip(self, tmp_path):
        path = tmp_path / "cache.tsv"
        cache = JudgeCache(path)
        req = JudgeRequest(prediction="p text", gold="g text")
        cache.put(req, 3)
        reloaded = JudgeCache(path)
        assert reloaded.get(req) == 3
        line = path.read_text().strip()
        key, _, value = line.partition("\t")
        assert key == JudgeCache.key(req) and value == "3"

    def test_thread_safety(self):
        cache = JudgeCache()
        reqs = [JudgeRequest(prediction=f"p {i}", gold=f"g {i}") for i in range(50)]

        def worker():
            for i, req in enumerate(reqs):
                cache.put(req, i % 6)
                assert cache.get(req) == i % 6

        threads = [threading.Thread(target=worker) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(cache) == 50


class TestStabilityProbe:
    def test_deterministic_backend_has_zero_std(self):
        reqs = [JudgeRequest(prediction="a wave greeting", gold="a wave of greeting"),
                JudgeRequest(prediction="unrelated words", gold="completely different")]
        report = stability_probe(reqs, DeterministicJudge(), n_variants=3)
        assert report.std == 0.0
        assert len(report.verdicts) == 2
        assert all(len(row) == 3 for row in report.verdicts)

    def test_flaky_backend_reports_spread(self):
        class VariantSensitiveJudge:
            kind = "flaky"

            def score(self, request):
                # accepts only under variant 0
                return JudgeScore(5 if request.prompt_variant == 0 else 0)

        reqs = [JudgeRequest(prediction="x", gold="y") for _ in range(4)]
        report = stability_probe(reqs, VariantSensitiveJudge(), n_variants=3)
        assert report.acceptance_rates == [1.0, 0.0, 0.0]
        assert report.std == pytest.approx((2.0 / 9.0) ** 0.5)

    def test_requires_items(self):
        with pytest.raises(ValueError):
            stability_probe([], DeterministicJudge())


class TestRemoteJudge:
    def test_unreachable_raises_backend_unavailable(self):
        judge = RemoteJudge("http://127.0.0.1:1", timeout=0.2, retries=1)
        with pytest.raises(BackendUnavailableError):
            judge.score(JudgeRequest(prediction="p", gold="g"))

    def test_against_live_server(self):
        from gestura.serving import MockBackend, ServerConfig, serve

        handle = serve(ServerConfig(backend=MockBackend()))
        try:
            judge = RemoteJudge(handle.address)
            result = judge.score(JudgeRequest(prediction="thumbs up", gold="thumbs up"))
            assert result.score == 5
        finally:
            handle.stop()
