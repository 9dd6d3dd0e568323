from __future__ import annotations

import math
import random
import unicodedata

import pytest

from langconfusion.langcore import LanguageCode, count_units
from langconfusion.lid import (
    LidConfig,
    LidTrainingError,
    ModelFormatError,
    NGramLidModel,
    PredictionFileError,
    load_external_predictions,
    load_model,
    posteriors,
    predict,
    save_model,
    train,
)


def brute_force_posterior(corpus, text, n_min, n_max, alpha):
    """Independent smoothed Naive Bayes, computed the slow way."""

    def norm(t):
        return " ".join(unicodedata.normalize("NFC", t).casefold().split())

    def grams(t):
        out = []
        for n in range(n_min, n_max + 1):
            for i in range(len(t) - n + 1):
                out.append(t[i : i + n])
        return out

    counts = {}
    samples = {}
    for lang, sample in corpus:
        counts.setdefault(lang, {})
        samples[lang] = samples.get(lang, 0) + 1
        for gram in grams(norm(sample)):
            counts[lang][gram] = counts[lang].get(gram, 0) + 1
    vocab = {n: set() for n in range(n_min, n_max + 1)}
    for lang_counts in counts.values():
        for gram in lang_counts:
            vocab[len(gram)].add(gram)

    total_samples = sum(samples.values())
    scores = {}
    for lang, lang_counts in counts.items():
        score = math.log(samples[lang] / total_samples)
        totals = {n: sum(c for g, c in lang_counts.items() if len(g) == n) for n in vocab}
        for gram in grams(norm(text)):
            n = len(gram)
            denom = totals[n] + alpha * (len(vocab[n]) + 1)
            score += math.log((lang_counts.get(gram, 0) + alpha) / denom)
        scores[lang] = score
    peak = max(scores.values())
    z = sum(math.exp(s - peak) for s in scores.values())
    return {lang: math.exp(s - peak) / z for lang, s in scores.items()}


TINY_CORPUS = [
    (LanguageCode.EN, "the quick brown fox"),
    (LanguageCode.FR, "le renard brun rapide"),
]


class TestTrain:
    def test_single_language_posterior(self):
        model = train([(LanguageCode.EN, "the quick brown fox")], LidConfig())
        prediction = predict(model, "quick brown")
        assert prediction.language is LanguageCode.EN
        assert prediction.confidence == 1.0

    def test_two_language_prediction_matches_oracle(self):
        config = LidConfig()
        model = train(TINY_CORPUS, config)
        expected = brute_force_posterior(
            TINY_CORPUS, "le renard", config.n_min, config.n_max, config.alpha
        )
        assert max(expected, key=expected.get) is LanguageCode.FR
        prediction = predict(model, "le renard")
        assert prediction.language is LanguageCode.FR
        got = posteriors(model, "le renard")
        for lang, value in expected.items():
            assert got[lang] == pytest.approx(value, abs=1e-12)

    def test_order_invariance_bit_identical(self, tmp_path):
        corpus = [(lang, f"{text} extra") for lang, text in TINY_CORPUS] + TINY_CORPUS
        shuffled = list(corpus)
        random.Random(5).shuffle(shuffled)
        a, b = tmp_path / "a.nglid", tmp_path / "b.nglid"
        save_model(train(corpus, LidConfig()), a)
        save_model(train(shuffled, LidConfig()), b)
        assert a.read_bytes() == b.read_bytes()

    def test_empty_corpus_rejected(self):
        with pytest.raises(LidTrainingError):
            train([], LidConfig())

    def test_und_sample_rejected(self):
        with pytest.raises(LidTrainingError):
            train([(LanguageCode.UND, "???")], LidConfig())

    def test_likelihoods_sum_to_one(self):
        model = train(TINY_CORPUS, LidConfig())
        for lang in model.languages:
            for n in range(model.config.n_min, model.config.n_max + 1):
                observed = sum(
                    math.exp(lp)
                    for (l, gram), lp in model.log_likelihood.items()
                    if l is lang and len(gram) == n
                )
                unseen_events = model.event_space_sizes[n] - 1 - sum(
                    1 for (l, gram) in model.log_likelihood if l is lang and len(gram) == n
                )
                mass = observed + (unseen_events + 1) * math.exp(model.log_oov[(lang, n)])
                assert mass == pytest.approx(1.0, abs=1e-9)


class TestPredict:
    def test_empty_input(self, mini_model):
        prediction = predict(mini_model, "")
        assert prediction.language is LanguageCode.UND
        assert prediction.confidence == 0.0

    def test_only_common_input(self, mini_model):
        assert predict(mini_model, "123 456 !!! ...").language is LanguageCode.UND

    def test_table2_sentences(self, mini_model):
        assert predict(mini_model, "Erklären Sie, wie der Gini-Index berechnet wird").language is LanguageCode.DE
        assert predict(mini_model, "問:如何清洗和保養筷子").language is LanguageCode.ZH

    def test_posterior_normalization(self, mini_model):
        for text in ["hello there my friend", "guten Morgen zusammen", "こんにちは、お元気ですか"]:
            assert sum(posteriors(mini_model, text).values()) == pytest.approx(1.0, abs=1e-9)

    def test_script_short_circuit_hangul(self, mini_model):
        prediction = predict(mini_model, "안녕하세요 반갑습니다 좋은 하루 되세요")
        assert prediction.language is LanguageCode.KO

    def test_exact_tie_breaks_to_lowest_code(self):
        # Identical training text gives identical posteriors; the winner is
        # the lexicographically smaller code. At the default 0.5 threshold a
        # 50/50 split abstains, so lower it to observe the tie-break.
        corpus = [(LanguageCode.EN, "same words here"), (LanguageCode.DE, "same words here")]
        model = train(corpus, LidConfig(confidence_threshold=0.4))
        prediction = predict(model, "same words here")
        assert prediction.language is LanguageCode.DE
        assert prediction.confidence == pytest.approx(0.5, abs=1e-9)
        abstaining = train(corpus, LidConfig())
        assert predict(abstaining, "same words here").language is LanguageCode.UND

    def test_repetition_stable(self, heldout_model, heldout_samples):
        for lang, text in heldout_samples:
            if count_units(text, lang) < 5:
                continue
            once = predict(heldout_model, text)
            twice = predict(heldout_model, text + text)
            assert once.language is twice.language

    def test_heldout_accuracy(self, heldout_model, heldout_samples):
        confusable = {LanguageCode.ES, LanguageCode.PT, LanguageCode.IT}
        total = correct = 0
        sub_total = sub_correct = 0
        for lang, text in heldout_samples:
            if count_units(text, lang) < 5:
                continue
            hit = predict(heldout_model, text).language is lang
            total += 1
            correct += hit
            if lang in confusable:
                sub_total += 1
                sub_correct += hit
        assert correct / total >= 0.95
        assert sub_correct / sub_total >= 0.85


class TestModelFile:
    def test_round_trip(self, tmp_path):
        model = train(TINY_CORPUS, LidConfig())
        path = tmp_path / "m.nglid"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded == model
        resaved = tmp_path / "m2.nglid"
        save_model(loaded, resaved)
        assert resaved.read_bytes() == path.read_bytes()

    def test_corrupted_header(self, tmp_path):
        path = tmp_path / "bad.nglid"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_checksum_failure(self, tmp_path):
        model = train(TINY_CORPUS, LidConfig())
        path = tmp_path / "m.nglid"
        save_model(model, path)
        blob = bytearray(path.read_bytes())
        blob[-1] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_version_mismatch(self, tmp_path):
        model = train(TINY_CORPUS, LidConfig())
        path = tmp_path / "m.nglid"
        save_model(model, path)
        blob = bytearray(path.read_bytes())
        blob[5:9] = (99).to_bytes(4, "big")
        path.write_bytes(bytes(blob))
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_languages_preserved(self, tmp_path):
        model = train(TINY_CORPUS, LidConfig())
        path = tmp_path / "m.nglid"
        save_model(model, path)
        assert load_model(path).languages == (LanguageCode.EN, LanguageCode.FR)


class TestExternalPredictions:
    def test_load(self, tmp_path):
        path = tmp_path / "preds.tsv"
        path.write_text("r1\t0\ten\t0.99\nr1\t1\tar\t0.97\n", encoding="utf-8")
        external = load_external_predictions(path)
        assert len(external.by_line) == 2
        assert external.predict_line("whatever", "r1", 1).language is LanguageCode.AR

    def test_duplicate_key(self, tmp_path):
        path = tmp_path / "preds.tsv"
        path.write_text("r1\t0\ten\t0.99\nr1\t0\tar\t0.97\n", encoding="utf-8")
        with pytest.raises(PredictionFileError, match="duplicate"):
            load_external_predictions(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "preds.tsv"
        path.write_text("", encoding="utf-8")
        assert load_external_predictions(path).by_line == {}

    def test_parse_error_names_line(self, tmp_path):
        path = tmp_path / "preds.tsv"
        path.write_text("r1\t0\ten\t0.99\nr2\tnope\ten\t0.5\n", encoding="utf-8")
        with pytest.raises(PredictionFileError, match=":2"):
            load_external_predictions(path)

    def test_confidence_range(self, tmp_path):
        path = tmp_path / "preds.tsv"
        path.write_text("r1\t0\ten\t1.5\n", encoding="utf-8")
        with pytest.raises(PredictionFileError, match="confidence"):
            load_external_predictions(path)

    def test_missing_key_is_error(self, tmp_path):
        path = tmp_path / "preds.tsv"
        path.write_text("r1\t0\ten\t0.99\n", encoding="utf-8")
        external = load_external_predictions(path)
        with pytest.raises(KeyError):
            external.predict_line("text", "r9", 0)
