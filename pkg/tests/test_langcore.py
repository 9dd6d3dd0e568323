from __future__ import annotations

import hashlib
import random

import pytest

from langconfusion.langcore import (
    LATIN_SCRIPT_LANGUAGES,
    NON_LATIN_SCRIPT_LANGUAGES,
    LanguageCode,
    ScriptClass,
    UnknownLanguageError,
    count_units,
    latin_runs,
    script_of_char,
    script_profile,
    segment_lines,
)


class TestLanguageCode:
    def test_parse_round_trip(self):
        for code in ["ar", "de", "en", "es", "fr", "hi", "id", "it", "ja", "ko", "pt", "ru", "tr", "vi", "zh", "und"]:
            assert LanguageCode.parse(code).value == code

    def test_unknown_code_rejected(self):
        with pytest.raises(UnknownLanguageError):
            LanguageCode.parse("xx")
        with pytest.raises(UnknownLanguageError):
            LanguageCode.parse("EN")

    def test_script_partition(self):
        assert LATIN_SCRIPT_LANGUAGES == {
            LanguageCode.parse(c) for c in ["de", "en", "es", "fr", "id", "it", "pt", "tr", "vi"]
        }
        assert NON_LATIN_SCRIPT_LANGUAGES == {
            LanguageCode.parse(c) for c in ["ar", "hi", "ja", "ko", "ru", "zh"]
        }

    def test_profiles(self):
        assert script_profile(LanguageCode.JA).writing_system >= {ScriptClass.KANA, ScriptClass.HAN}
        assert script_profile(LanguageCode.DE).latin_script
        assert not script_profile(LanguageCode.KO).latin_script
        with pytest.raises(ValueError):
            script_profile(LanguageCode.UND)


class TestScriptOfChar:
    @pytest.mark.parametrize(
        "ch,script",
        [
            ("a", ScriptClass.LATIN),
            ("Z", ScriptClass.LATIN),
            ("é", ScriptClass.LATIN),
            ("狐", ScriptClass.HAN),
            ("あ", ScriptClass.KANA),
            ("カ", ScriptClass.KANA),
            ("한", ScriptClass.HANGUL),
            ("я", ScriptClass.CYRILLIC),
            ("ب", ScriptClass.ARABIC),
            ("ह", ScriptClass.DEVANAGARI),
            ("7", ScriptClass.COMMON),
            (" ", ScriptClass.COMMON),
            ("!", ScriptClass.COMMON),
            ("😀", ScriptClass.COMMON),
            ("。", ScriptClass.COMMON),
            ("α", ScriptClass.OTHER),
            ("ת", ScriptClass.OTHER),
        ],
    )
    def test_examples(self, ch, script):
        assert script_of_char(ch) is script

    def test_total_over_sample(self):
        # Stable over a broad scalar sample: same mapping on two passes.
        sample = [chr(cp) for cp in range(0, 0x3000, 7)] + [chr(cp) for cp in range(0x3000, 0x10000, 131)]
        first = "".join(script_of_char(c).value[0] for c in sample)
        second = "".join(script_of_char(c).value[0] for c in sample)
        assert first == second
        assert hashlib.sha256(first.encode()).hexdigest() == hashlib.sha256(second.encode()).hexdigest()

    def test_rejects_non_single_char(self):
        with pytest.raises(ValueError):
            script_of_char("ab")


def _oracle_lines(text: str) -> list[str]:
    # Character-by-character splitter: break on \n, fold a preceding \r into the break.
    lines, current = [], []
    i = 0
    while i < len(text):
        if text[i] == "\r" and i + 1 < len(text) and text[i + 1] == "\n":
            lines.append("".join(current))
            current = []
            i += 2
        elif text[i] == "\n":
            lines.append("".join(current))
            current = []
            i += 1
        else:
            current.append(text[i])
            i += 1
    lines.append("".join(current))
    return [l for l in lines if l.strip()]


class TestSegmentLines:
    def test_blank_line_dropped(self):
        spans = segment_lines("a b c\n\nd e f")
        assert [s.text for s in spans] == ["a b c", "d e f"]

    def test_single_line(self):
        spans = segment_lines("single line")
        assert len(spans) == 1
        assert spans[0].text == "single line"

    def test_crlf_one_break(self):
        spans = segment_lines("x\r\ny")
        assert [s.text for s in spans] == ["x", "y"]
        assert _oracle_lines("x\r\ny") == ["x", "y"]

    def test_empty(self):
        assert segment_lines("") == []
        assert segment_lines("\n\n  \n") == []

    def test_offsets_slice_parent(self):
        text = "first\r\n\r\n second \nthird"
        for span in segment_lines(text):
            assert text[span.start : span.end] == span.text

    def test_matches_oracle_on_random_text(self):
        rng = random.Random(7)
        alphabet = "ab \n\r\t字é"
        for _ in range(300):
            text = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 40)))
            assert [s.text for s in segment_lines(text)] == _oracle_lines(text)

    def test_spans_ordered_disjoint(self):
        rng = random.Random(11)
        for _ in range(100):
            text = "".join(rng.choice("xy \n\r") for _ in range(rng.randrange(0, 60)))
            spans = segment_lines(text)
            for left, right in zip(spans, spans[1:]):
                assert left.end <= right.start


class TestCountUnits:
    def test_english(self):
        assert count_units("how to clean chopsticks properly", LanguageCode.EN) == 5

    def test_chinese_han_chars(self):
        # 9 Han characters -> ceil(9/2) = 5 units
        assert count_units("如何清洗和保养筷子", LanguageCode.ZH) == 5

    def test_short(self):
        assert count_units("OK.", LanguageCode.EN) == 1

    def test_mixed_zh_takes_max(self):
        # Four whitespace tokens but only two Han characters.
        assert count_units("one two three 汉字", LanguageCode.ZH) == 4

    def test_at_least_one_for_nonblank(self):
        rng = random.Random(3)
        for _ in range(200):
            text = "".join(rng.choice("ab漢 ") for _ in range(rng.randrange(1, 30)))
            if text.strip():
                for lang in (LanguageCode.EN, LanguageCode.ZH, LanguageCode.JA):
                    assert count_units(text, lang) >= 1


class TestLatinRuns:
    def test_korean_with_english_word(self):
        runs = latin_runs("디지털 세상에서 우리 would 안전한")
        assert [r.text for r in runs] == ["would"]

    def test_japanese_acronym(self):
        runs = latin_runs("AI に関する記事")
        assert [r.text for r in runs] == ["AI"]

    def test_empty(self):
        assert latin_runs("") == []

    def test_url_and_email_excluded(self):
        runs = latin_runs("see https://example.com/path now")
        assert [r.text for r in runs] == ["see", "now"]
        runs = latin_runs("contact me@host.org please")
        assert [r.text for r in runs] == ["contact", "please"]

    def test_offsets_and_idempotence(self):
        text = "한국어 hello 중간 world좋아"
        runs = latin_runs(text)
        assert [r.text for r in runs] == ["hello", "world"]
        for run in runs:
            assert text[run.start : run.end] == run.text
            again = latin_runs(run.text)
            assert len(again) == 1 and again[0].text == run.text
