import pytest

from src.errors import DataError, ReplyParseError
from src.eval.coherence import DIMENSIONS, coherence_eval, parse_verdict, split_sentences

SUMMARY = " ".join([
    "Mara keeps the lighthouse on the northern island.",
    "She trims the wick every night.",
    "Suddenly a ship is wrecked on the rocks.",
    "Tobias washes ashore after the storm.",
    "Mara carries him to the cottage.",
    "The supply boat does not come that month.",
    "They ration the flour and fish from the cliffs.",
    "The lamp suddenly goes dark on the longest night.",
    "Suddenly it is spring.",
    "Tobias stays to learn the keeper's work.",
])


def test_sentences_split_on_terminal_punctuation():
    assert split_sentences("One. Two! Three? Four") == ["One.", "Two!", "Three?", "Four"]


def test_initials_and_abbreviations_do_not_split():
    text = "Dr. Hale met J. R. Mills at St. Ives. They talked."
    assert split_sentences(text) == ["Dr. Hale met J. R. Mills at St. Ives.", "They talked."]


def test_line_breaks_end_sentences():
    assert split_sentences("Amenities: pool\nService: friendly") == ["Amenities: pool", "Service: friendly"]


def test_empty_summary_is_rejected():
    with pytest.raises(DataError):
        split_sentences("   \n ")


def test_three_confusing_sentences_out_of_ten(rule_llm):
    report = coherence_eval(SUMMARY, rule_llm, workers=4)
    assert len(report.sentences) == 10
    assert [s.confusing for s in report.sentences].count(True) == 3
    assert report.confusion_ratio == pytest.approx(0.3)
    assert report.coherence_score == pytest.approx(0.7)
    assert report.sentences[2].dimensions == ("discontinuity",)
    assert [s.text for s in report.sentences] == split_sentences(SUMMARY)


def test_evaluator_calls_are_keyed_by_sentence(rule_llm):
    coherence_eval(SUMMARY, rule_llm, workers=3)
    assert sorted(r.turn for r in rule_llm.requests) == list(range(10))
    assert {r.template_id for r in rule_llm.requests} == {"coherence-eval"}


def test_report_serializes(sequential_llm):
    backend = sequential_llm(['{"confusing": false, "dimensions": []}'])
    report_dict = coherence_eval("One. Two.", backend).to_dict()
    assert report_dict["coherence_score"] == 1.0
    assert report_dict["sentences"][0] == {"text": "One.", "confusing": False, "dimensions": []}


def test_verdict_parsing():
    verdict = parse_verdict('```json\n{"confusing": "yes", "dimensions": ["Salience", "made-up", "salience"]}\n```', "s")
    assert verdict.confusing is True
    assert verdict.dimensions == ("salience",)
    with pytest.raises(ReplyParseError):
        parse_verdict('{"dimensions": []}', "s")
    with pytest.raises(ReplyParseError):
        parse_verdict('{"confusing": 3}', "s")


def test_unusable_verdict_is_asked_again(sequential_llm):
    backend = sequential_llm(["no idea", '{"confusing": true, "dimensions": ["language"]}'])
    report = coherence_eval("Only one sentence.", backend)
    assert report.coherence_score == 0.0
    assert len(backend.requests) == 2


def test_eight_dimensions():
    assert len(DIMENSIONS) == 8


def test_recovered_verdict_replays_from_its_cassette(sequential_llm, record_then_replay):
    recorder, replay = record_then_replay(sequential_llm(["no idea", '{"confusing": true, "dimensions": ["language"]}']))
    live = coherence_eval("Only one sentence.", recorder)
    assert coherence_eval("Only one sentence.", replay()).to_dict() == live.to_dict()
    assert live.coherence_score == 0.0
