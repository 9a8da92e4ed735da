import math
from collections import Counter

import pytest

from ledlab.errors import ConfigError
from ledlab.text import (EOM, SOM, UNK, Vocabulary, bleu, dialog_tokens, encode_dialog,
                         select_messages, tokenize)
from ledlab.worldgen import Message


def _dialog(rounds):
    msgs = []
    for i in range(rounds):
        msgs.append(Message("Locator", f"where are you {i}?"))
        msgs.append(Message("Observer", f"i see a red chair number {i}."))
    return msgs


def test_tokenize_detaches_punctuation_and_lowercases():
    assert tokenize("I'm in a Kitchen, near the SINK.") == ["i", "'m", "in", "a", "kitchen", ",",
                                                           "near", "the", "sink", "."]


def test_vocab_roundtrip(tmp_path):
    v = Vocabulary.build(["the red chair", "a blue lamp, the end"])
    path = tmp_path / "vocab.txt"
    v.save(path)
    w = Vocabulary.load(path)
    assert w.itos == v.itos
    ids = w.encode(tokenize("the blue chair"))
    assert w.decode(ids) == ["the", "blue", "chair"]
    assert w.encode(["zebra"]) == [UNK]


def test_encoded_length_counts_wrappers():
    d = _dialog(3)
    v = Vocabulary.build(m.text for m in d)
    seq = encode_dialog(d, v)
    assert len(seq) == sum(len(tokenize(m.text)) for m in d) + 2 * len(d)
    assert seq.ids[0] == SOM and seq.ids[-1] == EOM
    assert [s[0] for s in seq.spans] == [m.role for m in d]


def test_halves_partition_the_dialog():
    for rounds in (1, 2, 3, 4):
        d = _dialog(rounds)
        first = select_messages(d, "first_half")
        second = select_messages(d, "second_half")
        assert len(first) == 2 * math.ceil(rounds / 2)
        assert Counter(dialog_tokens(first)) + Counter(dialog_tokens(second)) == Counter(dialog_tokens(d))


def test_role_filters():
    d = _dialog(2)
    assert all(m.role == "Observer" for m in select_messages(d, "observer_only"))
    assert all(m.role == "Locator" for m in select_messages(d, "locator_only"))


def test_shuffled_keeps_rounds_intact_and_is_seeded():
    d = _dialog(4)
    a = select_messages(d, "shuffled", seed=3)
    assert a == select_messages(d, "shuffled", seed=3)
    assert [m.role for m in a] == ["Locator", "Observer"] * 4
    assert Counter(m.text for m in a) == Counter(m.text for m in d)


def test_shuffled_single_round_is_identity():
    d = _dialog(1)
    v = Vocabulary.build(m.text for m in d)
    assert encode_dialog(d, v, "shuffled", seed=9).ids == encode_dialog(d, v).ids


def test_empty_selection_falls_back_to_marker_pair():
    d = [Message("Locator", "hello?")]
    seq = encode_dialog(d, Vocabulary(), "observer_only")
    assert seq.ids == [SOM, EOM]


def test_unknown_variant():
    with pytest.raises(ConfigError):
        select_messages(_dialog(1), "middle_third")


def test_bleu_identity_and_empty():
    ref = "the red chair is by the door".split()
    assert bleu(ref, ref) == pytest.approx(1.0)
    assert bleu([], ref) == 0.0


def test_bleu_hand_computed_brevity_case():
    # every n-gram of the candidate matches; only the brevity penalty applies:
    # p1 = 3/3, p2 = (2+1)/(2+1), p3 = (1+1)/(1+1), p4 = (0+1)/(0+1), BP = exp(1 - 4/3)
    got = bleu(["the", "cat", "sat"], ["the", "cat", "sat", "down"])
    assert got == pytest.approx(math.exp(1 - 4 / 3), abs=1e-12)
    assert got == pytest.approx(0.716531, abs=1e-6)


def test_bleu_partial_unigram_match():
    # p1 = 2/4, p2 = (1+1)/(3+1), p3 = 1/3, p4 = 1/2, no brevity penalty
    got = bleu("a b x y".split(), "a b c d".split())
    expect = math.exp((math.log(0.5) + math.log(0.5) + math.log(1 / 3) + math.log(0.5)) / 4)
    assert got == pytest.approx(expect, abs=1e-12)
