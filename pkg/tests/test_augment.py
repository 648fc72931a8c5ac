import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptclr.augment import (AUGMENT_OPS, SynonymLexicon, apply_op,
                               build_view_pair_augmented, eda, perturb_example,
                               random_deletion, random_insertion, random_swap,
                               synonym_replacement)
from promptclr.corpus import Example
from promptclr.errors import ConfigurationError, ParseError


LEX = SynonymLexicon({"good": ["great", "fine"], "bad": ["poor"],
                      "movie": ["film", "picture"]})
ALL_SYNONYMS = {"great", "fine", "poor", "film", "picture"}


def rng(seed=0):
    return np.random.default_rng(seed)


def test_lexicon_validation():
    with pytest.raises(ConfigurationError):
        SynonymLexicon({"[MASK]": ["x"]})
    with pytest.raises(ConfigurationError):
        SynonymLexicon({"x": ["[SEP]"]})
    with pytest.raises(ConfigurationError):
        SynonymLexicon({"x": []})
    with pytest.raises(ConfigurationError):
        SynonymLexicon({"x": ["x"]})
    # a token may appear among its synonyms if it is not the only one
    lex = SynonymLexicon({"x": ["x", "y"]})
    assert lex.synonyms("x") == ("x", "y")
    assert "x" in lex and len(lex) == 1
    assert lex.synonyms("unknown") == ()


def test_lexicon_from_file(tmp_path):
    path = tmp_path / "lex.tsv"
    path.write_text("good\tgreat,fine\n\nbad\tpoor\n", encoding="utf-8")
    lex = SynonymLexicon.from_file(path)
    assert lex.synonyms("good") == ("great", "fine")
    assert len(lex) == 2
    for bad in ("no tab here\n", "tok\t\n", "a\tb\tc\n"):
        path.write_text(bad, encoding="utf-8")
        with pytest.raises(ParseError):
            SynonymLexicon.from_file(path)


def test_bundled_lexicon_loads():
    lex = SynonymLexicon.bundled()
    assert len(lex) > 50
    assert "good" in lex


def test_synonym_replacement_counts():
    tokens = ["good", "bad", "movie", "xxx", "yyy", "zzz", "qqq", "www", "eee", "rrr"]
    out = synonym_replacement(tokens, 0.1, LEX, rng(1))
    assert not out.noop
    assert len(out.tokens) == 10
    changed = [i for i, (a, b) in enumerate(zip(tokens, out.tokens)) if a != b]
    assert len(changed) == 1  # n = max(1, round(0.1 * 10))
    i = changed[0]
    assert out.tokens[i] in LEX.synonyms(tokens[i])


def test_synonym_replacement_limited_by_coverage():
    tokens = ["good", "xxx", "yyy", "zzz"]
    out = synonym_replacement(tokens, 1.0, LEX, rng(2))
    # only one covered token exists even though n would be 4
    assert out.tokens[1:] == tokens[1:]
    assert out.tokens[0] in LEX.synonyms("good")


def test_synonym_replacement_noop_without_coverage():
    tokens = ["xxx", "yyy"]
    out = synonym_replacement(tokens, 0.5, LEX, rng(0))
    assert out.noop and out.tokens == tokens


def test_synonym_replacement_skips_specials():
    tokens = ["[SEP]", "good"]
    for seed in range(10):
        out = synonym_replacement(tokens, 1.0, LEX, rng(seed))
        assert out.tokens[0] == "[SEP]"


def test_random_insertion_adds_exactly_n():
    tokens = ["good", "movie", "xxx", "yyy", "zzz"]
    for alpha, n in ((0.1, 1), (0.2, 1), (0.5, 2), (1.0, 5)):
        out = random_insertion(tokens, alpha, LEX, rng(3))
        assert len(out.tokens) == len(tokens) + n
        extras = list(out.tokens)
        for t in tokens:
            extras.remove(t)
        assert set(extras) <= ALL_SYNONYMS | set(LEX.entries)


def test_random_insertion_noop_without_coverage():
    out = random_insertion(["xxx"], 0.3, LEX, rng(0))
    assert out.noop and out.tokens == ["xxx"]


def test_random_swap_is_permutation():
    tokens = ["a", "b", "c", "d", "e", "f"]
    out = random_swap(tokens, 0.5, rng(4))
    assert not out.noop
    assert sorted(out.tokens) == sorted(tokens)


def test_random_swap_noop_with_one_eligible():
    out = random_swap(["only"], 0.5, rng(0))
    assert out.noop and out.tokens == ["only"]
    out = random_swap(["[SEP]", "only"], 0.5, rng(0))
    assert out.noop


def test_random_swap_never_moves_specials():
    tokens = ["a", "[SEP]", "b", "c"]
    for seed in range(20):
        out = random_swap(tokens, 1.0, rng(seed))
        assert out.tokens[1] == "[SEP]"


def test_random_deletion_edge_rates():
    tokens = ["a", "b", "c", "d"]
    kept = random_deletion(tokens, 0.0, rng(0))
    assert kept.tokens == tokens and not kept.noop
    nearly_all = random_deletion(tokens, 1.0, rng(0))
    assert len(nearly_all.tokens) == 1  # keep-one guard


def test_random_deletion_keeps_specials():
    tokens = ["[SEP]", "a", "b"]
    out = random_deletion(tokens, 1.0, rng(1))
    assert "[SEP]" in out.tokens
    assert len(out.tokens) == 2  # the special plus one survivor


def test_random_deletion_is_subsequence():
    tokens = [f"t{i}" for i in range(15)]
    out = random_deletion(tokens, 0.4, rng(5)).tokens
    it = iter(tokens)
    assert all(any(t == u for u in it) for t in out)


def test_random_deletion_mean_length():
    tokens = [f"t{i}" for i in range(20)]
    r = rng(6)
    lengths = [len(random_deletion(tokens, 0.2, r).tokens) for _ in range(4000)]
    sigma = (20 * 0.2 * 0.8 / 4000) ** 0.5
    assert abs(np.mean(lengths) - 16.0) < 4 * sigma


def test_alpha_validation():
    for op in (lambda a, s: synonym_replacement(["good"], a, LEX, s),
               lambda a, s: random_insertion(["good"], a, LEX, s),
               lambda a, s: random_swap(["a", "b"], a, s)):
        for alpha in (0.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                op(alpha, rng(0))
    for alpha in (-0.1, 1.5):
        with pytest.raises(ValueError):
            random_deletion(["a"], alpha, rng(0))


def test_empty_tokens_rejected():
    with pytest.raises(ValueError):
        synonym_replacement([], 0.1, LEX, rng(0))
    with pytest.raises(ValueError):
        random_insertion([], 0.1, LEX, rng(0))
    with pytest.raises(ValueError):
        random_deletion([], 0.1, rng(0))


def test_eda_matches_manual_composition():
    tokens = ["good", "movie", "xxx", "yyy", "zzz", "bad"]
    a, b = rng(7), rng(7)
    composed = eda(tokens, 0.2, LEX, a)
    manual = random_deletion(
        random_swap(
            random_insertion(
                synonym_replacement(tokens, 0.2, LEX, b).tokens, 0.2, LEX, b).tokens,
            0.2, b).tokens,
        0.2, b)
    assert composed.tokens == manual.tokens


def test_eda_noop_flag():
    out = eda(["zzz"], 0.2, LEX, rng(0))
    assert out.noop and out.tokens == ["zzz"]
    busy = eda(["good", "movie", "bad", "xxx"], 0.3, LEX, rng(1))
    assert not busy.noop


def test_apply_op_dispatch():
    tokens = ["good", "bad", "xxx"]
    for op in AUGMENT_OPS:
        out = apply_op(op, tokens, 0.3, LEX, rng(8))
        assert out.tokens
    with pytest.raises(ValueError):
        apply_op("unknown", tokens, 0.3, LEX, rng(0))
    for op in ("sr", "ri", "eda"):
        with pytest.raises(ConfigurationError):
            apply_op(op, tokens, 0.3, None, rng(0))
    # rs and rd run without a lexicon
    assert apply_op("rs", tokens, 0.3, None, rng(0)).tokens
    assert apply_op("rd", tokens, 0.3, None, rng(0)).tokens


def test_perturb_example():
    ex = Example(text1="good movie xxx", text2="bad yyy zzz", label=1, id=5)
    out = perturb_example(ex, "sr", 0.4, LEX, rng(9))
    assert out.label == 1 and out.id == 5
    assert out.text1 != ex.text1  # sr hits a covered token
    assert out.text2 != ex.text2
    single = perturb_example(Example(text1="good", label=0, id=0), "sr", 0.4, LEX, rng(0))
    assert single.text2 is None


def test_perturb_example_deterministic():
    ex = Example(text1="good movie bad xxx yyy", label=0, id=1)
    a = perturb_example(ex, "eda", 0.3, LEX, rng(11))
    b = perturb_example(ex, "eda", 0.3, LEX, rng(11))
    assert a == b


def test_build_view_pair_augmented_contract(tiny_inputs):
    task, examples, bank, verbalizer, vocab, lexicon = tiny_inputs
    ex = examples[0]
    pair = build_view_pair_augmented(ex, bank, examples, "ri", 0.2, lexicon,
                                     verbalizer, vocab, rng(12))
    assert pair.label == ex.label
    # view 2 keeps view 1's template and demonstrations, only the main input moves
    assert pair.view1.source_template_id == bank.primary.id
    assert pair.view2.source_template_id == bank.primary.id
    assert pair.view1.demo_example_ids == pair.view2.demo_example_ids
    assert pair.view1.token_ids != pair.view2.token_ids


tokens_strategy = st.lists(
    st.sampled_from(["good", "bad", "movie", "xxx", "yyy", "[SEP]"]),
    min_size=1, max_size=12)


@settings(max_examples=60, deadline=None)
@given(tokens=tokens_strategy, alpha=st.floats(0.01, 1.0), seed=st.integers(0, 500))
def test_property_sr_preserves_length(tokens, alpha, seed):
    out = synonym_replacement(tokens, alpha, LEX, rng(seed))
    assert len(out.tokens) == len(tokens)


@settings(max_examples=60, deadline=None)
@given(tokens=tokens_strategy, alpha=st.floats(0.01, 1.0), seed=st.integers(0, 500))
def test_property_rs_preserves_multiset(tokens, alpha, seed):
    out = random_swap(tokens, alpha, rng(seed))
    assert sorted(out.tokens) == sorted(tokens)


@settings(max_examples=60, deadline=None)
@given(tokens=tokens_strategy, alpha=st.floats(0.0, 1.0), seed=st.integers(0, 500))
def test_property_rd_output_is_nonempty_subsequence(tokens, alpha, seed):
    out = random_deletion(tokens, alpha, rng(seed)).tokens
    assert out
    pos = -1
    for t in out:
        pos = tokens.index(t, pos + 1)
