import numpy as np
import pytest

from parachute.catalog import DescriptorKind, ParachuteDescriptor
from parachute.errors import NotTranslatable, UnsupportedPattern
from parachute.fingerprint import BytePartition, fingerprint, round_robin_partition
from parachute.histogram import EquiDepthHistogram, HistogramKind, WeightedSample, build_equidepth
from parachute.predicates import (
    Between,
    Compare,
    CompareOp,
    EnumerableRegex,
    EnumeratedUDF,
    ILike,
    InList,
    IsNull,
    Like,
    Or,
    predicate_from_dict,
)
from parachute.translate import (
    AlwaysFalse,
    AlwaysTrue,
    BinBetween,
    BinCompare,
    BinIn,
    MaskSubset,
    ParachutePredicate,
    enumerate_regex,
    evaluate_translated,
    translate,
    translate_conjunction,
    translated_from_dict,
)


def numeric_descriptor(hist):
    return ParachuteDescriptor("cast_info", "title", "production_year", hist.pbw,
                               DescriptorKind.NUMERIC_HISTOGRAM, hist)


def lowcard_descriptor(hist):
    return ParachuteDescriptor("movie_info_idx", "info_type", "info", hist.pbw,
                               DescriptorKind.LOWCARD_STRING, hist)


def fingerprint_descriptor(partition):
    return ParachuteDescriptor("movie_keyword", "keyword", "keyword", partition.pbw,
                               DescriptorKind.STRING_FINGERPRINT, partition)


YEARS = numeric_descriptor(EquiDepthHistogram.from_boundaries([2000, 2004, 2020], pbw=2))


def test_less_than_becomes_bin_compare():
    tp = translate(Compare("production_year", CompareOp.LT, 2025), YEARS)
    assert tp == BinCompare(CompareOp.LE, 3)
    tp = translate(Compare("production_year", CompareOp.LT, 2003), YEARS)
    assert tp == BinCompare(CompareOp.LE, 1)
    assert evaluate_translated(tp, 0) and evaluate_translated(tp, 1)
    assert not evaluate_translated(tp, 2)


def test_less_than_skips_null_bin():
    desc = numeric_descriptor(EquiDepthHistogram.from_boundaries([2000, 2010], pbw=2, nullable=True))
    tp = translate(Compare("production_year", CompareOp.LT, 2005), desc)
    assert tp == BinBetween(1, 2)
    assert not evaluate_translated(tp, 0)


def test_numeric_variants():
    assert translate(Compare("production_year", CompareOp.GE, 2010), YEARS) == BinCompare(CompareOp.GE, 2)
    assert translate(Compare("production_year", CompareOp.EQ, 2004), YEARS) == BinCompare(CompareOp.EQ, 1)
    assert translate(Compare("production_year", CompareOp.NE, 2004), YEARS) == AlwaysTrue()
    assert translate(Between("production_year", 2005, 2010), YEARS) == BinBetween(2, 2)
    assert translate(Between("production_year", 2010, 2005), YEARS) == AlwaysFalse()
    assert translate(InList("production_year", (1990, 2030)), YEARS) == BinIn(frozenset({0, 3}))
    assert translate(IsNull("production_year"), YEARS) == AlwaysFalse()


def test_numeric_rejects_strings_and_like():
    with pytest.raises(NotTranslatable):
        translate(Compare("production_year", CompareOp.LT, "2000"), YEARS)
    with pytest.raises(NotTranslatable):
        translate(Like("production_year", "19%"), YEARS)


def test_udf_needs_per_value_bins():
    fine = numeric_descriptor(build_equidepth(WeightedSample([1, 2, 3], [1, 1, 1]), pbw=2))
    assert translate(EnumeratedUDF("production_year", "odd", (1, 3)), fine) == BinIn(frozenset({0, 2}))
    with pytest.raises(NotTranslatable):
        translate(EnumeratedUDF("production_year", "odd", (2001,)), YEARS)


def test_like_becomes_mask_subset():
    partition = BytePartition.from_groups({0: "u", 1: "tone"}, 4)
    tp = translate(Like("keyword", "%utn%"), fingerprint_descriptor(partition))
    assert isinstance(tp, MaskSubset)
    assert evaluate_translated(tp, fingerprint(partition, "nutella").mask)
    assert not evaluate_translated(tp, fingerprint(partition, "tone").mask)


def test_ilike_gate():
    with pytest.raises(NotTranslatable):
        translate(ILike("keyword", "%x%"), fingerprint_descriptor(round_robin_partition(3)))
    tp = translate(ILike("keyword", "%x%"), fingerprint_descriptor(round_robin_partition(8)))
    assert isinstance(tp, MaskSubset)


def test_fingerprint_equality_and_order():
    partition = round_robin_partition(8)
    desc = fingerprint_descriptor(partition)
    assert translate(Compare("keyword", CompareOp.EQ, "sequel"), desc) == \
        BinCompare(CompareOp.EQ, fingerprint(partition, "sequel").mask)
    with pytest.raises(NotTranslatable):
        translate(Compare("keyword", CompareOp.LT, "m"), desc)


def test_regex_enumeration():
    assert enumerate_regex("house(keeping|work)?") == {"house", "housekeeping", "housework"}
    assert enumerate_regex("^(a|b)(c|d)$") == {"ac", "ad", "bc", "bd"}
    assert enumerate_regex(r"a\.b") == {"a.b"}
    for pattern in ("a*", "a+", "[ab]", "a.b", "a{2}", "(a"):
        with pytest.raises(UnsupportedPattern):
            enumerate_regex(pattern)
    with pytest.raises(UnsupportedPattern):
        enumerate_regex("(a|b)(a|b)(a|b)", cap=4)


def test_regex_on_fingerprint():
    partition = round_robin_partition(8)
    desc = fingerprint_descriptor(partition)
    tp = translate(EnumerableRegex("keyword", "house(keeping|work)?"), desc)
    assert tp == BinIn(frozenset(fingerprint(partition, s).mask for s in ("house", "housekeeping", "housework")))
    with pytest.raises(NotTranslatable):
        translate(EnumerableRegex("keyword", "a*"), desc)


def test_lowcard_translation():
    hist = build_equidepth(WeightedSample(["rating", "votes", "top 250"], [6, 3, 1]), pbw=1,
                           kind=HistogramKind.LOWCARD)
    desc = lowcard_descriptor(hist)
    assert translate(Compare("info", CompareOp.EQ, "rating"), desc) == BinCompare(CompareOp.EQ, hist.bin("rating"))
    # unbounded regex falls back to enumerating the retained values plus the overflow bin
    tp = translate(EnumerableRegex("info", "vo.*"), desc)
    assert tp == BinIn(frozenset({hist.bin("votes"), hist.overflow_bin}))
    like_tp = translate(Like("info", "%top%"), desc)
    assert evaluate_translated(like_tp, hist.bin("top 250"))


def test_or_on_histogram_is_a_code_set():
    pred = Or("production_year", (Compare("production_year", CompareOp.LT, 1999),
                                  Compare("production_year", CompareOp.GT, 2021)))
    assert translate(pred, YEARS) == BinIn(frozenset({0, 3}))
    pred = Or("production_year", (Compare("production_year", CompareOp.NE, 5),
                                  Compare("production_year", CompareOp.EQ, 1)))
    assert translate(pred, YEARS) == AlwaysTrue()


def test_conjunction_drops_untranslatable():
    preds = [Compare("production_year", CompareOp.GT, 2005), Like("production_year", "2%"),
             Compare("production_year", CompareOp.NE, 2007)]
    assert translate_conjunction(preds, YEARS) == [BinCompare(CompareOp.GE, 2)]
    preds.append(Between("production_year", 2, 1))
    assert translate_conjunction(preds, YEARS) == [AlwaysFalse()]


def test_marker_always_passes():
    pp = ParachutePredicate("parachute_title_production_year", 0, "t", BinCompare(CompareOp.EQ, 0), marker=3)
    assert pp.evaluate_many(np.array([0, 1, 3], dtype=np.uint64)).tolist() == [True, False, True]
    assert ParachutePredicate.from_dict(pp.to_dict()) == pp


def test_translated_dict_roundtrip():
    for tp in (BinCompare(CompareOp.GE, 2), BinBetween(1, 3), BinIn(frozenset({4})), MaskSubset(5),
               AlwaysTrue(), AlwaysFalse()):
        assert translated_from_dict(tp.to_dict()) == tp


PREDICATES = [
    {"type": "compare", "op": "<", "value": 1990},
    {"type": "compare", "op": "<=", "value": 2003},
    {"type": "compare", "op": ">", "value": 2011},
    {"type": "compare", "op": ">=", "value": 1950},
    {"type": "compare", "op": "=", "value": 2001},
    {"type": "between", "low": 1995, "high": 2005},
    {"type": "in", "values": [1960, 2002, 2019]},
    {"type": "is_null"},
    {"type": "or", "arms": [{"type": "compare", "op": "<", "value": 1970},
                            {"type": "between", "low": 2010, "high": 2012}]},
]


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("pbw", [1, 2, 4])
def test_numeric_translation_never_rejects_a_match(seed, pbw):
    rng = np.random.default_rng(seed)
    population = rng.integers(1940, 2025, size=300).tolist()
    values, counts = np.unique(population, return_counts=True)
    hist = build_equidepth(WeightedSample(values.tolist(), counts.tolist(), contains_null=True), pbw=pbw)
    desc = numeric_descriptor(hist)
    candidates = population + rng.integers(1900, 2100, size=50).tolist() + [None]
    for data in PREDICATES:
        pred = predicate_from_dict(data, "production_year")
        tp = translate(pred, desc)
        for value in candidates:
            if pred.evaluate(value):
                assert evaluate_translated(tp, hist.bin(value)), (data, value)


@pytest.mark.parametrize("pbw", [1, 4, 8, 16])
def test_like_translation_never_rejects_a_match(pbw):
    partition = round_robin_partition(pbw)
    words = ["sequel", "prequel", "murder", "character-name-in-title", "based-on-novel", "seq", "équipe", ""]
    for pattern in ("%sequel%", "%que%", "m_rder", "%-%-%", "%é%", "%"):
        tp = translate(Like("keyword", pattern), fingerprint_descriptor(partition))
        for word in words:
            if Like("keyword", pattern).evaluate(word):
                assert evaluate_translated(tp, fingerprint(partition, word).mask), (pattern, word)


WORD_ALPHABET = "abcAB-é"
CASE_PAIRS = "abcdefghijklmnopqrstuvwxyz"


def random_word(rng, max_len=5):
    return "".join(WORD_ALPHABET[i] for i in rng.integers(0, len(WORD_ALPHABET), size=int(rng.integers(0, max_len + 1))))


def random_like_pattern(rng, words):
    base = words[int(rng.integers(len(words)))] if words and rng.random() < 0.7 else random_word(rng)
    start = int(rng.integers(0, len(base) + 1))
    body = [c if rng.random() > 0.2 else "_" for c in base[start:start + int(rng.integers(0, 4))]]
    if body and rng.random() < 0.2:
        body.insert(int(rng.integers(len(body))), "%")
    pattern = ("%" if rng.random() < 0.6 else "") + "".join(body) + ("%" if rng.random() < 0.6 else "")
    return pattern.swapcase() if rng.random() < 0.3 else pattern


def random_regex(rng, words, bounded=True):
    picked = [words[int(i)] for i in rng.integers(0, len(words), size=int(rng.integers(1, 4)))]
    pattern = "(" + "|".join(picked) + ")" + (random_word(rng, 2) if rng.random() < 0.5 else "")
    if rng.random() < 0.3:
        pattern += "a?"
    return pattern if bounded else pattern + ".*"


def random_partition(rng, pbw):
    if rng.random() < 0.5:
        return round_robin_partition(pbw)
    cluster_of = rng.permutation(np.arange(256) % pbw).tolist()
    if rng.random() < 0.5:
        for c in CASE_PAIRS:
            cluster_of[ord(c.upper())] = cluster_of[ord(c)]
    if len(set(cluster_of)) < pbw:
        return round_robin_partition(pbw)
    return BytePartition(tuple(cluster_of), pbw)


def with_nulls(rng, values, fraction=0.1):
    return [None if rng.random() < fraction else v for v in values]


def sample_of(values, seen):
    counts = {}
    for v in values[:seen]:
        if v is not None:
            counts[v] = counts.get(v, 0) + 1
    return WeightedSample.from_counts(counts or {values[0] if values[0] is not None else 0: 1},
                                      contains_null=any(v is None for v in values))


def numeric_trial(rng):
    column = "production_year"
    values = with_nulls(rng, rng.integers(0, 60, size=40).tolist())
    if values[0] is None:
        values[0] = 0
    hist = build_equidepth(sample_of(values, int(rng.integers(1, 41))), pbw=int(rng.integers(1, 11)))

    def leaf():
        choice = int(rng.integers(6))
        if choice == 0:
            op = list(CompareOp)[int(rng.integers(len(CompareOp)))]
            return Compare(column, op, int(rng.integers(-10, 70)))
        if choice == 1:
            low, high = sorted(rng.integers(-10, 70, size=2).tolist()) if rng.random() < 0.9 else (5, 1)
            return Between(column, int(low), int(high))
        if choice == 2:
            return InList(column, tuple(int(v) for v in rng.integers(-10, 70, size=int(rng.integers(1, 5)))))
        if choice == 3:
            return EnumeratedUDF(column, "picked", tuple(int(v) for v in rng.integers(0, 60, size=3)))
        if choice == 4:
            return IsNull(column)
        return Or(column, (leaf_simple(), leaf_simple()))

    def leaf_simple():
        return Compare(column, CompareOp.LE, int(rng.integers(0, 60))) if rng.random() < 0.5 else \
            Between(column, int(rng.integers(0, 30)), int(rng.integers(30, 60)))

    codes = [hist.bin(v) for v in values]
    return leaf(), numeric_descriptor(hist), values, codes


def lowcard_trial(rng):
    column = "info"
    vocabulary = sorted({random_word(rng) for _ in range(12)})
    weights = rng.zipf(1.5, size=len(vocabulary)).astype(float)
    values = with_nulls(rng, rng.choice(vocabulary, size=40, p=weights / weights.sum()).tolist())
    values += [random_word(rng) for _ in range(4)]
    if values[0] is None:
        values[0] = vocabulary[0]
    hist = build_equidepth(sample_of(values, int(rng.integers(1, 41))), pbw=int(rng.integers(1, 7)),
                           kind=HistogramKind.LOWCARD)
    words = vocabulary + [random_word(rng)]

    def leaf(depth=0):
        choice = int(rng.integers(9 if depth == 0 else 8))
        word = words[int(rng.integers(len(words)))]
        if choice == 0:
            return Compare(column, list(CompareOp)[int(rng.integers(len(CompareOp)))], word)
        if choice == 1:
            low, high = sorted([word, words[int(rng.integers(len(words)))]])
            return Between(column, low, high)
        if choice == 2:
            return InList(column, tuple(words[int(i)] for i in rng.integers(0, len(words), size=3)))
        if choice == 3:
            return Like(column, random_like_pattern(rng, words))
        if choice == 4:
            return ILike(column, random_like_pattern(rng, words))
        if choice == 5:
            return EnumerableRegex(column, random_regex(rng, words, bounded=rng.random() < 0.7))
        if choice == 6:
            return IsNull(column)
        if choice == 7:
            return EnumeratedUDF(column, "picked", (word,))
        return Or(column, (leaf(1), leaf(1)))

    codes = [hist.bin(v) for v in values]
    return leaf(), lowcard_descriptor(hist), values, codes


def fingerprint_trial(rng):
    column = "keyword"
    values = with_nulls(rng, [random_word(rng, 8) for _ in range(40)])
    partition = random_partition(rng, int(rng.choice([1, 2, 3, 4, 5, 7, 8, 12, 16, 32])))
    descriptor = fingerprint_descriptor(partition)
    descriptor.nullable_source = any(v is None for v in values)
    words = [v for v in values if v is not None] or ["a"]

    def leaf(depth=0):
        choice = int(rng.integers(8 if depth == 0 else 7))
        word = words[int(rng.integers(len(words)))] if rng.random() < 0.7 else random_word(rng)
        if choice == 0:
            return Like(column, random_like_pattern(rng, words))
        if choice == 1:
            return ILike(column, random_like_pattern(rng, words))
        if choice == 2:
            return Compare(column, CompareOp.EQ if rng.random() < 0.8 else CompareOp.NE, word)
        if choice == 3:
            return InList(column, (word, random_word(rng)))
        if choice == 4:
            return EnumerableRegex(column, random_regex(rng, words))
        if choice == 5:
            return IsNull(column)
        if choice == 6:
            return EnumeratedUDF(column, "picked", (word,))
        return Or(column, (leaf(1), leaf(1)))

    codes = [0 if v is None else fingerprint(partition, v).mask for v in values]
    return leaf(), descriptor, values, codes


@pytest.mark.parametrize("make_trial", [numeric_trial, lowcard_trial, fingerprint_trial])
@pytest.mark.parametrize("seed", range(4))
def test_randomized_translation_never_rejects_a_match(make_trial, seed):
    rng = np.random.default_rng([seed, 8675309])
    translated = 0
    trials = 850
    for _ in range(trials):
        pred, descriptor, values, codes = make_trial(rng)
        try:
            tp = translate(pred, descriptor)
        except NotTranslatable:
            continue
        translated += 1
        keep = tp.evaluate_many(np.asarray(codes, dtype=np.uint64))
        for value, code, kept in zip(values, codes, keep.tolist()):
            if pred.evaluate(value):
                assert kept, (pred.describe(), value, code, tp)
    assert translated > trials // 2
