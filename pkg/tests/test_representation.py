import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cle.errors import (DimensionMismatch, EmptyInstance, MissingContext, OutOfRange,
                        SchemaMismatch, SpecInvalid)
from cle.representation import (CATEGORICAL, NUMERIC, BinaryRepr, CombinationSpec, ImageReconstructor,
                                SegmentMap, TabularReconstructor, TabularSchema, TextReconstructor,
                                build_image_repr, build_tabular_repr, build_text_repr, combo_label,
                                enumerate_combinations, extend_with_combinations, extension_matrix,
                                grid_segments, quartile_edges, reconstruct)


# -- text ---------------------------------------------------------------------

def test_not_bad_two_units():
    r = build_text_repr("not bad")
    assert r.d == 2
    assert [u.label for u in r.units] == ["not", "bad"]
    assert r.bits.tolist() == [1, 1]


def test_duplicates_collapse_to_one_unit():
    r = build_text_repr("the the the")
    assert r.d == 1
    assert len(r.units[0].payload) == 3


def test_sentence_distinct_tokens():
    # hand count: this, is, not, a, good, book, "."
    assert build_text_repr("This is not a good book .").d == 7


def test_casefold_merges_tokens():
    r = build_text_repr("Good good GOOD")
    assert r.d == 1 and r.units[0].label == "good"


def test_empty_text_raises():
    with pytest.raises(EmptyInstance):
        build_text_repr("   ")


def test_bits_are_read_only():
    r = build_text_repr("a b")
    with pytest.raises(ValueError):
        r.bits[0] = 0


def test_text_removal():
    x = build_text_repr("not bad")
    assert reconstruct("not bad", x.with_bits([1, 0])) == "not"


def test_text_removal_drops_every_occurrence():
    text = "good and good, but bad"
    x = build_text_repr(text)
    bits = np.ones(x.d, dtype=np.uint8)
    bits[[u.label for u in x.units].index("good")] = 0
    assert TextReconstructor(text, x)(bits) == "and, but bad"


@given(st.text(alphabet="ab c.,!\n", min_size=1, max_size=40))
def test_all_ones_reconstruction_is_identity(text):
    try:
        x = build_text_repr(text)
    except EmptyInstance:
        return
    assert TextReconstructor(text, x)(x.bits) == text


@given(st.lists(st.sampled_from("alpha beta gamma delta , .".split()), min_size=1, max_size=15),
       st.integers(0, 2**16))
def test_reconstruction_keeps_exactly_the_kept_tokens(words, seed):
    text = " ".join(words)
    x = build_text_repr(text)
    bits = np.random.default_rng(seed).integers(0, 2, x.d)
    out = TextReconstructor(text, x)(bits)
    kept = {u.label for u, b in zip(x.units, bits) if b}
    expected = [w for w in words if w in kept]
    assert out.split() == expected or (out.strip() == "" and not expected)


# -- tabular ------------------------------------------------------------------

def test_quartile_edges_uniform_1_to_100():
    # linear-interpolation quantiles on 1..100: 1 + 0.25*99 etc.
    assert np.allclose(quartile_edges(np.arange(1, 101)), [25.75, 50.5, 75.25])


def _schema():
    rows = [[float(v), "red" if v % 2 else "blue"] for v in range(1, 101)]
    return TabularSchema.from_training(rows, ["age", "colour"], [NUMERIC, CATEGORICAL]), rows


def test_tabular_row_identity_bits():
    rows = [[i, i * 2.0, i % 3, -i, i * 0.5] for i in range(20)]
    schema = TabularSchema.from_training(rows, list("abcde"), [NUMERIC] * 5)
    r = build_tabular_repr(rows[7], schema)
    assert r.d == 5 and r.bits.tolist() == [1] * 5


def test_edge_value_goes_to_upper_bin():
    schema, _ = _schema()
    col = schema.columns[0]
    assert col.edges[1] == 25.75
    assert col.bin_of(25.75) == 1
    assert col.bin_of(25.7499) == 0
    assert col.bin_of(100.0) == col.n_bins - 1  # last bin closed


def test_bin_label_shape():
    schema, _ = _schema()
    assert schema.columns[0].bin_label(0) == "age ∈ [1, 25.75)"
    assert schema.columns[0].bin_label(3) == "age ∈ [75.25, 100]"
    assert schema.columns[1].bin_label(0) == "colour=blue"


def test_out_of_range_warns_and_clamps():
    schema, _ = _schema()
    with pytest.warns(OutOfRange):
        assert schema.columns[0].bin_of(500) == 3


def test_unknown_category_and_wrong_width():
    schema, _ = _schema()
    with pytest.raises(SchemaMismatch):
        build_tabular_repr([3.0, "green"], schema)
    with pytest.raises(SchemaMismatch):
        build_tabular_repr([3.0], schema)


def test_schema_json_round_trip():
    schema, _ = _schema()
    assert TabularSchema.from_json(schema.to_json()) == schema


def test_tabular_reconstruction_moves_to_other_bin():
    schema, rows = _schema()
    row = [10.0, "blue"]
    x = build_tabular_repr(row, schema)
    rebuild = TabularReconstructor(row, x, schema, rows)
    rng = np.random.default_rng(0)
    for _ in range(50):
        out = rebuild(np.array([0, 1]), rng)
        assert schema.columns[0].bin_of(out[0]) != 0
        assert out[1] == "blue"
    assert rebuild(np.array([1, 1]), rng) == row


def test_tabular_reconstruction_needs_context():
    schema, _ = _schema()
    x = build_tabular_repr([10.0, "blue"], schema)
    with pytest.raises(MissingContext):
        reconstruct([10.0, "blue"], x.with_bits([0, 1]))
    single = TabularSchema.from_training([[1.0, "a"]] * 3, ["v", "c"], [NUMERIC, CATEGORICAL])
    xs = build_tabular_repr([1.0, "a"], single)
    with pytest.raises(MissingContext):
        TabularReconstructor([1.0, "a"], xs, single, [[1.0, "a"]] * 3)(np.array([0, 1]),
                                                                     np.random.default_rng(0))


# -- image --------------------------------------------------------------------

def test_grid_exact_division():
    img = np.zeros((100, 100, 3), dtype=np.uint8)
    r, seg = build_image_repr(img, (4, 4))
    assert r.d == 16
    assert all(np.sum(seg.ids == s) == 625 for s in range(16))


def test_grid_remainder_goes_to_last():
    seg = grid_segments(10, 10, 3, 3)
    assert seg.n_segments == 9
    assert np.sum(seg.ids[0] == 2) == 4      # last column segment is 4 wide
    assert np.sum(seg.ids[:, 0] == 6) == 4   # last row segment is 4 tall


def test_user_segment_map_pass_through():
    ids = np.arange(40).repeat(10).reshape(20, 20)
    r, seg = build_image_repr(np.zeros((20, 20), dtype=np.uint8), SegmentMap(ids))
    assert r.d == 40


def test_segment_map_validation():
    with pytest.raises(SpecInvalid):
        SegmentMap(np.array([[0, 2], [2, 0]]))
    with pytest.raises(DimensionMismatch):
        build_image_repr(np.zeros((4, 4)), SegmentMap(np.zeros((3, 4), dtype=int)))
    with pytest.raises(DimensionMismatch):
        grid_segments(2, 2, 3, 1)


def test_zeroed_segment_is_mean_filled():
    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, size=(8, 8, 3)).astype(np.uint8)
    x, seg = build_image_repr(img, (2, 2))
    out = ImageReconstructor(img, seg)(np.array([1, 0, 1, 1]))
    mask = seg.ids == 1
    for ch in range(3):
        mean = img[:, :, ch][mask].astype(float).mean()
        assert np.all(out[:, :, ch][mask] == math.floor(mean + 0.5))
    assert np.array_equal(out[~mask], img[~mask])
    assert np.array_equal(reconstruct(img, x, seg), img)


# -- combinations ---------------------------------------------------------------

def test_enumeration_order_and_length():
    spec = CombinationSpec((2,), (0, 1, 2))
    assert enumerate_combinations(spec) == [(0, 1), (0, 2), (1, 2)]
    assert spec.length == 3
    assert CombinationSpec((2,), tuple(range(10))).length == 45
    spec4 = CombinationSpec((2, 3), (0, 1, 2, 3))
    assert spec4.length == 10
    assert len(enumerate_combinations(spec4)) == 10


def test_extension_examples():
    x = build_text_repr("a b")
    ext = extend_with_combinations(x, CombinationSpec((2,), (0, 1)))
    assert ext.ext_bits.tolist() == [1]
    assert ext.bits.tolist() == [1, 1, 1]
    y = build_text_repr("a b c").with_bits([1, 0, 1])
    assert extend_with_combinations(y, CombinationSpec((2,), (0, 1, 2))).ext_bits.tolist() == [0, 1, 0]


def test_empty_focus_extends_nothing():
    x = build_text_repr("a b c")
    ext = extend_with_combinations(x, CombinationSpec((2,), ()))
    assert ext.ext_bits.size == 0 and ext.bits.tolist() == [1, 1, 1]


@pytest.mark.parametrize("spec", [CombinationSpec((2,), (0, 0)), CombinationSpec((2, 2), (0, 1)),
                                  CombinationSpec((3,), (0, 1)), CombinationSpec((1,), (0, 1)),
                                  CombinationSpec((2,), (0, 9))])
def test_invalid_specs(spec):
    with pytest.raises(SpecInvalid):
        spec.validate(4)


@settings(max_examples=200)
@given(st.integers(2, 8), st.data())
def test_extension_matches_brute_force_and(d, data):
    bits = data.draw(st.lists(st.integers(0, 1), min_size=d, max_size=d))
    focus = data.draw(st.lists(st.integers(0, d - 1), min_size=2, max_size=d, unique=True))
    spans = data.draw(st.lists(st.integers(2, len(focus)), min_size=1, max_size=3, unique=True))
    spec = CombinationSpec(tuple(spans), tuple(focus))
    units = build_text_repr(" ".join(f"w{i}" for i in range(d))).units
    ext = extend_with_combinations(BinaryRepr(bits, units), spec)
    oracle = [int(all(bits[i] for i in c)) for b in spans for c in itertools.combinations(focus, b)]
    assert ext.ext_bits.tolist() == oracle
    assert ext.ext_bits.size == sum(math.comb(len(focus), b) for b in spans)


def test_extension_matrix_rows():
    masks = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=np.uint8)
    E = extension_matrix(masks, [(0, 1), (1, 2), (0, 1, 2)])
    assert E.tolist() == [[1, 0, 0], [1, 1, 1], [0, 1, 0]]


def test_combo_label():
    units = build_text_repr("not bad").units
    assert combo_label(units, (0, 1)) == "not AND bad"
