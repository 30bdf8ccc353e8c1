import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ppqtraj.cqc import (CoordinateQuadtree, CqcCode, DeviationCoder, GridSpec,
                         build_coordinate_quadtree, pad_sc, partition_padding,
                         refine_reconstruction, root_side)


def true_center(w, h, col, row):
    """Cell centre relative to the root block centre; real cells hug the lower-left corner."""
    side = root_side(w, h)
    if side == 1:
        return Fraction(0), Fraction(0)
    return col + Fraction(1, 2) - Fraction(side, 2), row + Fraction(1, 2) - Fraction(side, 2)


def check_grid(w, h):
    tree = CoordinateQuadtree(w, h)
    codes = set()
    for col in range(w):
        for row in range(h):
            code = tree.encode(col, row)
            cx, cy = tree.decode2(code)
            assert (Fraction(cx, 2), Fraction(cy, 2)) == true_center(w, h, col, row), (w, h, col, row)
            assert tree.cell_of_code(code) == (col, row)
            codes.add(str(code))
    assert len(codes) == w * h
    # prefix-free: no code is a proper prefix of another
    ordered = sorted(codes)
    assert not any(b.startswith(a) and a != b for a, b in zip(ordered, ordered[1:]))


@pytest.mark.parametrize("sc,expected", [((-3, 2), (-4, 4)), ((1, -1), (1, -1)),
                                         ((2, -3), (4, -4)), ((-1, 2), (-2, 2)),
                                         ((2, 2), (2, 2))])
def test_pad_sc_examples(sc, expected):
    assert pad_sc(sc) == expected


def test_pad_sc_rejects_zero():
    with pytest.raises(ValueError):
        pad_sc((0, 3))


def test_trivial_trees():
    one = CoordinateQuadtree(1)
    assert one.depth == 0 and str(one.encode(0, 0)) == ""
    assert one.decode(CqcCode(0, 0)) == (0.0, 0.0)
    two = CoordinateQuadtree(2)
    assert {c.sc for c in two.root.children} == {(-1, 1), (1, 1), (-1, -1), (1, -1)}


def test_five_by_five_matches_worked_example():
    tree = CoordinateQuadtree(5)
    assert tree.side == 6
    assert [c.sc for c in tree.root.children] == [(-3, 2), (2, 2), (-3, -3), (2, -3)]
    n1 = CqcCode.from_string("001110")
    assert tree.decode(n1) == (-1.5, 0.5)
    assert tree.encode(1, 3) == n1
    # centre cell of the grid
    assert tree.decode(tree.encode(2, 2)) == (-0.5, -0.5)


def test_even_split_has_no_padding():
    tree = CoordinateQuadtree(4)
    kids = partition_padding(tree.root)
    assert all(k is not None and not k.padded and k.side == 2 for k in kids)


def test_three_by_one_round_trip():
    check_grid(3, 1)


def test_every_rectangle_up_to_sixteen():
    for w in range(1, 17):
        for h in range(1, 17):
            check_grid(w, h)


@given(st.integers(1, 64), st.integers(1, 64))
def test_random_rectangles_up_to_64(w, h):
    check_grid(w, h)


def test_decode_errors():
    tree = CoordinateQuadtree(5)
    with pytest.raises(ValueError):
        tree.decode(CqcCode.from_string("00"))  # internal node
    with pytest.raises(ValueError):
        tree.decode(CqcCode.from_string("0011100000"))  # past a leaf
    with pytest.raises(ValueError):
        CoordinateQuadtree(3).decode(CqcCode.from_string("0100"))  # padding slot
    with pytest.raises(ValueError):
        tree.encode(5, 0)


def test_code_serialization():
    for s in ["", "00", "1101", "001110", "0110110011"]:
        c = CqcCode.from_string(s)
        assert str(c) == s
        back, end = CqcCode.from_bytes(c.to_bytes())
        assert back == c and end == len(c.to_bytes())
    with pytest.raises(ValueError):
        CqcCode.from_string("012")
    with pytest.raises(ValueError):
        CqcCode(4, 1)


def test_grid_width_is_odd():
    assert GridSpec.from_params(1.0, 0.5).width == 5  # 4 bumped to 5
    assert GridSpec.from_params(1.0, 0.4).width == 5
    assert GridSpec.from_params(1.0, 2.0).width == 1
    assert build_coordinate_quadtree(1.0, 0.5).width == 5
    with pytest.raises(ValueError):
        GridSpec.from_params(0.0, 1.0)


@given(st.floats(0.0, 2 * math.pi), st.floats(0.0, 1.0), st.floats(0.05, 1.0),
       st.floats(-10, 10), st.floats(-10, 10))
def test_refinement_bound(angle, frac, g_ratio, x, y):
    eps1 = 0.01
    g_s = eps1 * g_ratio
    coder = DeviationCoder(eps1, g_s)
    actual = np.array([[x, y]])
    recon = actual + eps1 * frac * np.array([[math.cos(angle), math.sin(angle)]])
    bits, levels = coder.encode_many(actual, recon)
    refined = coder.refine_many(recon, bits, levels)[0]
    assert math.hypot(*(refined - actual[0])) <= math.sqrt(2) / 2 * g_s + 1e-12
    code = CqcCode(int(bits[0]), int(levels[0]))
    assert coder.refine_point(recon[0], code) == tuple(refined)
    assert refine_reconstruction(recon[0], coder.cqc1, code, g_s, coder.tree) == tuple(refined)


def test_deviation_outside_grid_is_rejected():
    coder = DeviationCoder(0.01, 0.005)
    with pytest.raises(ValueError):
        coder.encode_many([[0.0, 0.0]], [[0.05, 0.0]])
