import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ppqtraj import Config, summarize
from ppqtraj.evaluation import oracle_strq, points_at, refined_points
from ppqtraj.index import cell_of
from ppqtraj.ingest import to_batches
from ppqtraj.query import (Decoder, StrqQuery, TpqQuery, candidate_cells, local_search_cells,
                           reconstruct_range, search_radius, strq_approx, strq_exact, tpq)


def brute_cells(x, y, g_s, g_c, whole_cell):
    """Cells within the radius, by exhaustive box-to-cell distances over a wide window."""
    r = search_radius(g_s)
    qx, qy = cell_of(x, y, g_c)
    if whole_cell:
        box = (qx * g_c, qy * g_c, (qx + 1) * g_c, (qy + 1) * g_c)
    else:
        box = (x, y, x, y)
    out = {(qx, qy)}
    span = int(r / g_c) + 3
    for i in range(qx - span, qx + span + 1):
        for j in range(qy - span, qy + span + 1):
            # closest points of the box and of cell (i, j) along each axis
            dx = max(0.0, i * g_c - box[2], box[0] - (i + 1) * g_c)
            dy = max(0.0, j * g_c - box[3], box[1] - (j + 1) * g_c)
            if math.hypot(dx, dy) <= r:
                out.add((i, j))
    return out


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 3.0), st.booleans())
def test_local_search_matches_oracle(x, y, g_s, whole):
    assert local_search_cells(x, y, g_s, 1.0, whole) == brute_cells(x, y, g_s, 1.0, whole)


def test_local_search_small_radius_at_cell_centre():
    assert local_search_cells(0.5, 0.5, 0.1, 1.0) == {(0, 0)}
    # sweeping the whole cell touches every neighbour, corners included
    assert len(local_search_cells(0.5, 0.5, 0.1, 1.0, whole_cell=True)) == 9


def test_query_validation():
    StrqQuery(0.0, 0.0, 1)
    with pytest.raises(ValueError):
        StrqQuery(float("nan"), 0.0, 1)
    with pytest.raises(ValueError):
        StrqQuery(0.0, 0.0, 0)
    with pytest.raises(ValueError):
        TpqQuery(0.0, 0.0, 1, -1)


@pytest.fixture(scope="module")
def walk_summary(small_walk):
    cfg = Config(eps_d=0.3)
    s, _ = summarize(to_batches(small_walk), cfg)
    return small_walk, s


def test_strq_exact_equals_refined_scan(walk_summary):
    trs, s = walk_summary
    dec = Decoder(s)
    refined = refined_points(s, dec)
    starts = {i: r.start for i, r in s.trajectories.items()}
    g_c = s.index.g_c
    rng = np.random.default_rng(0)
    for _ in range(150):
        tr = trs[int(rng.integers(len(trs)))]
        p = tr.points[int(rng.integers(len(tr)))]
        x, y = p.x + rng.normal(0, g_c), p.y + rng.normal(0, g_c)
        truth = oracle_strq(points_at(refined, starts, p.t), x, y, g_c)
        assert strq_exact(s.index, s, x, y, p.t, dec) == truth


def test_strq_exact_verify_raw_keeps_subset(walk_summary):
    trs, s = walk_summary
    t = 10
    raw = {tr.id: (tr.points[t - 1].x, tr.points[t - 1].y) for tr in trs}
    for tid, (x, y) in list(raw.items())[:20]:
        plain = strq_exact(s.index, s, x, y, t)
        checked = strq_exact(s.index, s, x, y, t, verify_raw=raw)
        assert set(checked) <= set(plain)
        qc = cell_of(x, y, s.index.g_c)
        assert checked == [i for i in plain if cell_of(*raw[i], s.index.g_c) == qc]


def test_approx_strq_is_the_index_cell(walk_summary):
    trs, s = walk_summary
    p = trs[0].points[5]
    got = strq_approx(s.index, p.x, p.y, p.t)
    assert trs[0].id in got
    assert got == oracle_strq({tr.id: (tr.points[5].x, tr.points[5].y) for tr in trs},
                              p.x, p.y, s.index.g_c)


def test_candidate_cells_cover_radius(walk_summary):
    _, s = walk_summary
    cells = candidate_cells(s, s.index.g_c, 0.0105, 0.0105)
    assert cell_of(0.0105, 0.0105, s.index.g_c) in cells
    assert len(cells) == 9  # g_s < g_c reaches only the ring of neighbours


def test_tpq_paths(walk_summary):
    trs, s = walk_summary
    dec = Decoder(s)
    p = trs[3].points[20]
    for l in (0, 3, 50):
        paths = tpq(s.index, s, p.x, p.y, p.t, l, dec)
        assert set(paths) == set(strq_exact(s.index, s, p.x, p.y, p.t, dec))
        for tid, P in paths.items():
            assert len(P) == min(l + 1, s.end(tid) - p.t + 1)
            assert np.array_equal(P, dec.full_replay(tid)[p.t - 1: p.t - 1 + len(P)])
    with pytest.raises(ValueError):
        tpq(s.index, s, p.x, p.y, p.t, -1)


def test_reconstruct_range_checks_bounds(walk_summary):
    _, s = walk_summary
    dec = Decoder(s)
    assert reconstruct_range(s, 0, 5, 3).shape == (3, 2)
    assert np.array_equal(dec.reconstruct_range(0, 1, 30), dec.full_replay(0))
    assert dec.point_at(0, 7) == tuple(dec.full_replay(0)[6])
    with pytest.raises(KeyError):
        dec.reconstruct_range(999, 1, 1)
    for t, l in ((0, 1), (1, 0), (30, 2)):
        with pytest.raises(ValueError):
            dec.reconstruct_range(0, t, l)


def test_decoder_without_cqc_returns_raw_reconstruction(small_smooth):
    cfg = Config(use_cqc=False)
    s, b = summarize(to_batches(small_smooth), cfg, keep_reconstruction=True)
    dec = Decoder(s)
    for tr in small_smooth[:5]:
        P = dec.full_replay(tr.id)
        assert np.array_equal(P, dec.full_replay(tr.id, refine=False))
        assert np.array_equal(P, np.array(b.reconstructed[tr.id]))
        assert np.hypot(*(P - tr.xy).T).max() <= cfg.eps1
