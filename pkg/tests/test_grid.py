import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from thinfb.barriers import eval_U
from thinfb.grid import Grid, GridFunction


@pytest.mark.parametrize("n,h,shape", [(1, 1 / 4, (9, 5)), (2, 1 / 8, (17, 17, 9))])
def test_cube_shape(n, h, shape):
    g = Grid.cube(n, h)
    assert g.shape == shape
    assert g.upper == (1.0,) * n + (1.0,)
    assert g.coords().shape == shape + (n + 1,)


def test_cube_rejects_bad_extent():
    with pytest.raises(ValueError):
        Grid.cube(1, 0.3)
    with pytest.raises(ValueError):
        Grid(0.1, (0.0, 0.0, 0.0), (3, 3, 3, 3))


def test_outer_boundary_excludes_plane():
    g = Grid.cube(1, 1 / 4)
    b = g.outer_boundary()
    assert not b[1:-1, 0].any()
    assert b[0].all() and b[-1].all() and b[:, -1].all()


def test_index_of_clips():
    g = Grid.cube(2, 1 / 4)
    assert g.index_of([0, 0, 0]) == (4, 4, 0)
    assert g.index_of([5, -5, 0.26]) == (8, 0, 1)


def test_mask_consistency():
    g = Grid.cube(1, 1 / 4)
    U = lambda X: eval_U(X[..., 0], X[..., 1])
    gf = GridFunction.from_function(g, U)
    assert np.array_equal(gf.mask, g.plane_coords()[..., 0] > 0)
    vals = gf.values.copy()
    vals[0, 0] = 1.0
    with pytest.raises(ValueError):
        GridFunction(g, vals, gf.mask)


def test_full_is_even_reflection():
    g = Grid.cube(1, 1 / 4)
    gf = GridFunction.from_function(g, lambda X: eval_U(X[..., 0], X[..., 1]))
    F = gf.full()
    assert F.shape == (9, 9)
    assert np.array_equal(F, F[:, ::-1])


def test_interpolator_reflects_s():
    g = Grid.cube(1, 1 / 8)
    gf = GridFunction.from_function(g, lambda X: X[..., 0] + 2 * X[..., 1] + 3)
    f = gf.interpolator()
    assert f(np.array([0.1, -0.3])) == pytest.approx(3.7)
    assert np.isnan(f(np.array([2.0, 0.0])))


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([1, 2]), st.sampled_from([1 / 2, 1 / 4]), st.integers(0, 2**32 - 1))
def test_binary_roundtrip(n, h, seed):
    g = Grid.cube(n, h)
    vals = np.random.default_rng(seed).uniform(-1, 1, size=g.shape)
    gf = GridFunction.from_values(g, vals)
    back = GridFunction.from_bytes(gf.to_bytes())
    assert back.grid == g
    assert np.array_equal(back.values, gf.values)
    assert np.array_equal(back.mask, gf.mask)


def test_binary_magic(tmp_path):
    with pytest.raises(ValueError):
        GridFunction.from_bytes(b"NOTAGRID" + bytes(16))
    g = Grid.cube(1, 1 / 2)
    gf = GridFunction.from_values(g, np.ones(g.shape))
    gf.write_binary(tmp_path / "a.grid")
    assert (tmp_path / "a.grid").read_bytes()[:8] == b"THINFBG1"
    assert np.array_equal(GridFunction.read_binary(tmp_path / "a.grid").values, gf.values)


def test_csv_header():
    g = Grid.cube(2, 1 / 2)
    text = GridFunction.from_values(g, np.ones(g.shape)).to_csv()
    lines = text.splitlines()
    assert lines[0] == "x1,xn,s,value"
    assert len(lines) == 1 + g.size
