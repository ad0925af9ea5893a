import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from lorenz_ilc.embedding import (DegenerateExtent, GridSpec, LagNotMultipleOfDt, SignalTooShort,
                                  bin_points, embed, lag_index, out_of_grid_fraction, shared_grid)
from lorenz_ilc.plant import DEFAULT_PARAMS, PlantRunSpec, integrate

signals = arrays(float, st.integers(5, 200), elements=st.floats(-1e3, 1e3))


def test_embed_small_signal():
    pts = embed([1.0, 2.0, 3.0, 4.0], [0.01], 0.01).points
    assert pts.tolist() == [[1, 2], [2, 3], [3, 4]]


def test_embed_constant_signal():
    pts = embed(np.full(50, 3.5), [0.05], 0.01).points
    assert np.all(pts == 3.5)


def test_embed_higher_dimension_stacks_lags():
    x = np.arange(10.0)
    d = embed(x, [0.02, 0.05], 0.01)
    assert d.dim == 3 and len(d) == 5
    assert d.points[0].tolist() == [0, 2, 5]


def test_lorenz_lag_index_and_count():
    tr = integrate(PlantRunSpec(n_keep=5000, n_discard=1000))
    d = embed(tr.x, [0.17], 0.01)
    assert d.lag_indices == (17,)
    assert len(d) == 5000 - 17


@pytest.mark.parametrize("lag", [0.015, 0.0, -0.01, 0.1234])
def test_lag_must_be_positive_multiple(lag):
    with pytest.raises(LagNotMultipleOfDt):
        embed(np.arange(100.0), [lag], 0.01)


def test_lag_index_tolerates_float_representation():
    assert lag_index(0.17, 0.01) == 17
    assert lag_index(0.29, 0.01) == 29
    assert lag_index(0.3, 0.1) == 3


def test_signal_too_short():
    with pytest.raises(SignalTooShort):
        embed(np.arange(5.0), [0.05], 0.01)


@given(signals, st.integers(1, 4), st.floats(-100, 100))
def test_embedding_translation(x, n, c):
    if x.size <= n:
        return
    a = embed(x, [n * 0.01], 0.01).points
    b = embed(x + c, [n * 0.01], 0.01).points
    assert np.allclose(b, a + c, atol=1e-9)


def test_single_cell_histogram():
    grid = GridSpec.square(0, 10, 10)
    pdf = bin_points(np.array([[1.2, 3.3], [1.5, 3.9], [1.01, 3.0], [1.99, 3.5]]), grid)
    assert pdf.counts[1, 3] == 4 and pdf.total_mass == 4
    assert pdf.counts.sum() == pdf.counts[1, 3]


def test_interior_edge_goes_to_higher_bin():
    grid = GridSpec.square(0, 10, 10)
    pdf = bin_points(np.array([[3.0, 7.0]]), grid)
    assert pdf.counts[3, 7] == 1


def test_top_edge_is_closed():
    grid = GridSpec.square(0, 10, 10)
    pdf = bin_points(np.array([[10.0, 0.0]]), grid)
    assert pdf.counts[9, 0] == 1


def test_outside_points_are_clamped():
    grid = GridSpec.square(0, 10, 10)
    pdf = bin_points(np.array([[-5.0, 50.0], [11.0, 4.5]]), grid)
    assert pdf.counts[0, 9] == 1 and pdf.counts[9, 4] == 1


@given(arrays(float, st.tuples(st.integers(1, 300), st.just(2)), elements=st.floats(-50, 50)),
       st.integers(1, 25))
def test_binning_conserves_mass(pts, bins):
    pdf = bin_points(pts, GridSpec.square(-20, 20, bins))
    assert pdf.total_mass == len(pts)
    assert pdf.counts.shape == (bins, bins)


@given(arrays(float, st.tuples(st.integers(1, 100), st.just(2)), elements=st.floats(-1, 1)))
def test_binning_is_deterministic(pts):
    g = GridSpec.square(-1, 1, 7)
    assert np.array_equal(bin_points(pts, g).counts, bin_points(pts.copy(), g).counts)


def test_shared_grid_padding():
    ref = np.array([[0.0, 0.0], [10.0, 10.0], [4.0, 6.0]])
    g = shared_grid(ref, bins=20, padding=0.25)
    assert g.lower == (-2.5, -2.5) and g.upper == (12.5, 12.5) and g.bins == (20, 20)
    g0 = shared_grid(ref, bins=20, padding=0.0)
    assert g0.lower == (0.0, 0.0) and g0.upper == (10.0, 10.0)


def test_shared_grid_degenerate():
    with pytest.raises(DegenerateExtent):
        shared_grid(np.array([[1.0, 2.0], [1.0, 3.0]]))


def test_grid_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        GridSpec((1.0, 0.0), (0.0, 1.0), (4, 4))


def test_reference_histogram_mass_and_two_lobes():
    tr = integrate(PlantRunSpec())
    d = embed(tr.x, [0.17], 0.01)
    g = shared_grid(d)
    pdf = bin_points(d, g)
    assert pdf.total_mass == 100_000 - 17
    centers = g.centers(0)
    left = pdf.counts[centers < 0].sum()
    right = pdf.counts[centers > 0].sum()
    assert 0.3 < left / pdf.total_mass < 0.7 and 0.3 < right / pdf.total_mass < 0.7
    # each lobe circles a nearly empty hole at its wing fixed point
    c = np.sqrt(DEFAULT_PARAMS.beta * (DEFAULT_PARAMS.rho - 1))
    for centre in (-c, c):
        i = int(np.searchsorted(g.edges(0), centre)) - 1
        hole = pdf.counts[i - 1:i + 2, i - 1:i + 2]
        assert hole.min() < 0.1 * pdf.counts.max()
        assert hole.max() > 0.3 * pdf.counts.max()


def test_padding_covers_campaign_range():
    ref = integrate(PlantRunSpec())
    g = shared_grid(embed(ref.x, [0.17], 0.01))
    state = ref.final_state
    for rho in (15.0, 20.0, 28.0, 35.0, 42.0, 50.0):
        tr = integrate(PlantRunSpec(params=DEFAULT_PARAMS.with_values(rho=rho), initial=state))
        assert out_of_grid_fraction(embed(tr.x, [0.17], 0.01), g) < 0.01
        state = tr.final_state
