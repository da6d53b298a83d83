import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bmccsp.effects import (
    atet_draws,
    atet_posterior,
    credible_interval,
    eigenvalue_summary,
    loading_summary,
)
from bmccsp.panel import PanelData
from bmccsp.sampler import PosteriorDraws


def fake_draws(y_miss, eig=None, phi=None):
    y_miss = np.atleast_2d(np.asarray(y_miss, dtype=float))
    n = y_miss.shape[0]
    return PosteriorDraws(
        y_miss_draws=y_miss,
        beta_draws=np.zeros((n, 0)),
        tau_draws=np.ones(n),
        gamma_eig_draws=np.zeros((n, 2)) if eig is None else np.asarray(eig, dtype=float),
        log_post=np.zeros(n),
        phi_row_draws=phi,
    )


def panel_with_treated(values, J=3, T=4):
    """Treated cells are unit J-1 from period T-len(values) on, holding ``values``."""
    k = len(values)
    y = np.arange(J * T, dtype=float).reshape(J, T)
    mask = np.zeros((J, T), dtype=int)
    mask[J - 1, T - k:] = 1
    y[J - 1, T - k:] = values
    return PanelData(y, mask)


def test_interval_examples():
    assert credible_interval(np.arange(1, 101), 0.9) == pytest.approx((5.5, 95.5))
    assert credible_interval(np.full(10, 2.5), 0.7) == (2.5, 2.5)
    with pytest.raises(ValueError):
        credible_interval([1.0, 2.0], 1.0)
    with pytest.raises(ValueError):
        credible_interval([], 0.9)


def test_two_draw_example():
    data = panel_with_treated([3.0])
    s = atet_posterior(fake_draws([[0.0], [2.0]]), data, levels=(0.5,))
    assert s.atet_mean == pytest.approx(2.0)
    assert sorted(atet_draws(fake_draws([[0.0], [2.0]]), data)) == [1.0, 3.0]
    assert s.atet_intervals[0.5] == pytest.approx((1.0, 3.0))


def test_constant_effect():
    c, delta = 4.0, 1.5
    data = panel_with_treated([c + delta] * 3)
    s = atet_posterior(fake_draws(np.full((50, 3), c)), data)
    assert s.atet_mean == pytest.approx(delta)
    assert s.atet_sd == 0.0
    for row in s.per_period[-3:]:
        for lo, hi in row.bands.values():
            assert lo == hi == pytest.approx(c)


def test_no_treated_cells():
    data = PanelData(np.zeros((2, 3)), np.zeros((2, 3), dtype=int))
    with pytest.raises(ValueError, match="no treated"):
        atet_draws(fake_draws(np.zeros((4, 0))), data)


@settings(max_examples=50, deadline=None)
@given(
    draws=arrays(float, (20, 3), elements=st.floats(-50, 50)),
    shift=st.floats(-10, 10),
)
def test_shift_linearity(draws, shift):
    realized = np.array([1.0, 2.0, 3.0])
    a = atet_posterior(fake_draws(draws), panel_with_treated(realized)).atet_mean
    b = atet_posterior(fake_draws(draws), panel_with_treated(realized + shift)).atet_mean
    c = atet_posterior(fake_draws(draws + shift), panel_with_treated(realized)).atet_mean
    assert b - a == pytest.approx(shift, abs=1e-9)
    assert a - c == pytest.approx(shift, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(
    x=arrays(float, st.integers(2, 60), elements=st.floats(-1e3, 1e3)),
    l1=st.floats(0.01, 0.98),
    l2=st.floats(0.01, 0.98),
)
def test_interval_nesting(x, l1, l2):
    lo1, hi1 = credible_interval(x, min(l1, l2))
    lo2, hi2 = credible_interval(x, max(l1, l2))
    assert lo2 <= lo1 + 1e-9 and hi1 <= hi2 + 1e-9


def test_per_period_bands_and_order_of_averaging(rng):
    data = panel_with_treated([10.0, 11.0, 12.0], J=4, T=6)
    d = fake_draws(rng.normal(10, 1, size=(200, 3)))
    s = atet_posterior(d, data)
    assert len(s.per_period) == data.T
    for row in s.per_period:
        for lo, hi in row.bands.values():
            assert lo <= row.counterfactual_mean <= hi
        assert row.bands[0.7][0] >= row.bands[0.9][0] and row.bands[0.7][1] <= row.bands[0.9][1]
    means = [r.counterfactual_mean for r in s.per_period[-3:]]
    np.testing.assert_allclose(means, d.y_miss_draws.mean(axis=0))
    # untreated periods report the observed series with zero width
    first = s.per_period[0]
    assert first.realized == first.counterfactual_mean == data.outcomes[3, 0]
    assert first.n_treated == 0


def test_multi_unit_period_average(rng):
    y = rng.normal(size=(4, 5))
    mask = np.zeros((4, 5), dtype=int)
    mask[2:, 3:] = 1
    data = PanelData(y, mask)
    draws = fake_draws(rng.normal(size=(30, 4)))
    s = atet_posterior(draws, data)
    # treated cells in row-major order: (2,3), (2,4), (3,3), (3,4)
    want = draws.y_miss_draws[:, [0, 2]].mean(axis=1).mean()
    assert s.per_period[3].counterfactual_mean == pytest.approx(want)
    assert s.per_period[3].realized == pytest.approx(y[2:, 3].mean())


def test_quantiles_monotone(rng):
    data = panel_with_treated([0.0, 0.0])
    s = atet_posterior(fake_draws(rng.normal(size=(500, 2))), data)
    qs = [s.atet_quantiles[p] for p in sorted(s.atet_quantiles)]
    assert np.all(np.diff(qs) >= 0)


def test_eigenvalue_examples(rng):
    assert np.all(eigenvalue_summary(fake_draws(np.zeros((3, 1)), eig=np.zeros((3, 2)))) == 0)
    gamma = np.zeros((3, 4))
    gamma[0, 0], gamma[1, 1] = 1.0, 3.0
    sv = np.linalg.svd(gamma, compute_uv=False)
    np.testing.assert_allclose(eigenvalue_summary(fake_draws([[0.0]], eig=[sv])), [3, 1, 0])
    mats = rng.normal(size=(25, 3, 4))
    per = np.array([np.linalg.svd(m, compute_uv=False) for m in mats])
    shuffled = per[:, ::-1]  # the summary must sort each draw itself
    np.testing.assert_allclose(eigenvalue_summary(fake_draws(np.zeros((25, 1)), eig=shuffled)),
                               per.mean(axis=0))


def test_loading_summary(rng):
    with pytest.raises(ValueError, match="keep_phi"):
        loading_summary(fake_draws(np.zeros((2, 1))), 0)
    same = np.repeat(rng.normal(size=(1, 3, 2)), 10, axis=0)
    mean, lo, hi = loading_summary(fake_draws(np.zeros((10, 1)), phi=same), 1)
    np.testing.assert_array_equal(lo, hi)
    np.testing.assert_allclose(mean, same[0, 1])
    phi = rng.normal(size=(300, 3, 2))
    mean, lo, hi = loading_summary(fake_draws(np.zeros((300, 1)), phi=phi), 2, 0.9)
    assert np.all((lo <= mean) & (mean <= hi))
    for h in range(2):
        assert (lo[h], hi[h]) == pytest.approx(credible_interval(phi[:, 2, h], 0.9))
