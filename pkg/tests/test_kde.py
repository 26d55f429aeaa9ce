import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad, trapezoid

from core.errors import InsufficientDataError
from core.kde import adaptive_kde


def test_density_integrates_to_one():
    rng = np.random.default_rng(0)
    kde = adaptive_kde(rng.normal(size=300))
    assert trapezoid(kde.density, kde.grid) == pytest.approx(1.0, abs=1e-9)
    total, _ = quad(lambda x: kde.pdf(x)[0], -20, 20, limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_cdf_is_monotone_and_matches_the_pdf():
    rng = np.random.default_rng(1)
    kde = adaptive_kde(rng.exponential(size=200))
    cdf = kde.cdf(kde.grid)
    assert np.all(np.diff(cdf) >= 0)
    area, _ = quad(lambda x: kde.pdf(x)[0], kde.grid[0], 1.0, limit=200)
    assert kde.cdf(1.0)[0] - kde.cdf(kde.grid[0])[0] == pytest.approx(area, abs=1e-6)


def test_bandwidths_shrink_in_dense_regions():
    rng = np.random.default_rng(2)
    samples = np.concatenate([rng.normal(0, 1, 500), [8.0, 9.0, 10.0]])
    kde = adaptive_kde(samples)
    assert kde.bandwidths[-1] > kde.bandwidths[np.argmin(np.abs(samples))]
    assert np.exp(np.mean(np.log(kde.bandwidths / kde.pilot_bandwidth))) == pytest.approx(1.0, rel=1e-9)


def test_close_to_the_normal_density_for_large_samples():
    rng = np.random.default_rng(3)
    kde = adaptive_kde(rng.normal(size=4000))
    grid = np.linspace(-2, 2, 41)
    assert np.max(np.abs(kde.pdf(grid) - stats.norm.pdf(grid))) < 0.05


def test_bimodal_sample_has_two_peaks():
    rng = np.random.default_rng(4)
    kde = adaptive_kde(np.concatenate([rng.normal(-4, 0.5, 400), rng.normal(4, 0.5, 400)]))
    peaks = kde.local_maxima()
    assert len(peaks) == 2
    assert peaks[0] == pytest.approx(-4, abs=0.3)
    assert peaks[1] == pytest.approx(4, abs=0.3)


def test_equal_samples_and_too_few_samples():
    kde = adaptive_kde([2.0, 2.0, 2.0])
    assert kde.cdf(1.9)[0] == pytest.approx(0.0, abs=1e-12)
    assert kde.cdf(2.1)[0] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(InsufficientDataError):
        adaptive_kde([1.0])
