import math

import numpy as np
import pytest
from scipy import integrate

from app.core.errors import ConfigurationError, DimensionError
from app.core.types import KurtosisSpec
from app.services.null_law import centering_terms, lsd_density, mean_variance, regime, spectral_params

REGIME_TRIPLES = {
    "i": (90, 80, 100),
    "ii": (72, 100, 90),
    "iii": (100, 72, 90),
    "iv": (100, 100, 90),
}


def test_spectral_params_example():
    sp = spectral_params(90, 80, 100)
    assert sp.y1 == pytest.approx(1.111111, abs=1e-6)
    assert sp.y2 == pytest.approx(1.25)
    assert sp.h2 == pytest.approx(0.972222, abs=1e-6)
    assert sp.x_l == pytest.approx(0.003509, abs=1e-5)
    assert sp.x_r == pytest.approx(0.986111, abs=1e-5)
    assert sp.warnings == ()
    assert regime(sp) == "i"


def test_spectral_params_rejects_p_at_total_size():
    with pytest.raises(DimensionError, match="n1 \\+ n2"):
        spectral_params(50, 50, 100)


def test_near_unit_ratio_warns():
    sp = spectral_params(100, 200, 101)
    assert any(w.startswith("y1=") for w in sp.warnings)


@pytest.mark.parametrize("label, triple", REGIME_TRIPLES.items())
def test_support_is_inside_unit_interval(label, triple):
    sp = spectral_params(*triple)
    assert 0.0 < sp.x_l < sp.x_r < 1.0
    assert regime(sp) == label


def test_centering_terms_example():
    ell1, ell2 = centering_terms(spectral_params(90, 80, 100))
    assert ell1 == pytest.approx(0.329412, abs=1e-6)
    assert ell2 == pytest.approx(0.370588, abs=1e-6)
    assert ell1 + ell2 == pytest.approx(0.7, abs=1e-12)


@pytest.mark.parametrize("label, triple", REGIME_TRIPLES.items())
def test_regime_sum_identity(label, triple):
    n1, n2, p = triple
    ell1, ell2 = centering_terms(spectral_params(n1, n2, p))
    expected = {"i": n1 + n2 - p, "ii": n1, "iii": n2, "iv": p}[label]
    assert p * (ell1 + ell2) == pytest.approx(expected, rel=1e-12)
    assert 0.0 < ell1 < 1.0 and 0.0 < ell2 < 1.0


@pytest.mark.parametrize("triple", REGIME_TRIPLES.values())
def test_swap_symmetry(triple):
    n1, n2, p = triple
    ell1, ell2 = centering_terms(spectral_params(n1, n2, p))
    swapped1, swapped2 = centering_terms(spectral_params(n2, n1, p))
    assert swapped1 == pytest.approx(ell2, rel=1e-12)
    assert swapped2 == pytest.approx(ell1, rel=1e-12)


def test_gaussian_variance_example():
    law = mean_variance(spectral_params(90, 80, 100), KurtosisSpec())
    assert law.mu == 0.0
    assert law.sigma2 == pytest.approx(0.120689, abs=1e-6)


def test_uniform_variance_example():
    law = mean_variance(spectral_params(100, 100, 90), KurtosisSpec(-1.2, -1.2))
    assert law.sigma2 == pytest.approx(0.0829125, abs=1e-6)
    assert law.mu == pytest.approx(0.0, abs=1e-15)


def test_mean_is_antisymmetric_in_kurtosis():
    sp = spectral_params(90, 80, 100)
    forward = mean_variance(sp, KurtosisSpec(-1.2, 0.5)).mu
    backward = mean_variance(sp, KurtosisSpec(0.5, -1.2)).mu
    assert forward == pytest.approx(-backward)
    assert forward > 0.0


def test_variance_is_linear_in_each_kurtosis():
    sp = spectral_params(72, 100, 90)
    step = 1e-3
    base = mean_variance(sp, KurtosisSpec(0.3, 0.1)).sigma2
    bumped = mean_variance(sp, KurtosisSpec(0.3 + step, 0.1)).sigma2
    s = sp.y1 + sp.y2
    slope = sp.y1 * sp.h2**2 * sp.y1**2 * sp.y2**2 / s**6
    assert (bumped - base) / step == pytest.approx(slope, rel=1e-6)


def test_kurtosis_floor():
    with pytest.raises(ConfigurationError):
        KurtosisSpec(-2.5, 0.0)
    mean_variance(spectral_params(90, 80, 100), KurtosisSpec(-2.0, -2.0))


class TestDensity:
    def test_vanishes_outside_support(self):
        sp = spectral_params(90, 80, 100)
        assert lsd_density(sp.x_l - 1e-6, sp) == 0.0
        assert lsd_density(sp.x_l + 1e-6, sp) > 0.0
        assert lsd_density(sp.x_r + 1e-6, sp) == 0.0
        assert lsd_density(sp.x_r - 1e-6, sp) > 0.0

    def test_vectorized(self):
        sp = spectral_params(100, 100, 90)
        x = np.linspace(0.0, 1.0, 11)
        dens = lsd_density(x, sp)
        assert dens.shape == (11,)
        assert np.all(dens >= 0.0)

    @pytest.mark.parametrize("triple", REGIME_TRIPLES.values())
    def test_continuous_mass(self, triple):
        sp = spectral_params(*triple)
        ell1, ell2 = centering_terms(sp)
        weight = (sp.alpha_n + 1.0) / (2.0 * math.pi * sp.y1)
        mass, _ = integrate.quad(
            lambda x: weight / (x * (1.0 - x)),
            sp.x_l,
            sp.x_r,
            weight="alg",
            wvar=(0.5, 0.5),
            epsabs=1e-13,
            epsrel=1e-11,
            limit=200,
        )
        assert mass == pytest.approx(ell1 + ell2, abs=1e-8)
