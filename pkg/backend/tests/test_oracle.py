import numpy as np
import pytest
from scipy import integrate

from app.core.errors import ContourConfigError
from app.core.types import ContourConfig, KurtosisSpec
from app.services.null_law import centering_terms, mean_variance, spectral_params
from app.services.oracle import (
    DEFAULT_GRID,
    contour_mean,
    contour_variance,
    load_grid,
    quad_lsd_moment,
    run_oracle_grid,
    variance_terms,
)

CC = ContourConfig(r=1 + 2**-6, r2=1 + 2**-5, nodes=4096, extrapolation=3)


class TestQuadrature:
    def test_first_moment_example(self):
        sp = spectral_params(90, 80, 100)
        assert quad_lsd_moment(sp, "x") == pytest.approx(0.329412, abs=1e-6)
        assert quad_lsd_moment(sp, "x") == pytest.approx(centering_terms(sp)[0], abs=1e-8)

    def test_mass_of_continuous_part(self):
        sp = spectral_params(90, 80, 100)
        assert quad_lsd_moment(sp, "1") == pytest.approx(0.7, abs=1e-8)

    def test_linearity(self):
        sp = spectral_params(72, 100, 90)
        assert quad_lsd_moment(sp, "1") == pytest.approx(
            quad_lsd_moment(sp, "x") + quad_lsd_moment(sp, "1-x"), abs=1e-12
        )

    def test_matches_independent_quadrature(self):
        sp = spectral_params(100, 72, 90)
        weight = (sp.alpha_n + 1.0) / (2.0 * np.pi * sp.y1)
        x2, _ = integrate.quad(
            lambda x: weight * x / (1.0 - x),
            sp.x_l,
            sp.x_r,
            weight="alg",
            wvar=(0.5, 0.5),
            epsabs=1e-13,
            epsrel=1e-11,
            limit=200,
        )
        assert quad_lsd_moment(sp, lambda x: x * x) == pytest.approx(x2, abs=1e-8)


class TestContourMean:
    def test_gaussian_mean_vanishes(self):
        sp = spectral_params(90, 80, 100)
        assert contour_mean(sp, KurtosisSpec(), CC) == pytest.approx(0.0, abs=1e-8)

    def test_first_kurtosis_contribution(self):
        sp = spectral_params(90, 80, 100)
        ks = KurtosisSpec(-1.2, 0.0)
        assert contour_mean(sp, ks, CC) == pytest.approx(mean_variance(sp, ks).mu, abs=1e-6)

    @pytest.mark.parametrize("triple", [(36, 50, 45), (50, 36, 45), (100, 100, 90)])
    def test_both_kurtosis_terms(self, triple):
        sp = spectral_params(*triple)
        ks = KurtosisSpec(0.7, -1.2)
        assert contour_mean(sp, ks, CC) == pytest.approx(mean_variance(sp, ks).mu, abs=1e-6)

    def test_stable_under_contour_refinement(self):
        sp = spectral_params(100, 72, 90)
        ks = KurtosisSpec(0.7, -1.2)
        fine = ContourConfig(r=1 + 2**-7, r2=1 + 2**-6, nodes=8192, extrapolation=3)
        assert contour_mean(sp, ks, fine) == pytest.approx(contour_mean(sp, ks, CC), abs=1e-6)

    def test_default_grid_varies_kurtosis(self):
        pairs = {(d1, d2) for *_, d1, d2 in DEFAULT_GRID}
        assert (0.0, 0.0) in pairs
        assert any(d1 != 0.0 and d2 != 0.0 for d1, d2 in pairs)


class TestContourVariance:
    def test_gaussian_example(self):
        sp = spectral_params(90, 80, 100)
        assert contour_variance(sp, KurtosisSpec(), CC) == pytest.approx(0.120689, abs=1e-5)

    def test_kurtosis_term_is_linear_in_weight(self):
        sp = spectral_params(72, 100, 90)
        gaussian = contour_variance(sp, KurtosisSpec(), CC)
        once = contour_variance(sp, KurtosisSpec(-0.6, 0.2), CC) - gaussian
        twice = contour_variance(sp, KurtosisSpec(-1.2, 0.4), CC) - gaussian
        assert twice == pytest.approx(2.0 * once, abs=1e-9)
        assert contour_variance(sp, KurtosisSpec(-1.2, 0.4), CC) == pytest.approx(
            mean_variance(sp, KurtosisSpec(-1.2, 0.4)).sigma2, abs=1e-5
        )

    def test_terms_are_real(self):
        sp = spectral_params(50, 36, 45)
        double, single = variance_terms(sp, CC.r, CC.r2, CC.nodes)
        assert abs(double.imag) < 1e-10
        assert abs(single.imag) < 1e-10

    def test_radius_refinement_is_stable(self):
        sp = spectral_params(100, 72, 90)
        ks = KurtosisSpec(-1.2, 0.0)
        coarse = contour_variance(sp, ks, CC)
        fine = contour_variance(sp, ks, ContourConfig(r=1 + 2**-7, r2=1 + 2**-6, nodes=8192, extrapolation=3))
        assert fine == pytest.approx(coarse, abs=1e-6)

    def test_radius_beyond_pole_is_rejected(self):
        # y2 = 1.0101..., so the outer pole sits at modulus y2 / (h r) close to 1
        sp = spectral_params(200, 99, 100)
        with pytest.raises(ContourConfigError):
            contour_variance(sp, KurtosisSpec(), ContourConfig(r=1.2, r2=1.4, nodes=4096, extrapolation=1))

    def test_contour_config_validation(self):
        with pytest.raises(ValueError):
            ContourConfig(r=1.1, r2=1.05, nodes=4096)
        with pytest.raises(ValueError):
            ContourConfig(r=1.01, r2=1.02, nodes=1000)


class TestOracleGrid:
    def test_default_grid_spans_regimes(self):
        assert len(DEFAULT_GRID) >= 12
        regimes = {r.regime for r in run_oracle_grid(DEFAULT_GRID[::3], cc=CC)}
        assert regimes == {"i", "ii", "iii", "iv"}

    def test_closed_forms_agree(self):
        reports = run_oracle_grid(cc=CC)
        assert len(reports) == 5 * len(DEFAULT_GRID)
        failed = [(r.target, r.n1, r.n2, r.p, r.abs_error) for r in reports if not r.passed]
        assert failed == []

    def test_tiny_tolerance_reports_failures(self):
        reports = run_oracle_grid(DEFAULT_GRID[:2], tol=1e-300, cc=CC)
        assert any(not r.passed for r in reports)
        assert all(r.tolerance == 1e-300 for r in reports)

    def test_grid_file(self, tmp_path):
        path = tmp_path / "grid.csv"
        path.write_text("n1,n2,p\n100,100,90\n")
        rows = load_grid(path)
        assert rows == [(100, 100, 90, 0.0, 0.0)]
        reports = run_oracle_grid(rows, cc=CC)
        assert {r.regime for r in reports} == {"iv"}
        assert all(r.passed for r in reports)
