import numpy as np
import pytest

from liplearn.analysis import (
    constant_density,
    continuum_operator,
    discrete_consistency_check,
    inverse_cdf_cloud_1d,
    kde_error,
    linear_test_function,
    quadratic_test_function,
    save_consistency_csv,
    smoothed_dip_density,
    trigonometric_density,
    trigonometric_test_function,
)
from liplearn.geometry import Metric, PointCloud, SamplerKind, SamplerSpec, grid_cloud, make_rng, sample
from liplearn.graph import Kernel, KernelProfile, degrees, kernel_integral
from liplearn.oracle import pair_density_oracle


class TestSmoothTestFunctions:
    def test_derivative_self_checks(self):
        rng = make_rng(1)
        funcs = [
            linear_test_function([1.0, -2.0]),
            quadratic_test_function([0.5, 1.0], [[2.0, 0.3], [0.3, -1.0]]),
            trigonometric_test_function([0.7, 0.2]),
        ]
        for f in funcs:
            for _ in range(5):
                x = rng.uniform(-0.4, 0.4, size=2)
                assert f.check_derivatives(x)

    def test_trig_periodicity(self):
        f = trigonometric_test_function([0.5, 1.5])
        x = np.array([0.3, 0.8])
        assert f.value(x) == pytest.approx(f.value(x + 1.0), abs=1e-12)
        assert np.allclose(f.gradient(x), f.gradient(x + 1.0))

    def test_infinity_laplacian_quadratic(self):
        phi = quadratic_test_function([1.0, 0.0], [[2.0, 0.0], [0.0, 0.0]])
        assert phi.infinity_laplacian(np.zeros(2)) == pytest.approx(2.0)

    def test_infinity_laplacian_needs_gradient(self):
        phi = quadratic_test_function([0.0], [[2.0]])
        with pytest.raises(ValueError):
            phi.infinity_laplacian(np.zeros(1))


class TestContinuumOperator:
    def test_linear_alpha_zero(self):
        phi = linear_test_function([1.0, 2.0])
        assert continuum_operator(phi, constant_density(), 0.0, np.zeros(2)) == 0.0

    def test_quadratic_constant_density(self):
        phi = quadratic_test_function([1.0, 0.0], [[2.0, 0.0], [0.0, 0.0]])
        got = continuum_operator(phi, constant_density(), 1.0, np.zeros(2))
        assert got == pytest.approx(2.0)

    def test_linear_with_drift(self):
        p = np.array([1.0, -0.5])
        rho = trigonometric_density(2.0, 0.5)
        x = np.array([0.2, 0.6])
        alpha = 1.3
        phi = linear_test_function(p)
        expected = 2.0 * alpha * float(rho.log_gradient(x) @ p)
        assert continuum_operator(phi, rho, alpha, x) == pytest.approx(expected)

    def test_vanishing_gradient_raises(self):
        phi = linear_test_function([0.0, 0.0])
        with pytest.raises(ValueError):
            continuum_operator(phi, constant_density(), 0.0, np.zeros(2))


class TestDensities:
    def test_smoothed_dip_matches_fd(self):
        rho = smoothed_dip_density(0.5, 0.1, 0.25)
        for x1 in (-0.9, -0.21, -0.05, 0.0, 0.13, 0.29, 0.8):
            x = np.array([x1])
            step = 1e-6
            fd = (np.log(rho.value(np.array([x1 + step])))
                  - np.log(rho.value(np.array([x1 - step])))) / (2 * step)
            assert rho.log_gradient(x)[0] == pytest.approx(fd, abs=1e-4)

    def test_dip_values(self):
        rho = smoothed_dip_density(0.5, 0.1, 0.2)
        assert rho.value(np.array([0.0])) == pytest.approx(0.5)
        assert rho.value(np.array([0.5])) == pytest.approx(1.0)
        assert 0.5 < rho.value(np.array([0.2])) < 1.0

    def test_trig_density_positivity_guard(self):
        with pytest.raises(ValueError):
            trigonometric_density(0.5, 1.0)


class TestConsistency:
    def test_linear_phi_on_grid_vanishes(self):
        cloud = grid_cloud(60, 2, Metric.TORUS)
        kern = Kernel(KernelProfile.INDICATOR, 0.1)
        phi = linear_test_function([1.0, 0.4])
        rep = discrete_consistency_check(cloud, kern, 0.0, phi, constant_density(), 0)
        assert abs(rep.discrete) < 1e-10

    def test_quadratic_quantitative_value(self):
        # L phi / h^2 -> D_inf phi = 2 exactly for the indicator at alpha=0
        e1 = np.array([1.0, 0.0])
        phi = quadratic_test_function(e1, 2.0 * np.outer(e1, e1))
        cloud = grid_cloud(200, 2, Metric.TORUS)
        kern = Kernel(KernelProfile.INDICATOR, 0.1)
        rep = discrete_consistency_check(cloud, kern, 0.0, phi, constant_density(), 0)
        assert rep.continuum == pytest.approx(2.0)
        assert rep.error < 1e-9

    def test_quantitative_levels_nonincreasing_with_floor(self):
        e1 = np.array([1.0, 0.0])
        phi = quadratic_test_function(e1, 2.0 * np.outer(e1, e1))
        errors = []
        for h in (0.2, 0.1):
            cloud = grid_cloud(int(round(20 / h)), 2, Metric.TORUS)
            rep = discrete_consistency_check(cloud, Kernel(KernelProfile.INDICATOR, h), 0.0,
                                             phi, constant_density(), 0)
            errors.append(rep.error)
        floor = 1e-9
        assert errors[1] <= max(errors[0], floor)

    def test_sign_agreement_dip_density(self):
        rho = smoothed_dip_density(0.5, 0.1, 0.25)
        cloud = inverse_cdf_cloud_1d(rho, 2500)
        kern = Kernel(KernelProfile.SMOOTH_BUMP, 0.02)
        rng = make_rng(3)
        checked = 0
        while checked < 8:
            p, q = rng.uniform(-1.5, 1.5), rng.uniform(-4.0, 4.0)
            x = rng.uniform(-0.6, 0.6)
            i = int(np.argmin(np.abs(cloud.points[:, 0] - x)))
            if abs(p + q * cloud.points[i, 0]) < 0.5:
                continue
            phi = quadratic_test_function([p], [[q]])
            rep = discrete_consistency_check(cloud, kern, 1.0, phi, rho, i, margin=0.5)
            if rep.sign_agrees is None:
                continue
            checked += 1
            assert rep.sign_agrees

    def test_vanishing_gradient_rejected(self):
        cloud = grid_cloud(40, 1, Metric.TORUS)
        phi = quadratic_test_function([0.0], [[2.0]])
        with pytest.raises(ValueError):
            discrete_consistency_check(cloud, Kernel(KernelProfile.INDICATOR, 0.1), 0.0,
                                       phi, constant_density(), 0)

    def test_report_csv(self, tmp_path):
        cloud = grid_cloud(50, 2, Metric.TORUS)
        phi = quadratic_test_function([1.0, 0.0], np.diag([2.0, 0.0]))
        rep = discrete_consistency_check(cloud, Kernel(KernelProfile.INDICATOR, 0.2), 0.0,
                                         phi, constant_density(), 0)
        path = tmp_path / "report.csv"
        save_consistency_csv([rep], path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "h,discrete,continuum,error"
        assert len(lines) == 2


class TestKdeError:
    def test_deterministic_grid_beats_random(self):
        n = 40 ** 2
        kern = Kernel(KernelProfile.INDICATOR, 0.1)
        c = kernel_integral(kern, 2)
        grid = grid_cloud(40, 2, Metric.TORUS)
        r_grid, _ = kde_error(grid, kern, lambda x: c, n)
        rng = make_rng(4)
        rand = PointCloud(rng.random((n, 2)), Metric.TORUS)
        r_rand, _ = kde_error(rand, kern, lambda x: c, n)
        assert r_grid < r_rand

    def test_normalize_by_cphi_flag(self):
        kern = Kernel(KernelProfile.INDICATOR, 0.15)
        cloud = grid_cloud(30, 2, Metric.TORUS)
        c = kernel_integral(kern, 2)
        r1, _ = kde_error(cloud, kern, lambda x: c, cloud.n)
        r2, _ = kde_error(cloud, kern, lambda x: 1.0, cloud.n, normalize_by_cphi=True)
        assert r1 == pytest.approx(r2)

    def test_uniform_convergence_valid_regime(self):
        # growing n at fixed h shrinks the sup error (n h^{d+2} grows)
        kern = Kernel(KernelProfile.INDICATOR, 0.1)
        c = kernel_integral(kern, 2)
        rng = make_rng(5)
        r_small, _ = kde_error(PointCloud(rng.random((10000, 2)), Metric.TORUS), kern, lambda x: c, 10000)
        r_big, _ = kde_error(PointCloud(rng.random((40000, 2)), Metric.TORUS), kern, lambda x: c, 40000)
        assert r_big < r_small

    def test_pair_statistic_matches_convolution_oracle(self):
        kern = Kernel(KernelProfile.INDICATOR, 0.05)
        c = kernel_integral(kern, 1)
        cloud = sample(SamplerSpec(SamplerKind.PAIR_STATISTIC, seed=0, m=700), 0, 1)
        target = pair_density_oracle(kern, cloud.points[:, 0])
        d = degrees(cloud, kern, cloud.n)
        assert np.max(np.abs(d - target)) < 0.1 * c

    def test_fast_1d_indicator_path_matches_generic(self):
        rng = make_rng(6)
        xs = np.sort(rng.uniform(-1, 1, size=1500))[:, None]
        cloud = PointCloud(xs, Metric.EUCLIDEAN)
        kern = Kernel(KernelProfile.INDICATOR, 0.05)
        fast = degrees(cloud, kern, 1500)
        ref = degrees(cloud, kern, 1500, indices=np.arange(1500))
        assert np.allclose(fast, ref)


class TestInverseCdfCloud:
    def test_uniform_density_gives_lattice(self):
        cloud = inverse_cdf_cloud_1d(constant_density(), 10)
        expected = -1.0 + 2.0 * (np.arange(10) + 0.5) / 10
        assert np.allclose(cloud.points[:, 0], expected, atol=1e-6)

    def test_dip_thins_points(self):
        rho = smoothed_dip_density(0.3, 0.15, 0.2)
        cloud = inverse_cdf_cloud_1d(rho, 4000)
        xs = cloud.points[:, 0]
        inside = np.mean(np.abs(xs) < 0.15)
        outside = np.mean(np.abs(xs) > 0.5)
        assert inside < outside
