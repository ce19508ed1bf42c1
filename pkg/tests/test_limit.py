import math

import numpy as np
import pytest

from hawkes_cascade.limit import (
    CascadeParams,
    NoOscillationError,
    Population,
    PositiveFeedbackError,
    LimitTrajectory,
    characteristic_roots,
    check_oscillation,
    compute_rho,
    find_equilibrium,
    hopf_scan,
    integrate,
    kappa_scan,
    measure_period,
    vector_field,
    with_nu,
)
from hawkes_cascade.rates import PAPER_F1, PAPER_F2, ConstantRate


def fig1_params(nu=1.0):
    return CascadeParams.make([
        Population(eta=3, nu=nu, c=-1, rate=PAPER_F1),
        Population(eta=2, nu=nu, c=1, rate=PAPER_F2),
    ])


def symmetric_params(nu, eta):
    return CascadeParams.make([
        Population(eta=eta, nu=nu, c=-1, rate=PAPER_F1),
        Population(eta=eta, nu=nu, c=1, rate=PAPER_F2),
    ])


class TestVectorField:
    def test_fig1_at_origin(self):
        out = vector_field(fig1_params(), np.zeros(7))
        # only the top coordinates feel the coupling at the origin
        assert out[3] == pytest.approx(-1.0)     # c1 * f2(0)
        assert out[6] == pytest.approx(10.0)     # c2 * f1(0)
        assert np.all(out[[0, 1, 2, 4, 5]] == 0.0)

    def test_doubling_nu_keeps_top_components_at_origin(self):
        doubled = CascadeParams.make([
            Population(eta=3, nu=2.0, c=-1, rate=PAPER_F1),
            Population(eta=2, nu=2.0, c=1, rate=PAPER_F2),
        ])
        assert vector_field(doubled, np.zeros(7))[3] == pytest.approx(-1.0)
        assert vector_field(doubled, np.zeros(7))[6] == pytest.approx(10.0)

    def test_zero_at_equilibrium(self):
        params = fig1_params()
        x_star = find_equilibrium(params)
        assert np.abs(vector_field(params, x_star)).max() < 1e-9

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            vector_field(fig1_params(), np.zeros(6))


class TestEquilibrium:
    def test_fig1_values(self):
        x_star = find_equilibrium(fig1_params())
        assert np.allclose(x_star[:4], -2.424, atol=1e-3)
        assert np.allclose(x_star[4:], 0.885, atol=1e-3)

    def test_constant_drive_linear_fixed_point(self):
        # f_{k+1} constant v: x[k,0] = c_k v at nu=1, eta=0
        params = CascadeParams.make([
            Population(eta=0, nu=1.0, c=-1, rate=ConstantRate(3.0)),
            Population(eta=0, nu=1.0, c=1, rate=ConstantRate(5.0)),
        ])
        x_star = find_equilibrium(params)
        assert x_star[0] == pytest.approx(-5.0, abs=1e-10)   # c1 * f2-const
        assert x_star[1] == pytest.approx(3.0, abs=1e-10)    # c2 * f1-const

    def test_positive_feedback_rejected(self):
        params = CascadeParams.make([
            Population(eta=0, nu=1.0, c=1, rate=PAPER_F1),
            Population(eta=0, nu=1.0, c=1, rate=PAPER_F2),
        ])
        with pytest.raises(PositiveFeedbackError):
            find_equilibrium(params)

    def test_geometric_block_structure(self):
        params = fig1_params(nu=0.8)
        x_star = find_equilibrium(params)
        for o, p in zip(params.offsets, params.populations):
            for l in range(p.eta + 1):
                assert x_star[o + l] == pytest.approx(x_star[o] * p.nu ** l, rel=1e-10)


class TestRho:
    def test_fig1_value(self):
        params = fig1_params()
        rho = compute_rho(params, find_equilibrium(params))
        assert rho == pytest.approx(-2.15, abs=0.01)

    def test_constant_rate_gives_zero(self):
        params = CascadeParams.make([
            Population(eta=0, nu=1.0, c=-1, rate=ConstantRate(2.0)),
            Population(eta=0, nu=1.0, c=1, rate=PAPER_F2),
        ])
        assert compute_rho(params, find_equilibrium(params)) == 0.0

    def test_sign_is_product_of_signs(self):
        params = fig1_params()
        rho = compute_rho(params, find_equilibrium(params))
        assert math.copysign(1.0, rho) == -1.0


class TestCharacteristicRoots:
    def test_kappa2_closed_form(self):
        params = CascadeParams.make([
            Population(eta=0, nu=1.3, c=-1, rate=PAPER_F1),
            Population(eta=0, nu=1.3, c=1, rate=PAPER_F2),
        ])
        rho = -4.0
        roots = characteristic_roots(params, rho)
        expected = {complex(-1.3, 2.0), complex(-1.3, -2.0)}
        for r in roots:
            assert min(abs(r - e) for e in expected) < 1e-10

    def test_spec_leading_root_estimate(self):
        # kappa=7, nu=1, rho=-2.15: max Re = -1 + 2.15^(1/7) cos(pi/7) = 0.0050808
        roots = characteristic_roots(fig1_params(), -2.15)
        expected = -1.0 + 2.15 ** (1.0 / 7.0) * math.cos(math.pi / 7.0)
        assert roots[0].real == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.0050808, abs=1e-6)

    def test_closed_form_matches_companion_matrix(self):
        # perturb one nu by an invisible amount to force the polynomial path
        rho = -2.1466
        closed = characteristic_roots(fig1_params(), rho)
        bumped = CascadeParams.make([
            Population(eta=3, nu=1.0, c=-1, rate=PAPER_F1),
            Population(eta=2, nu=1.0 + 1e-13, c=1, rate=PAPER_F2),
        ])
        general = characteristic_roots(bumped, rho)
        paired = sorted(closed, key=lambda z: (round(z.real, 9), round(z.imag, 9)))
        paired2 = sorted(general, key=lambda z: (round(z.real, 9), round(z.imag, 9)))
        assert max(abs(a - b) for a, b in zip(paired, paired2)) < 1e-9

    def test_conjugate_closure_and_trace(self):
        params = fig1_params()
        roots = characteristic_roots(params, -2.1466)
        assert sorted(np.round(roots.imag, 10)) == sorted(np.round(-roots.imag, 10))
        trace = sum(roots).real
        expected = -sum((p.eta + 1) * p.nu for p in params.populations)
        assert trace == pytest.approx(expected, abs=1e-8)
        assert abs(sum(roots).imag) < 1e-9

    def test_general_nu_residuals(self):
        params = CascadeParams.make([
            Population(eta=2, nu=0.7, c=-1, rate=PAPER_F1),
            Population(eta=3, nu=1.9, c=1, rate=PAPER_F2),
        ])
        roots = characteristic_roots(params, -1.5)
        val = np.ones_like(roots)
        for p in params.populations:
            val = val * (p.nu + roots) ** (p.eta + 1)
        assert np.abs(val - (-1.5)).max() < 1e-8


class TestCheckOscillation:
    def test_fig1_report(self):
        report = check_oscillation(fig1_params())
        assert report.rho == pytest.approx(-2.15, abs=0.01)
        assert report.unstable2_rhs == pytest.approx(2.08, abs=0.01)
        assert report.unstable2_holds is True
        assert report.oscillatory is True
        assert report.n_unstable == 2
        assert report.period == pytest.approx(12.98, abs=0.01)

    def test_large_nu_stable(self):
        report = check_oscillation(fig1_params(nu=5.0))
        assert report.oscillatory is False
        assert report.unstable2_holds is False

    def test_unstable2_implies_two_unstable_roots_along_scan(self):
        for nu in np.linspace(0.5, 1.6, 23):
            report = check_oscillation(symmetric_params(nu, 3))
            if report.unstable2_holds:
                assert report.n_unstable >= 2


class TestIntegrate:
    def test_constant_rate_relaxation(self):
        params = CascadeParams.make([
            Population(eta=0, nu=1.0, c=1, rate=ConstantRate(4.0)),
            Population(eta=0, nu=1.0, c=1, rate=ConstantRate(4.0)),
        ])
        traj = integrate(params, 30.0, dt=0.01)
        assert traj.states[-1] == pytest.approx([4.0, 4.0], abs=1e-6)

    def test_means_nondecreasing_and_bounded(self):
        params = fig1_params()
        traj = integrate(params, 60.0)
        assert np.all(np.diff(traj.means, axis=0) >= -1e-12)
        assert np.all(traj.means[0] == 0.0)
        sups = [p.rate.sup() for p in params.populations]
        for k in range(params.n):
            assert np.all(traj.means[:, k] <= sups[k] * traj.t + 1e-9)

    def test_rk4_step_halving(self):
        params = fig1_params()
        end_b = integrate(params, 20.0, dt=0.01).states[-1]
        end_c = integrate(params, 20.0, dt=0.005).states[-1]
        err_bc = np.abs(end_b - end_c).max()
        assert err_bc < 1e-6 * max(1.0, np.abs(end_b).max())
        # fourth-order decay, checked where truncation dominates the error
        # injected by the rates' C1-only crossover kink
        end_1 = integrate(params, 20.0, dt=0.16).states[-1]
        end_2 = integrate(params, 20.0, dt=0.08).states[-1]
        end_3 = integrate(params, 20.0, dt=0.04).states[-1]
        err_12 = np.abs(end_1 - end_2).max()
        err_23 = np.abs(end_2 - end_3).max()
        assert err_23 < err_12 / 8.0

    def test_oscillates_about_critical_point(self):
        traj = integrate(fig1_params(), 200.0)
        tail = traj.states[len(traj.t) // 2:, 0]
        assert tail.min() < -2.424 < tail.max()

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nonfinite_abort(self):
        params = fig1_params()
        with pytest.raises(FloatingPointError):
            integrate(params, 3000.0, dt=5.0)   # wildly unstable step


class TestMeasurePeriod:
    def test_pure_sinusoid(self):
        T = 7.3
        t = np.arange(0.0, 40 * T, T / 1000.0)
        states = np.sin(2 * np.pi * t / T)[:, None]
        traj = LimitTrajectory(t=t, states=states, means=np.zeros((len(t), 1)))
        assert measure_period(traj) == pytest.approx(T, rel=1e-3)

    def test_fig1_period_matches_linearization(self):
        traj = integrate(fig1_params(), 400.0)
        period = measure_period(traj)
        assert period == pytest.approx(12.98, rel=0.10)

    def test_fig1_period_regression_pin(self):
        # measured orbit period, pinned after the first verified run
        traj = integrate(fig1_params(), 400.0)
        assert measure_period(traj) == pytest.approx(13.1094, rel=5e-3)

    def test_damped_case_raises(self):
        traj = integrate(symmetric_params(0.8, 1), 200.0)   # kappa=4: damped
        with pytest.raises(NoOscillationError):
            measure_period(traj)


class TestHopfScan:
    def test_refined_crossings_are_roots(self):
        result = hopf_scan(symmetric_params(1.0, 3), 0.7, 1.3, 0.05)
        assert len(result.crossings) == 2
        for nu_star in result.crossings:
            report = check_oscillation(with_nu(symmetric_params(1.0, 3), nu_star))
            assert abs(report.roots[0].real) < 1e-4

    def test_regression_pinned_crossings(self):
        # where this cascade actually crosses; the published (0.7169, 1.3982)
        # pair is not consistent with the stated kernels (see the acceptance
        # suite's criterion-3 note)
        result = hopf_scan(symmetric_params(1.0, 3), 0.5, 1.6, 0.02)
        assert len(result.crossings) == 2
        assert result.crossings[0] == pytest.approx(0.80126, abs=5e-4)
        assert result.crossings[1] == pytest.approx(1.12069, abs=5e-4)

    def test_empty_above_upper_crossing(self):
        result = hopf_scan(symmetric_params(1.0, 3), 1.45, 1.6, 0.05)
        assert result.crossings == ()

    def test_requires_equal_nu(self):
        params = CascadeParams.make([
            Population(eta=3, nu=1.0, c=-1, rate=PAPER_F1),
            Population(eta=3, nu=2.0, c=1, rate=PAPER_F2),
        ])
        with pytest.raises(ValueError):
            hopf_scan(params, 0.5, 1.0, 0.1)


class TestKappaScan:
    def test_verdicts_match_root_counting(self):
        verdicts = kappa_scan(symmetric_params(0.8, 3), [4, 8, 12, 16, 20, 24])
        for v in verdicts:
            assert v.fulfilled == (v.n_unstable >= 2)

    def test_kappa4_damped(self):
        verdict = kappa_scan(symmetric_params(0.8, 3), [4])[0]
        assert not verdict.fulfilled
        assert verdict.max_re < 0

    def test_nu1_threshold_kappa(self):
        # at nu=1 the equilibrium (hence rho) is kappa-independent and the
        # threshold decreases: first fulfilled even kappa is 8
        verdicts = kappa_scan(symmetric_params(1.0, 3), [4, 6, 8, 10, 12])
        rho0 = verdicts[0].rho
        assert -8.0 < rho0 < -1.0
        for v in verdicts:
            assert v.rho == pytest.approx(rho0, rel=1e-9)
            assert v.fulfilled == (v.kappa >= 8)

    def test_equilibrium_moves_with_kappa_when_nu_not_one(self):
        verdicts = kappa_scan(symmetric_params(0.8, 3), [4, 8, 12])
        inputs = [v.x_inputs[0] for v in verdicts]
        assert len({round(v, 6) for v in inputs}) == 3

    def test_odd_kappa_rejected(self):
        with pytest.raises(ValueError):
            kappa_scan(symmetric_params(0.8, 3), [5])
