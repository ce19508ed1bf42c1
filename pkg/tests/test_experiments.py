import json
import math

import numpy as np
import pytest

from hawkes_cascade.engine import PopulationSizes
from hawkes_cascade.experiments import (
    ExperimentReport,
    chaos_rate_experiment,
    classify_amplitude,
    clt_experiment,
    extract_orbit,
    phase_transition_sweep,
    tube_occupancy,
    weak_error_experiment,
)
from hawkes_cascade.limit import CascadeParams, Population
from hawkes_cascade.rates import PAPER_F1, PAPER_F2, ConstantRate


def fig1_params():
    return CascadeParams.make([
        Population(eta=3, nu=1.0, c=-1, rate=PAPER_F1),
        Population(eta=2, nu=1.0, c=1, rate=PAPER_F2),
    ])


def symmetric_params(nu, eta):
    return CascadeParams.make([
        Population(eta=eta, nu=nu, c=-1, rate=PAPER_F1),
        Population(eta=eta, nu=nu, c=1, rate=PAPER_F2),
    ])


BASE = PopulationSizes.make([10, 10])


class TestChaosRate:
    def test_needs_four_points(self):
        with pytest.raises(ValueError, match="4 grid points"):
            chaos_rate_experiment(fig1_params(), BASE, [20], 10.0, 2, 1)

    def test_needs_decade_span(self):
        with pytest.raises(ValueError, match="decade"):
            chaos_rate_experiment(fig1_params(), BASE, [20, 30, 40, 50], 10.0, 2, 1)

    def test_small_run_slope_and_determinism(self):
        report = chaos_rate_experiment(fig1_params(), BASE, [20, 40, 80, 200],
                                       horizon=15.0, replicates=8, master_seed=3)
        assert report.extras["fit"] == "ok"
        assert -1.0 < report.extras["slope"] < 0.0
        again = chaos_rate_experiment(fig1_params(), BASE, [20, 40, 80, 200],
                                      horizon=15.0, replicates=8, master_seed=3)
        assert report.cells == again.cells
        assert report.extras["slope"] == again.extras["slope"]

    def test_degenerate_fit_reported_not_raised(self):
        # constant rates couple finite and limit systems perfectly: no discord
        params = CascadeParams.make([
            Population(eta=0, nu=1.0, c=1, rate=ConstantRate(1.0)),
            Population(eta=0, nu=1.0, c=-1, rate=ConstantRate(1.0)),
        ])
        report = chaos_rate_experiment(params, BASE, [20, 40, 80, 200],
                                       horizon=5.0, replicates=2, master_seed=1)
        assert report.extras["fit"] == "degenerate"
        assert math.isnan(report.extras["slope"])

    def test_every_cell_carries_replicates_and_se(self):
        report = chaos_rate_experiment(fig1_params(), BASE, [20, 40, 80, 200],
                                       horizon=10.0, replicates=4, master_seed=9)
        for cell in report.cells:
            assert cell["replicates"] == 4
            assert "se_delta" in cell

    def test_longer_horizon_raises_discrepancy_on_same_seeds(self):
        # replicate seeds do not depend on the horizon, so the coupling
        # discrepancy (and hence the fitted intercept) grows with it
        short = chaos_rate_experiment(fig1_params(), BASE, [20, 40, 80, 200],
                                      horizon=8.0, replicates=6, master_seed=21)
        longer = chaos_rate_experiment(fig1_params(), BASE, [20, 40, 80, 200],
                                       horizon=16.0, replicates=6, master_seed=21)
        for c_short, c_long in zip(short.cells, longer.cells):
            assert c_long["mean_delta"] >= c_short["mean_delta"]
        assert longer.extras["intercept"] > short.extras["intercept"]


class TestClt:
    def test_moments_and_metadata(self):
        report = clt_experiment(fig1_params(), PopulationSizes.make([100, 100]),
                                t=20.0, replicates=60, master_seed=5)
        assert report.extras["criticality_class"] == "supercritical"
        assert report.extras["alpha0"] is not None
        for cell in report.cells:
            assert abs(cell["mean"]) < 0.5
            assert 0.5 < cell["variance"] < 1.6
            assert cell["replicates"] == 60
        assert abs(report.extras["cross_correlation"]) < 0.5

    def test_first_order_ratio_reported(self):
        report = clt_experiment(fig1_params(), PopulationSizes.make([100, 100]),
                                t=20.0, replicates=30, master_seed=6)
        for cell in report.cells:
            assert cell["ratio_first_order"] >= 0.0

    def test_small_t_rejected(self):
        with pytest.raises(ValueError, match="too small"):
            clt_experiment(fig1_params(), PopulationSizes.make([50, 50]),
                           t=0.5, replicates=10, master_seed=1)

    def test_poisson_case_normality(self):
        # constant rate: the standardized count is a standardized Poisson
        params = CascadeParams.make([
            Population(eta=1, nu=1.0, c=1, rate=ConstantRate(4.0)),
            Population(eta=0, nu=1.0, c=-1, rate=ConstantRate(4.0)),
        ])
        report = clt_experiment(params, PopulationSizes.make([10, 10]),
                                t=30.0, replicates=120, master_seed=8)
        for cell in report.cells:
            assert cell["m_t"] == pytest.approx(120.0, rel=1e-9)
            assert cell["normality_ok_1pct"]


class TestWeakError:
    def test_structure_and_trivial_cases(self):
        report = weak_error_experiment(fig1_params(), BASE, [20, 100], t=1.0,
                                       replicates=40, master_seed=4)
        names = {c["phi"] for c in report.cells}
        assert {"tanh_x1_0", "tanh_x2_0", "tanh_mean_inputs"} <= names
        for cell in report.cells:
            assert cell["abs_gap"] >= 0.0
            assert cell["ci95_half_width"] > 0.0
        assert set(report.extras["trend"].values()) <= {"decreasing", "inconclusive"}

    def test_constant_phi_zero_gap(self):
        report = weak_error_experiment(
            fig1_params(), BASE, [20, 50], t=1.0, replicates=12, master_seed=4,
            test_functions=[("const", lambda x: np.ones(x.shape[:-1]))])
        for cell in report.cells:
            assert cell["gap"] == 0.0

    def test_zero_horizon_zero_gap(self):
        # t -> 0: both processes sit at the identical all-zero start
        report = weak_error_experiment(fig1_params(), BASE, [20, 50], t=1e-3,
                                       replicates=12, master_seed=4)
        for cell in report.cells:
            assert abs(cell["gap"]) < 1e-6


class TestTubeOccupancy:
    def test_fig1_occupancy(self):
        report = tube_occupancy(fig1_params(), PopulationSizes.make([200, 200]),
                                horizon=60.0, epsilon=None, seed=13)
        cell = report.cells[0]
        assert cell["epsilon"] == pytest.approx(0.1 * cell["orbit_diameter"], rel=1e-12)
        assert 0.0 <= cell["occupancy"] <= 1.0
        assert cell["longest_in_tube_time"] >= 0.0

    def test_fig1_occupancy_at_reference_scale(self):
        # N=2000, eps = 10% of the orbit diameter: majority in-tube occupancy;
        # the exact value is a pinned regression number for this seed
        report = tube_occupancy(fig1_params(), PopulationSizes.make([1000, 1000]),
                                horizon=100.0, epsilon=None, seed=424242)
        cell = report.cells[0]
        assert cell["occupancy"] > 0.5
        assert cell["occupancy"] == pytest.approx(0.5299, abs=0.005)

    def test_occupancy_monotone_in_epsilon(self):
        params = fig1_params()
        sizes = PopulationSizes.make([200, 200])
        orbit = extract_orbit(params)
        occ = []
        for eps_frac in (0.05, 0.15, 0.5):
            rep = tube_occupancy(params, sizes, 40.0,
                                 eps_frac * orbit.diameter, seed=13)
            occ.append(rep.cells[0]["occupancy"])
        assert occ[0] <= occ[1] <= occ[2]

    def test_huge_epsilon_full_occupancy(self):
        params = fig1_params()
        orbit = extract_orbit(params)
        report = tube_occupancy(params, PopulationSizes.make([200, 200]),
                                40.0, 30.0 * orbit.diameter, seed=13)
        assert report.cells[0]["occupancy"] == 1.0

    def test_non_oscillatory_rejected(self):
        with pytest.raises(ValueError, match="oscillatory"):
            tube_occupancy(symmetric_params(0.8, 1), BASE, 40.0, None, seed=1)


class TestPhaseTransition:
    def test_kappa_sweep_cells(self):
        report = phase_transition_sweep(symmetric_params(0.8, 3), kappas=[4, 8],
                                        classify_horizon=200.0)
        assert [c["kappa"] for c in report.cells] == [4, 8]
        for cell in report.cells:
            assert cell["agree"] == (cell["sustained"] == cell["verdict_oscillatory"])

    def test_nu_sweep_verdicts(self):
        report = phase_transition_sweep(symmetric_params(1.0, 3),
                                        nus=[0.6, 1.0], classify_horizon=300.0)
        by_nu = {c["nu"]: c for c in report.cells}
        assert by_nu[0.6]["verdict_oscillatory"] is False
        assert by_nu[1.0]["verdict_oscillatory"] is True
        assert by_nu[1.0]["sustained"]

    def test_exactly_one_of_kappas_nus(self):
        with pytest.raises(ValueError):
            phase_transition_sweep(symmetric_params(1.0, 3))
        with pytest.raises(ValueError):
            phase_transition_sweep(symmetric_params(1.0, 3), kappas=[4], nus=[1.0])

    def test_classify_amplitude_on_synthetic(self):
        from hawkes_cascade.limit import LimitTrajectory
        t = np.linspace(0, 100, 5001)
        sustained = LimitTrajectory(t=t, states=np.sin(t)[:, None],
                                    means=np.zeros((len(t), 1)))
        damped = LimitTrajectory(t=t, states=(np.exp(-0.15 * t) * np.sin(t))[:, None],
                                 means=np.zeros((len(t), 1)))
        assert classify_amplitude(sustained)["sustained"] is True
        assert classify_amplitude(damped)["sustained"] is False


class TestReportContract:
    def test_json_round_trip_excludes_timing_by_default(self):
        report = ExperimentReport(name="x", grid=[], cells=[{"a": 1.5}],
                                  replicates=3, master_seed=7, wall_clock_s=1.23)
        payload = report.to_json_dict()
        assert "wall_clock_s" not in payload
        assert "wall_clock_s" in report.to_json_dict(include_timing=True)
        json.dumps(payload)

    def test_threaded_replicates_match_sequential(self):
        seq = chaos_rate_experiment(fig1_params(), BASE, [20, 40, 80, 200],
                                    horizon=8.0, replicates=6, master_seed=11)
        par = chaos_rate_experiment(fig1_params(), BASE, [20, 40, 80, 200],
                                    horizon=8.0, replicates=6, master_seed=11,
                                    threads=3)
        assert seq.cells == par.cells
        assert seq.extras["slope"] == par.extras["slope"]
        c_seq = clt_experiment(fig1_params(), PopulationSizes.make([50, 50]),
                               t=15.0, replicates=12, master_seed=2)
        c_par = clt_experiment(fig1_params(), PopulationSizes.make([50, 50]),
                               t=15.0, replicates=12, master_seed=2, threads=4)
        assert c_seq.cells == c_par.cells
