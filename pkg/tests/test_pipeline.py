"""Tests for the projection pipeline: convergence, enclosures and perturbations."""

import math

import numpy as np
import pytest

from second_order_projection.matpoly import eigenvalues
from second_order_projection.models import ConvergenceRecord, Enclosure
from second_order_projection.operators import build, build_pencil, make_model
from second_order_projection.oracle import reference_eigenvalue, resolve_spectrum
from second_order_projection.pipeline import (
    annulus_clear,
    convergence_study,
    count_in_disc,
    enclosure_soundness,
    enclosures,
    fit_exponent,
    method_pipeline,
    nearest_eigenvalue,
    perturbation_experiment,
    perturbed_pencil,
    relative_weights,
    tolerance_bound,
)

# |z_190 - lambda_-| for the Fourier basis
FOURIER_ERROR_190 = 0.0358957

# |z_n - lambda_-| for the direct-sum basis, above the eigensolver floor of about 1e-8
DIRECT_SUM_ERRORS = {12: 1.08e-4, 18: 1.95e-6}
DIRECT_SUM_SWEEP = [9, 12, 15, 18]


@pytest.fixture(scope="module")
def b1_at_190(b1_model, secular):
    return method_pipeline(b1_model, 190, [secular.lambda_minus, secular.lambda_plus])


@pytest.fixture(scope="module")
def direct_sum_records(b2_model, secular):
    return convergence_study(b2_model, secular.lambda_minus, DIRECT_SUM_SWEEP, workers=2)


def check_fourier_slopes(records):
    slopes = [r.slope for r in records if r.slope is not None]
    assert slopes
    assert all(-0.6 <= s <= -0.4 for s in slopes)
    assert all(r.err < 0.05 for r in records)


class TestNearestEigenvalue:
    """Tests for nearest_eigenvalue."""

    def test_prefers_upper_half_plane(self):
        """Test that conjugate ties resolve to Im z >= 0."""
        assert nearest_eigenvalue([1 - 1j, 1 + 1j], 1.0) == 1 + 1j

    def test_prefers_smaller_real_part(self):
        """Test that equidistant real values resolve to the smaller one."""
        assert nearest_eigenvalue([2.0, 0.0], 1.0) == 0.0

    def test_empty(self):
        """Test that an empty spectrum is rejected."""
        with pytest.raises(ValueError, match="empty"):
            nearest_eigenvalue([], 0.0)


class TestEnclosures:
    """Tests for real enclosures of pencil eigenvalues."""

    def test_intervals_and_order(self):
        """Test intervals [Re z - |Im z|, Re z + |Im z|] sorted by lo, hi and witness."""
        encs = enclosures([3.0, 1 + 0.5j, 1 - 0.5j])
        assert [(e.lo, e.hi) for e in encs] == [(0.5, 1.5), (0.5, 1.5), (3.0, 3.0)]
        assert encs[0].witness == 1 - 0.5j
        assert encs[1].witness == 1 + 0.5j

    def test_imag_cut(self):
        """Test that eigenvalues far from the real axis are dropped."""
        encs = enclosures([3.0, 1 + 0.5j, 1 - 0.5j], imag_cut=0.1)
        assert [e.witness for e in encs] == [3.0]

    def test_negative_imag_cut(self):
        """Test that a negative cut is rejected."""
        with pytest.raises(ValueError, match="nonnegative"):
            enclosures([1.0], imag_cut=-1.0)

    def test_soundness_needs_resolved_spectrum(self, b1_model):
        """Test that the oracle-deferred eigenvalues must be resolved first."""
        with pytest.raises(ValueError, match="not resolved"):
            enclosure_soundness([Enclosure.from_eigenvalue(0.0)], b1_model.spectrum_info)

    @pytest.mark.parametrize("kind, n", [("fourier_b1", 20), ("fourier_b1", 60), ("direct_sum_b2", 12), ("direct_sum_b2", 48)])
    def test_every_enclosure_meets_the_spectrum(self, kind, n, meets_gap_spectrum):
        """Test that each enclosure intersects [-3,-1] u [1,3] u {lambda_-, lambda_+}."""
        model = make_model(kind)
        encs = enclosures(eigenvalues(build_pencil(model, n)))
        assert len(encs) == 2 * model.basis_dim(n)
        assert all(enclosure_soundness(encs, resolve_spectrum(model)))
        assert all(meets_gap_spectrum(e.lo, e.hi) for e in encs)

    def test_soundness_at_190(self, b1_at_190, b1_model):
        """Test enclosure soundness for the n=190 Fourier truncation."""
        assert all(enclosure_soundness(b1_at_190.enclosures, resolve_spectrum(b1_model)))


class TestMethodPipeline:
    """Tests for the single-call pipeline."""

    def test_both_discrete_eigenvalues(self, b1_at_190, secular):
        """Test that lambda_- and lambda_+ are both approximated at n=190."""
        assert abs(b1_at_190.nearest[secular.lambda_minus] - secular.lambda_minus) <= 0.05
        assert abs(b1_at_190.nearest[secular.lambda_plus] - secular.lambda_plus) <= 0.05

    def test_fourier_error_anchor(self, b1_at_190, secular):
        """Test the n=190 Fourier error against its recorded value."""
        err = abs(b1_at_190.nearest[secular.lambda_minus] - secular.lambda_minus)
        assert err == pytest.approx(FOURIER_ERROR_190, abs=2e-6)

    def test_an_enclosure_near_lambda_minus(self, b1_at_190, secular):
        """Test that some enclosure comes within 0.041 of lambda_-."""
        lam = secular.lambda_minus
        gaps = [max(e.lo - lam, lam - e.hi, 0.0) for e in b1_at_190.enclosures]
        assert min(gaps) <= 0.041

    def test_shift_fixture(self):
        """Test that the shift pencil's nearest eigenvalue to 0 is 0."""
        result = method_pipeline(make_model("shift_fixture"), 6, [0.0])
        assert abs(result.nearest[0.0]) < 1e-6

    def test_no_targets(self, harmonic_model):
        """Test that an empty target list gives only spectrum and enclosures."""
        result = method_pipeline(harmonic_model, 3)
        assert result.nearest == {}
        assert len(result.enclosures) == 8

    def test_harmonic_levels(self, harmonic_model):
        """Test that the harmonic fixture reproduces 2k+1 exactly, each twice."""
        spec = eigenvalues(build_pencil(harmonic_model, 30))
        expected = np.repeat(2 * np.arange(31) + 1.0, 2)
        assert np.allclose(spec.eigenvalues, expected, rtol=0, atol=1e-9)


class TestStructuralInvariants:
    """Tests that built truncations keep their Hermitian structure."""

    @pytest.mark.parametrize("kind, n", [("fourier_b1", 20), ("direct_sum_b2", 6), ("schrodinger_hermite", 12)])
    def test_invariants(self, kind, n):
        """Test Hermitian defects, the PSD defect and conjugate symmetry."""
        pair = build(make_model(kind), n)
        assert pair.m_n.defect < 1e-10 * pair.scale
        assert pair.m2_n.defect < 1e-10 * pair.scale
        spec = eigenvalues(pair.pencil())
        assert spec.conjugate_defect < 1e-8

    def test_direct_sum_double_roots(self, b2_model, secular):
        """Test that roots near lambda_minus at n=48 are exact conjugates whose enclosures hold it."""
        lam = secular.lambda_minus
        spec = eigenvalues(build_pencil(b2_model, 48))
        assert spec.conjugate_defect < 1e-12
        near = spec.eigenvalues[np.abs(spec.eigenvalues - lam) < 1e-4]
        assert len(near) >= 1
        assert np.array_equal(np.sort_complex(near), np.sort_complex(near.conj()))
        for z in near:
            assert abs(z.real - lam) - abs(z.imag) <= 1e-7


class TestConvergenceStudy:
    """Tests for convergence tables."""

    def test_direct_sum_errors(self, direct_sum_records):
        """Test the direct-sum errors at n=12 and n=18 within 5%."""
        recorded = {r.n: r.err for r in direct_sum_records}
        for n, err in DIRECT_SUM_ERRORS.items():
            assert recorded[n] == pytest.approx(err, rel=0.05)

    def test_direct_sum_tail(self, b2_model, secular):
        """Test err(78) <= 1e-6."""
        (record,) = convergence_study(b2_model, secular.lambda_minus, [78])
        assert record.err <= 1e-6

    def test_direct_sum_beats_fourier(self, direct_sum_records, b1_at_190, secular):
        """Test that the direct-sum basis at n=12 beats the Fourier basis at n=190."""
        fourier_err = abs(b1_at_190.nearest[secular.lambda_minus] - secular.lambda_minus)
        assert direct_sum_records[1].n == 12
        assert direct_sum_records[1].err < fourier_err / 100

    def test_record_columns(self, direct_sum_records):
        """Test logs and forward slopes."""
        first, second = direct_sum_records[0], direct_sum_records[1]
        assert first.log_n == pytest.approx(math.log(9))
        assert first.log_err == pytest.approx(math.log(first.err))
        assert first.slope == pytest.approx((second.log_err - first.log_err) / (second.log_n - first.log_n))
        assert direct_sum_records[-1].slope is None

    def test_superpolynomial_rate(self, direct_sum_records):
        """Test that the log-log slopes keep getting steeper for n = 9..18."""
        slopes = [r.slope for r in direct_sum_records[:-1]]
        assert all(later < earlier for earlier, later in zip(slopes, slopes[1:]))
        assert fit_exponent(direct_sum_records) < -3

    def test_threads_do_not_change_records(self, b1_model, secular):
        """Test that parallel solves give identical records."""
        ns = [10, 20, 30, 40]
        serial = convergence_study(b1_model, secular.lambda_minus, ns, workers=1)
        parallel = convergence_study(b1_model, secular.lambda_minus, ns, workers=3)
        assert serial == parallel

    def test_schrodinger_demo(self, demo_model):
        """Test a decreasing error against the finite-difference ground state."""
        lam = reference_eigenvalue(demo_model, "ground_state")
        records = convergence_study(demo_model, lam, [20, 40, 80, 160], workers=2)
        errs = [r.err for r in records]
        for before, after in zip(errs, errs[1:]):
            # the finite-difference reference is good to about 1e-7
            assert after <= before + 1e-7
        assert errs[-1] < 1e-3

    def test_rejects_unsorted(self, b1_model):
        """Test that truncation indices must increase strictly."""
        with pytest.raises(ValueError, match="strictly increasing"):
            convergence_study(b1_model, 0.0, [10, 10])

    def test_rejects_empty(self, b1_model):
        """Test that at least one truncation is needed."""
        with pytest.raises(ValueError, match="must not be empty"):
            convergence_study(b1_model, 0.0, [])

    @pytest.mark.slow
    def test_fourier_errors_desk_scale(self, b1_model, secular, direct_sum_records):
        """Test the Fourier slopes for n = 190..550."""
        records = convergence_study(b1_model, secular.lambda_minus, range(190, 551, 45), workers=4)
        assert len(records) == 9
        assert records[0].err == pytest.approx(FOURIER_ERROR_190, abs=2e-6)
        check_fourier_slopes(records)
        # the direct-sum basis at n=12 already beats the Fourier basis at n=550
        assert direct_sum_records[1].err < records[-1].err

    @pytest.mark.slow
    def test_fourier_errors_full_scale(self, b1_model, secular):
        """Test the Fourier slopes and the fitted exponent for n = 190..1000."""
        records = convergence_study(b1_model, secular.lambda_minus, range(190, 1001, 45), workers=4)
        assert len(records) == 19
        check_fourier_slopes(records)
        assert -0.6 <= fit_exponent(records) <= -0.4


class TestFitExponent:
    """Tests for the least-squares exponent."""

    def test_exact_power_law(self):
        """Test err = n^-0.5 gives -0.5."""
        records = [
            ConvergenceRecord(n=n, z_re=n**-0.5, z_im=0.0, err=n**-0.5, log_err=-0.5 * math.log(n), log_n=math.log(n))
            for n in (10, 20, 40, 80)
        ]
        assert fit_exponent(records) == pytest.approx(-0.5)

    def test_skips_infinite_rows(self):
        """Test that exact hits (log err = -inf) are ignored."""
        records = [
            ConvergenceRecord(n=1, z_re=0.0, z_im=0.0, err=1.0, log_err=0.0, log_n=0.0),
            ConvergenceRecord(n=2, z_re=0.0, z_im=0.0, err=0.0, log_err=-math.inf, log_n=math.log(2)),
        ]
        with pytest.raises(ValueError, match="at least two finite rows"):
            fit_exponent(records)


class TestToleranceBound:
    """Tests for the perturbation tolerance."""

    def test_hand_value(self):
        """Test delta=0.25, mu=2, w0=1, w1=0 gives 0.25/24.25."""
        assert tolerance_bound(0.25, 2.0, 0.3, 1.0, 0.0) == pytest.approx(0.25 / 24.25)

    def test_independent_of_lambda_without_w1(self):
        """Test that lambda enters only through w1."""
        assert tolerance_bound(0.25, 2.0, -7.0, 1.0, 0.0) == tolerance_bound(0.25, 2.0, 3.0, 1.0, 0.0)

    def test_homogeneous_in_w0(self):
        """Test that doubling w0 halves the bound."""
        assert tolerance_bound(0.25, 2.0, 0.0, 2.0, 0.0) == pytest.approx(tolerance_bound(0.25, 2.0, 0.0, 1.0, 0.0) / 2)

    def test_gap_model_value(self, secular):
        """Test the bound around lambda_- with delta = 0.05 and unit weights."""
        mu = secular.lambda_minus + 1
        assert tolerance_bound(0.05, mu, secular.lambda_minus, 1.0, 1.0) == pytest.approx(2.2e-4, rel=0.05)

    def test_relative_weights(self):
        """Test that the relative weights make the bound delta^2."""
        w0, w1 = relative_weights(0.1, 1.0, 2.0)
        assert tolerance_bound(0.1, 1.0, 2.0, w0, w1) == pytest.approx(0.01)

    def test_radius_too_large(self):
        """Test that delta must stay below mu/4."""
        with pytest.raises(ValueError, match="must satisfy"):
            tolerance_bound(0.5, 2.0, 0.0, 1.0, 1.0)

    def test_weights_vanish(self):
        """Test that w0 = w1 = 0 is rejected."""
        with pytest.raises(ValueError, match="not both zero"):
            tolerance_bound(0.1, 2.0, 0.0, 0.0, 0.0)


class TestPerturbation:
    """Tests for the perturbation experiment."""

    def test_counting_helpers(self):
        """Test disc counts and annulus emptiness."""
        values = [0.0, 0.1j, -0.1j, 1.0]
        assert count_in_disc(values, 0.0, 0.2) == 3
        assert annulus_clear(values, 0.0, 0.2, 0.9)
        assert not annulus_clear(values, 0.0, 0.2, 1.0)

    def test_zero_perturbation_pencil(self, scalar_pencil):
        """Test that F = G = 0 leaves the pencil unchanged."""
        zero = np.zeros((1, 1))
        pencil = perturbed_pencil(scalar_pencil, zero, zero)
        assert np.allclose(pencil.evaluate(0.3 + 0.2j), scalar_pencil.evaluate(0.3 + 0.2j))

    def test_report(self, b1_model, secular):
        """Test report fields for a small seeded experiment."""
        lam = secular.lambda_minus
        report = perturbation_experiment(b1_model, 30, lam, 0.05, 1.0, 1.0, trials=4, rng_seed=7)
        assert report.trials == 4
        assert len(report.counts) == len(report.counts_match) == len(report.annulus_clear) == 4
        assert report.mu == pytest.approx(lam + 1)
        assert report.eps == pytest.approx(0.9 * report.eps_bound)
        assert report.asymptotic_only

    def test_seeded_and_thread_independent(self, b1_model, secular):
        """Test that the seed fixes the outcome whatever the worker count."""
        args = (b1_model, 30, secular.lambda_minus, 0.05, 1.0, 1.0)
        serial = perturbation_experiment(*args, trials=3, rng_seed=11, workers=1)
        parallel = perturbation_experiment(*args, trials=3, rng_seed=11, workers=3)
        assert serial == parallel

    def test_zero_eps(self, b1_model, secular):
        """Test that eps = 0 reproduces the unperturbed counts and annulus."""
        report = perturbation_experiment(
            b1_model, 20, secular.lambda_minus, 0.05, 1.0, 1.0, trials=2, rng_seed=0, eps_fraction=0.0
        )
        assert all(report.counts_match)
        assert report.annulus_clear == [report.baseline_annulus_clear] * 2

    def test_radius_too_large(self, b1_model, secular):
        """Test that delta >= mu/4 is rejected."""
        with pytest.raises(ValueError, match="must satisfy"):
            perturbation_experiment(b1_model, 10, secular.lambda_minus, 0.1, 1.0, 1.0, trials=1, rng_seed=0)

    def test_invalid_trials(self, b1_model, secular):
        """Test that at least one trial is needed."""
        with pytest.raises(ValueError, match="at least 1"):
            perturbation_experiment(b1_model, 10, secular.lambda_minus, 0.05, 1.0, 1.0, trials=0, rng_seed=0)

    @pytest.mark.slow
    def test_stable_at_400(self, b1_model, secular):
        """Test that 50 perturbations at 90% of the bound keep the count and the annulus."""
        report = perturbation_experiment(
            b1_model, 400, secular.lambda_minus, 0.05, 1.0, 1.0, trials=50, rng_seed=2024, workers=4
        )
        assert report.baseline_count >= 1
        assert report.baseline_annulus_clear
        assert report.all_pass
