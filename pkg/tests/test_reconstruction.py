import math

import numpy as np
import pytest
from scipy.optimize import check_grad
from scipy.stats import linregress

from qpolarimeter.measurement import (
    CountRecord,
    NoiseModel,
    build_measurement_matrix,
    canonical_settings,
    expected_counts,
    simulate_counts,
)
from qpolarimeter.quantum import (
    BELL_PHI_PLUS,
    KET_HH,
    density_from_pure,
    density_from_stokes,
    fidelity,
    random_density,
    stokes_from_density,
)
from qpolarimeter.reconstruction import (
    RankDeficientError,
    legalize_psd,
    lls_reconstruct,
    ml_reconstruct,
    poisson_nll_and_grad,
    weights_from_counts,
)

SETTINGS = canonical_settings(9, dwell=0.08)
MATRIX = build_measurement_matrix(SETTINGS)
BELL = density_from_pure(BELL_PHI_PLUS)
HH = density_from_pure(KET_HH)


def noiseless_records(rho, n_per_setting=10_000):
    """Counts pinned to the exact Born expectations (rounded)."""
    noise = NoiseModel(pair_rate=n_per_setting / 0.08, car=math.inf, dark_rate=0.0, eta=1.0)
    records = []
    for s in SETTINGS:
        ec = expected_counts(rho, s, noise)
        records.append(
            CountRecord(
                setting_id=s.id,
                counts=tuple(int(round(c)) for c in ec.signal),
                expected_accidentals=(0.0, 0.0, 0.0, 0.0),
                dwell=s.dwell,
            )
        )
    return records


def poisson_records(rho, n_per_setting, rng, car=3.0):
    noise = NoiseModel(pair_rate=n_per_setting / 0.08, car=car, dark_rate=0.0, eta=1.0)
    return [simulate_counts(rho, s, noise, rng) for s in SETTINGS]


class TestWeights:
    def test_inverse_sqrt(self):
        rec = CountRecord(0, (100, 4, 9, 25), (0, 0, 0, 0), 0.08)
        assert np.allclose(weights_from_counts([rec]), [0.1, 0.5, 1 / 3, 0.2])

    def test_zero_count_floor(self):
        rec = CountRecord(0, (0, 0, 0, 0), (0, 0, 0, 0), 0.08)
        assert np.allclose(weights_from_counts([rec]), 1.0)

    def test_equal_counts_equal_weights(self):
        rec = CountRecord(0, (100, 100, 100, 100), (0, 0, 0, 0), 0.08)
        assert len(set(weights_from_counts([rec]))) == 1

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            weights_from_counts([])


class TestLegalizePsd:
    def test_clip_and_renormalize(self):
        rho = legalize_psd(np.diag([0.5, 0.4, 0.2, -0.1]))
        expected = np.array([0.5, 0.4, 0.2, 0.0]) / 1.1
        assert np.allclose(sorted(np.linalg.eigvalsh(rho.matrix))[::-1], sorted(expected)[::-1], atol=1e-12)

    def test_single_positive_eigenvalue(self):
        rho = legalize_psd(np.diag([1.5, -0.5, 0.0, 0.0]))
        assert np.allclose(rho.matrix, np.diag([1.0, 0.0, 0.0, 0.0]), atol=1e-12)

    def test_identity_on_legal_states(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            rho = random_density(rng)
            assert np.max(np.abs(legalize_psd(rho.matrix).matrix - rho.matrix)) <= 1e-12

    def test_eigenvectors_preserved(self):
        rng = np.random.default_rng(3)
        rho = random_density(rng).matrix + np.diag([0.1, -0.1, 0.05, -0.05])
        rho = (rho + rho.conj().T) / 2
        rho = rho / np.real(np.trace(rho))
        vals, vecs = np.linalg.eigh(rho)
        clipped = np.clip(vals, 0, None)
        expected = (vecs * (clipped / clipped.sum())) @ vecs.conj().T
        assert np.allclose(legalize_psd(rho).matrix, expected, atol=1e-12)

    def test_rejects_fully_negative(self):
        with pytest.raises(ValueError, match="degenerate"):
            legalize_psd(np.diag([-0.5, -0.3, -0.1, -0.1]))

    def test_rejects_non_hermitian(self):
        m = np.eye(4, dtype=complex)
        m[0, 1] = 0.5
        with pytest.raises(ValueError, match="Hermitian"):
            legalize_psd(m)


class TestLLS:
    def test_noiseless_consistency(self):
        report = lls_reconstruct(MATRIX, noiseless_records(HH))
        assert fidelity(report.rho, HH) >= 1 - 1e-9
        assert report.method == "LLS"
        assert report.truncated_mass >= 0.0

    def test_flat_counts_give_maximally_mixed(self):
        records = [
            CountRecord(s.id, (250, 250, 250, 250), (0, 0, 0, 0), s.dwell) for s in SETTINGS
        ]
        report = lls_reconstruct(MATRIX, records)
        assert np.max(np.abs(report.rho.matrix - np.eye(4) / 4)) <= 1e-9

    def test_monte_carlo_bell_precision(self):
        # per-setting ensembles of 4000 pairs, CAR 3, subtraction on
        rng = np.random.default_rng(21)
        fids = []
        for _ in range(200):
            report = lls_reconstruct(MATRIX, poisson_records(BELL, 4000, rng))
            fids.append(fidelity(report.rho, BELL))
        assert np.mean(fids) >= 0.95

    def test_subtraction_off_hits_accidental_ceiling(self):
        # CAR 3 dilutes the state to 0.75 rho + 0.25 I/4 when not subtracted
        rng = np.random.default_rng(22)
        fids = []
        for _ in range(50):
            report = lls_reconstruct(MATRIX, poisson_records(BELL, 4000, rng), subtract_accidentals=False)
            fids.append(fidelity(report.rho, BELL))
        assert np.mean(fids) == pytest.approx(0.8125, abs=0.02)

    def test_raw_counts_mode_matches_probability_mode(self):
        rng = np.random.default_rng(23)
        records = poisson_records(BELL, 2000, rng)
        a = lls_reconstruct(MATRIX, records, normalize_per_setting=True)
        b = lls_reconstruct(MATRIX, records, normalize_per_setting=False)
        assert fidelity(a.rho, b.rho) >= 0.999

    def test_clamped_counts_flagged(self):
        records = [
            CountRecord(s.id, (0, 0, 0, 0), (5.0, 5.0, 5.0, 5.0), s.dwell) for s in SETTINGS[:-1]
        ]
        records.append(CountRecord(8, (100, 100, 100, 100), (0, 0, 0, 0), 0.08))
        report = lls_reconstruct(MATRIX, records)
        assert "clamped_negative_counts" in report.flags

    def test_rank_deficiency_reported_with_directions(self):
        # drop the RL x RL setting: YY (among others) becomes unconstrained
        partial = [r for r in noiseless_records(BELL) if r.setting_id != 8]
        with pytest.raises(RankDeficientError) as err:
            lls_reconstruct(MATRIX, partial)
        assert "YY" in err.value.missing

    def test_all_outputs_legal_on_noisy_data(self):
        rng = np.random.default_rng(24)
        for _ in range(200):
            rho_true = random_density(rng)
            report = lls_reconstruct(MATRIX, poisson_records(rho_true, 50, rng))
            m = report.rho.matrix
            assert np.max(np.abs(m - m.conj().T)) <= 1e-12
            assert abs(np.trace(m) - 1) <= 1e-9
            assert np.linalg.eigvalsh(m)[0] >= -1e-9

    def test_infidelity_scales_inverse_n(self):
        # median infidelity vs per-setting ensemble size on a log-log grid
        rng = np.random.default_rng(25)
        n_values = [100, 1000, 10_000, 100_000]
        medians = []
        for n in n_values:
            infids = []
            for _ in range(40):
                rho_true = random_density(rng)
                report = lls_reconstruct(MATRIX, poisson_records(rho_true, n, rng, car=math.inf))
                infids.append(1.0 - fidelity(report.rho, rho_true))
            medians.append(np.median(infids))
        assert all(a > b for a, b in zip(medians, medians[1:]))
        slope = linregress(np.log10(n_values), np.log10(medians)).slope
        assert slope == pytest.approx(-1.0, abs=0.2)


class TestML:
    def test_noiseless_consistency(self):
        report = ml_reconstruct(MATRIX, noiseless_records(HH))
        assert fidelity(report.rho, HH) >= 1 - 1e-6
        assert report.method == "ML"

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(31)
        records = poisson_records(BELL, 500, rng)
        rows = MATRIX.rows_for(r.setting_id for r in records)
        projectors = np.array([density_from_stokes(4.0 * row) for row in rows])
        counts = np.array([c for r in records for c in r.counts], dtype=float)
        offsets = np.array([a for r in records for a in r.expected_accidentals])
        intensities = np.repeat(
            np.maximum(counts.reshape(-1, 4).sum(1) - offsets.reshape(-1, 4).sum(1), 1.0), 4
        )
        for trial in range(5):
            t0 = rng.standard_normal(16) * 0.4
            value0, grad0 = poisson_nll_and_grad(t0, projectors, counts, offsets, intensities)
            err = check_grad(
                lambda t: poisson_nll_and_grad(t, projectors, counts, offsets, intensities)[0],
                lambda t: poisson_nll_and_grad(t, projectors, counts, offsets, intensities)[1],
                t0,
            )
            assert err <= 1e-5 * max(1.0, float(np.linalg.norm(grad0)))

    def test_agrees_with_lls_at_moderate_counts(self):
        # the redundant 36-measurement operating mode used for the live runs
        settings = canonical_settings(36, dwell=0.08)
        matrix = build_measurement_matrix(settings)
        noise = NoiseModel(pair_rate=2000 / 0.08, car=3.0, dark_rate=0.0, eta=1.0)
        rng = np.random.default_rng(32)
        cross = []
        for _ in range(30):
            records = [simulate_counts(BELL, s, noise, rng) for s in settings]
            lls = lls_reconstruct(matrix, records)
            ml = ml_reconstruct(matrix, records)
            cross.append(fidelity(lls.rho, ml.rho))
        assert np.mean(cross) >= 0.99

    def test_agreement_across_random_states(self):
        rng = np.random.default_rng(33)
        cross = []
        for _ in range(20):
            rho_true = random_density(rng)
            records = poisson_records(rho_true, 1000, rng)
            cross.append(fidelity(lls_reconstruct(MATRIX, records).rho, ml_reconstruct(MATRIX, records).rho))
        assert np.mean(cross) >= 0.99

    def test_ml_beats_lls_at_low_counts(self):
        rng = np.random.default_rng(34)
        f_ml, f_lls = [], []
        for _ in range(40):
            records = poisson_records(BELL, 50, rng)
            f_lls.append(fidelity(lls_reconstruct(MATRIX, records).rho, BELL))
            f_ml.append(fidelity(ml_reconstruct(MATRIX, records).rho, BELL))
        assert np.mean(f_ml) >= np.mean(f_lls)

    def test_accidental_offsets_in_model_when_not_subtracting(self):
        rng = np.random.default_rng(35)
        fids = []
        for _ in range(20):
            records = poisson_records(BELL, 2000, rng)
            report = ml_reconstruct(MATRIX, records, subtract_accidentals=False)
            fids.append(fidelity(report.rho, BELL))
        # modeling the accidental mean recovers the undiluted state
        assert np.mean(fids) >= 0.95
