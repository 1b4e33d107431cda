import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import toeplitz

from psdalign.fading import DopplerSpectrum, clarke_autocorrelation
from psdalign.pilots import (
    AlignmentPlan,
    PlanInfeasibleError,
    cross_matrix,
    fft_pilot,
    hadamard_pilots,
    orthogonality_residual,
    plan_alignment,
    shift_orthogonal,
    uniform_capacity,
)


class TestFftPilot:
    def test_zero_shift_is_base(self):
        p = fft_pilot(0, 8)
        assert np.allclose(p.values, np.ones(8))

    def test_half_length_shift_alternates(self):
        p = fft_pilot(4, 8)
        assert np.allclose(p.values, (-1.0) ** np.arange(8))

    def test_unit_modulus(self):
        p = fft_pilot(3.7, 64, base=np.exp(1j * np.linspace(0, 5, 64)))
        assert np.max(np.abs(np.abs(p.values) - 1.0)) < 1e-12

    def test_shift_out_of_range(self):
        with pytest.raises(ValueError):
            fft_pilot(8, 8)
        with pytest.raises(ValueError):
            fft_pilot(-1, 8)

    def test_non_unit_modulus_base_rejected(self):
        with pytest.raises(ValueError):
            fft_pilot(0, 4, base=np.array([1.0, 2.0, 1.0, 1.0]))

    @given(st.integers(0, 63), st.integers(4, 64))
    @settings(max_examples=40, deadline=None)
    def test_always_unit_modulus(self, tau, P):
        if tau >= P:
            tau = tau % P
        p = fft_pilot(tau, P)
        assert np.max(np.abs(np.abs(p.values) - 1.0)) < 1e-12


class TestHadamard:
    def test_k1(self):
        (p,) = hadamard_pilots(1)
        assert np.allclose(p.values, [1.0])

    def test_k2(self):
        a, b = hadamard_pilots(2)
        assert np.allclose(a.values, [1, 1]) and np.allclose(b.values, [1, -1])

    def test_k8_pairwise_orthogonal(self):
        ps = hadamard_pilots(8)
        for i in range(8):
            for j in range(i + 1, 8):
                assert abs(np.vdot(ps[i].values, ps[j].values)) < 1e-12

    @pytest.mark.parametrize("K", [0, 3, 6, 12])
    def test_rejects_non_power_of_two(self, K):
        with pytest.raises(ValueError):
            hadamard_pilots(K)


class TestCrossMatrix:
    def test_same_pilot_gives_identity(self):
        a = fft_pilot(5, 16)
        Pab, Theta = cross_matrix(a, a)
        assert np.allclose(Pab, np.eye(16))
        assert np.allclose(Theta, np.eye(16), atol=1e-12)

    def test_relative_shift_permutation_column(self):
        a, b = fft_pilot(0, 8), fft_pilot(3, 8)
        _, Theta = cross_matrix(a, b)
        expected = np.zeros(8)
        expected[3] = 1.0
        assert np.allclose(Theta[:, 0], expected, atol=1e-12)

    def test_theta_is_unitary_permutation(self):
        a, b = fft_pilot(2, 32), fft_pilot(9, 32)
        _, Theta = cross_matrix(a, b)
        mags = np.abs(Theta)
        assert np.allclose(np.sort(mags, axis=1)[:, :-1], 0.0, atol=1e-10)
        assert np.allclose(np.max(mags, axis=1), 1.0, atol=1e-10)
        assert np.allclose(Theta @ Theta.conj().T, np.eye(32), atol=1e-10)

    def test_hadamard_pair_traceless(self):
        ps = hadamard_pilots(8)
        Pab, _ = cross_matrix(ps[0], ps[1])
        assert abs(np.trace(Pab)) < 1e-12

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cross_matrix(fft_pilot(0, 8), fft_pilot(0, 16))


class TestOrthogonalityResidual:
    def test_constant_channel_traceless_pair_vanishes(self):
        ones = np.ones((8, 8))
        ps = hadamard_pilots(8)
        d = np.conj(ps[0].values) * ps[1].values
        assert orthogonality_residual(ones, ones, d) < 1e-10

    def test_same_user_positive(self):
        r = clarke_autocorrelation(0.05, np.arange(64))
        R = toeplitz(r)
        assert orthogonality_residual(R, R, np.ones(64)) > 1e-3

    def test_dense_and_diagonal_forms_agree(self):
        rng = np.random.default_rng(5)
        r = clarke_autocorrelation(0.05, np.arange(32))
        R = toeplitz(r)
        d = np.exp(2j * np.pi * rng.random(32))
        assert abs(orthogonality_residual(R, R, d) - orthogonality_residual(R, R, np.diag(d))) < 1e-12

    def test_half_circle_shift_decays(self):
        vals = []
        for P in (256, 512, 1024):
            R = toeplitz(clarke_autocorrelation(0.002, np.arange(P)))
            d = np.exp(2j * np.pi * (P // 2) * np.arange(P) / P)
            vals.append(orthogonality_residual(R, R, d))
        assert vals[0] > vals[1] > vals[2]


class TestShiftOrthogonal:
    def test_full_overlap_false(self):
        lam = DopplerSpectrum.clarke(0.002).sample_eigenvalues(1000)
        assert shift_orthogonal(lam, lam, 0) is False

    def test_half_circle_true(self):
        lam = DopplerSpectrum.clarke(0.002).sample_eigenvalues(1000)
        assert shift_orthogonal(lam, lam, 500) is True

    def test_zero_spectrum_always_true(self):
        lam = DopplerSpectrum.clarke(0.002).sample_eigenvalues(256)
        assert shift_orthogonal(lam, np.zeros(256), 3) is True

    @given(st.data())
    @settings(max_examples=60, deadline=None)
    def test_integer_shift_matches_rolled_mask_semantics(self, data):
        P = data.draw(st.integers(8, 48))
        # sparse random supports
        lam_k = np.zeros(P)
        lam_g = np.zeros(P)
        for lam in (lam_k, lam_g):
            for idx in data.draw(st.lists(st.integers(0, P - 1), min_size=1, max_size=6)):
                lam[idx] = data.draw(st.floats(0.5, 2.0))
        dtau = data.draw(st.integers(-P, P))
        expected = not np.any((lam_k > 0) & (np.roll(lam_g > 0, dtau)))
        assert shift_orthogonal(lam_k, lam_g, dtau) == expected


class TestPlanAlignment:
    def test_uniform_shift_ladder(self):
        plan = plan_alignment([0.002] * 8, [], 4096)
        assert plan.shifts == tuple(float(17 * k) for k in range(8))
        assert plan.is_valid() and plan.pairwise_orthogonal()

    def test_single_user_gets_zero_shift(self):
        assert plan_alignment([0.3], [], 64).shifts == (0.0,)

    def test_preset_fractional_plan_accepted_by_checker(self):
        P = 4096
        plan = AlignmentPlan(
            dopplers=(0.002,) * 8,
            shifts=tuple(P * (3 / 8 + (k + 1) / 36) for k in range(8)),
            P=P,
            forbidden=((-3 / 8, 3 / 8),),
            guard=1 / P,
        )
        assert plan.is_valid()
        assert plan.pairwise_orthogonal()

    def test_capacity_formula(self):
        assert uniform_capacity(0.002) == 250
        assert uniform_capacity(0.002, guard=1 / 4096) == 235

    def test_tight_packing_beyond_integer_ladder(self):
        plan = plan_alignment([0.002] * 249, [], 4096)
        assert plan.K == 249
        assert plan.is_valid()
        assert plan.pairwise_orthogonal()

    def test_infeasible_reports_deficit(self):
        with pytest.raises(PlanInfeasibleError) as err:
            plan_alignment([0.002] * 300, [], 4096)
        assert err.value.width_deficit == pytest.approx(300 * 0.004 - 1.0)

    def test_forbidden_band_respected(self):
        plan = plan_alignment([0.002] * 8, [(-3 / 8, 3 / 8)], 4096)
        assert plan.is_valid()
        for lo, hi in plan.supports():
            assert not (lo < 3 / 8 and hi > -3 / 8 and (lo % 1.0) < 0.375)

    def test_heterogeneous_dopplers(self):
        plan = plan_alignment([0.01, 0.002, 0.05, 0.003], [(0.4, 0.5)], 512)
        assert plan.is_valid()
        assert plan.pairwise_orthogonal()

    @given(st.data())
    @settings(max_examples=25, deadline=None)
    def test_feasible_plans_always_validate(self, data):
        K = data.draw(st.integers(1, 6))
        dopplers = [data.draw(st.floats(0.001, 0.02)) for _ in range(K)]
        plan = plan_alignment(dopplers, [], 512)
        assert plan.is_valid()
        assert plan.pairwise_orthogonal()

    def test_serialization_round_trip(self):
        plan = plan_alignment([0.002] * 4, [(-0.1, 0.1)], 1024)
        clone = AlignmentPlan.from_dict(plan.to_dict())
        assert clone == plan


class TestCircularGeometry:
    @given(st.data())
    @settings(max_examples=80, deadline=None)
    def test_gap_against_dense_sampling(self, data):
        from psdalign.pilots import _circular_gap

        lo_a = data.draw(st.floats(0.0, 1.0))
        wa = data.draw(st.floats(0.01, 0.45))
        lo_b = data.draw(st.floats(0.0, 1.0))
        wb = data.draw(st.floats(0.01, 0.45))
        gap = _circular_gap((lo_a, lo_a + wa), (lo_b, lo_b + wb))
        # brute force: dense points of b, distance-to-a on the circle
        t = lo_b + np.linspace(0, wb, 4001)
        rel = (t - lo_a) % 1.0
        overlap = np.any(rel <= wa + 1e-12)
        if gap > 1e-3:
            assert not overlap
        elif gap < -1e-3:
            assert overlap
        # separation is symmetric; the overlap deficit is sign-symmetric only,
        # and exact touching may land a rounding ulp on either side of zero
        mirror = _circular_gap((lo_b, lo_b + wb), (lo_a, lo_a + wa))
        if gap > 1e-12:
            assert mirror == pytest.approx(gap, abs=1e-12)
        elif gap < -1e-12:
            assert mirror < 1e-12
        else:
            assert abs(mirror) < 1e-12


class TestPlanPilotsIntegration:
    def test_plan_pilots_are_shift_orthogonal(self):
        plan = plan_alignment([0.002] * 4, [], 2048)
        lam = DopplerSpectrum.clarke(0.002).sample_eigenvalues(2048)
        for k in range(4):
            for g in range(k + 1, 4):
                assert shift_orthogonal(lam, lam, plan.shifts[g] - plan.shifts[k])
