import numpy as np
import pytest

from phasespec import (
    CrossTermPolicy,
    GaussianState,
    PhasePoint,
    hermite_mixture,
    hermite_spectrogram,
    husimi,
    laplacian_husimi,
    mu,
    state_norm2,
    wigner,
)
from phasespec import densities as D
from phasespec.quadrature import tensor_grid_integrals
from phasespec.observables import weyl_expectation_gaussian, observable_from_polynomial_records
from phasespec.experiments import benchmark_superposition, fit_loglog_slope

from _oracles import (
    fd_laplacian,
    hermite_window_1d,
    spectrogram_convolution_quad,
    superposition_1d,
    wavepacket_1d,
    wigner_transform_quad,
)


def random_points_near(state, n, rng, spread=3.0):
    """Evaluation points scattered around the branch hull."""
    K = state.n_branches
    idx = rng.integers(0, K, size=n)
    width = spread * np.sqrt(state.h)
    Q = state.centers_q[idx] + width * rng.normal(size=(n, state.dim))
    P = state.centers_p[idx] + width * rng.normal(size=(n, state.dim))
    return Q, P


class TestWigner:
    def test_center_value(self):
        st = GaussianState.wavepacket(0.1, [0.2], [0.5])
        assert wigner(st, PhasePoint([0.2], [0.5])) == pytest.approx(
            1.0 / (np.pi * 0.1), rel=1e-14
        )

    def test_exponential_decay(self):
        h = 0.1
        st = GaussianState.wavepacket(h, [0.0], [0.0])
        # |w - z|^2 = h gives e^{-1} times the peak
        w = PhasePoint([np.sqrt(h)], [0.0])
        assert wigner(st, w) == pytest.approx(np.exp(-1.0) / (np.pi * h), rel=1e-13)

    def test_two_equal_branches_quadruple(self):
        z = PhasePoint([0.3, -0.2], [0.1, 0.4])
        st1 = GaussianState.from_branches(0.05, [(1.0, z)])
        st2 = GaussianState.from_branches(0.05, [(1.0, z), (1.0, z)])
        rng = np.random.default_rng(5)
        Q, P = random_points_near(st1, 50, rng)
        assert np.allclose(
            D.wigner_many(st2, Q, P), 4.0 * D.wigner_many(st1, Q, P), rtol=1e-12
        )

    def test_superposition_vs_transform_quadrature(self):
        # complex coefficients exercise the full cross-term phase
        h = 0.1
        c1, c2 = 1.0 + 0.5j, -0.3 + 1.0j
        z1, z2 = (0.4, -0.3), (-0.6, 0.8)
        st = GaussianState.from_branches(
            h, [(c1, PhasePoint([z1[0]], [z1[1]])), (c2, PhasePoint([z2[0]], [z2[1]]))]
        )
        psi = superposition_1d([(c1, *z1), (c2, *z2)], h)
        for q, p in [(0.0, 0.0), (-0.1, 0.25), (0.5, -0.5), (-0.35, 0.17)]:
            oracle = wigner_transform_quad(psi, q, p, h)
            assert wigner(st, PhasePoint([q], [p])) == pytest.approx(oracle, abs=1e-10)


class TestHusimi:
    def test_center_value(self):
        st = GaussianState.wavepacket(0.1, [0.0], [0.0])
        assert husimi(st, PhasePoint([0.0], [0.0])) == pytest.approx(
            1.0 / (2 * np.pi * 0.1), rel=1e-14
        )

    def test_single_branch_closed_form(self):
        h = 0.08
        st = GaussianState.wavepacket(h, [0.3, -0.1], [0.2, 0.6])
        rng = np.random.default_rng(2)
        Q, P = random_points_near(st, 200, rng)
        dq = Q - st.centers_q[0]
        dp = P - st.centers_p[0]
        r2 = np.sum(dq * dq + dp * dp, axis=1)
        expected = (2 * np.pi * h) ** -2 * np.exp(-r2 / (2 * h))
        assert np.allclose(D.husimi_many(st, Q, P), expected, rtol=1e-12)

    def test_convolution_definition(self):
        # the overlap-form constant against the literal Wigner convolution
        h = 0.1
        st = GaussianState.from_branches(
            h, [(1.0, PhasePoint([0.0], [0.0])), (0.8j, PhasePoint([0.5], [0.6]))]
        )
        psi = superposition_1d([(1.0, 0.0, 0.0), (0.8j, 0.5, 0.6)], h)
        window = wavepacket_1d(0.0, 0.0, h)
        for q, p in [(0.25, 0.3), (0.0, 0.0)]:
            oracle = spectrogram_convolution_quad(psi, window, q, p, h)
            assert husimi(st, PhasePoint([q], [p])) == pytest.approx(oracle, rel=1e-8)

    def test_nonnegative(self):
        rng = np.random.default_rng(4)
        st = benchmark_superposition(0.05)
        Q, P = random_points_near(st, 5000, rng, spread=6.0)
        assert np.all(D.husimi_many(st, Q, P) >= 0.0)


class TestHermiteSpectrogram:
    def test_zero_at_center(self):
        st = GaussianState.wavepacket(0.1, [0.4], [-0.2])
        assert hermite_spectrogram(st, 1, PhasePoint([0.4], [-0.2])) == 0.0

    def test_stated_value(self):
        h = 0.1
        st = GaussianState.wavepacket(h, [0.0], [0.0])
        # |w - z|^2 = |w_1 - z_1|^2 = 0.2 = 2h
        w = PhasePoint([np.sqrt(0.2)], [0.0])
        expected = (2 * np.pi * h) ** -1 * 1.0 * np.exp(-1.0)
        assert hermite_spectrogram(st, 1, w) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.5855, abs=5e-5)

    def test_single_branch_closed_form(self):
        h = 0.06
        st = GaussianState.wavepacket(h, [0.1, 0.7], [-0.3, 0.2])
        rng = np.random.default_rng(12)
        Q, P = random_points_near(st, 100, rng)
        for j in (1, 2):
            dq = Q - st.centers_q[0]
            dp = P - st.centers_p[0]
            r2 = np.sum(dq * dq + dp * dp, axis=1)
            rj2 = dq[:, j - 1] ** 2 + dp[:, j - 1] ** 2
            expected = (2 * np.pi * h) ** -2 * (rj2 / (2 * h)) * np.exp(-r2 / (2 * h))
            assert np.allclose(D.hermite_spectrogram_many(st, j, Q, P), expected, rtol=1e-12)

    def test_convolution_definition(self):
        h = 0.1
        st = GaussianState.wavepacket(h, [0.3], [-0.2])
        psi = wavepacket_1d(0.3, -0.2, h)
        phi = hermite_window_1d(h)
        oracle = spectrogram_convolution_quad(psi, phi, 0.5, 0.1, h)
        assert hermite_spectrogram(st, 1, PhasePoint([0.5], [0.1])) == pytest.approx(
            oracle, rel=1e-8
        )

    def test_phase_space_integral_is_one(self):
        # normalized single branch, d = 1: S_1 integrates to 1
        st = GaussianState.wavepacket(0.09, [0.2], [-0.4])
        _, total = tensor_grid_integrals(st, None, "hermite-mixture", points_per_axis=400)
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_plane_index_range(self):
        st = GaussianState.wavepacket(0.1, [0.0, 0.0], [0.0, 0.0])
        w = PhasePoint([0.0, 0.0], [0.0, 0.0])
        with pytest.raises(ValueError):
            hermite_spectrogram(st, 0, w)
        with pytest.raises(ValueError):
            hermite_spectrogram(st, 3, w)

    def test_nonnegative(self):
        rng = np.random.default_rng(40)
        st = benchmark_superposition(0.08)
        Q, P = random_points_near(st, 5000, rng, spread=6.0)
        for j in (1, 2):
            assert np.all(D.hermite_spectrogram_many(st, j, Q, P) >= 0.0)


class TestMu:
    def test_center_value(self):
        for h in (0.02, 0.1, 0.5):
            st = GaussianState.wavepacket(h, [0.0], [0.0])
            assert mu(st, PhasePoint([0.0], [0.0])) == pytest.approx(
                1.5 / (2 * np.pi * h), rel=1e-13
            )

    def test_root_radius(self):
        h, d = 0.07, 2
        st = GaussianState.wavepacket(h, [0.0, 0.0], [0.0, 0.0])
        r = 2.0 * np.sqrt(h * (1 + d / 2.0))
        w = PhasePoint([r, 0.0], [0.0, 0.0])
        assert abs(mu(st, w)) < 1e-13 * (2 * np.pi * h) ** -d

    def test_combination_equals_single_branch_closed_form(self):
        rng = np.random.default_rng(21)
        for d in (1, 2, 3):
            h = float(rng.uniform(0.02, 0.2))
            st = GaussianState.wavepacket(h, rng.normal(size=d), rng.normal(size=d))
            Q, P = random_points_near(st, 300, rng)
            a = D.mu_combination_many(st, Q, P)
            b = D.mu_single_branch_many(st.centers_q[0], st.centers_p[0], h, Q, P)
            envelope = (2 * np.pi * h) ** -d * np.exp(
                -(np.sum((Q - st.centers_q[0]) ** 2 + (P - st.centers_p[0]) ** 2, axis=1))
                / (2 * h)
            )
            assert np.all(np.abs(a - b) <= 1e-12 * (np.abs(b) + envelope))

    def test_pairwise_equals_combination_at_midpoint(self):
        # benchmark superposition, at the midpoint of the centers where the
        # interference term is largest
        st = benchmark_superposition(0.1)
        mid_q = st.centers_q.mean(axis=0)
        mid_p = st.centers_p.mean(axis=0)
        a = D.mu_combination_many(st, mid_q[None, :], mid_p[None, :])[0]
        c = D.mu_many(st, mid_q[None, :], mid_p[None, :])[0]
        assert c == pytest.approx(a, rel=1e-10)

    def test_pairwise_equals_combination_on_grids(self):
        # d = 1 and d = 2, several h, complex coefficients
        rng = np.random.default_rng(33)
        for d in (1, 2):
            for h in (0.02, 0.1, 0.3):
                st = GaussianState.from_branches(
                    h,
                    [
                        (1.0 + 0.4j, PhasePoint(rng.normal(size=d), rng.normal(size=d))),
                        (0.6 - 0.8j, PhasePoint(rng.normal(size=d), rng.normal(size=d))),
                        (0.3 + 0.1j, PhasePoint(rng.normal(size=d), rng.normal(size=d))),
                    ],
                )
                Q, P = random_points_near(st, 400, rng, spread=4.0)
                a = D.mu_combination_many(st, Q, P)
                c = D.mu_many(st, Q, P)
                scale = np.max(np.abs(a))
                assert np.max(np.abs(a - c)) <= 1e-10 * scale

    def test_neglect_policy_drops_small_pairs(self):
        st = benchmark_superposition(0.001)  # damping ~ e^-906: below any threshold
        policy = CrossTermPolicy(mode="neglect", threshold=1e-14)
        rng = np.random.default_rng(8)
        Q, P = random_points_near(st, 100, rng)
        dropped = D.mu_many(st, Q, P, policy)
        kept = D.mu_many(st, Q, P, CrossTermPolicy(mode="exact"))
        s1 = D.mu_single_branch_many(st.centers_q[0], st.centers_p[0], st.h, Q, P)
        s2 = D.mu_single_branch_many(st.centers_q[1], st.centers_p[1], st.h, Q, P)
        assert np.allclose(dropped, s1 + s2, rtol=1e-13, atol=1e-300)
        # at h this small the cross term also underflows in the exact path
        assert np.array_equal(kept, dropped)

    def test_cross_term_damping_bound(self):
        # |mu_exact - mu_neglect| <= damping * max |interference bracket|
        h = 0.1
        st = benchmark_superposition(h)
        policy_all = CrossTermPolicy(mode="exact")
        policy_none = CrossTermPolicy(mode="neglect", threshold=1.1)  # drops every pair
        rng = np.random.default_rng(14)
        Q, P = random_points_near(st, 4000, rng, spread=5.0)
        exact = D.mu_many(st, Q, P, policy_all)
        neglect = D.mu_many(st, Q, P, policy_none)
        damping = policy_all.pair_damping(st)[0, 1]
        assert 1e-6 < damping < 1e-3
        # independent bound from the interference bracket magnitude
        OkOl, B = D._pair_geometry(st, 0, 1, Q, P)
        envelope = np.abs(OkOl) / damping  # e^{-|w - midpoint|^2 / (2h)}
        bracket_max = np.max(2.0 * (2 * np.pi * h) ** -st.dim * envelope * np.abs(B))
        assert np.max(np.abs(exact - neglect)) <= damping * bracket_max * (1 + 1e-12)

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            CrossTermPolicy(mode="sometimes")
        with pytest.raises(ValueError):
            CrossTermPolicy(threshold=-1.0)


class TestLaplacianHusimi:
    def test_center_value(self):
        h = 0.1
        st = GaussianState.wavepacket(h, [0.0], [0.0])
        expected = -(2.0 / h) / (2 * np.pi * h)
        assert laplacian_husimi(st, PhasePoint([0.0], [0.0])) == pytest.approx(
            expected, rel=1e-13
        )

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(17)
        h = 0.1
        st = GaussianState.from_branches(
            h, [(1.0, PhasePoint([0.0], [0.0])), (0.5j, PhasePoint([0.6], [-0.4]))]
        )
        for _ in range(5):
            w = rng.normal(size=2) * 0.4
            oracle = fd_laplacian(
                lambda x: husimi(st, PhasePoint([x[0]], [x[1]])), w, step=1e-3
            )
            val = laplacian_husimi(st, PhasePoint([w[0]], [w[1]]))
            assert val == pytest.approx(oracle, rel=1e-5)

    def test_matches_finite_differences_d2(self):
        rng = np.random.default_rng(27)
        h = 0.1
        st = GaussianState.wavepacket(h, [0.1, -0.2], [0.3, 0.0])
        w = rng.normal(size=4) * 0.3
        oracle = fd_laplacian(
            lambda x: husimi(st, PhasePoint(x[:2], x[2:])), w, step=1e-3
        )
        val = laplacian_husimi(st, PhasePoint(w[:2], w[2:]))
        assert val == pytest.approx(oracle, rel=1e-5)

    def test_integral_vanishes(self):
        # divergence theorem: integral of Lap H over phase space is 0
        h = 0.08
        st = GaussianState.wavepacket(h, [0.2], [-0.1])
        pad = 12.0 * np.sqrt(h)
        q = np.linspace(0.2 - pad, 0.2 + pad, 500)
        p = np.linspace(-0.1 - pad, -0.1 + pad, 500)
        QQ, PP = np.meshgrid(q, p, indexing="ij")
        vals = D.laplacian_husimi_many(st, QQ.ravel()[:, None], PP.ravel()[:, None])
        integral = vals.sum() * (q[1] - q[0]) * (p[1] - p[0])
        assert abs(integral) < 1e-8


class TestNormalization:
    def test_husimi_and_hermite_mixture_integrate_to_norm2(self):
        # d = 1 superposition with visible interference
        h = 0.05
        st = GaussianState.from_branches(
            h, [(1.0, PhasePoint([-0.3], [0.2])), (0.7 + 0.2j, PhasePoint([0.4], [-0.1]))]
        )
        norm = state_norm2(st)
        for method in ("husimi", "hermite-mixture", "mu"):
            _, total = tensor_grid_integrals(st, None, method, points_per_axis=400)
            assert total == pytest.approx(norm, abs=1e-6)


class TestExpansionOrder:
    def test_quartic_gap_scales_as_h_squared(self):
        # For a degree-4 symbol, E_mu[A] - E_W[A] = -(h^2/32) Lap^2 A exactly,
        # and mu = H - (h/4) Lap H pointwise, so the gap of the corrected
        # Husimi expansion must scale as h^2.
        A = observable_from_polynomial_records([[1.0, [0, 4]], [0.5, [3, 0]], [1.0, [1, 1]]], 1)
        gaps = []
        h_list = (0.1, 0.05, 0.025, 0.0125)
        for h in h_list:
            st = GaussianState.wavepacket(h, [0.3], [0.5])
            est, den = tensor_grid_integrals(st, A, "mu", points_per_axis=240)
            exact = weyl_expectation_gaussian(A, st)
            gaps.append(abs(est / den - exact))
        slope = fit_loglog_slope(h_list, gaps)
        assert 1.7 <= slope <= 2.3
