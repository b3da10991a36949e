import dataclasses
import math

import numpy as np
import pytest
import scipy.linalg

from flames import events as ev
from flames import hippo
from flames import kernel as kn
from flames.analysis import taylor_error_bound


def make_fixed_kernel(a_dyn, b, c=None, dt_max=np.inf):
    """Kernel with a prescribed dynamics matrix and zero interval decay."""
    order = a_dyn.shape[0]
    return hippo.SaHippoKernel(
        A=-np.asarray(a_dyn, dtype=float),
        alpha=hippo.DecayParams(np.zeros((order, order))),
        B=np.asarray(b, dtype=float),
        C=np.eye(order) if c is None else np.asarray(c, dtype=float),
        stability_sign=-1,
        dt_max=dt_max,
    )


class TestExpmTaylor:
    def test_zero_matrix(self):
        for terms in (1, 2, 8):
            assert np.array_equal(
                kn.expm_taylor(np.zeros((3, 3)), 0.7, terms=terms), np.eye(3)
            )

    def test_scalar_second_order_error_bound(self):
        # 1x1 case against the closed form, error within the remainder bound
        for a, dt in ((-1.0, 1.0), (0.5, 0.8), (-2.0, 0.6)):
            approx = kn.expm_taylor(np.array([[a]]), dt, terms=2)[0, 0]
            x = abs(a * dt)
            assert abs(approx - math.exp(a * dt)) <= x**3 / 6 * math.exp(x)

    def test_matches_scaling_squaring_reference(self):
        # at ||m*dt|| = 0.5 the degree-8 remainder allows up to ~8.9e-9, so
        # the 1e-9 figure is asserted where it is provable (||m*dt|| <= 0.35)
        rng = np.random.default_rng(0)
        for _ in range(10):
            m = rng.normal(size=(4, 4))
            m *= 0.5 / kn.spectral_norm(m)
            ours = kn.expm_taylor(m, 1.0, terms=8)
            assert np.linalg.norm(ours - scipy.linalg.expm(m)) <= taylor_error_bound(
                0.5, 8
            )
            tight = m * 0.7  # norm 0.35: remainder bound 3.2e-10
            assert (
                np.linalg.norm(
                    kn.expm_taylor(tight, 1.0, terms=8) - scipy.linalg.expm(tight)
                )
                <= 1e-9
            )

    def test_warns_outside_radius(self):
        m = np.eye(2) * 3.0
        with pytest.warns(kn.AccuracyWarning):
            kn.expm_taylor(m, 1.0, terms=8)

    def test_no_warning_inside_radius(self):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("error")
            kn.expm_taylor(np.eye(2), 1.0, terms=8)

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            kn.expm_taylor(np.eye(2), 1.0, terms=0)
        with pytest.raises(ValueError):
            kn.expm_taylor(np.eye(2), -1.0)


class TestPhiMatrix:
    def test_zero_matrix_gives_dt_identity(self):
        out = kn.phi_matrix(np.zeros((4, 4)), 0.3, terms=8)
        assert out == pytest.approx(0.3 * np.eye(4), abs=0)

    def test_scalar_closed_form(self):
        for a, dt in ((-1.5, 0.5), (0.7, 0.9)):
            approx = kn.phi_matrix(np.array([[a]]), dt, terms=12)[0, 0]
            exact = (math.exp(a * dt) - 1.0) / a
            assert abs(approx - exact) <= taylor_error_bound(abs(a * dt), 12)

    def test_explicit_inverse_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            m = rng.normal(size=(8, 8))
            m *= 1.0 / kn.spectral_norm(m)
            phi = kn.phi_matrix(m, 1.0, terms=20)
            oracle = np.linalg.solve(m, scipy.linalg.expm(m) - np.eye(8))
            assert np.linalg.norm(phi - oracle) <= 1e-8

    def test_dt_zero(self):
        assert np.all(kn.phi_matrix(np.eye(3), 0.0) == 0)


class TestStep:
    def test_zero_interval_keeps_state(self):
        kern = make_fixed_kernel(-np.eye(2), np.ones((2, 1)))
        state = kn.KernelState(x=np.array([1.0, -2.0]), last_t=0.5)
        batch = ev.SpikeBatch(t=0.5, values=np.array([3.0]))
        out = kn.step(kern, state, batch)
        assert np.array_equal(out.x, state.x)
        assert out.last_t == 0.5

    def test_pure_decay_against_dense_exponential(self):
        rng = np.random.default_rng(2)
        g = rng.normal(size=(5, 5))
        a_dyn = -(g.T @ g / 5 + 0.1 * np.eye(5))  # symmetric negative definite
        kern = make_fixed_kernel(a_dyn, np.zeros((5, 1)))
        x0 = rng.normal(size=5)
        state = kn.KernelState(x=x0, last_t=0.0)
        dt = 0.4
        out = kn.step(kern, state, ev.SpikeBatch(t=dt, values=np.zeros(1)), terms=12)
        oracle = scipy.linalg.expm(a_dyn * dt) @ x0
        assert out.x == pytest.approx(oracle, abs=1e-10)
        assert np.linalg.norm(out.x) <= np.linalg.norm(x0)

    def test_scalar_closed_form(self):
        kern = make_fixed_kernel(np.array([[-1.0]]), np.array([[1.0]]))
        state = kn.KernelState.zeros(1)
        out = kn.step(kern, state, ev.SpikeBatch(t=1.0, values=np.array([1.0])), terms=8)
        target = 1.0 - math.exp(-1.0)
        assert abs(out.x[0] - target) <= taylor_error_bound(1.0, 8)

    def test_matches_matrix_form(self):
        # the vector fast path equals the documented matrix-form update
        rng = np.random.default_rng(3)
        kern = hippo.make_kernel(order=6, input_dim=2, alpha0=0.8, seed=5)
        x0 = rng.normal(size=6)
        values = rng.normal(size=2)
        state = kn.KernelState(x=x0, last_t=0.2)
        t = 0.35
        out = kn.step(kern, state, ev.SpikeBatch(t=t, values=values), terms=8)
        dt = t - 0.2
        a_s = hippo.adaptive_matrix(kern, dt)
        expected = (
            kn.expm_taylor(a_s, dt, terms=8, radius=np.inf) @ x0
            + kn.phi_matrix(a_s, dt, terms=8) @ (kern.B @ values)
        )
        assert out.x == pytest.approx(expected, abs=1e-12)

    def test_temporal_order_error(self):
        kern = make_fixed_kernel(-np.eye(2), np.ones((2, 1)))
        state = kn.KernelState(x=np.zeros(2), last_t=1.0)
        with pytest.raises(kn.TemporalOrderError):
            kn.step(kern, state, ev.SpikeBatch(t=0.5, values=np.zeros(1)))

    def test_semigroup_with_fixed_matrix(self):
        # alpha = 0 so the adapted matrix is interval independent
        rng = np.random.default_rng(4)
        g = rng.normal(size=(6, 6))
        a_dyn = -(g.T @ g / 6 + 0.1 * np.eye(6))
        kern = make_fixed_kernel(a_dyn, np.zeros((6, 1)))
        x0 = rng.normal(size=6)
        dt1, dt2 = 0.3, 0.45
        zero = np.zeros(1)
        terms = 10
        two = kn.step(
            kern,
            kn.step(kern, kn.KernelState(x=x0), ev.SpikeBatch(t=dt1, values=zero), terms=terms),
            ev.SpikeBatch(t=dt1 + dt2, values=zero),
            terms=terms,
        )
        one = kn.step(
            kern, kn.KernelState(x=x0), ev.SpikeBatch(t=dt1 + dt2, values=zero), terms=terms
        )
        norm_a = kn.spectral_norm(a_dyn)
        tol = 2 * taylor_error_bound(norm_a * (dt1 + dt2), terms) * np.linalg.norm(x0)
        assert np.linalg.norm(two.x - one.x) <= tol

    def test_dt_clamp_applies(self):
        a_dyn = -np.eye(2)
        kern = make_fixed_kernel(a_dyn, np.zeros((2, 1)), dt_max=1.0)
        x0 = np.array([1.0, 1.0])
        out = kn.step(kern, kn.KernelState(x=x0), ev.SpikeBatch(t=50.0, values=np.zeros(1)), terms=8)
        clamped = kn.expm_taylor(a_dyn, 1.0, terms=8) @ x0
        assert out.x == pytest.approx(clamped, abs=1e-12)

    def test_gradient_linear_in_drive(self):
        # central differences on ||x'||^2 with respect to entries of B
        rng = np.random.default_rng(6)
        kern = hippo.make_kernel(order=5, input_dim=3, alpha0=0.5, seed=7)
        x0 = rng.normal(size=5)
        values = rng.normal(size=3)
        t, t0 = 0.7, 0.1

        def loss(b):
            k2 = dataclasses.replace(kern, B=b)
            out = kn.step(
                k2, kn.KernelState(x=x0, last_t=t0), ev.SpikeBatch(t=t, values=values)
            )
            return float(out.x @ out.x)

        out = kn.step(
            kern, kn.KernelState(x=x0, last_t=t0), ev.SpikeBatch(t=t, values=values)
        )
        a_s = hippo.adaptive_matrix(kern, t - t0)
        phi = kn.phi_matrix(a_s, t - t0, terms=8)
        analytic = 2.0 * np.outer(phi.T @ out.x, values)
        h = 1e-6
        for i, j in ((0, 0), (2, 1), (4, 2)):
            bp = kern.B.copy()
            bp[i, j] += h
            bm = kern.B.copy()
            bm[i, j] -= h
            fd = (loss(bp) - loss(bm)) / (2 * h)
            assert fd == pytest.approx(analytic[i, j], rel=1e-4)

    def test_norm_bound_trajectory(self):
        # envelope holds for a fixed symmetric-stable matrix and bounded inputs
        rng = np.random.default_rng(8)
        g = rng.normal(size=(6, 6))
        a_dyn = -(g.T @ g / 6 + 0.2 * np.eye(6))
        b = rng.normal(0, 1 / np.sqrt(6), size=(6, 2))
        kern = make_fixed_kernel(a_dyn, b)
        alpha = float(np.min(np.abs(np.linalg.eigvals(a_dyn).real)))
        norm_b = kn.spectral_norm(b)
        s_inf = 1.0
        x0 = rng.normal(size=6)
        state = kn.KernelState(x=x0)
        t = 0.0
        for _ in range(200):
            t += rng.uniform(0.01, 0.2 / kn.spectral_norm(a_dyn))
            values = rng.normal(size=2)
            values /= max(1.0, np.linalg.norm(values))
            state = kn.step(kern, state, ev.SpikeBatch(t=t, values=values), terms=10)
            envelope = np.linalg.norm(x0) * math.exp(-alpha * t) + (
                norm_b * s_inf / alpha
            ) * (1 - math.exp(-alpha * t))
            assert np.linalg.norm(state.x) <= envelope * (1 + 1e-6)


class TestReadout:
    def test_zero_state(self):
        kern = hippo.make_kernel(order=4, output_dim=3)
        assert np.all(kn.readout(kern, kn.KernelState.zeros(4)) == 0)

    def test_identity_coupling(self):
        kern = make_fixed_kernel(-np.eye(4), np.zeros((4, 1)), c=np.eye(4))
        x = np.array([1.0, 2.0, 3.0, 4.0])
        assert np.array_equal(kn.readout(kern, kn.KernelState(x=x)), x)

    def test_naive_product_oracle(self):
        rng = np.random.default_rng(9)
        c = rng.normal(size=(3, 5))
        kern = make_fixed_kernel(-np.eye(5), np.zeros((5, 1)), c=c)
        x = rng.normal(size=5)
        naive = np.array(
            [sum(c[i, j] * x[j] for j in range(5)) for i in range(3)]
        )
        assert kn.readout(kern, kn.KernelState(x=x)) == pytest.approx(
            naive, abs=1e-12
        )


class TestThreshold:
    def test_basic(self):
        assert kn.threshold_spikes(np.array([0.5, 1.5]), 1.0).tolist() == [0, 1]

    def test_strict_at_threshold(self):
        assert kn.threshold_spikes(np.array([1.0]), 1.0).tolist() == [0]

    def test_very_negative_threshold(self):
        assert kn.threshold_spikes(np.array([-5.0, 0.0, 5.0]), -1e12).tolist() == [
            1,
            1,
            1,
        ]

    def test_nonfinite_threshold_rejected(self):
        with pytest.raises(ValueError):
            kn.threshold_spikes(np.array([0.0]), math.inf)
