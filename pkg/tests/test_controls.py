"""Pulse parametrizations: evaluation, filtering, gradients, guesses, IO."""

import numpy as np
import pytest
from scipy.special import erf

from crqoc.controls import (
    ENVELOPE_NAMES,
    FilterSpec,
    FineControls,
    FourierAnsatz,
    FourierSpec,
    PwcPulse,
    PwcSpec,
    TwoCarrierPulse,
    TwoCarrierSpec,
    assemble_two_carrier,
    controls_from_csv,
    controls_to_csv,
    eval_fourier,
    eval_pwc,
    filter_matrix,
    fourier_param_grad,
    gaussian_filter,
    initial_guess_cr,
    random_init,
    write_ansatz_json,
)
from crqoc.model import TWO_PI, DeviceParams

from conftest import assert_grad_close


class TestPwcPulse:
    def test_zero_pulse_evaluates_to_zero(self):
        pulse = PwcPulse.uniform(np.zeros((10, 4)), 5.0)
        np.testing.assert_array_equal(eval_pwc(pulse, 2.34), np.zeros(4))

    def test_boundary_belongs_to_later_slice(self):
        pulse = PwcPulse.uniform(np.array([[1.0], [2.0]]), 2.0)
        assert eval_pwc(pulse, 1.0)[0] == 2.0
        assert eval_pwc(pulse, 0.0)[0] == 1.0

    def test_end_time_belongs_to_last_slice(self):
        pulse = PwcPulse.uniform(np.array([[1.0], [2.0]]), 2.0)
        assert eval_pwc(pulse, 2.0)[0] == 2.0

    def test_domain_errors(self):
        pulse = PwcPulse.uniform(np.ones((4, 1)), 2.0)
        with pytest.raises(ValueError):
            eval_pwc(pulse, -0.1)
        with pytest.raises(ValueError):
            eval_pwc(pulse, 2.1)

    def test_durations_sum_to_total(self):
        pulse = PwcPulse.uniform(np.ones((7, 2)), 3.5)
        assert abs(np.sum(pulse.durations) - 3.5) <= 1e-12

    def test_bound_enforced(self):
        with pytest.raises(ValueError):
            PwcPulse.uniform(np.full((4, 1), 2.0), 2.0, bound=1.0)

    def test_buffer_slices_must_be_zero(self):
        values = np.ones((10, 1))
        with pytest.raises(ValueError):
            PwcPulse.uniform(values, 10.0, buffer=2.0)
        values[:2] = 0.0
        values[-2:] = 0.0
        pulse = PwcPulse.uniform(values, 10.0, buffer=2.0)
        assert pulse.buffer == 2.0

    def test_fine_samples_reproduce_staircase(self):
        pulse = PwcPulse.uniform(np.array([[1.0], [-2.0]]), 2.0)
        fine = pulse.fine_samples(0.25)
        np.testing.assert_array_equal(fine.values[:, 0], [1, 1, 1, 1, -2, -2, -2, -2])


class TestGaussianFilter:
    def test_kernel_unit_sum(self):
        spec = FilterSpec(sigma=0.4, dt_fine=0.1)
        assert abs(spec.kernel().sum() - 1.0) <= 1e-12

    def test_zero_in_zero_out(self):
        pulse = PwcPulse.uniform(np.zeros((10, 2)), 5.0)
        out = gaussian_filter(pulse, FilterSpec(sigma=0.4, dt_fine=0.1))
        np.testing.assert_array_equal(out.values, 0.0)

    def test_plateau_passes_with_unit_gain(self):
        values = np.zeros((20, 1))
        values[4:16] = 1.7
        pulse = PwcPulse.uniform(values, 20.0, buffer=4.0)
        out = gaussian_filter(pulse, FilterSpec(sigma=0.4, dt_fine=0.2))
        interior = out.values[(out.times > 7.0) & (out.times < 13.0), 0]
        np.testing.assert_allclose(interior, 1.7, atol=1e-9)

    def test_rectangle_against_erf_and_oversampled_convolution(self):
        """1-ns unit rectangle: filtered trace equals the continuous
        erf difference, cross-checked by a 10x oversampled convolution."""
        sigma = 0.4
        spec = FilterSpec(sigma=sigma, dt_fine=0.1)
        values = np.zeros((20, 1))
        values[9:11] = 1.0  # rectangle on [4.5, 5.5)
        pulse = PwcPulse.uniform(values, 10.0)
        out = gaussian_filter(pulse, spec)

        def continuous(t):
            lo = (t - 4.5) / (sigma * np.sqrt(2))
            hi = (t - 5.5) / (sigma * np.sqrt(2))
            return 0.5 * (erf(lo) - erf(hi))

        np.testing.assert_allclose(out.values[:, 0], continuous(out.times), atol=2e-3)

        over = gaussian_filter(pulse, FilterSpec(sigma=sigma, dt_fine=0.01))
        near_center = np.argmin(np.abs(over.times - 5.0))
        expected = erf(0.5 / (sigma * np.sqrt(2)))
        assert over.values[near_center, 0] == pytest.approx(expected, abs=3e-4)
        coarse_center = np.argmin(np.abs(out.times - 5.0))
        assert out.values[coarse_center, 0] == pytest.approx(
            over.values[near_center, 0], abs=3e-3
        )

    def test_integral_preserved(self):
        rng = np.random.default_rng(5)
        values = np.zeros((30, 1))
        values[6:24] = rng.uniform(-1, 1, size=(18, 1))
        pulse = PwcPulse.uniform(values, 30.0, buffer=6.0)
        out = gaussian_filter(pulse, FilterSpec(sigma=0.4, dt_fine=0.1))
        before = np.sum(values) * 1.0
        after = np.sum(out.values) * 0.1
        assert after == pytest.approx(before, rel=1e-6)

    def test_linearity(self):
        rng = np.random.default_rng(6)
        spec = FilterSpec(sigma=0.4, dt_fine=0.1)
        p = rng.normal(size=(12, 2))
        q = rng.normal(size=(12, 2))
        a, b = 1.3, -0.7
        combo = gaussian_filter(PwcPulse.uniform(a * p + b * q, 6.0), spec).values
        parts = a * gaussian_filter(PwcPulse.uniform(p, 6.0), spec).values + (
            b * gaussian_filter(PwcPulse.uniform(q, 6.0), spec).values
        )
        np.testing.assert_allclose(combo, parts, atol=1e-12)

    @pytest.mark.parametrize("nu", [0.1, 0.25, 0.5, 1.0])
    def test_sinusoid_attenuation_matches_gaussian_transfer(self, nu):
        sigma, dtf, total = 0.4, 0.2, 60.0
        n = int(total / dtf)
        t = (np.arange(n) + 0.5) * dtf
        x = np.sin(TWO_PI * nu * t)[:, None]
        out = gaussian_filter(PwcPulse.uniform(x, total), FilterSpec(sigma, dtf))
        interior = slice(int(3 / dtf), n - int(3 / dtf))
        measured = (out.values[interior, 0] @ x[interior, 0]) / (
            x[interior, 0] @ x[interior, 0]
        )
        theory = np.exp(-((TWO_PI * nu) ** 2) * sigma**2 / 2)
        assert measured == pytest.approx(theory, rel=0.02)

    def test_resolution_error(self):
        pulse = PwcPulse.uniform(np.ones((4, 1)), 2.0)
        with pytest.raises(ValueError, match="resolve"):
            gaussian_filter(pulse, FilterSpec(sigma=0.4, dt_fine=0.5))

    def test_filter_matrix_consistent(self):
        rng = np.random.default_rng(7)
        values = rng.normal(size=(10, 3))
        pulse = PwcPulse.uniform(values, 10.0)
        spec = FilterSpec(sigma=0.4, dt_fine=0.2)
        w = filter_matrix(pulse, spec)
        np.testing.assert_allclose(
            w @ values, gaussian_filter(pulse, spec).values, atol=1e-13
        )


class TestFourierAnsatz:
    def make(self, comps=None, duration=20.0, bound=3.0):
        if comps is None:
            comps = (
                np.array([[0.5, 0.9, 0.3], [0.2, 2.2, 1.0]]),
                np.array([[0.4, 1.5, 2.0]]),
            )
        return FourierAnsatz(components=comps, duration=duration, bound=bound)

    def test_zero_amplitudes(self):
        ans = self.make(comps=(np.array([[0.0, 1.0, 0.5]]),) * 4)
        amps, _ = eval_fourier(ans, 7.3)
        np.testing.assert_array_equal(amps, 0.0)

    def test_unsaturated_component_matches_cosine(self):
        bound = 2.0
        amp = bound / 100
        ans = FourierAnsatz(
            components=(np.array([[amp, 1.1, 0.4]]),), duration=20.0, bound=bound
        )
        t = 10.0  # window plateau
        amps, window = eval_fourier(ans, t)
        assert window == pytest.approx(1.0, abs=1e-9)
        assert amps[0] == pytest.approx(amp * np.cos(1.1 * t + 0.4), abs=1e-6)

    def test_saturation_clamps_to_bound(self):
        bound = 2.0
        ans = FourierAnsatz(
            components=(np.array([[100 * bound, 0.0, 0.0]]),), duration=20.0, bound=bound
        )
        amps, _ = eval_fourier(ans, 10.0)
        assert abs(amps[0] - bound) <= 1e-6

    def test_bound_holds_everywhere(self):
        rng = np.random.default_rng(8)
        comps = tuple(
            np.column_stack(
                [rng.uniform(-5, 5, 6), rng.uniform(0, 6, 6), rng.uniform(0, TWO_PI, 6)]
            )
            for _ in range(4)
        )
        ans = FourierAnsatz(components=comps, duration=15.0, bound=2.5)
        for t in np.linspace(0, 15.0, 1501):
            assert np.all(np.abs(ans.amplitudes(t)) <= 2.5 + 1e-12)

    def test_smooth_start_and_finish(self):
        ans = self.make()
        for t in (0.0, ans.duration):
            assert np.all(np.abs(ans.amplitudes(t)) <= ans.bound * 1e-3)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            self.make().amplitudes(25.0)

    def test_param_grads_match_finite_differences(self):
        rng = np.random.default_rng(9)
        ans = self.make()
        x0 = ans.params
        for _ in range(100):
            t = rng.uniform(0, ans.duration)
            x = x0 + rng.normal(scale=0.1, size=x0.size)
            probe = ans.with_params(x)
            analytic = fourier_param_grad(probe, t)
            step = 1e-6
            for i in rng.choice(x.size, size=3, replace=False):
                xp, xm = x.copy(), x.copy()
                xp[i] += step
                xm[i] -= step
                fd = (
                    ans.with_params(xp).amplitudes(t)
                    - ans.with_params(xm).amplitudes(t)
                ) / (2 * step)
                assert_grad_close(analytic[:, i], fd, rel=1e-5, floor=1e-8)

    def test_phase_grad_zero_at_zero_amplitude(self):
        ans = FourierAnsatz(
            components=(np.array([[0.0, 1.3, 0.7]]),), duration=20.0, bound=2.0
        )
        grads = fourier_param_grad(ans, 9.0)
        assert grads[0, 2] == 0.0  # d/dphi carries the amplitude prefactor

    def test_frequency_grad_zero_at_t_zero(self):
        ans = FourierAnsatz(
            components=(np.array([[0.8, 1.3, 0.7]]),), duration=20.0, bound=2.0
        )
        grads = fourier_param_grad(ans, 0.0)
        assert grads[0, 1] == 0.0  # omega enters as omega * t

    def test_drop_component(self):
        ans = self.make()
        smaller = ans.drop_component(0, 1)
        assert smaller.counts == (1, 1)
        np.testing.assert_array_equal(smaller.components[0], ans.components[0][:1])


class TestInitialGuess:
    def test_peak_and_width(self, device_params):
        pulse, f = initial_guess_cr(device_params, 20.0, n_slices=4000)
        x2 = pulse.values[:, 2]
        t = pulse.edges[:-1] + np.diff(pulse.edges) / 2
        peak = np.argmax(x2)
        assert t[peak] == pytest.approx(10.0, abs=0.01)
        assert x2[peak] == pytest.approx(TWO_PI * 0.4, rel=1e-5)
        at_sigma = np.argmin(np.abs(t - 15.0))  # mu + sigma = T/2 + T/4
        # nearest midpoint sits dt/2 from t = mu + sigma, hence the slack
        assert x2[at_sigma] == pytest.approx(TWO_PI * 0.4 * np.exp(-0.5), rel=1e-3)
        assert f == (0.0, pytest.approx(TWO_PI * 0.1))

    def test_transmon1_untouched(self, device_params):
        pulse, _ = initial_guess_cr(device_params, 20.0)
        np.testing.assert_array_equal(pulse.values[:, :2], 0.0)

    def test_quadrature_is_scaled_derivative(self, device_params):
        pulse, _ = initial_guess_cr(device_params, 20.0, n_slices=2000)
        x2, y2 = pulse.values[:, 2], pulse.values[:, 3]
        dt = pulse.durations[0]
        numeric = np.gradient(x2, dt) / device_params.delta[1]
        np.testing.assert_allclose(y2[5:-5], numeric[5:-5], rtol=5e-4, atol=1e-6)
        # extrema sit at mu +- sigma and are antisymmetric
        assert y2[np.argmin(np.abs(pulse.edges[:-1] + dt / 2 - 5.0))] == pytest.approx(
            -y2[np.argmin(np.abs(pulse.edges[:-1] + dt / 2 - 15.0))], rel=1e-3
        )

    def test_domain_error(self, device_params):
        with pytest.raises(ValueError):
            initial_guess_cr(device_params, 0.0)


class TestTwoCarrier:
    def make_pulse(self, params, seed=11, duration=12.0):
        spec = TwoCarrierSpec.for_device(
            params.with_f((0.0, TWO_PI * 0.1)), duration, pixel=1.0, buffer=2.0,
            filter=FilterSpec(sigma=0.4, dt_fine=0.05),
        )
        return spec.make_pulse(random_init(spec, seed)), spec

    def test_carrier_frequencies(self, device_params):
        w1, w2 = TwoCarrierPulse.carriers_for(device_params.with_f((0.0, TWO_PI * 0.1)))
        assert abs(w1) / TWO_PI == pytest.approx(0.47, abs=1e-12)
        assert abs(w2) / TWO_PI == pytest.approx(0.67, abs=1e-12)

    def test_zero_modulated_envelopes_reduce_to_filtered_baseband(self, device_params):
        spec = TwoCarrierSpec.for_device(device_params, 10.0, pixel=1.0, buffer=2.0)
        x = random_init(spec, 3).reshape(spec.n_free_slices, 8)
        x[:, 1::2] = 0.0  # kill all double-prime envelopes
        pulse = spec.make_pulse(x.ravel())
        baseband = gaussian_filter(pulse.envelopes, pulse.filter).values[:, 0::2]
        np.testing.assert_allclose(pulse.assembled.values, baseband, atol=1e-14)

    def test_modulation_vanishes_at_cosine_zero(self, device_params):
        params = device_params.with_f((0.0, TWO_PI * 0.1))
        w1, _ = TwoCarrierPulse.carriers_for(params)
        t_zero = (np.pi / 2) / abs(w1)
        pulse, _ = self.make_pulse(params)
        env = gaussian_filter(pulse.envelopes, pulse.filter)
        amps = assemble_two_carrier(pulse, t_zero)
        j = min(int(t_zero / pulse.filter.dt_fine), env.n_samples - 1)
        cos_val = np.cos(pulse.carrier1 * env.times[j])
        expected = env.values[j, 0] + cos_val * env.values[j, 1]
        assert amps[0] == pytest.approx(expected, abs=1e-12)
        assert abs(cos_val) < 0.1  # modulation nearly off at this sample

    def test_assembly_matches_pointwise_oracle(self, device_params):
        """Assembled drives equal a scalar re-evaluation of the two-carrier
        composition, envelope by envelope."""
        pulse, _ = self.make_pulse(device_params, seed=12)
        filtered = [
            gaussian_filter(
                PwcPulse.uniform(pulse.envelopes.values[:, [c]], pulse.duration),
                pulse.filter,
            )
            for c in range(8)
        ]
        times = pulse.assembled.times
        carriers = (pulse.carrier1, pulse.carrier1, pulse.carrier2, pulse.carrier2)
        for j in [0, 57, 120, len(times) - 1]:
            t = times[j]
            for ctrl in range(4):
                prime = filtered[2 * ctrl].values[j, 0]
                double = filtered[2 * ctrl + 1].values[j, 0]
                expected = prime + np.cos(carriers[ctrl] * t) * double
                assert pulse.assembled.values[j, ctrl] == pytest.approx(
                    expected, abs=1e-12
                )


class TestRandomInit:
    def test_deterministic(self):
        spec = PwcSpec(duration=10.0, n_slices=50, bound=1.0)
        np.testing.assert_array_equal(random_init(spec, 42), random_init(spec, 42))

    def test_seeds_differ(self):
        spec = FourierSpec(duration=10.0, n_components=3, bound=2.0)
        assert not np.array_equal(random_init(spec, 1), random_init(spec, 2))

    def test_bounded_draw_within_bound(self):
        spec = PwcSpec(duration=10.0, n_slices=50, bound=0.7)
        assert np.all(np.abs(random_init(spec, 5)) <= 0.7)

    def test_fourier_draw_ranges(self):
        spec = FourierSpec(duration=10.0, n_components=5, bound=2.0, omega_max=3.0)
        x = random_init(spec, 13).reshape(4 * 5, 3)
        assert np.all(np.abs(x[:, 0]) <= 2.0 / 5)
        assert np.all((x[:, 1] >= 0) & (x[:, 1] <= 3.0))
        assert np.all((x[:, 2] >= 0) & (x[:, 2] < TWO_PI))


class TestIO:
    def test_csv_roundtrip(self, tmp_path):
        rng = np.random.default_rng(20)
        fine = FineControls(values=rng.normal(size=(40, 4)), dt=0.2)
        path = tmp_path / "pulse.csv"
        controls_to_csv(fine, path)
        back = controls_from_csv(path)
        assert back.dt == pytest.approx(0.2)
        np.testing.assert_allclose(back.values, fine.values, atol=1e-9)

    def test_csv_header_names(self, tmp_path):
        fine = FineControls(values=np.zeros((4, 8)), dt=0.5)
        path = tmp_path / "env.csv"
        controls_to_csv(fine, path, names=ENVELOPE_NAMES)
        header = path.read_text().splitlines()[0]
        assert header.startswith("t_ns,omega_x1p_GHz,omega_x1pp_GHz")

    def test_ansatz_json(self, tmp_path):
        spec = FourierSpec(duration=10.0, n_components=2, bound=2.0)
        x = random_init(spec, 3)
        path = tmp_path / "ansatz.json"
        write_ansatz_json(path, spec, x, seed=3)
        import json

        record = json.loads(path.read_text())
        assert record["ansatz"]["kind"] == "FourierSpec"
        assert record["seed"] == 3
        np.testing.assert_allclose(record["params"], x)
