from dataclasses import replace

import numpy as np
import pytest

from wdmrc import kernel, mrr
from wdmrc.errors import IntegrationDiverged
from wdmrc.params import GHZ, ModelFlags, PhysicalParams, make_channels


def no_feedback():
    return replace(PhysicalParams(), feedback_coupling=0.0)


def run_reference(state, params, channels, field, steps, h, t0=0.0, flags=ModelFlags()):
    samples = []
    t = t0
    for _ in range(steps):
        state, s = mrr.rk4_step(state, t, h, lambda _t: field, params, channels, flags)
        samples.append(s)
        t += h
    return state, samples


def cold_decay_error(h, horizon=200e-12, detuning_ghz=20.0):
    p = no_feedback()
    ch = make_channels(p, [-40.0], [detuning_ghz])
    a0 = 1e-15 + 0.5e-15j
    state = mrr.ReservoirState.zeros(1, mrr.delay_steps_for(p, h))
    state.modal_amplitudes[:] = a0
    steps = round(horizon / h)
    state, _ = run_reference(state, p, ch, np.zeros(1, complex), steps, h)
    exact = a0 * np.exp((1j * detuning_ghz * GHZ - p.linear_loss_rate) * steps * h)
    return abs(state.modal_amplitudes[0] - exact) / abs(exact)


def test_rk4_convergence_order():
    errs = [cold_decay_error(h) for h in (4e-12, 2e-12, 1e-12)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 4.0) <= 0.2), orders


def test_single_step_matches_taylor_series():
    p = no_feedback()
    ch = make_channels(p, [-40.0], [10.0])
    h = 2e-12
    state = mrr.ReservoirState.zeros(1, 250)
    state.modal_amplitudes[:] = 1e-15
    new, _ = mrr.rk4_step(state, 0.0, h, lambda _t: np.zeros(1), p, ch)
    z = (1j * 10 * GHZ - p.linear_loss_rate) * h
    taylor = 1 + z + z ** 2 / 2 + z ** 3 / 6 + z ** 4 / 24
    assert new.modal_amplitudes[0] / 1e-15 == pytest.approx(taylor, rel=1e-12)


@pytest.mark.parametrize("detuning_linewidths", [-3.0, -1.5, -0.5, 0.0, 0.7, 2.0, 3.0])
def test_linear_regime_matches_lorentzian(detuning_linewidths):
    p = no_feedback()
    gamma = p.linear_loss_rate
    delta = detuning_linewidths * gamma
    ch = make_channels(p, [-40.0], [delta / GHZ])
    power = ch[0].avg_power_W
    drive = np.full((1, 100), np.sqrt(power))
    _, state, bad = kernel.run_nodes(drive, p, ch, 10, 2e-12, ModelFlags())
    assert bad == -1
    expected = mrr.linear_steady_state_energy(p, delta, power)
    assert abs(state.modal_amplitudes[0]) ** 2 == pytest.approx(expected, rel=1e-2)


def test_linear_spectrum_conserves_energy_without_loss():
    p = replace(PhysicalParams(), attenuation_per_m=0.0)
    grid = np.linspace(-100, 100, 41) * GHZ
    through, drop = mrr.linear_transmission_spectrum(p, grid)
    np.testing.assert_allclose(through + drop, 1.0, rtol=1e-12)


def test_linear_spectrum_drop_peak_and_symmetry():
    p = PhysicalParams()
    grid = np.linspace(-50, 50, 101) * GHZ
    _, drop = mrr.linear_transmission_spectrum(p, grid)
    assert np.argmax(drop) == 50
    np.testing.assert_allclose(drop, drop[::-1], rtol=1e-12)


def test_kernel_matches_reference_with_feedback():
    p = PhysicalParams()
    ch = make_channels(p, [0.0, -10.0, 10.0], [-60.0, -45.0, -20.0])
    K, nodes, h = 10, 80, 2e-12
    rng = np.random.default_rng(3)
    power = np.vstack([c.avg_power_W * rng.uniform(0.2, 1.8, nodes) for c in ch])
    drive = np.sqrt(power)
    out, kstate, bad = kernel.run_nodes(drive, p, ch, K, h, ModelFlags())
    assert bad == -1

    state = mrr.ReservoirState.zeros(3, 250)
    ref = np.zeros((3, nodes), complex)
    t = 0.0
    for j in range(nodes):
        field = drive[:, j].astype(complex)
        for _ in range(K):
            state, s = mrr.rk4_step(state, t, h, lambda _t: field, p, ch)
            ref[:, j] += s.e_drop / K
            t += h
    np.testing.assert_allclose(out, ref, rtol=1e-10, atol=1e-12 * np.abs(ref).max())
    np.testing.assert_allclose(kstate.modal_amplitudes, state.modal_amplitudes, rtol=1e-10)
    assert kstate.excess_carriers_m3 == pytest.approx(state.excess_carriers_m3, rel=1e-10)
    assert kstate.excess_temp_K == pytest.approx(state.excess_temp_K, rel=1e-10)


@pytest.mark.parametrize("flags", [ModelFlags(literal_heat_source=True),
                                   ModelFlags(literal_drop_field=True)])
def test_kernel_matches_reference_literal_forms(flags):
    p = PhysicalParams()
    ch = make_channels(p, [5.0], [-30.0])
    drive = np.full((1, 30), np.sqrt(ch[0].avg_power_W))
    out, kstate, _ = kernel.run_nodes(drive, p, ch, 10, 2e-12, flags)
    state = mrr.ReservoirState.zeros(1, 250)
    ref = np.zeros(30, complex)
    for j in range(30):
        for _ in range(10):
            state, s = mrr.rk4_step(state, 0.0, 2e-12, lambda _t: drive[:, 0].astype(complex),
                                    p, ch, flags)
            ref[j] += s.e_drop[0] / 10
    np.testing.assert_allclose(out[0], ref, rtol=1e-10)
    assert kstate.excess_temp_K == pytest.approx(state.excess_temp_K, rel=1e-10)


def test_zero_history_gives_no_add_field_during_first_delay():
    p = PhysicalParams()
    ch = make_channels(p, [0.0], [0.0])
    state = mrr.ReservoirState.zeros(1, 250)
    field = np.array([np.sqrt(1e-3)], complex)
    for k in range(250):
        state, s = mrr.rk4_step(state, k * 2e-12, 2e-12, lambda _t: field, p, ch)
        assert s.e_add[0] == 0
    _, s = mrr.rk4_step(state, 250 * 2e-12, 2e-12, lambda _t: field, p, ch)
    # one delay later the looped-back through field arrives
    assert abs(s.e_add[0]) > 0


def test_feedback_delivers_delayed_through_field():
    p = PhysicalParams()
    ch = make_channels(p, [0.0], [0.0])
    state = mrr.ReservoirState.zeros(1, 250)
    field = np.array([np.sqrt(1e-3)], complex)
    samples = []
    for k in range(260):
        state, s = mrr.rk4_step(state, k * 2e-12, 2e-12, lambda _t: field, p, ch)
        samples.append(s)
    loop = 0.95 * np.exp(-1j * p.loop_phase_rad)
    for k in range(250, 260):
        past = samples[k - 250]
        through = past.e_in[0] + (past.e_drop[0] - past.e_add[0])
        assert samples[k].e_add[0] == pytest.approx(loop * through, rel=1e-12)


def test_delay_must_be_integer_multiple_and_two_steps():
    p = PhysicalParams()
    with pytest.raises(ValueError):
        mrr.delay_steps_for(p, 3e-12)
    with pytest.raises(ValueError):
        mrr.ReservoirState.zeros(1, 1)
    assert mrr.delay_steps_for(p, 2e-12) == 250


def test_zero_input_fixed_point():
    p = PhysicalParams()
    ch = make_channels(p, [0.0, 0.0], [-10.0, 10.0])
    state = mrr.ReservoirState.zeros(2, 250)
    state, samples = run_reference(state, p, ch, np.zeros(2, complex), 20, 2e-12)
    assert np.all(state.modal_amplitudes == 0)
    assert state.excess_carriers_m3 == 0 and state.excess_temp_K == 0
    assert all(np.all(s.e_drop == 0) for s in samples)


def test_carriers_and_temperature_stay_non_negative():
    p = PhysicalParams()
    ch = make_channels(p, [10.0, 0.0, 5.0], [-20.0, 0.0, 30.0])
    rng = np.random.default_rng(0)
    drive = np.sqrt(np.vstack([c.avg_power_W * rng.uniform(0, 2, 400) for c in ch]))
    state = None
    for block in np.split(drive, 40, axis=1):
        _, state, bad = kernel.run_nodes(block, p, ch, 10, 2e-12, ModelFlags(), state)
        assert bad == -1
        assert state.excess_carriers_m3 >= 0 and state.excess_temp_K >= 0


def test_decay_after_switch_off():
    p = PhysicalParams()
    ch = make_channels(p, [5.0], [-40.0])
    on = np.full((1, 2000), np.sqrt(ch[0].avg_power_W))
    _, state, _ = kernel.run_nodes(on, p, ch, 10, 2e-12, ModelFlags())
    n_prev, t_prev = state.excess_carriers_m3, state.excess_temp_K
    # skip one delay so the loop has emptied, then track node-end values
    _, state, _ = kernel.run_nodes(np.zeros((1, 25)), p, ch, 10, 2e-12, ModelFlags(), state)
    peaks = []
    carriers, temps = [], []
    for _ in range(20):
        out, state, _ = kernel.run_nodes(np.zeros((1, 25)), p, ch, 10, 2e-12, ModelFlags(), state)
        peaks.append(np.abs(state.amplitude_delay_lines).max())
        carriers.append(state.excess_carriers_m3)
        temps.append(state.excess_temp_K)
    assert np.all(np.diff(peaks) <= 0)
    assert np.all(np.diff(carriers) < 0) and np.all(np.diff(temps) < 0)
    assert peaks[-1] < 1e-2 * peaks[0]
    assert carriers[0] < n_prev * 1.0001 and temps[0] < t_prev * 1.0001


def test_channel_permutation_symmetry():
    p = PhysicalParams()
    res_order = make_channels(p, [0.0, -5.0, 8.0], [-50.0, -30.0, -10.0])
    perm = [2, 0, 1]
    permuted = tuple(replace(res_order[k], index=i) for i, k in enumerate(perm))
    rng = np.random.default_rng(1)
    drive = np.sqrt(np.vstack([c.avg_power_W * rng.uniform(0.5, 1.5, 300) for c in res_order]))
    out, s1, _ = kernel.run_nodes(drive, p, res_order, 10, 2e-12, ModelFlags())
    out_p, s2, _ = kernel.run_nodes(drive[perm], p, permuted, 10, 2e-12, ModelFlags())
    np.testing.assert_allclose(out_p, out[perm], rtol=1e-9, atol=1e-12 * np.abs(out).max())
    assert s2.excess_temp_K == pytest.approx(s1.excess_temp_K, rel=1e-9)


def test_kernel_is_deterministic():
    p = PhysicalParams()
    ch = make_channels(p, [0.0, 3.0], [-20.0, 20.0])
    drive = np.sqrt(np.vstack([np.linspace(1e-4, 2e-3, 200), np.linspace(2e-3, 1e-4, 200)]))
    a, _, _ = kernel.run_nodes(drive, p, ch, 10, 2e-12, ModelFlags())
    b, _, _ = kernel.run_nodes(drive, p, ch, 10, 2e-12, ModelFlags())
    assert np.array_equal(a, b)


def test_state_not_mutated_by_run_nodes():
    p = PhysicalParams()
    ch = make_channels(p, [0.0], [0.0])
    state = mrr.ReservoirState.zeros(1, 250)
    before = state.copy()
    kernel.run_nodes(np.full((1, 10), 0.03), p, ch, 10, 2e-12, ModelFlags(), state)
    assert np.array_equal(state.amplitude_delay_lines, before.amplitude_delay_lines)
    assert state.cursor == before.cursor


def test_divergence_raises_with_time():
    p = PhysicalParams()
    ch = make_channels(p, [0.0], [0.0])
    state = mrr.ReservoirState.zeros(1, 250)
    state.modal_amplitudes[:] = np.nan
    with pytest.raises(IntegrationDiverged) as info:
        mrr.rk4_step(state, 0.0, 2e-12, lambda _t: np.zeros(1), p, ch)
    assert info.value.time_s == pytest.approx(2e-12)
    assert "channel 0" in info.value.component
