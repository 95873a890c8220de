from dataclasses import replace

import numpy as np
import pytest

from wdmrc import mrr, reservoir, tasks
from wdmrc.errors import ConfigError
from wdmrc.params import GHZ, ModelFlags, PhysicalParams, make_channels
from wdmrc.reservoir import ReadoutConfig

CFG = ReadoutConfig()


def linear_params():
    return replace(PhysicalParams(), feedback_coupling=0.0, tpa_coeff_m_per_W=0.0,
                   fca_cross_section_m2=0.0, thermo_optic_coeff_per_K=0.0, fcd_coeff_m3=0.0)


def streams_for(u_list, task_ids, channels, cfg=CFG, seeds=(1, 2, 3)):
    out = []
    for u, t, ch, s in zip(u_list, task_ids, channels, seeds):
        mask = reservoir.build_mask(t, cfg.virtual_nodes, s)
        out.append(reservoir.mask_and_upsample(u, mask, cfg, ch))
    return out


def test_readout_defaults_and_ratios():
    assert CFG.node_duration_s == pytest.approx(20e-12)
    assert CFG.steps_per_node == 10
    assert CFG.node_duration_s * CFG.virtual_nodes == pytest.approx(CFG.symbol_period_s)
    with pytest.raises(ConfigError):
        ReadoutConfig(step_s=3e-12)
    with pytest.raises(ConfigError):
        ReadoutConfig(virtual_nodes=0)


@pytest.mark.parametrize("task,lo,hi", [("narma10", 0, 1), ("classification", 0, 1),
                                        ("equalization", -1, 1)])
def test_mask_interval_and_determinism(task, lo, hi):
    m = reservoir.build_mask(task, 2000, 11)
    assert m.min() >= lo and m.max() <= hi
    assert np.array_equal(m, reservoir.build_mask(task, 2000, 11))
    assert not np.array_equal(m, reservoir.build_mask(task, 2000, 12))
    if task == "equalization":
        assert abs(m.mean()) < 0.1


def test_mask_errors():
    with pytest.raises(ValueError):
        reservoir.build_mask("xor", 10, 0)
    with pytest.raises(ValueError):
        reservoir.build_mask("narma10", 0, 0)


def test_levels_are_direct_products():
    levels = reservoir.node_levels([2.0], [0.5, 1.0], 0.0, "none")
    np.testing.assert_array_equal(levels, [1.0, 2.0])


def test_minmax_levels_span_unit_interval_plus_bias():
    levels = reservoir.node_levels([-1.0, 3.0], [0.5, -1.0], 0.3, "minmax")
    assert levels.min() == pytest.approx(0.3) and levels.max() == pytest.approx(1.3)


def test_stream_length_and_mean_power():
    p = PhysicalParams()
    ch = make_channels(p, [-3.0], [0.0])[0]
    u = np.random.default_rng(0).uniform(0, 0.5, 20)
    s = reservoir.mask_and_upsample(u, reservoir.build_mask("narma10", 50, 1), CFG, ch)
    assert len(s) == 20 * 50 * 10
    assert len(s.step_power_W) == 20 * 50 * 10
    assert s.step_power_W.mean() == pytest.approx(ch.avg_power_W, rel=1e-12)
    assert np.all(s.node_power_W >= 0)
    # the mask pattern repeats with period N
    ratio = s.node_power_W.reshape(20, 50)
    assert np.all(np.diff(np.argsort(ratio[0])) != 0.5)


def test_zero_input_gives_constant_bias_stream():
    p = PhysicalParams()
    ch = make_channels(p, [0.0], [0.0])[0]
    s = reservoir.mask_and_upsample(np.zeros(5), reservoir.build_mask("narma10", 50, 1), CFG, ch)
    np.testing.assert_allclose(s.node_power_W, ch.avg_power_W)


def test_negative_power_names_symbol():
    p = PhysicalParams()
    ch = make_channels(p, [0.0], [0.0])[0]
    cfg = replace(CFG, input_normalization="none", bias=0.3)
    u = np.array([0.1, 0.2, -5.0, 0.1])
    with pytest.raises(ConfigError, match="symbol 2"):
        reservoir.mask_and_upsample(u, np.ones(50), cfg, ch)


def test_zero_streams_give_zero_states():
    p = PhysicalParams()
    ch = make_channels(p, [0.0, 0.0], [0.0, -20.0])
    cfg = replace(CFG, bias=0.0, warmup_symbols=2)
    streams = streams_for([np.zeros(6), np.zeros(6)], ["narma10", "narma10"], ch, cfg)
    mats = reservoir.run_reservoir(streams, p, ch, cfg)
    for m in mats:
        assert m.rows == 4
        assert np.all(m.features == 0)
        assert np.all(m.values[:, -1] == 1)


@pytest.mark.parametrize("step_s,rtol", [(2e-12, 1e-3), (0.5e-12, 2e-6)])
def test_linear_ring_matches_closed_form_filter(step_s, rtol):
    # the tolerance follows the RK4 truncation error at |lambda*h| ~ 0.3 and 0.08
    p = linear_params()
    ch = make_channels(p, [-10.0], [-25.0])
    cfg = replace(CFG, warmup_symbols=0, step_s=step_s)
    u = np.random.default_rng(4).uniform(0, 0.5, 10)
    (stream,) = streams_for([u], ["narma10"], ch, cfg)
    (mat,) = reservoir.run_reservoir([stream], p, ch, cfg)

    lam = 1j * ch[0].carrier_detuning_rad_s - p.linear_loss_rate
    kc = p.coupling_coeff
    h = cfg.step_s
    grow = np.exp(lam * h)
    a = 0j
    expected = []
    for field in stream.node_field:
        acc = 0j
        for _ in range(cfg.steps_per_node):
            acc += 1j * kc * a
            a = grow * a + 1j * kc * field * (grow - 1.0) / lam
        expected.append(abs(acc / cfg.steps_per_node) ** 2 / 1e-3)
    np.testing.assert_allclose(mat.features.ravel(), expected, rtol=rtol)


def test_node_average_equals_mean_of_solver_samples():
    p = PhysicalParams()
    ch = make_channels(p, [2.0], [-30.0])
    cfg = replace(CFG, warmup_symbols=0)
    u = np.random.default_rng(5).uniform(0, 0.5, 2)
    (stream,) = streams_for([u], ["narma10"], ch, cfg)
    (mat,) = reservoir.run_reservoir([stream], p, ch, cfg)
    state = mrr.ReservoirState.zeros(1, 250)
    t = 0.0
    sums = []
    for field in stream.node_field:
        total = 0j
        for _ in range(cfg.steps_per_node):
            state, s = mrr.rk4_step(state, t, cfg.step_s, lambda _t: np.array([field], complex), p, ch)
            total = total + s.e_drop[0]
            t += cfg.step_s
        sums.append(abs(total / 10) ** 2 / 1e-3)
    np.testing.assert_allclose(mat.features.ravel(), sums, rtol=1e-9)


def _three_channel_states(p, powers, u2_zero=False, cfg=None, length=600):
    cfg = cfg or replace(CFG, warmup_symbols=100)
    ch = make_channels(p, powers, [-60.0, -45.0, -20.0], list(tasks.TASK_IDS))
    ds = [tasks.generate(t, length, 0) for t in tasks.TASK_IDS]
    us = [d.drive for d in ds]
    if u2_zero:
        us[2] = np.zeros(length)
        cfg_zero = replace(cfg, bias=0.0)
        mask = reservoir.build_mask("equalization", cfg.virtual_nodes, 3)
        streams = streams_for(us[:2], tasks.TASK_IDS[:2], ch[:2], cfg)
        streams.append(reservoir.mask_and_upsample(us[2], mask, cfg_zero, ch[2]))
    else:
        streams = streams_for(us, tasks.TASK_IDS, ch, cfg)
    return reservoir.run_reservoir(streams, p, ch, cfg)


def test_cross_channel_coupling_at_high_power():
    p = PhysicalParams()
    on = _three_channel_states(p, [0.0, 0.0, 5.0])
    off = _three_channel_states(p, [0.0, 0.0, 5.0], u2_zero=True)
    for k in range(2):
        rel = np.abs(on[k].features - off[k].features).max() / np.abs(on[k].features).max()
        assert rel > 1e-2


def test_cross_channel_coupling_vanishes_at_low_power():
    p = PhysicalParams()
    on = _three_channel_states(p, [-40.0] * 3)
    off = _three_channel_states(p, [-40.0] * 3, u2_zero=True)
    for k in range(2):
        rel = np.abs(on[k].features - off[k].features).max() / np.abs(on[k].features).max()
        assert rel < 1e-3


def test_channel_permutation_permutes_state_matrices():
    p = PhysicalParams()
    ch = make_channels(p, [0.0, -10.0, 8.0], [-60.0, -45.0, -20.0])
    ds = [tasks.generate(t, 240, 1) for t in tasks.TASK_IDS]
    streams = streams_for([d.drive for d in ds], tasks.TASK_IDS, ch)
    cfg = replace(CFG, warmup_symbols=0)
    ref = reservoir.run_reservoir(streams, p, ch, cfg)
    perm = [1, 2, 0]
    ch_p = [replace(ch[k], index=i) for i, k in enumerate(perm)]
    out = reservoir.run_reservoir([streams[k] for k in perm], p, ch_p, cfg)
    for i, k in enumerate(perm):
        np.testing.assert_allclose(out[i].values, ref[k].values, rtol=1e-8, atol=1e-14)


def test_echo_state_forgets_initial_amplitudes():
    p = PhysicalParams()
    cfg = replace(CFG, warmup_symbols=1000)
    ch = make_channels(p, [0.0, -10.0, 15.0], [-60.0, -45.0, -20.0], list(tasks.TASK_IDS))
    ds = [tasks.generate(t, 1500, 2) for t in tasks.TASK_IDS]
    streams = streams_for([d.drive for d in ds], tasks.TASK_IDS, ch, cfg)
    base = reservoir.run_reservoir(streams, p, ch, cfg)
    init = mrr.ReservoirState.zeros(3, 250)
    init.modal_amplitudes[:] = np.array([1e-13, 2e-13j, -1e-13])
    pert = reservoir.run_reservoir(streams, p, ch, cfg, initial_state=init)
    for a, b in zip(base, pert):
        assert np.abs(a.values - b.values).max() <= 1e-6 * np.abs(a.values).max()


def test_state_matrix_properties_and_csv(tmp_path):
    p = PhysicalParams()
    ch = make_channels(p, [3.0], [-20.0], ["narma10"])
    cfg = replace(CFG, warmup_symbols=5)
    (stream,) = streams_for([tasks.generate("narma10", 25, 0).u], ["narma10"], ch, cfg)
    (mat,) = reservoir.run_reservoir([stream], p, ch, cfg)
    assert mat.values.shape == (20, 51)
    assert np.all(np.isfinite(mat.values)) and np.all(mat.values >= 0)
    path = tmp_path / "s.csv"
    mat.to_csv(path)
    back = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(back, mat.values)


def test_streams_must_match():
    p = PhysicalParams()
    ch = make_channels(p, [0.0, 0.0], [0.0, 10.0])
    a, b = streams_for([np.ones(4), np.ones(5)], ["narma10"] * 2, ch)
    with pytest.raises(ValueError):
        reservoir.run_reservoir([a, b], p, ch, CFG)
    with pytest.raises(ValueError):
        reservoir.run_reservoir([a], p, ch, CFG)
