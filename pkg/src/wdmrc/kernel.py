"""Compiled RK4 integrator for long reservoir runs.

The equations are those of :mod:`wdmrc.mrr`, rescaled so every state variable
is of order one:

========================  =========================================
time                      t / tau_c
bus fields                E / sqrt(P0),          P0 = 1 mW
modal amplitude           a / sqrt(P0 * tau_c)
excess carrier density    DeltaN / 1e21 m^-3
excess temperature        DeltaT / 1 K
========================  =========================================

With this choice the input coupling becomes sqrt(2) and the coupling part
of the loss rate becomes exactly 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from . import mrr
from .params import ChannelConfig, ModelFlags, PhysicalParams

POWER_SCALE_W = 1e-3
CARRIER_SCALE_M3 = 1e21
TEMP_SCALE_K = 1.0

# coefficient vector layout
_PA0, _GT, _GN, _GC, _INV_FC, _GEN, _INV_TH, _HEAT, _KIN, _HLIT, _LITDROP = range(11)


@dataclass(frozen=True)
class Scales:
    time_s: float
    field_sqrtW: float
    amplitude_sqrtJ: float
    carriers_m3: float = CARRIER_SCALE_M3
    temp_K: float = TEMP_SCALE_K

    @classmethod
    def for_params(cls, params: PhysicalParams) -> "Scales":
        tau = params.coupling_lifetime_s
        return cls(tau, math.sqrt(POWER_SCALE_W), math.sqrt(POWER_SCALE_W * tau))


def normalized_coefficients(params: PhysicalParams, channels: Sequence[ChannelConfig],
                            flags: ModelFlags):
    """Real coefficients, complex port coefficients and per-channel detuning rows."""
    sc = Scales.for_params(params)
    tau = sc.time_s
    a0 = sc.amplitude_sqrtJ
    n = params.si_refractive_index

    cf = np.zeros(11)
    cf[_PA0] = params.intrinsic_loss_rate * tau
    cf[_GT] = mrr.tpa_loss_coeff(params) * a0 ** 2 * tau
    cf[_GN] = mrr.fca_loss_coeff(params) * sc.carriers_m3 * tau
    cf[_GC] = 2.0 / params.coupling_lifetime_s * tau
    cf[_INV_FC] = tau / params.carrier_lifetime_s
    cf[_GEN] = tau * mrr.carrier_generation_coeff(params) * a0 ** 4 / sc.carriers_m3
    cf[_INV_TH] = tau / params.thermal_lifetime_s
    # P_abs = (a0^2 / tau) * [normalized rate] * |a'|^2, and d/ds = tau d/dt
    cf[_HEAT] = params.thermal_confinement / params.heat_capacity_J_per_K * a0 ** 2 / sc.temp_K
    cf[_KIN] = params.coupling_coeff * tau * sc.field_sqrtW / a0
    cf[_HLIT] = a0 ** 2 if flags.literal_heat_source else 0.0
    cf[_LITDROP] = 1.0 if flags.literal_drop_field else 0.0

    loop = params.feedback_coupling * np.exp(-1j * params.loop_phase_rad)
    if flags.literal_feedback_coupling:
        c_thr = a0 / sc.field_sqrtW / params.coupling_lifetime_s
    else:
        c_thr = 1j * params.coupling_coeff * a0 / sc.field_sqrtW
    if flags.literal_drop_field:
        c_drop = a0 / params.coupling_lifetime_s
    else:
        c_drop = 1j * params.coupling_coeff * a0 / sc.field_sqrtW
    cc = np.array([loop, c_thr, c_drop], dtype=np.complex128)

    res = np.array([ch.resonance_freq_rad_s for ch in channels])
    det = np.empty((3, len(channels)))
    det[0] = [ch.carrier_detuning_rad_s * tau for ch in channels]
    det[1] = res / n * params.fcd_coeff_m3 * sc.carriers_m3 * tau
    det[2] = res / n * params.thermo_optic_coeff_per_K * sc.temp_K * tau
    return cf, cc, det


@numba.njit(cache=True, inline="always")
def _rhs(a, nc, tk, ein, eadd, cf, det, da):
    src_n = 0.0
    src_t = 0.0
    for i in range(a.shape[0]):
        e = a[i].real * a[i].real + a[i].imag * a[i].imag
        delta = det[0, i] + det[1, i] * nc + det[2, i] * tk
        gabs = cf[_PA0] + cf[_GT] * e + cf[_GN] * nc
        gamma = gabs + cf[_GC]
        da[i] = complex(-gamma, delta) * a[i] + 1j * cf[_KIN] * (ein[i] + eadd[i])
        src_n += e * e
        if cf[_HLIT] != 0.0:
            src_t += gabs * e * e * cf[_HLIT]
        else:
            src_t += gabs * e
    dn = -cf[_INV_FC] * nc + cf[_GEN] * src_n
    dt = -cf[_INV_TH] * tk + cf[_HEAT] * src_t
    return dn, dt


@numba.njit(cache=True)
def integrate(drive, steps_per_node, h, cf, cc, det, a, nt,
              hist_e, hist_a, hist_d, cursor):
    """Integrate over every node of ``drive`` (channels x nodes, normalized field).

    State arrays ``a``, ``nt`` = [DeltaN', DeltaT'], the delay lines and the
    returned cursor are updated in place. Returns the node-averaged drop
    field (channels x nodes), the new cursor and the index of the first
    node whose end state was non-finite (-1 if none).
    """
    m = drive.shape[0]
    n_nodes = drive.shape[1]
    dlen = hist_e.shape[1]
    out = np.zeros((m, n_nodes), dtype=np.complex128)
    loop = cc[0]
    c_thr = cc[1]
    c_drop = cc[2]
    lit_drop = cf[_LITDROP] != 0.0

    ein = np.empty(m, dtype=np.complex128)
    e0 = np.empty(m, dtype=np.complex128)
    emid = np.empty(m, dtype=np.complex128)
    e1 = np.empty(m, dtype=np.complex128)
    k1 = np.empty(m, dtype=np.complex128)
    k2 = np.empty(m, dtype=np.complex128)
    k3 = np.empty(m, dtype=np.complex128)
    k4 = np.empty(m, dtype=np.complex128)
    y = np.empty(m, dtype=np.complex128)
    inv_k = 1.0 / steps_per_node

    nc = nt[0]
    tk = nt[1]
    for node in range(n_nodes):
        for i in range(m):
            ein[i] = drive[i, node]
        for _ in range(steps_per_node):
            old = cursor
            new = cursor + 1
            if new == dlen:
                new = 0
            for i in range(m):
                a0d = hist_a[i, old]
                a1d = hist_a[i, new]
                amid = 0.5 * (a0d + a1d) + 0.125 * h * (hist_d[i, old] - hist_d[i, new])
                base = hist_e[i, old]
                e0[i] = loop * (base + c_thr * a0d)
                emid[i] = loop * (base + c_thr * amid)
                e1[i] = loop * (base + c_thr * a1d)

            dn1, dt1 = _rhs(a, nc, tk, ein, e0, cf, det, k1)
            for i in range(m):
                y[i] = a[i] + 0.5 * h * k1[i]
            dn2, dt2 = _rhs(y, nc + 0.5 * h * dn1, tk + 0.5 * h * dt1, ein, emid, cf, det, k2)
            for i in range(m):
                y[i] = a[i] + 0.5 * h * k2[i]
            dn3, dt3 = _rhs(y, nc + 0.5 * h * dn2, tk + 0.5 * h * dt2, ein, emid, cf, det, k3)
            for i in range(m):
                y[i] = a[i] + h * k3[i]
            dn4, dt4 = _rhs(y, nc + h * dn3, tk + h * dt3, ein, e1, cf, det, k4)

            for i in range(m):
                if lit_drop:
                    out[i, node] += c_drop * a[i] * ein[i] + e0[i]
                else:
                    out[i, node] += c_drop * a[i] + e0[i]
                hist_e[i, old] = ein[i].real
                hist_a[i, old] = a[i]
                hist_d[i, old] = k1[i]
                a[i] = a[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            nc = nc + h / 6.0 * (dn1 + 2.0 * dn2 + 2.0 * dn3 + dn4)
            tk = tk + h / 6.0 * (dt1 + 2.0 * dt2 + 2.0 * dt3 + dt4)
            cursor = new

        for i in range(m):
            out[i, node] *= inv_k
        ok = math.isfinite(nc) and math.isfinite(tk)
        for i in range(m):
            if not (math.isfinite(a[i].real) and math.isfinite(a[i].imag)):
                ok = False
        if not ok:
            nt[0] = nc
            nt[1] = tk
            return out, cursor, node
    nt[0] = nc
    nt[1] = tk
    return out, cursor, -1


def run_nodes(drive_sqrtW: np.ndarray, params: PhysicalParams,
              channels: Sequence[ChannelConfig], steps_per_node: int, step_s: float,
              flags: ModelFlags, state: "mrr.ReservoirState | None" = None):
    """Drive the ring with node-held input fields (sqrt(W), channels x nodes).

    Returns ``(drop_fields, state, bad_node)``: node-averaged drop fields in
    sqrt(W), the SI state after the last integrated node and the index of the
    first diverged node (-1 when finite throughout). ``state`` is not mutated.
    """
    drive = np.ascontiguousarray(drive_sqrtW, dtype=np.float64)
    m = len(channels)
    if drive.ndim != 2 or drive.shape[0] != m:
        raise ValueError("drive must have shape (channels, nodes)")
    sc = Scales.for_params(params)
    delay = mrr.delay_steps_for(params, step_s)
    if state is None:
        state = mrr.ReservoirState.zeros(m, delay)
    if state.delay_steps != delay or state.channels != m:
        raise ValueError("state does not match the channel count or delay length")

    cf, cc, det = normalized_coefficients(params, channels, flags)
    a = state.modal_amplitudes.astype(np.complex128) / sc.amplitude_sqrtJ
    nt = np.array([state.excess_carriers_m3 / sc.carriers_m3, state.excess_temp_K / sc.temp_K])
    hist_e = np.ascontiguousarray(state.input_delay_lines.real / sc.field_sqrtW)
    hist_a = np.ascontiguousarray(state.amplitude_delay_lines / sc.amplitude_sqrtJ)
    hist_d = np.ascontiguousarray(state.amplitude_rate_lines * sc.time_s / sc.amplitude_sqrtJ)

    out, cursor, bad = integrate(drive / sc.field_sqrtW, int(steps_per_node),
                                 step_s / sc.time_s, cf, cc, det, a, nt,
                                 hist_e, hist_a, hist_d, state.cursor)
    # a diverged state holds inf/nan; rescaling it must not warn
    with np.errstate(invalid="ignore", over="ignore"):
        new_state = mrr.ReservoirState(
            a * sc.amplitude_sqrtJ, float(nt[0] * sc.carriers_m3), float(nt[1] * sc.temp_K),
            hist_e.astype(np.complex128) * sc.field_sqrtW, hist_a * sc.amplitude_sqrtJ,
            hist_d * sc.amplitude_sqrtJ / sc.time_s, int(cursor))
        fields = out * sc.field_sqrtW
    return fields, new_state, int(bad)
