"""Coupled-mode physics of the add-drop silicon ring with delayed feedback.

This module is the plain-numpy reference in SI units. It is written for
clarity and is used on short runs and in tests; long simulations go through
the compiled integrator in :mod:`wdmrc.kernel`, which solves the same
equations in normalized units.

Conventions
-----------
* Each channel amplitude ``a_i`` is a slowly varying envelope in a frame
  rotating at the carrier, in sqrt(J).
* Bus fields are in sqrt(W). Light leaving the ring into a bus picks up
  ``j*kappa_c*a_i``, the same coupling (and phase) used on the way in, so the
  cold cavity conserves energy.
* The input port is fed back to the add port through a waveguide of delay
  ``tau_d``: ``E_add(t) = kappa * exp(-j phi) * E_through(t - tau_d)``.
* Inputs are held constant over a solver step. Delayed amplitudes between two
  stored samples are recovered by cubic Hermite interpolation from the stored
  amplitude and its time derivative, so the delay term does not degrade the
  fourth-order accuracy of the step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import IntegrationDiverged
from .params import C_VACUUM, HBAR, ChannelConfig, ModelFlags, PhysicalParams

DEFAULT_FLAGS = ModelFlags()


def resonance_frequency(params: PhysicalParams, mode_number: int,
                        n_eff: float | None = None) -> float:
    """Angular frequency of the ring mode with ``mode_number`` wavelengths.

    The effective index defaults to the silicon refractive index.
    """
    if int(mode_number) != mode_number or mode_number < 1:
        raise ValueError(f"mode_number must be a positive integer, got {mode_number!r}")
    n = params.si_refractive_index if n_eff is None else n_eff
    return C_VACUUM / (n * params.radius_m) * int(mode_number)


def mode_number_near(params: PhysicalParams, wavelength_m: float,
                     n_eff: float | None = None) -> int:
    n = params.si_refractive_index if n_eff is None else n_eff
    return max(1, round(n * params.ring_circumference_m / wavelength_m))


def free_spectral_range(params: PhysicalParams, wavelength_m: float,
                        group_index: float | None = None) -> float:
    """Wavelength spacing lambda^2 / (2 pi R n_g) of adjacent resonances."""
    n_g = params.si_refractive_index if group_index is None else group_index
    if wavelength_m <= 0 or n_g <= 0:
        raise ValueError("wavelength and group index must be positive")
    return wavelength_m ** 2 / (2.0 * math.pi * params.radius_m * n_g)


@dataclass
class FieldSample:
    e_in: np.ndarray
    e_add: np.ndarray
    e_drop: np.ndarray

    def __post_init__(self) -> None:
        if not (len(self.e_in) == len(self.e_add) == len(self.e_drop)):
            raise ValueError("field arrays must have one entry per channel")


@dataclass
class ReservoirState:
    """Cavity state plus the delay-line history needed by the feedback loop.

    The delay lines hold the last ``D = tau_d / eta`` solver samples. Slot
    ``cursor`` holds the oldest one, i.e. the sample exactly one delay ago.
    """

    modal_amplitudes: np.ndarray
    excess_carriers_m3: float
    excess_temp_K: float
    input_delay_lines: np.ndarray
    amplitude_delay_lines: np.ndarray
    amplitude_rate_lines: np.ndarray
    cursor: int = 0

    @classmethod
    def zeros(cls, channels: int, delay_steps: int) -> "ReservoirState":
        if delay_steps < 2:
            raise ValueError("the feedback delay must span at least two solver steps")
        shape = (channels, delay_steps)
        return cls(np.zeros(channels, complex), 0.0, 0.0,
                   np.zeros(shape, complex), np.zeros(shape, complex),
                   np.zeros(shape, complex), 0)

    @property
    def channels(self) -> int:
        return self.modal_amplitudes.shape[0]

    @property
    def delay_steps(self) -> int:
        return self.input_delay_lines.shape[1]

    def copy(self) -> "ReservoirState":
        return replace(
            self,
            modal_amplitudes=self.modal_amplitudes.copy(),
            input_delay_lines=self.input_delay_lines.copy(),
            amplitude_delay_lines=self.amplitude_delay_lines.copy(),
            amplitude_rate_lines=self.amplitude_rate_lines.copy(),
        )

    def delayed(self, frac: float, step_s: float) -> tuple[np.ndarray, np.ndarray]:
        """Input field and amplitude one delay before ``t + frac*step_s``."""
        old = self.cursor
        new = (old + 1) % self.delay_steps
        e_in = self.input_delay_lines[:, old]
        a0 = self.amplitude_delay_lines[:, old]
        if frac == 0.0:
            return e_in, a0
        a1 = self.amplitude_delay_lines[:, new]
        if frac == 1.0:
            return e_in, a1
        d0 = self.amplitude_rate_lines[:, old]
        d1 = self.amplitude_rate_lines[:, new]
        return e_in, _hermite(a0, a1, d0, d1, frac, step_s)


def _hermite(a0, a1, d0, d1, s, h):
    h00 = 2 * s ** 3 - 3 * s ** 2 + 1
    h10 = s ** 3 - 2 * s ** 2 + s
    h01 = -2 * s ** 3 + 3 * s ** 2
    h11 = s ** 3 - s ** 2
    return h00 * a0 + h10 * h * d0 + h01 * a1 + h11 * h * d1


def delay_steps_for(params: PhysicalParams, step_s: float) -> int:
    """Number of solver steps in the feedback delay; must be an exact integer."""
    ratio = params.feedback_delay_s / step_s
    steps = round(ratio)
    if steps < 1 or abs(ratio - steps) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"feedback delay {params.feedback_delay_s} s is not an integer "
                         f"multiple of the solver step {step_s} s")
    return steps


def _resonances(channels: Sequence[ChannelConfig]) -> np.ndarray:
    return np.array([ch.resonance_freq_rad_s for ch in channels])


def _detunings(channels: Sequence[ChannelConfig]) -> np.ndarray:
    return np.array([ch.carrier_detuning_rad_s for ch in channels])


def _detuning_vec(carriers, temp, channels, params):
    shift = carriers * params.fcd_coeff_m3 + temp * params.thermo_optic_coeff_per_K
    return _detunings(channels) + _resonances(channels) / params.si_refractive_index * shift


def tpa_loss_coeff(params: PhysicalParams) -> float:
    """TPA loss rate per unit intracavity energy (1/(s J))."""
    n = params.si_refractive_index
    return params.tpa_coeff_m_per_W * C_VACUUM ** 2 / (n ** 2 * params.tpa_volume_m3)


def fca_loss_coeff(params: PhysicalParams) -> float:
    """FCA loss rate per unit carrier density (m^3/s)."""
    return (params.fca_confinement * params.fca_cross_section_m2 * C_VACUUM
            / (2.0 * params.si_refractive_index))


def carrier_generation_coeff(params: PhysicalParams) -> float:
    """Carrier generation rate per |a|^4 (1/(m^3 s J^2))."""
    n = params.si_refractive_index
    return (params.fca_confinement * C_VACUUM ** 2 * params.tpa_coeff_m_per_W
            / (2.0 * HBAR * params.pump_frequency * params.fca_volume_m3 ** 2 * n ** 2))


def total_detuning(state: ReservoirState, channel: ChannelConfig,
                   params: PhysicalParams) -> float:
    shift = (state.excess_carriers_m3 * params.fcd_coeff_m3
             + state.excess_temp_K * params.thermo_optic_coeff_per_K)
    return (channel.carrier_detuning_rad_s
            + channel.resonance_freq_rad_s / params.si_refractive_index * shift)


def total_loss_rate(state: ReservoirState, channel_index: int,
                    params: PhysicalParams) -> float:
    energy = abs(state.modal_amplitudes[channel_index]) ** 2
    return (params.linear_loss_rate + tpa_loss_coeff(params) * energy
            + fca_loss_coeff(params) * state.excess_carriers_m3)


def absorbed_power(state: ReservoirState, channel_index: int,
                   params: PhysicalParams) -> float:
    """Power dissipated as heat; light coupled out to the buses is excluded."""
    energy = abs(state.modal_amplitudes[channel_index]) ** 2
    rate = (params.intrinsic_loss_rate + tpa_loss_coeff(params) * energy
            + fca_loss_coeff(params) * state.excess_carriers_m3)
    return rate * energy


def _through_coeff(params, flags):
    if flags.literal_feedback_coupling:
        return 1.0 / params.coupling_lifetime_s
    return 1j * params.coupling_coeff


def feedback_fields(state: ReservoirState, input_now, params: PhysicalParams,
                    channels: Sequence[ChannelConfig], flags: ModelFlags = DEFAULT_FLAGS,
                    frac: float = 0.0, step_s: float = 2e-12,
                    amplitudes: np.ndarray | None = None) -> FieldSample:
    """Add and drop port fields at ``t + frac*step_s``.

    ``amplitudes`` overrides the current cavity amplitude (used at RK stages).
    """
    e_in = np.asarray(input_now, dtype=complex)
    if e_in.shape != (state.channels,):
        raise ValueError("one input field per channel expected")
    old_in, old_a = state.delayed(frac, step_s)
    loop = params.feedback_coupling * np.exp(-1j * params.loop_phase_rad)
    e_add = loop * (old_in + _through_coeff(params, flags) * old_a)
    a = state.modal_amplitudes if amplitudes is None else amplitudes
    if flags.literal_drop_field:
        e_drop = a * e_in / params.coupling_lifetime_s + e_add
    else:
        e_drop = 1j * params.coupling_coeff * a + e_add
    return FieldSample(e_in, e_add, e_drop)


def _rhs(a, carriers, temp, e_in, e_add, params, channels, flags):
    energy = np.abs(a) ** 2
    delta = _detuning_vec(carriers, temp, channels, params)
    gamma_abs = (params.intrinsic_loss_rate + tpa_loss_coeff(params) * energy
                 + fca_loss_coeff(params) * carriers)
    gamma = gamma_abs + 2.0 / params.coupling_lifetime_s
    da = (1j * delta - gamma) * a + 1j * params.coupling_coeff * (e_in + e_add)
    dn = -carriers / params.carrier_lifetime_s + carrier_generation_coeff(params) * np.sum(energy ** 2)
    p_abs = gamma_abs * energy
    if flags.literal_heat_source:
        p_abs = p_abs * energy
    dt = (-temp / params.thermal_lifetime_s
          + params.thermal_confinement / params.heat_capacity_J_per_K * np.sum(p_abs))
    return da, dn, dt


def tcmt_rhs(state: ReservoirState, fields: FieldSample, params: PhysicalParams,
             channels: Sequence[ChannelConfig], flags: ModelFlags = DEFAULT_FLAGS):
    """Time derivatives (da_i/dt, dDeltaN/dt, dDeltaT/dt) of the cavity state."""
    return _rhs(state.modal_amplitudes, state.excess_carriers_m3, state.excess_temp_K,
                fields.e_in, fields.e_add, params, channels, flags)


def rk4_step(state: ReservoirState, t: float, step_s: float,
             input_fn: Callable[[float], np.ndarray], params: PhysicalParams,
             channels: Sequence[ChannelConfig],
             flags: ModelFlags = DEFAULT_FLAGS) -> tuple[ReservoirState, FieldSample]:
    """Advance the state by one classical RK4 step.

    Returns the new state and the port fields sampled at the start of the step.
    """
    if step_s <= 0:
        raise ValueError("step must be positive")
    h = step_s

    def stage(frac, a, n, temp):
        f = feedback_fields(state, input_fn(t + frac * h), params, channels, flags,
                            frac, h, amplitudes=a)
        return _rhs(a, n, temp, f.e_in, f.e_add, params, channels, flags), f

    a0, n0, t0 = state.modal_amplitudes, state.excess_carriers_m3, state.excess_temp_K
    (k1a, k1n, k1t), sample = stage(0.0, a0, n0, t0)
    (k2a, k2n, k2t), _ = stage(0.5, a0 + 0.5 * h * k1a, n0 + 0.5 * h * k1n, t0 + 0.5 * h * k1t)
    (k3a, k3n, k3t), _ = stage(0.5, a0 + 0.5 * h * k2a, n0 + 0.5 * h * k2n, t0 + 0.5 * h * k2t)
    (k4a, k4n, k4t), _ = stage(1.0, a0 + h * k3a, n0 + h * k3n, t0 + h * k3t)

    new = state.copy()
    new.modal_amplitudes = a0 + h / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a)
    new.excess_carriers_m3 = n0 + h / 6.0 * (k1n + 2 * k2n + 2 * k3n + k4n)
    new.excess_temp_K = t0 + h / 6.0 * (k1t + 2 * k2t + 2 * k3t + k4t)

    if not np.all(np.isfinite(new.modal_amplitudes)):
        bad = int(np.flatnonzero(~np.isfinite(new.modal_amplitudes))[0])
        raise IntegrationDiverged(t + h, f"modal amplitude of channel {bad}")
    if not math.isfinite(new.excess_carriers_m3):
        raise IntegrationDiverged(t + h, "excess carrier density")
    if not math.isfinite(new.excess_temp_K):
        raise IntegrationDiverged(t + h, "excess temperature")

    # the sample now leaving the window is replaced by the one at time t
    slot = state.cursor
    new.input_delay_lines[:, slot] = sample.e_in
    new.amplitude_delay_lines[:, slot] = a0
    new.amplitude_rate_lines[:, slot] = k1a
    new.cursor = (slot + 1) % state.delay_steps
    return new, sample


def linear_steady_state_energy(params: PhysicalParams, detuning_rad_s, power_W):
    """Cold-cavity intracavity energy |a|^2 under constant drive, no feedback."""
    delta = np.asarray(detuning_rad_s, dtype=float)
    gamma = params.linear_loss_rate
    return params.coupling_coeff ** 2 * np.asarray(power_W) / (delta ** 2 + gamma ** 2)


def linear_transmission_spectrum(params: PhysicalParams, detuning_grid_rad_s):
    """Through- and drop-port power transmission of the cold ring, no feedback.

    Returns two arrays normalized to the input power. What is neither
    transmitted nor dropped is dissipated by propagation loss.
    """
    delta = np.asarray(detuning_grid_rad_s, dtype=float)
    gamma = params.linear_loss_rate
    kc2 = params.coupling_coeff ** 2
    denom = delta ** 2 + gamma ** 2
    drop = kc2 ** 2 / denom
    through = ((gamma - kc2) ** 2 + delta ** 2) / denom
    return through, drop
