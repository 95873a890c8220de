"""Device constants, channel allocation and model switches for the add-drop ring.

All quantities are SI unless the field name says otherwise. Defaults reproduce
the silicon ring used throughout the package (7.5 um radius, 1553.49 nm
reference resonance, 0.5 ns external feedback loop).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

C_VACUUM = 299_792_458.0  # m/s
HBAR = 1.054_571_817e-34  # J s
GHZ = 2.0 * math.pi * 1e9  # rad/s per GHz of detuning


def db_per_cm_to_per_m(alpha_db_per_cm: float) -> float:
    """Convert a power attenuation in dB/cm to natural units (1/m)."""
    return alpha_db_per_cm * 100.0 * math.log(10.0) / 10.0


def dbm_to_watt(p_dbm):
    return 1e-3 * np.power(10.0, np.asarray(p_dbm, dtype=float) / 10.0)


def watt_to_dbm(p_w):
    return 10.0 * np.log10(np.asarray(p_w, dtype=float) / 1e-3)


@dataclass(frozen=True)
class PhysicalParams:
    """Ring and feedback-loop constants.

    ``pump_frequency_rad_s`` is the single reference carrier used in the
    carrier-generation rate and in the loop phase; ``None`` means the
    resonance of the reference wavelength.
    """

    mass_kg: float = 1.2e-11
    tpa_coeff_m_per_W: float = 8.4e-11
    coupling_lifetime_s: float = 54.7e-12
    fca_confinement: float = 0.9996
    si_refractive_index: float = 3.485
    thermal_confinement: float = 0.9355
    ref_wavelength_m: float = 1553.49e-9
    ring_circumference_m: float = 2.0 * math.pi * 7.5e-6
    thermo_optic_coeff_per_K: float = 1.86e-4
    fcd_coeff_m3: float = -1.73e-27
    specific_heat_J_per_gK: float = 0.7
    fca_cross_section_m2: float = 1.0e-21
    fca_volume_m3: float = 2.36e-18
    tpa_volume_m3: float = 2.59e-18
    thermal_lifetime_s: float = 50e-9
    carrier_lifetime_s: float = 10e-9
    attenuation_per_m: float = db_per_cm_to_per_m(0.8)
    feedback_coupling: float = 0.95
    external_phase_rad: float = 0.15
    feedback_delay_s: float = 0.5e-9
    pump_frequency_rad_s: float | None = None

    def __post_init__(self) -> None:
        positive = (
            "mass_kg", "coupling_lifetime_s", "ring_circumference_m",
            "fca_volume_m3", "tpa_volume_m3", "thermal_lifetime_s",
            "carrier_lifetime_s", "feedback_delay_s", "si_refractive_index",
            "specific_heat_J_per_gK", "ref_wavelength_m",
        )
        for name in positive:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        for name in ("feedback_coupling", "fca_confinement", "thermal_confinement"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
        if self.attenuation_per_m < 0:
            raise ValueError("attenuation_per_m must be non-negative")
        if self.pump_frequency_rad_s is not None and self.pump_frequency_rad_s <= 0:
            raise ValueError("pump_frequency_rad_s must be positive")

    @property
    def radius_m(self) -> float:
        return self.ring_circumference_m / (2.0 * math.pi)

    @property
    def coupling_coeff(self) -> float:
        """Bus-to-ring amplitude coupling sqrt(2/tau_c), in 1/sqrt(s)."""
        return math.sqrt(2.0 / self.coupling_lifetime_s)

    @property
    def intrinsic_loss_rate(self) -> float:
        """Propagation loss rate c*alpha/n_Si (1/s)."""
        return C_VACUUM * self.attenuation_per_m / self.si_refractive_index

    @property
    def linear_loss_rate(self) -> float:
        """Cold-cavity total loss rate: propagation plus both bus couplings."""
        return self.intrinsic_loss_rate + 2.0 / self.coupling_lifetime_s

    @property
    def heat_capacity_J_per_K(self) -> float:
        # The tabulated mass and J/(g K) specific heat are multiplied as given.
        # 1.2e-11 * 0.7 = 8.4e-12 J/K, which is the heat capacity of a
        # 7.5 um silicon ring (its mass is ~1.2e-11 g).
        return self.mass_kg * self.specific_heat_J_per_gK

    @property
    def pump_frequency(self) -> float:
        if self.pump_frequency_rad_s is not None:
            return self.pump_frequency_rad_s
        return 2.0 * math.pi * C_VACUUM / self.ref_wavelength_m

    @property
    def pump_wavelength_m(self) -> float:
        return 2.0 * math.pi * C_VACUUM / self.pump_frequency

    @property
    def loop_phase_rad(self) -> float:
        """Total phase picked up in the external waveguide."""
        return (2.0 * math.pi * self.feedback_delay_s * C_VACUUM / self.pump_wavelength_m
                + self.external_phase_rad)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ModelFlags:
    """Switches between the physically consistent model and the literal forms.

    literal_heat_source
        Heat source is sum(P_abs_i * |a_i|^2) instead of sum(P_abs_i).
    literal_drop_field
        Drop field is (1/tau_c) * a_i * E_in_i + E_add_i instead of
        j*kappa_c*a_i + E_add_i.
    literal_feedback_coupling
        The ring term in the feedback field uses 1/tau_c instead of
        j*kappa_c. This makes the loop gain far larger than one.
    """

    literal_heat_source: bool = False
    literal_drop_field: bool = False
    literal_feedback_coupling: bool = False


@dataclass(frozen=True)
class ChannelConfig:
    """One WDM carrier: its resonance, its detuning from it, and its power."""

    index: int
    resonance_freq_rad_s: float
    carrier_detuning_rad_s: float
    avg_power_W: float
    task_id: str = ""

    def __post_init__(self) -> None:
        if not (self.avg_power_W > 0 and math.isfinite(self.avg_power_W)):
            raise ValueError(f"channel {self.index}: avg_power_W must be positive, "
                             f"got {self.avg_power_W!r}")
        if not self.resonance_freq_rad_s > 0:
            raise ValueError(f"channel {self.index}: resonance frequency must be positive")

    @property
    def detuning_ghz(self) -> float:
        return self.carrier_detuning_rad_s / GHZ

    @property
    def power_dbm(self) -> float:
        return float(watt_to_dbm(self.avg_power_W))


def adjacent_resonances(params: PhysicalParams, count: int = 3) -> np.ndarray:
    """Resonance frequencies of ``count`` consecutive ring modes.

    The middle mode sits at the reference wavelength and neighbours are one
    mode spacing c/(n_Si R) apart, lowest frequency first.
    """
    center = 2.0 * math.pi * C_VACUUM / params.ref_wavelength_m
    spacing = C_VACUUM / (params.si_refractive_index * params.radius_m)
    offsets = np.arange(count) - (count - 1) / 2.0
    return center + offsets * spacing


def make_channels(params: PhysicalParams, powers_dbm, detunings_ghz,
                  task_ids=None) -> tuple[ChannelConfig, ...]:
    powers_dbm = list(powers_dbm)
    detunings_ghz = list(detunings_ghz)
    if len(powers_dbm) != len(detunings_ghz):
        raise ValueError("powers and detunings must have equal length")
    count = len(powers_dbm)
    task_ids = list(task_ids) if task_ids is not None else [""] * count
    res = adjacent_resonances(params, count)
    return tuple(
        ChannelConfig(i, float(res[i]), float(detunings_ghz[i]) * GHZ,
                      float(dbm_to_watt(powers_dbm[i])), task_ids[i])
        for i in range(count)
    )


def check_channels(channels) -> None:
    freqs = [ch.resonance_freq_rad_s for ch in channels]
    if len(set(freqs)) != len(freqs):
        raise ValueError("channel resonance frequencies must be pairwise distinct")


def params_from_dict(data: dict) -> PhysicalParams:
    known = {f.name for f in fields(PhysicalParams)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown physical parameter(s): {sorted(unknown)}")
    return replace(PhysicalParams(), **data)
