"""Rotating-frame pulse unitaries, free evolution, and the memory protocol.

The simulation lives in the doubly-rotating frame of the steady-state
resonances, so with nothing driven and no detunings present, free evolution is
the identity. A pulse addresses exactly one of the four two-level transitions
(chosen by carrier within a selectivity window of 10x the Rabi frequency) and
applies the generalized Rabi rotation on that block, identity elsewhere.

Phase convention: a pi/2 pulse at phase 0 maps the lower level of the
addressed transition to (|lower> + |upper>)/sqrt(2), the transition's |+X>.
The state prepared by a pi/2 pulse at phase phi then reads out maximally in
the tomography basis at that same phi.

The transient resonance shift that follows high-power RF pulses is modeled
phenomenologically: a positive detuning of the electron Zeeman term decaying
from `peak_detuning` with time constant `decay_time`, clocked from the end of
the most recent RF pulse. It is frozen at the midpoint of each pulse and
integrated exactly across free-evolution intervals. An optional scaled copy
acts on the nuclear Zeeman term (`applies_to="electron_and_nucleus"`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .noise import NoiseConfig, cpmg_t2, dephase
from .spin_core import DensityMatrix4, DonorParams, _as_matrix, transition_frequencies

STAGE_ORDER = ("init", "transfer", "storage", "recovery", "tomography", "readout")

# Addressable transitions as (upper level, lower level) index pairs.
TRANSITION_LEVELS = {
    "mw_up": (0, 2),    # electron flip, nucleus Up
    "mw_down": (1, 3),  # electron flip, nucleus Down
    "rf_down": (3, 2),  # nuclear flip, electron down
    "rf_up": (0, 1),    # nuclear flip, electron up
}

CHANNEL_TRANSITIONS = {"MW": ("mw_up", "mw_down"), "RF": ("rf_down", "rf_up")}

SELECTIVITY_FACTOR = 10.0

# Signed electron/nuclear weights per basis level used for detuning phases;
# signs chosen so a detuning +d on a transition advances its coherence phase
# by exactly 2*pi*d*t, matching the in-pulse convention.
_ELECTRON_WEIGHT = np.array([0.5, 0.5, -0.5, -0.5])
_NUCLEAR_WEIGHT = np.array([-0.5, 0.5, -0.5, 0.5])


class AddressingError(ValueError):
    """Carrier frequency does not single out one transition."""


class InvalidConfigError(ValueError):
    """Sequence configuration cannot be realized."""


@dataclass(frozen=True)
class Pulse:
    """Rectangular drive pulse on one channel.

    rabi is the on-resonance Rabi frequency (Hz) of the addressed two-level
    transition; a pi rotation therefore takes duration 1/(2*rabi).

    phase_tracking selects the phase reference for an off-resonance carrier:
    True (default) programs the phase in the steady qubit frame at each
    pulse start, the usual waveform-generator practice, so no drive-vs-qubit
    phase slips across pulses; False models a phase-continuous detuned
    source, whose frame slip accumulates with absolute time (needed for
    Ramsey fringes against a deliberately offset carrier).
    """

    channel: str
    carrier: float
    phase: float
    duration: float
    rabi: float
    phase_tracking: bool = True

    def __post_init__(self):
        if self.channel not in CHANNEL_TRANSITIONS:
            raise ValueError("Pulse.channel must be 'MW' or 'RF'")
        if self.duration < 0:
            raise ValueError("Pulse.duration must be >= 0")
        if self.rabi < 0:
            raise ValueError("Pulse.rabi must be >= 0")
        object.__setattr__(self, "phase", float(self.phase) % 360.0)


@dataclass(frozen=True)
class FreeEvolution:
    duration: float

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("FreeEvolution.duration must be >= 0")


@dataclass(frozen=True)
class ReadoutMarker:
    duration: float = 0.0


SequenceItem = Union[Pulse, FreeEvolution, ReadoutMarker]


@dataclass(frozen=True)
class StagedEvent:
    stage: str
    event: SequenceItem

    def __post_init__(self):
        if self.stage not in STAGE_ORDER:
            raise ValueError(f"unknown stage {self.stage!r}")


@dataclass(frozen=True)
class PulseSequence:
    """Ordered protocol events with stage tags, tied to the donor they drive."""

    events: tuple[StagedEvent, ...]
    donor: DonorParams

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        order = [STAGE_ORDER.index(ev.stage) for ev in self.events]
        if any(a > b for a, b in zip(order, order[1:])):
            raise InvalidConfigError("stage tags must appear in protocol order")

    @property
    def total_duration(self) -> float:
        return sum(ev.event.duration for ev in self.events)

    def stage_duration(self, stage: str) -> float:
        return sum(ev.event.duration for ev in self.events if ev.stage == stage)

    @property
    def dd_pulse_count(self) -> int:
        return sum(
            1
            for ev in self.events
            if ev.stage == "storage" and isinstance(ev.event, Pulse) and ev.event.channel == "RF"
        )


@dataclass(frozen=True)
class ShiftModel:
    """Pulse-induced transient resonance shift (positive Zeeman detuning)."""

    peak_detuning: float = 10e3
    decay_time: float = 100e-6
    shape: str = "exponential"
    applies_to: str = "electron"
    nuclear_scale: float = 0.0

    def __post_init__(self):
        if self.peak_detuning < 0:
            raise ValueError("ShiftModel.peak_detuning must be >= 0")
        if not self.decay_time > 0:
            raise ValueError("ShiftModel.decay_time must be > 0")
        if self.shape not in ("exponential", "none"):
            raise ValueError("ShiftModel.shape must be 'exponential' or 'none'")
        if self.applies_to not in ("electron", "electron_and_nucleus"):
            raise ValueError("ShiftModel.applies_to must be 'electron' or 'electron_and_nucleus'")


@dataclass(frozen=True)
class SequenceConfig:
    """Memory-protocol knobs: input state, storage, decoupling, tomography.

    Input-state labels follow the protocol convention: plusZ is the
    initialized, pulse-free electron |down> (its nominal Bloch vector in the
    measurement frame is (0,0,-1) since readout counts |up>), minusZ is its
    pi-pulse flip, plusX/plusY are pi/2 pulses at phase 0/90 deg, and custom
    is a rotation by custom_theta (radians) at custom_phi (degrees).

    mw_carrier_offset models running every MW pulse from a single source
    parked slightly off the steady-state resonance, the compromise forced by
    the pulse-induced shift.
    """

    input_state: str = "plusX"
    storage_time: float = 195.8e-6
    dd_pulses: int = 2
    dd_phase_offset: float = 90.0
    transfer_rf_pi: float = 50e-6
    dd_rf_pi: float = 97.4e-6
    tomography_phase: Optional[float] = None
    custom_theta: float = 0.0
    custom_phi: float = 0.0
    mw_rabi: float = 50e3
    mw_carrier_offset: float = 0.0

    def __post_init__(self):
        if self.input_state not in ("plusX", "plusY", "plusZ", "minusZ", "custom"):
            raise InvalidConfigError(f"unknown input_state {self.input_state!r}")
        if self.dd_pulses < 0:
            raise InvalidConfigError("dd_pulses must be >= 0")
        if self.storage_time < 0:
            raise InvalidConfigError("storage_time must be >= 0")
        if self.storage_time < self.dd_pulses * self.dd_rf_pi:
            raise InvalidConfigError(
                f"storage_time {self.storage_time} too short for "
                f"{self.dd_pulses} DD pulses of {self.dd_rf_pi} s"
            )
        if not self.transfer_rf_pi > 0 or not self.dd_rf_pi > 0:
            raise InvalidConfigError("RF pi-pulse durations must be > 0")
        if not self.mw_rabi > 0:
            raise InvalidConfigError("mw_rabi must be > 0")

    def init_rotation(self) -> Optional[tuple[float, float]]:
        """(angle rad, phase deg) of the initialization pulse, None for plusZ."""
        table = {
            "plusX": (math.pi / 2.0, 0.0),
            "plusY": (math.pi / 2.0, 90.0),
            "plusZ": None,
            "minusZ": (math.pi, 0.0),
        }
        if self.input_state == "custom":
            if self.custom_theta == 0.0:
                return None
            return (self.custom_theta, self.custom_phi)
        return table[self.input_state]

    def target_bloch(self) -> tuple[float, float, float]:
        """Nominal Bloch vector of the initialized electron state."""
        rot = self.init_rotation()
        if rot is None:
            return (0.0, 0.0, -1.0)
        theta, phi = rot
        phi_r = math.radians(phi)
        return (
            math.sin(theta) * math.cos(phi_r),
            math.sin(theta) * math.sin(phi_r),
            -math.cos(theta),
        )


def shift_detuning(t_since_last_rf: float, model: Optional[ShiftModel]) -> float:
    """Instantaneous electron-resonance detuning a time t after an RF pulse."""
    if t_since_last_rf < 0:
        raise ValueError("t_since_last_rf must be >= 0")
    if model is None or model.shape == "none" or model.peak_detuning == 0.0:
        return 0.0
    if math.isinf(t_since_last_rf):
        return 0.0
    return model.peak_detuning * math.exp(-t_since_last_rf / model.decay_time)


def shift_phase_cycles(t0: float, duration: float, model: Optional[ShiftModel]) -> float:
    """Exact integral (in cycles) of the shift over [t0, t0 + duration]."""
    if model is None or model.shape == "none" or model.peak_detuning == 0.0:
        return 0.0
    if math.isinf(t0):
        return 0.0
    tau = model.decay_time
    upper = 0.0 if math.isinf(duration) else math.exp(-(t0 + duration) / tau)
    return model.peak_detuning * tau * (math.exp(-t0 / tau) - upper)


def _nuclear_shift_scale(model: Optional[ShiftModel]) -> float:
    if model is None or model.applies_to != "electron_and_nucleus":
        return 0.0
    return model.nuclear_scale


def resolve_transition(pulse: Pulse, params: DonorParams) -> str:
    """Nearest transition within the selectivity window, or raise."""
    freqs = transition_frequencies(params).as_dict()
    window = SELECTIVITY_FACTOR * pulse.rabi
    hits = [
        (abs(pulse.carrier - freqs[f"nu_{name}"]), name)
        for name in CHANNEL_TRANSITIONS[pulse.channel]
        if abs(pulse.carrier - freqs[f"nu_{name}"]) < window
    ]
    if not hits:
        raise AddressingError(
            f"carrier {pulse.carrier:.6g} Hz is outside the selectivity window "
            f"(+-{window:.6g} Hz) of every {pulse.channel} transition"
        )
    hits.sort()
    if len(hits) > 1 and hits[0][0] == hits[1][0]:
        raise AddressingError(
            f"carrier {pulse.carrier:.6g} Hz is equidistant from "
            f"{[h[1] for h in hits]}; addressing is ambiguous"
        )
    return hits[0][1]


def _static_transition_detuning(
    name: str, electron_detuning: float, nuclear_detuning: float
) -> float:
    if name in ("mw_up", "mw_down"):
        return electron_detuning
    return nuclear_detuning if name == "rf_down" else -nuclear_detuning


def pulse_unitary(
    pulse: Pulse,
    params: DonorParams,
    detuning: float = 0.0,
    *,
    start_time: float = 0.0,
    static_electron_detuning: float = 0.0,
    static_nuclear_detuning: float = 0.0,
) -> np.ndarray:
    """4x4 unitary of one pulse in the doubly-rotating frame.

    `detuning` is the transient-shift contribution to the addressed
    transition's instantaneous frequency (frozen over the pulse); static
    detunings persist outside pulses as well. The rotation is the
    generalized Rabi rotation for total detuning
    Delta = (steady frequency + static + detuning) - carrier, about the
    tilted axis set by the pulse phase. When the carrier is parked off the
    steady resonance, the frame mismatch accrues start-time-dependent
    phases, which keeps separated pulses from one source mutually coherent.
    """
    name = resolve_transition(pulse, params)
    u, l = TRANSITION_LEVELS[name]
    nu_steady = transition_frequencies(params).as_dict()[f"nu_{name}"]
    static = _static_transition_detuning(
        name, static_electron_detuning, static_nuclear_detuning
    )

    frame_ramp = nu_steady - pulse.carrier
    delta = frame_ramp + static + detuning
    omega = pulse.rabi
    alpha = math.radians(pulse.phase) - math.pi / 2.0
    tau = pulse.duration

    omega_g = math.hypot(omega, delta)
    if omega_g == 0.0 or tau == 0.0:
        block = np.eye(2, dtype=complex)
    else:
        half = math.pi * omega_g * tau
        nx = omega * math.cos(alpha) / omega_g
        ny = omega * math.sin(alpha) / omega_g
        nz = delta / omega_g
        axis = np.array([[nz, nx - 1j * ny], [nx + 1j * ny, -nz]], dtype=complex)
        block = math.cos(half) * np.eye(2, dtype=complex) - 1j * math.sin(half) * axis

    if frame_ramp != 0.0:
        def frame(t):
            ph = math.pi * frame_ramp * t
            return np.diag([np.exp(1j * ph), np.exp(-1j * ph)])

        if pulse.phase_tracking:
            # re-referenced at pulse start: only the in-pulse frame slip remains
            block = frame(tau) @ block
        else:
            block = frame(start_time + tau) @ block @ frame(start_time).conj()

    out = np.eye(4, dtype=complex)
    out[np.ix_([u, l], [u, l])] = block
    return out


def free_evolution(
    duration: float,
    params: Optional[DonorParams] = None,
    *,
    shift: Optional[ShiftModel] = None,
    t_since_rf: float = math.inf,
    electron_detuning: float = 0.0,
    nuclear_detuning: float = 0.0,
) -> np.ndarray:
    """Diagonal phase evolution between pulses.

    With both carriers on their steady resonances the frame is co-moving, so
    phases come only from detunings: the shift transient integrated exactly
    over the interval plus any static electron/nuclear detunings.
    """
    if duration < 0:
        raise ValueError("duration must be >= 0")
    shift_cycles = shift_phase_cycles(t_since_rf, duration, shift)
    cycles_e = shift_cycles + (electron_detuning * duration if electron_detuning else 0.0)
    cycles_n = _nuclear_shift_scale(shift) * shift_cycles + (
        nuclear_detuning * duration if nuclear_detuning else 0.0
    )
    if cycles_e == 0.0 and cycles_n == 0.0:
        return np.eye(4, dtype=complex)
    level_phases = 2.0 * math.pi * (_ELECTRON_WEIGHT * cycles_e + _NUCLEAR_WEIGHT * cycles_n)
    return np.diag(np.exp(-1j * level_phases))


def build_memory_sequence(cfg: SequenceConfig, params: DonorParams) -> PulseSequence:
    """Assemble the full store-and-retrieve protocol.

    Order: optional init MW rotation; transfer (RF pi on the electron-down
    nuclear transition, then MW pi on the nucleus-Up electron transition);
    storage with N RF pi decoupling pulses at even-spacing echo positions of
    the free-precession budget; recovery (transfer reversed); optional
    tomography MW pi/2; readout marker.
    """
    freqs = transition_frequencies(params)
    mw_carrier = freqs.nu_mw_up + cfg.mw_carrier_offset
    rf_rabi_transfer = 1.0 / (2.0 * cfg.transfer_rf_pi)
    rf_rabi_dd = 1.0 / (2.0 * cfg.dd_rf_pi)

    events: list[StagedEvent] = []

    rot = cfg.init_rotation()
    if rot is not None:
        theta, phi = rot
        events.append(
            StagedEvent(
                "init",
                Pulse("MW", mw_carrier, phi, theta / (2.0 * math.pi * cfg.mw_rabi), cfg.mw_rabi),
            )
        )

    transfer_rf = Pulse("RF", freqs.nu_rf_down, 0.0, cfg.transfer_rf_pi, rf_rabi_transfer)
    transfer_mw = Pulse("MW", mw_carrier, 0.0, 1.0 / (2.0 * cfg.mw_rabi), cfg.mw_rabi)
    events.append(StagedEvent("transfer", transfer_rf))
    events.append(StagedEvent("transfer", transfer_mw))

    events.extend(_storage_events(cfg, freqs.nu_rf_down, rf_rabi_dd))

    events.append(StagedEvent("recovery", transfer_mw))
    events.append(StagedEvent("recovery", transfer_rf))

    if cfg.tomography_phase is not None:
        events.append(
            StagedEvent(
                "tomography",
                Pulse(
                    "MW", mw_carrier, cfg.tomography_phase,
                    1.0 / (4.0 * cfg.mw_rabi), cfg.mw_rabi,
                ),
            )
        )
    events.append(StagedEvent("readout", ReadoutMarker()))
    return PulseSequence(tuple(events), params)


def _storage_events(cfg: SequenceConfig, rf_carrier: float, rf_rabi: float):
    n = cfg.dd_pulses
    if n == 0:
        if cfg.storage_time > 0:
            yield StagedEvent("storage", FreeEvolution(cfg.storage_time))
        return
    free_total = cfg.storage_time - n * cfg.dd_rf_pi
    edge = free_total / (2 * n)
    inner = free_total / n
    dd_phase = (0.0 + cfg.dd_phase_offset) % 360.0
    dd_pulse = Pulse("RF", rf_carrier, dd_phase, cfg.dd_rf_pi, rf_rabi)
    yield StagedEvent("storage", FreeEvolution(edge))
    for k in range(n):
        yield StagedEvent("storage", dd_pulse)
        yield StagedEvent("storage", FreeEvolution(edge if k == n - 1 else inner))


def build_initialization_sequence(cfg: SequenceConfig, params: DonorParams) -> PulseSequence:
    """Initialization-plus-measurement only, for input-state tomography."""
    freqs = transition_frequencies(params)
    mw_carrier = freqs.nu_mw_up + cfg.mw_carrier_offset
    events: list[StagedEvent] = []
    rot = cfg.init_rotation()
    if rot is not None:
        theta, phi = rot
        events.append(
            StagedEvent(
                "init",
                Pulse("MW", mw_carrier, phi, theta / (2.0 * math.pi * cfg.mw_rabi), cfg.mw_rabi),
            )
        )
    if cfg.tomography_phase is not None:
        events.append(
            StagedEvent(
                "tomography",
                Pulse(
                    "MW", mw_carrier, cfg.tomography_phase,
                    1.0 / (4.0 * cfg.mw_rabi), cfg.mw_rabi,
                ),
            )
        )
    events.append(StagedEvent("readout", ReadoutMarker()))
    return PulseSequence(tuple(events), params)


def format_timeline(seq: PulseSequence) -> str:
    """Human-readable timeline, one event per line, stable for golden files."""
    lines = []
    for ev in seq.events:
        item = ev.event
        if isinstance(item, Pulse):
            lines.append(
                f"{ev.stage} {item.channel} {item.carrier!r} {item.phase!r} {item.duration!r}"
            )
        elif isinstance(item, FreeEvolution):
            lines.append(f"{ev.stage} FREE - - {item.duration!r}")
        else:
            lines.append(f"{ev.stage} READOUT - - {item.duration!r}")
    return "\n".join(lines) + "\n"


def apply_sequence(
    rho0,
    seq: PulseSequence,
    noise: Optional[NoiseConfig] = None,
    shift: Optional[ShiftModel] = None,
    *,
    electron_detuning: float = 0.0,
    nuclear_detuning: float = 0.0,
    shift_active_at_start: bool = False,
) -> DensityMatrix4:
    """Propagate a state through a sequence, left to right.

    Pulse unitaries are evaluated at the shift detuning frozen at each pulse
    midpoint; the shift clock resets at the end of every RF pulse. Free
    intervals contribute detuning phases plus dephasing channels from
    `noise`; in envelope storage mode the stored nuclear coherence is damped
    once by exp(-(tau_storage/T2(N))^alpha) instead of per-interval nuclear
    dephasing.
    """
    params = seq.donor
    mat = _as_matrix(rho0).copy()
    nuc_scale = _nuclear_shift_scale(shift)

    t_abs = 0.0
    t_since_rf = 0.0 if shift_active_at_start else math.inf

    storage_total = seq.stage_duration("storage")
    n_dd = seq.dd_pulse_count
    envelope_pending = (
        noise is not None and noise.storage_mode == "envelope" and storage_total > 0.0
    )

    def storage_envelope(m):
        if n_dd >= 1:
            t2_eff = cpmg_t2(n_dd, noise.storage_t2_base, noise.cpmg_exponent)
        else:
            t2_eff = noise.t2star_n
        return _as_matrix(
            dephase(m, storage_total, t2_eff, noise.storage_stretch_alpha, "nuclear")
        )

    seen_storage = False
    for ev in seq.events:
        if envelope_pending and seen_storage and ev.stage != "storage":
            mat = storage_envelope(mat)
            envelope_pending = False
        if ev.stage == "storage":
            seen_storage = True

        item = ev.event
        if isinstance(item, Pulse):
            mid = t_since_rf + item.duration / 2.0
            if item.channel == "MW":
                pulse_shift = shift_detuning(mid, shift)
            else:
                pulse_shift = nuc_scale * shift_detuning(mid, shift)
            u = pulse_unitary(
                item,
                params,
                detuning=pulse_shift,
                start_time=t_abs,
                static_electron_detuning=electron_detuning,
                static_nuclear_detuning=nuclear_detuning,
            )
            mat = u @ mat @ u.conj().T
            t_abs += item.duration
            if item.channel == "RF":
                t_since_rf = 0.0
            else:
                t_since_rf += item.duration
        elif isinstance(item, FreeEvolution):
            u = free_evolution(
                item.duration,
                params,
                shift=shift,
                t_since_rf=t_since_rf,
                electron_detuning=electron_detuning,
                nuclear_detuning=nuclear_detuning,
            )
            mat = u @ mat @ u.conj().T
            if noise is not None:
                mat = _dephase_interval(mat, item.duration, noise, ev.stage)
            t_abs += item.duration
            t_since_rf += item.duration

    if envelope_pending and seen_storage:
        mat = storage_envelope(mat)

    mat = 0.5 * (mat + mat.conj().T)
    return DensityMatrix4(mat)


def _dephase_interval(mat, duration: float, noise: NoiseConfig, stage: str) -> np.ndarray:
    """Free-induction dephasing over one interval (exponential, alpha=1)."""
    out = dephase(mat, duration, noise.t2star_e, 1.0, "electron")
    skip_nuclear = noise.storage_mode == "envelope" and stage == "storage"
    if not skip_nuclear:
        out = dephase(out, duration, noise.t2star_n, 1.0, "nuclear")
    return _as_matrix(out)
