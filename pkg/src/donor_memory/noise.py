"""Phenomenological decoherence, initialization and single-shot readout.

Decoherence is pure dephasing: coherences of an addressed transition block
are damped by a stretched exponential exp(-(t/T2)^alpha) while populations
stay put. Readout is a visibility-limited projective measurement of the
electron; a shot record is one binomial draw of `shots_per_point` trials
from the contrast-scaled click probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .spin_core import DensityMatrix4, _as_matrix

# Coherence index pairs damped per addressed transition. Frequency noise on
# a transition dephases every coherence sensitive to it, so the electron and
# nuclear channels damp their single-flip pairs together with the
# double-quantum pairs (the Schur-product positivity condition requires
# this; damping a single-flip pair alone is not a physical map). The
# "double" option damps only the double-quantum pairs and is the raw
# building block for correlated-noise compositions; on its own it is
# positivity-preserving only alongside matching single-flip damping.
TRANSITION_ELEMENTS = {
    "electron": ((0, 2), (2, 0), (1, 3), (3, 1), (0, 3), (3, 0), (1, 2), (2, 1)),
    "nuclear": ((0, 1), (1, 0), (2, 3), (3, 2), (0, 3), (3, 0), (1, 2), (2, 1)),
    "double": ((0, 3), (3, 0), (1, 2), (2, 1)),
}


@dataclass(frozen=True)
class NoiseConfig:
    """Dephasing times, storage-decay law, readout contrast and shot counts.

    storage_mode selects how the stored nuclear coherence decays during the
    storage stage: "envelope" applies exp(-(tau/T2(N))^alpha) once over the
    stage with T2(N) = cpmg_t2(N, storage_t2_base, cpmg_exponent);
    "microscopic" applies per-interval dephasing at t2star_n and leaves
    refocusing of static detunings to the DD pulses.
    """

    t2star_e: float = 160e-6
    t2star_n: float = 5e-3
    storage_t2_base: float = 10.9e-3
    storage_stretch_alpha: float = 2.0
    cpmg_exponent: float = 0.36
    readout_visibility: float = 0.9
    shots_per_point: int = 200
    repetitions: int = 25
    rng_seed: int = 1
    storage_mode: str = "envelope"

    def __post_init__(self):
        for name in ("t2star_e", "t2star_n", "storage_t2_base"):
            if not getattr(self, name) > 0:
                raise ValueError(f"NoiseConfig.{name} must be > 0")
        if not self.storage_stretch_alpha > 0:
            raise ValueError("NoiseConfig.storage_stretch_alpha must be > 0")
        if not 0.0 <= self.readout_visibility <= 1.0:
            raise ValueError("NoiseConfig.readout_visibility must be in [0, 1]")
        if self.shots_per_point < 1 or self.repetitions < 1:
            raise ValueError("NoiseConfig shot and repetition counts must be >= 1")
        if self.storage_mode not in ("envelope", "microscopic"):
            raise ValueError("NoiseConfig.storage_mode must be 'envelope' or 'microscopic'")


@dataclass(frozen=True)
class ShotRecord:
    """Outcome counts of one repetition at one measurement basis.

    basis_phase is the tomography pulse phase in degrees, or None for a
    plain Z readout.
    """

    basis_phase: Optional[float]
    counts_up: int
    shots: int
    repetition_index: int = 0

    def __post_init__(self):
        if not 0 <= self.counts_up <= self.shots:
            raise ValueError("ShotRecord requires 0 <= counts_up <= shots")

    @property
    def fraction(self) -> float:
        return self.counts_up / self.shots


def initialize_state(error_prob: float = 0.0) -> DensityMatrix4:
    """|down,Up> with probability 1-error_prob, remainder spread uniformly."""
    if not 0.0 <= error_prob < 1.0:
        raise ValueError("error_prob must be in [0, 1)")
    pops = np.full(4, error_prob / 3.0)
    pops[2] = 1.0 - error_prob
    return DensityMatrix4(np.diag(pops).astype(complex))


def dephase(rho, duration: float, t2: float, alpha: float, transition: str) -> DensityMatrix4:
    """Damp the addressed transition's coherences by exp(-(duration/t2)^alpha)."""
    if duration < 0:
        raise ValueError("duration must be >= 0")
    if not t2 > 0:
        raise ValueError("t2 must be > 0")
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    if transition not in TRANSITION_ELEMENTS:
        raise ValueError(f"transition must be one of {sorted(TRANSITION_ELEMENTS)}")
    factor = math.exp(-((duration / t2) ** alpha)) if duration > 0 else 1.0
    mat = _as_matrix(rho).copy()
    for i, j in TRANSITION_ELEMENTS[transition]:
        mat[i, j] *= factor
    return DensityMatrix4(mat)


def cpmg_t2(n_pulses: int, t2_base: float, exponent: float) -> float:
    """Power-law coherence-time scaling T2(N) = t2_base * N**exponent."""
    if n_pulses < 1:
        raise ValueError("n_pulses must be >= 1")
    return t2_base * n_pulses ** exponent


def reported_probability(p_up: float, visibility: float) -> float:
    """Contrast-limited click probability: 0.5 + visibility*(p_up - 0.5)."""
    return 0.5 + visibility * (p_up - 0.5)


def measure_electron_z(
    rho,
    cfg: NoiseConfig,
    rng_stream: np.random.Generator,
    *,
    basis_phase: Optional[float] = None,
    repetition_index: int = 0,
) -> ShotRecord:
    """One repetition of single-shot electron readout.

    The click probability is 0.5 + visibility*(p_up - 0.5) with
    p_up = Tr(rho P_up); counts are one binomial draw from the supplied
    stream, so results are reproducible given the stream's seed path.
    """
    mat = _as_matrix(rho)
    p_up = float(np.clip((mat[0, 0] + mat[1, 1]).real, 0.0, 1.0))
    p_click = float(np.clip(reported_probability(p_up, cfg.readout_visibility), 0.0, 1.0))
    counts = int(rng_stream.binomial(cfg.shots_per_point, p_click))
    return ShotRecord(
        basis_phase=basis_phase,
        counts_up=counts,
        shots=cfg.shots_per_point,
        repetition_index=repetition_index,
    )


def estimate_probability(records: Sequence[ShotRecord]) -> tuple[float, float]:
    """Mean of per-repetition fractions and their standard deviation."""
    if len(records) == 0:
        raise ValueError("estimate_probability requires at least one record")
    fractions = np.array([r.fraction for r in records])
    mean = float(fractions.mean())
    std = float(fractions.std(ddof=1)) if len(fractions) > 1 else 0.0
    return mean, std
