"""Simulator and analysis chain for a single-donor electron-nuclear spin
quantum memory: pulse-level protocol modeling under phenomenological noise,
24-basis state tomography, MLE process tomography with Monte Carlo error
bars, and coherence-lifetime fits."""

from .spin_core import (
    DensityMatrix4,
    DonorParams,
    Hamiltonian4,
    TransitionFrequencies,
    build_hamiltonian,
    eigensystem,
    expectation,
    pauli_operator,
    purity,
    transition_frequencies,
)
from .pulses import (
    AddressingError,
    FreeEvolution,
    InvalidConfigError,
    Pulse,
    PulseSequence,
    ReadoutMarker,
    SequenceConfig,
    ShiftModel,
    StagedEvent,
    apply_sequence,
    build_initialization_sequence,
    build_memory_sequence,
    format_timeline,
    free_evolution,
    pulse_unitary,
    shift_detuning,
)
from .noise import (
    NoiseConfig,
    ShotRecord,
    cpmg_t2,
    dephase,
    estimate_probability,
    initialize_state,
    measure_electron_z,
)
from .tomography import (
    BlochVector,
    FidelityReport,
    ProcessMatrix,
    TomographyPlan,
    bloch_from_tomography,
    counts_bootstrap_errors,
    density_from_bloch,
    linear_inversion_chi,
    memory_fidelity,
    mle_project,
    monte_carlo_errors,
    process_tomography,
    run_xy_tomography,
    sinusoid_fit,
    state_fidelity,
)
from .fitting import (
    FitResult,
    nlls_fit,
    power_law_fit,
    stretched_exp_fit,
)
from .runners import (
    ExperimentConfig,
    device_like_config,
    run_coherence_scan,
    run_process_tomography,
    run_shift_scan,
    run_state_tomography,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
