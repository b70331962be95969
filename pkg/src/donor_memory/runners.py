"""Experiment orchestration: the simulated pipelines behind the CLI commands.

Each runner wires the protocol simulation to the tomography/fit analysis at
desk scale and returns plain result objects; file emission lives in the CLI.
Stochastic runners draw every (point, repetition, sample) from its own
seeded stream, so results are independent of evaluation order and worker
count. `analytic=True` replaces shot sampling with exact visibility-scaled
probabilities (zero error bars), which the Monte Carlo machinery then treats
as zero input uncertainty.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .fitting import PowerLawFit, StretchedExpFit, power_law_fit, stretched_exp_fit
from .noise import NoiseConfig, cpmg_t2, estimate_probability, initialize_state, measure_electron_z, reported_probability
from .pulses import (
    FreeEvolution,
    Pulse,
    PulseSequence,
    ReadoutMarker,
    SequenceConfig,
    ShiftModel,
    StagedEvent,
    apply_sequence,
    build_initialization_sequence,
    build_memory_sequence,
    shift_detuning,
    shift_phase_cycles,
)
from .rng import stream
from .spin_core import DensityMatrix4, DonorParams, transition_frequencies
from .tomography import (
    BlochVector,
    FidelityReport,
    MonteCarloResult,
    ProcessMatrix,
    SinusoidFit,
    TomographyPlan,
    XYTomographyData,
    bloch_from_tomography,
    build_fidelity_report,
    counts_bootstrap_errors,
    density_from_bloch,
    fit_point_errors,
    monte_carlo_errors,
    process_tomography,
    run_xy_tomography,
    sinusoid_fit,
    state_fidelity,
)

PROCESS_INPUT_LABELS = ("plusX", "plusY", "plusZ", "minusZ")

# Stream domains per experiment family.
_EXP_STATE = 10
_EXP_SCAN = 20
_EXP_SHIFT = 30
_MC_INIT = 41
_MC_PROCESS = 42


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one simulated run; hashable for reproducibility."""

    donor: DonorParams = field(default_factory=DonorParams)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    shift: Optional[ShiftModel] = None
    sequence: SequenceConfig = field(default_factory=SequenceConfig)
    plan: TomographyPlan = field(default_factory=TomographyPlan)
    mc_samples: int = 2000
    seed: int = 1
    init_error_prob: float = 0.0
    analytic: bool = False
    workers: int = 1
    out_dir: str = "out"

    def __post_init__(self):
        if self.mc_samples < 2:
            raise ValueError("mc_samples must be >= 2")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not 0.0 <= self.init_error_prob < 1.0:
            raise ValueError("init_error_prob must be in [0, 1)")
        # the experiment seed is the single source of randomness
        object.__setattr__(self, "noise", replace(self.noise, rng_seed=self.seed))

    def to_dict(self) -> dict:
        return {
            "donor": asdict(self.donor),
            "noise": asdict(self.noise),
            "shift": None if self.shift is None else asdict(self.shift),
            "sequence": asdict(self.sequence),
            "plan": {"phases": list(self.plan.phases), "include_z": self.plan.include_z},
            "mc_samples": self.mc_samples,
            "seed": self.seed,
            "init_error_prob": self.init_error_prob,
            "analytic": self.analytic,
            "workers": self.workers,
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        shift = data.get("shift")
        plan = data.get("plan", {})
        return cls(
            donor=DonorParams(**data.get("donor", {})),
            noise=NoiseConfig(**data.get("noise", {})),
            shift=None if shift is None else ShiftModel(**shift),
            sequence=SequenceConfig(**data.get("sequence", {})),
            plan=TomographyPlan(
                phases=tuple(plan.get("phases", tuple(float(p) for p in range(0, 360, 15)))),
                include_z=plan.get("include_z", True),
            ),
            mc_samples=data.get("mc_samples", 2000),
            seed=data.get("seed", 1),
            init_error_prob=data.get("init_error_prob", 0.0),
            analytic=data.get("analytic", False),
            workers=data.get("workers", 1),
            out_dir=data.get("out_dir", "out"),
        )

    def config_hash(self) -> str:
        """Hash of the experiment identity; execution details (worker count,
        output directory) are excluded so reruns compare byte-identical."""
        data = self.to_dict()
        data.pop("workers")
        data.pop("out_dir")
        blob = json.dumps(data, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def ideal(self) -> "ExperimentConfig":
        """Copy with all noise and shift disabled and exact measurement."""
        return replace(
            self,
            shift=None,
            noise=replace(
                self.noise,
                t2star_e=math.inf,
                t2star_n=math.inf,
                storage_t2_base=math.inf,
                readout_visibility=1.0,
            ),
            sequence=replace(self.sequence, mw_carrier_offset=0.0),
            init_error_prob=0.0,
            analytic=True,
        )


def device_like_config(seed: int = 1, analytic: bool = False, **overrides) -> ExperimentConfig:
    """Defaults calibrated to the measured device behavior.

    The shift transient acts on both spins (weakly on the nucleus, which the
    measurements could not resolve directly), and every MW pulse runs from a
    single source parked slightly below the cold resonance. That sign of the
    single-frequency compromise reproduces the observed error character: an
    identity-dominated process whose largest error component is x-like, with
    initialization fidelity above the full-process fidelity.
    """
    shift = ShiftModel(applies_to="electron_and_nucleus", nuclear_scale=0.02)
    seq = SequenceConfig(mw_carrier_offset=-shift.peak_detuning / 2.0)
    cfg = ExperimentConfig(shift=shift, sequence=seq, seed=seed, analytic=analytic)
    return replace(cfg, **overrides) if overrides else cfg


# --- state tomography ---------------------------------------------------------

@dataclass
class StateTomoResult:
    label: str
    memory: bool
    data: XYTomographyData
    fit: SinusoidFit
    bloch: BlochVector
    density: np.ndarray
    target: np.ndarray
    fidelity: float


def _final_state(cfg: ExperimentConfig, seq_cfg: SequenceConfig, memory: bool) -> DensityMatrix4:
    rho0 = initialize_state(cfg.init_error_prob)
    builder = build_memory_sequence if memory else build_initialization_sequence
    seq = builder(seq_cfg, cfg.donor)
    return apply_sequence(rho0, seq, cfg.noise, cfg.shift)


def _fit_errors(data: XYTomographyData, reps: int) -> Optional[np.ndarray]:
    if data.analytic:
        return None
    return fit_point_errors(data.stds, reps)


def run_state_tomography(
    cfg: ExperimentConfig, label: str, memory: bool, *, exp_index: int = 0
) -> StateTomoResult:
    """XY-sweep + Z tomography of one prepared (or stored) input state."""
    seq_cfg = replace(cfg.sequence, input_state=label)

    def prepare(phi):
        return _final_state(cfg, replace(seq_cfg, tomography_phase=phi), memory)

    data = run_xy_tomography(
        prepare, cfg.plan, cfg.noise,
        analytic=cfg.analytic,
        seed_path=(_EXP_STATE, exp_index, int(memory)),
    )
    fit = sinusoid_fit(data.phases, data.means, _fit_errors(data, cfg.noise.repetitions))
    z_est = None
    if data.z_mean is not None:
        z_std = 0.0 if data.analytic else data.z_std / math.sqrt(cfg.noise.repetitions)
        z_est = (data.z_mean, z_std)
    bloch = bloch_from_tomography(fit, z_est, cfg.noise.readout_visibility)
    if cfg.analytic:
        # exact expectation values carry no measurement uncertainty
        bloch = BlochVector(bloch.x, bloch.y, bloch.z, 0.0, 0.0, 0.0)
    density = density_from_bloch(bloch)
    target = density_from_bloch(seq_cfg.target_bloch())
    return StateTomoResult(
        label=label,
        memory=memory,
        data=data,
        fit=fit,
        bloch=bloch,
        density=density,
        target=target,
        fidelity=state_fidelity(density, target),
    )


# --- process tomography -------------------------------------------------------

@dataclass
class ProcessTomoResult:
    labels: tuple[str, ...]
    before: dict
    after: dict
    chi_init: ProcessMatrix
    chi_process: ProcessMatrix
    mc_init: Optional[MonteCarloResult]
    mc_process: Optional[MonteCarloResult]
    report: FidelityReport


def run_process_tomography(
    cfg: ExperimentConfig,
    labels: Sequence[str] = PROCESS_INPUT_LABELS,
    mc_mode: str = "bloch",
) -> ProcessTomoResult:
    """Four-input process tomography of initialization and the full memory.

    chi_init compares the nominal inputs with the states actually prepared;
    chi_process compares them with the states recovered after storage. Both
    use linear inversion plus MLE projection. Error bars come from Monte
    Carlo resampling: mc_mode="bloch" perturbs the reconstructed state
    components within their uncertainties (the default), mc_mode="counts"
    bootstraps the raw tomography counts instead.
    """
    if mc_mode not in ("bloch", "counts"):
        raise ValueError("mc_mode must be 'bloch' or 'counts'")
    before = {
        lbl: run_state_tomography(cfg, lbl, memory=False, exp_index=i)
        for i, lbl in enumerate(labels)
    }
    after = {
        lbl: run_state_tomography(cfg, lbl, memory=True, exp_index=i)
        for i, lbl in enumerate(labels)
    }
    ideal_inputs = [before[lbl].target for lbl in labels]

    def mle_errors(results):
        errs = []
        for lbl in labels:
            b = results[lbl].bloch
            errs.append(np.array([b.z_err / 2, b.z_err / 2, b.x_err / 2, b.y_err / 2]))
        return errs

    chi_init = process_tomography(
        ideal_inputs, [before[lbl].density for lbl in labels], mle_errors(before)
    )
    chi_process = process_tomography(
        ideal_inputs, [after[lbl].density for lbl in labels], mle_errors(after)
    )

    def mc(results, domain):
        targets = [results[lbl].target for lbl in labels]
        if mc_mode == "counts":
            datasets = [
                (results[lbl].data.phases, tuple(results[lbl].data.means), results[lbl].data.z_mean)
                for lbl in labels
            ]
            return counts_bootstrap_errors(
                ideal_inputs, datasets, targets,
                cfg.noise.readout_visibility, cfg.noise.shots_per_point,
                cfg.noise.repetitions,
                n_samples=cfg.mc_samples, seed=cfg.seed,
                workers=cfg.workers, seed_path=(domain,),
            )
        blochs = [results[lbl].bloch.as_tuple() for lbl in labels]
        errs = [
            (results[lbl].bloch.x_err, results[lbl].bloch.y_err, results[lbl].bloch.z_err)
            for lbl in labels
        ]
        return monte_carlo_errors(
            ideal_inputs, blochs, errs, targets,
            n_samples=cfg.mc_samples, seed=cfg.seed,
            workers=cfg.workers, seed_path=(domain,),
        )

    mc_init = mc(before, _MC_INIT)
    mc_process = mc(after, _MC_PROCESS)
    chi_init.errors = mc_init.chi_std
    chi_process.errors = mc_process.chi_std

    sf_init = [
        (before[lbl].fidelity, float(mc_init.state_fidelity_stds[i]))
        for i, lbl in enumerate(labels)
    ]
    sf_process = [
        (after[lbl].fidelity, float(mc_process.state_fidelity_stds[i]))
        for i, lbl in enumerate(labels)
    ]
    report = build_fidelity_report(
        labels, sf_init, sf_process,
        f_i=(chi_init.process_fidelity, mc_init.process_fidelity_std),
        f_p=(chi_process.process_fidelity, mc_process.process_fidelity_std),
    )
    return ProcessTomoResult(
        labels=tuple(labels),
        before=before,
        after=after,
        chi_init=chi_init,
        chi_process=chi_process,
        mc_init=mc_init,
        mc_process=mc_process,
        report=report,
    )


# --- coherence lifetime scans -------------------------------------------------

@dataclass(frozen=True)
class ScanMode:
    """Decay law of one coherence-scan trace family."""

    name: str
    t2_base: float
    exponent: float
    alpha: float


def default_scan_modes(noise: NoiseConfig) -> tuple[ScanMode, ...]:
    """Memory mode from the noise config; nucleus and electron bases chosen
    so all three families meet near 80 ms at N = 256. A config without a
    finite storage law (e.g. the ideal one) falls back to the standard
    defaults, since a lifetime scan needs a decay law to scan."""
    defaults = NoiseConfig()
    base = noise.storage_t2_base if math.isfinite(noise.storage_t2_base) else defaults.storage_t2_base
    alpha = noise.storage_stretch_alpha
    return (
        ScanMode("memory", base, noise.cpmg_exponent, alpha),
        ScanMode("nucleus", 16.9e-3, 0.28, alpha),
        ScanMode("electron", 1.25e-3, 0.75, alpha),
    )


@dataclass
class DecayCurve:
    mode: str
    n_pulses: int
    times: np.ndarray
    probs: np.ndarray
    errs: np.ndarray
    fit: StretchedExpFit


@dataclass
class CoherenceScanResult:
    curves: list[DecayCurve]
    t2_fits: dict            # mode -> (n_list, t2_list, t2_err_list)
    power_laws: dict         # mode -> PowerLawFit


def _memory_probability(cfg: ExperimentConfig, n_pulses: int, tau: float) -> float:
    seq_cfg = replace(
        cfg.sequence, input_state="plusX", dd_pulses=n_pulses,
        storage_time=tau, tomography_phase=0.0,
    )
    rho = _final_state(cfg, seq_cfg, memory=True)
    mat = rho.matrix
    p_up = float(np.clip((mat[0, 0] + mat[1, 1]).real, 0.0, 1.0))
    return reported_probability(p_up, cfg.noise.readout_visibility)


def _scan_times(mode: ScanMode, n_pulses: int, dd_rf_pi: float, n_times: int, memory: bool) -> np.ndarray:
    t2n = cpmg_t2(n_pulses, mode.t2_base, mode.exponent)
    lo, hi = t2n / 8.0, 4.0 * t2n
    if memory:
        lo = max(lo, n_pulses * dd_rf_pi * 1.05)
        hi = max(hi, lo * 8.0)
    return np.geomspace(lo, hi, n_times)


def run_coherence_scan(
    cfg: ExperimentConfig,
    n_list: Sequence[int],
    modes: Optional[Sequence[ScanMode]] = None,
    n_times: int = 12,
) -> CoherenceScanResult:
    """Sweep storage time for each N, fit the stretched-exponential decays,
    and fit the T2-vs-N power law per mode.

    The memory mode drives the full pulse-level protocol; the nucleus and
    electron modes generate their curves from the same stretched-envelope
    decay law applied to an ideal stored coherence.
    """
    if len(n_list) == 0:
        raise ValueError("n_list must be non-empty")
    if modes is None:
        modes = default_scan_modes(cfg.noise)
    curves = []
    t2_fits: dict = {}
    power_laws: dict = {}
    for mode_idx, mode in enumerate(modes):
        t2s, t2errs = [], []
        for n_idx, n_pulses in enumerate(sorted(n_list)):
            times = _scan_times(mode, n_pulses, cfg.sequence.dd_rf_pi, n_times, mode.name == "memory")
            probs, errs = [], []
            for t_idx, tau in enumerate(times):
                if mode.name == "memory":
                    run_cfg = replace(
                        cfg,
                        noise=replace(
                            cfg.noise,
                            storage_t2_base=mode.t2_base,
                            cpmg_exponent=mode.exponent,
                            storage_stretch_alpha=mode.alpha,
                        ),
                    )
                    p_exact = _memory_probability(run_cfg, n_pulses, float(tau))
                else:
                    t2n = cpmg_t2(n_pulses, mode.t2_base, mode.exponent)
                    envelope = math.exp(-((tau / t2n) ** mode.alpha))
                    p_exact = reported_probability(
                        0.5 + 0.5 * envelope, cfg.noise.readout_visibility
                    )
                if cfg.analytic:
                    probs.append(p_exact)
                    errs.append(0.0)
                else:
                    recs = [
                        measure_electron_z(
                            _probability_state(p_exact), cfg.noise,
                            stream(cfg.seed, _EXP_SCAN, mode_idx, n_idx, t_idx, rep),
                            repetition_index=rep,
                        )
                        for rep in range(cfg.noise.repetitions)
                    ]
                    mean, std = estimate_probability(recs)
                    probs.append(mean)
                    errs.append(std / math.sqrt(cfg.noise.repetitions))
            probs = np.array(probs)
            err_arr = None if cfg.analytic else np.clip(np.array(errs), 1e-4, None)
            fit = stretched_exp_fit(times, probs, err_arr)
            curves.append(
                DecayCurve(mode.name, n_pulses, np.asarray(times), probs,
                           np.array(errs), fit)
            )
            t2s.append(fit.t2)
            t2errs.append(float(fit.errors[2]) if np.isfinite(fit.errors[2]) else 0.0)
        ns = np.array(sorted(n_list), dtype=float)
        t2_fits[mode.name] = (ns, np.array(t2s), np.array(t2errs))
        if ns.size >= 3:
            err_in = np.array(t2errs)
            power_laws[mode.name] = power_law_fit(
                ns, np.array(t2s), err_in if np.all(err_in > 0) else None
            )
        else:
            power_laws[mode.name] = None
    return CoherenceScanResult(curves=curves, t2_fits=t2_fits, power_laws=power_laws)


def _probability_state(p_up: float) -> DensityMatrix4:
    """Diagonal four-level state whose electron-up population equals p_up.

    The sampled scan modes only need a state with the right click
    probability; readout visibility is applied by the measurement model, so
    it is divided back out here.
    """
    p = float(np.clip(p_up, 0.0, 1.0))
    return DensityMatrix4(np.diag([p, 0.0, 1.0 - p, 0.0]).astype(complex))


# --- pulse-induced shift scan ---------------------------------------------------

@dataclass
class ShiftScanResult:
    delays: np.ndarray
    extracted: np.ndarray       # detuning estimate per delay (Hz)
    model: np.ndarray           # shift_detuning at the window midpoint
    window_average: np.ndarray  # exact model average over each Ramsey window


def run_shift_scan(
    cfg: ExperimentConfig,
    delays: Sequence[float],
    *,
    window: float = 10e-6,
    carrier_offset: float = 15e3,
    ramsey_rabi: float = 1e6,
    n_phases: int = 12,
) -> ShiftScanResult:
    """Ramsey-style extraction of the transient shift after an RF pulse.

    For each delay, a pair of MW pi/2 pulses parked `carrier_offset` above
    the steady-state resonance brackets a short free window; sweeping the
    second pulse's phase gives a fringe whose phase equals the free
    precession accumulated in the drive frame, from which the instantaneous
    detuning is read off.
    """
    shift = cfg.shift if cfg.shift is not None else ShiftModel(shape="none")
    freqs = transition_frequencies(cfg.donor)
    carrier = freqs.nu_mw_up + carrier_offset
    quarter = 1.0 / (4.0 * ramsey_rabi)
    phases = np.linspace(0.0, 360.0, n_phases, endpoint=False)
    delays = np.asarray(list(delays), dtype=float)

    extracted = []
    for d_idx, delay in enumerate(delays):
        probs = []
        for p_idx, phi2 in enumerate(phases):
            # phase-continuous detuned source: fringes accumulate at the
            # drive-frame rate between the two pulses
            events = (
                StagedEvent("init", FreeEvolution(delay)),
                StagedEvent("init", Pulse("MW", carrier, 0.0, quarter, ramsey_rabi, phase_tracking=False)),
                StagedEvent("storage", FreeEvolution(window)),
                StagedEvent("tomography", Pulse("MW", carrier, float(phi2), quarter, ramsey_rabi, phase_tracking=False)),
                StagedEvent("readout", ReadoutMarker()),
            )
            seq = PulseSequence(events, cfg.donor)
            rho = apply_sequence(
                initialize_state(0.0), seq, cfg.noise, shift, shift_active_at_start=True
            )
            mat = rho.matrix
            p_up = float(np.clip((mat[0, 0] + mat[1, 1]).real, 0.0, 1.0))
            p_rep = reported_probability(p_up, cfg.noise.readout_visibility)
            if cfg.analytic:
                probs.append(p_rep)
            else:
                recs = [
                    measure_electron_z(
                        rho, cfg.noise,
                        stream(cfg.seed, _EXP_SHIFT, d_idx, p_idx, rep),
                        repetition_index=rep, basis_phase=float(phi2),
                    )
                    for rep in range(cfg.noise.repetitions)
                ]
                mean, _ = estimate_probability(recs)
                probs.append(mean)
        fit = sinusoid_fit(phases, np.array(probs))
        # The fringe phase equals the drive-frame precession over the window
        # plus the pulses' own contribution; the latter is the standard
        # effective-time extension of (4/pi) * t_pi/2. Valid while the
        # drive-frame rate stays under half a cycle per effective window.
        fitted_phase = fit.phase_deg if fit.phase_defined else 0.0
        cycles = (((fitted_phase or 0.0) + 180.0) % 360.0 - 180.0) / 360.0
        effective_window = window + (4.0 / math.pi) * quarter
        extracted.append(cycles / effective_window + carrier_offset)
    model = np.array([shift_detuning(d + window / 2.0, shift) for d in delays])
    window_avg = np.array(
        [shift_phase_cycles(d, window, shift) / window for d in delays]
    )
    return ShiftScanResult(
        delays=delays,
        extracted=np.array(extracted),
        model=model,
        window_average=window_avg,
    )
