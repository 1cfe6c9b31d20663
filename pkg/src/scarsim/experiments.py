"""Batch experiment runner: configuration, circuit-variant orchestration,
mitigation pipeline, statistics, and deterministic file emission.

Pipeline order is fixed: readout-matrix inversion, then postselection,
then per-twirl observable estimation, then linear extrapolation across
the noise scale factors.  Every sampled trajectory, twirl, and fold
derives its randomness from (config seed, trial, step, twirl, scale)
keys, so a rerun with the same config emits byte-identical files.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, mitigation, noise, observables
from .model import (
    ModelParams,
    fibonacci_projector,
    neel_bitstring,
    neel_prep_circuit,
    project,
    trotter_angles,
    build_trotter_step,
)
from .noise import NoiseSpec, rzz_duration
from .observables import (
    CY_BRANCHES,
    PARITIES,
    TimeSeries,
    accumulated_error,
    assemble_cy,
    cy_branch_prep,
    loschmidt_echo,
    loschmidt_echo_state,
    per_site_z,
    pyp_expectation,
    series_from_values,
    staggered_magnetization,
    y_basis_rotation,
)
from .qsim import Circuit, Counts, Statevector, run_circuit

READOUT_MODES = ("off", "tensor", "full")
FORMATS = ("csv", "json")
REGIMES = ("scar", "chaotic")

# seed-derivation role keys
_ROLE_FOLD = 0
_ROLE_TWIRL = 1
_ROLE_CAL = 4


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; (config, seed) fixes all randomness."""

    sites: int = 12
    steps: int = 39
    v: float = 1.0
    omega: float = 0.24
    dt: float = 1.0
    impl: str = "scaled-rzx"
    noise_preset: str = "casablanca-like"
    noise_overrides: dict = field(default_factory=dict)
    shots: int = 8192
    infinite_shots: bool = False
    shots_per_trajectory: int = 1024
    twirls: int = 10
    zne_factors: tuple[float, ...] = (1.0, 1.5, 2.0)
    readout_mode: str = "tensor"
    postselect: bool = True
    dd: bool = False
    regime: str = "scar"
    trials: int = 1
    seed: int = 0
    out: str = "results"
    format: str = "csv"

    def __post_init__(self):
        if self.sites < 2:
            raise ValueError("need at least 2 sites")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.twirls < 1:
            raise ValueError("twirls must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.readout_mode not in READOUT_MODES:
            raise ValueError(f"readout_mode must be one of {READOUT_MODES}")
        if self.format not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}")
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        if self.impl not in ("two-cnot", "scaled-rzx", "rzz"):
            raise ValueError("impl must be 'two-cnot', 'scaled-rzx', or 'rzz'")
        factors = tuple(float(f) for f in self.zne_factors)
        if not factors or sorted(factors) != list(factors) or factors[0] != 1.0:
            raise ValueError("zne_factors must be ascending and start at 1.0")
        object.__setattr__(self, "zne_factors", factors)
        object.__setattr__(self, "noise_overrides", dict(self.noise_overrides))

    def model_params(self) -> ModelParams:
        if self.regime == "chaotic":
            return ModelParams(V=self.v, Omega=2.0, dt=0.16, L=self.sites)
        return ModelParams(V=self.v, Omega=self.omega, dt=self.dt, L=self.sites)

    def noise_spec(self) -> NoiseSpec:
        return noise.preset(self.noise_preset, **self.noise_overrides)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["zne_factors"] = list(self.zne_factors)
        return d


def config_from_ini(path, **cli_overrides) -> ExperimentConfig:
    """Build a config from an INI document; keyword overrides win.

    Sections mirror the dataclass: [model] sites/steps/v/omega/dt,
    [execution] impl/shots/infinite_shots/seed/trials/shots_per_trajectory,
    [noise] preset plus override.<field> entries, [mitigation]
    twirls/zne_factors/readout_mode/postselect/dd, [output] out/format.
    """
    cp = configparser.ConfigParser()
    with open(path) as fh:
        cp.read_file(fh)
    kwargs: dict = {}

    def take(section, key, conv):
        if cp.has_option(section, key):
            kwargs[key] = conv(cp.get(section, key))

    take("model", "sites", int)
    take("model", "steps", int)
    take("model", "v", float)
    take("model", "omega", float)
    take("model", "dt", float)
    take("execution", "impl", str)
    take("execution", "shots", int)
    take("execution", "infinite_shots", lambda s: s.lower() in ("1", "true", "yes"))
    take("execution", "shots_per_trajectory", int)
    take("execution", "seed", int)
    take("execution", "trials", int)
    take("execution", "regime", str)
    if cp.has_option("noise", "preset"):
        kwargs["noise_preset"] = cp.get("noise", "preset")
    if cp.has_section("noise"):
        overrides = {
            k[len("override."):]: float(v)
            for k, v in cp.items("noise")
            if k.startswith("override.")
        }
        if overrides:
            kwargs["noise_overrides"] = overrides
    take("mitigation", "twirls", int)
    take(
        "mitigation",
        "zne_factors",
        lambda s: tuple(float(x) for x in s.split(",")),
    )
    take("mitigation", "readout_mode", str)
    take("mitigation", "postselect", lambda s: s.lower() in ("1", "true", "yes"))
    take("mitigation", "dd", lambda s: s.lower() in ("1", "true", "yes"))
    take("output", "out", str)
    take("output", "format", str)
    kwargs.update({k: v for k, v in cli_overrides.items() if v is not None})
    return ExperimentConfig(**kwargs)


@dataclass
class Table:
    """Flat tabular result (non-TimeSeries artifacts, e.g. the benchmark)."""

    columns: list[str]
    rows: list[tuple]

    def csv_rows(self) -> list[str]:
        out = [",".join(self.columns)]
        for row in self.rows:
            cells = [
                f"{v:.12e}" if isinstance(v, float) else str(v) for v in row
            ]
            out.append(",".join(cells))
        return out

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("\n".join(self.csv_rows()) + "\n")


# ---------------------------------------------------------------------------
# Reference (oracle) series
# ---------------------------------------------------------------------------

def reference_series(params: ModelParams, steps: int, impl: str) -> dict:
    """Noiseless Trotter evolution and its subspace-projected twin.

    Returns per-step per-site magnetizations, staggered density, return
    probabilities (0 and 1 flips allowed), and the subspace weight.
    """
    L = params.L
    mask = fibonacci_projector(L)
    ref = neel_bitstring(L)
    step_circ = build_trotter_step(params, impl=impl)
    psi = run_circuit(Statevector.zero(L), neel_prep_circuit(L))
    out = {
        "site_z": [],
        "site_z_proj": [],
        "zpi": [],
        "zpi_proj": [],
        "echo0": [],
        "echo1": [],
        "echo0_proj": [],
        "echo1_proj": [],
        "weight": [],
    }
    for n in range(steps + 1):
        if n > 0:
            psi = run_circuit(psi, step_circ)
        proj, weight = project(psi, mask)
        out["weight"].append(weight)
        out["site_z"].append(per_site_z(psi))
        out["zpi"].append(staggered_magnetization(psi))
        out["echo0"].append(loschmidt_echo_state(psi, ref))
        out["echo1"].append(_echo_one_flip(psi, ref))
        if proj is None:
            out["site_z_proj"].append(np.full(L, np.nan))
            out["zpi_proj"].append(np.nan)
            out["echo0_proj"].append(np.nan)
            out["echo1_proj"].append(np.nan)
        else:
            out["site_z_proj"].append(per_site_z(proj))
            out["zpi_proj"].append(staggered_magnetization(proj))
            out["echo0_proj"].append(loschmidt_echo_state(proj, ref))
            out["echo1_proj"].append(_echo_one_flip(proj, ref))
    for k in out:
        out[k] = np.asarray(out[k])
    return out


def _echo_one_flip(psi: Statevector, reference: str) -> float:
    probs = psi.probabilities()
    ref_idx = int(reference, 2)
    total = probs[ref_idx]
    for q in range(len(reference)):
        total += probs[ref_idx ^ (1 << (len(reference) - 1 - q))]
    return float(total)


# ---------------------------------------------------------------------------
# Counts pipeline
# ---------------------------------------------------------------------------

def _calibrated_confusion(config, spec, trial):
    if config.readout_mode == "off":
        return None
    return mitigation.calibrate_confusion(
        spec,
        config.sites,
        shots=config.shots,
        method=config.readout_mode,
        seed=config.seed * 1000003 + trial * 101 + _ROLE_CAL,
        infinite=config.infinite_shots,
    )


def _process_counts(counts: Counts, confusion, config, reference: str):
    """Readout inversion -> postselection -> observable estimates."""
    if confusion is not None:
        counts = mitigation.mitigate_readout(counts, confusion)
    retained = 1.0
    if config.postselect:
        sel = mitigation.postselect(counts)
        retained = sel.retained_fraction
        if sel.empty:
            return None
        counts = sel.counts
    return _estimates(counts, reference, retained)


def _estimates(counts: Counts, reference: str, retained: float = 1.0):
    return {
        "zpi": staggered_magnetization(counts),
        "site_z": per_site_z(counts),
        "echo0": loschmidt_echo(counts, reference, 0),
        "echo1": loschmidt_echo(counts, reference, 1),
        "retained": retained,
    }


def _zne_scalar(per_lambda: list[list[float]], lam_effs: list[float]):
    """Extrapolate one observable: per-scale twirl samples -> (value, std)."""
    pts = []
    present = []
    for li, lam in enumerate(lam_effs):
        vals = [v for v in per_lambda[li] if v is not None and np.isfinite(v)]
        if not vals:
            continue
        sig = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        present.append(lam)
        pts.extend((lam, v, sig) for v in vals)
    if not pts:
        return np.nan, np.nan
    if len(set(present)) < 2:
        vals = [v for _, v, _ in pts]
        spread = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        return float(np.mean(vals)), spread
    res = mitigation.zne_extrapolate(pts)
    return res.intercept, res.intercept_std


@dataclass
class TrialSeries:
    """Everything measured in one trial of the magnetization pipeline."""

    zpi_mit: np.ndarray
    zpi_mit_std: np.ndarray
    zpi_raw: np.ndarray
    zpi_raw_std: np.ndarray
    echo_mit: dict
    echo_raw: dict
    site_mit: np.ndarray
    site_mit_std: np.ndarray
    site_raw: np.ndarray
    retained: np.ndarray
    variants: list


def _run_trial(config: ExperimentConfig, trial: int) -> TrialSeries:
    params = config.model_params()
    spec = config.noise_spec()
    L = params.L
    reference = neel_bitstring(L)
    confusion = _calibrated_confusion(config, spec, trial)

    idle_ns = None
    if config.dd:
        idle_ns = rzz_duration(trotter_angles(params).theta_zz, config.impl, spec.pulse)
    step_circ = build_trotter_step(params, impl=config.impl, idle_ns=idle_ns)
    prep = neel_prep_circuit(L)

    n_steps = config.steps
    n_lam = len(config.zne_factors)
    zpi_mit = np.empty(n_steps + 1)
    zpi_mit_std = np.empty(n_steps + 1)
    zpi_raw = np.empty(n_steps + 1)
    zpi_raw_std = np.empty(n_steps + 1)
    echo_mit = {0: np.empty(n_steps + 1), 1: np.empty(n_steps + 1)}
    echo_mit_std = {0: np.empty(n_steps + 1), 1: np.empty(n_steps + 1)}
    echo_raw = {0: np.empty(n_steps + 1), 1: np.empty(n_steps + 1)}
    site_mit = np.empty((n_steps + 1, L))
    site_mit_std = np.empty((n_steps + 1, L))
    site_raw = np.empty((n_steps + 1, L))
    retained = np.empty(n_steps + 1)
    variants = []

    gates = tuple(prep.gates)
    for step in range(n_steps + 1):
        if step > 0:
            gates = gates + step_circ.gates
        base = Circuit(L, gates)
        if config.dd:
            base = mitigation.insert_dd(base, spec.pulse.single_pulse_ns)
        n2 = base.n_two_qubit
        lam_effs = [mitigation.effective_scale(n2, lam) for lam in config.zne_factors]

        samples: list[list] = [[] for _ in range(n_lam)]
        raws: list = []
        for w in range(config.twirls):
            for li, lam in enumerate(config.zne_factors):
                key = [config.seed, trial, step, w, li]
                folded = mitigation.fold_gates_random(base, lam, seed=key + [_ROLE_FOLD])
                twirled = mitigation.twirl_circuit(folded, seed=key + [_ROLE_TWIRL])
                counts = noise.run_noisy_counts(
                    twirled,
                    spec,
                    config.shots,
                    key,
                    infinite=config.infinite_shots,
                    shots_per_trajectory=config.shots_per_trajectory,
                )
                if lam == 1.0:
                    raws.append(_estimates(counts, reference))
                samples[li].append(_process_counts(counts, confusion, config, reference))
                variants.append(
                    {
                        "trial": trial,
                        "step": step,
                        "twirl": w,
                        "scale": lam,
                        "effective_scale": lam_effs[li],
                        "two_qubit_gates": n2,
                        "seed_key": key,
                    }
                )

        zpi_mit[step], zpi_mit_std[step] = _zne_scalar(
            [[s["zpi"] if s else None for s in samples[li]] for li in range(n_lam)],
            lam_effs,
        )
        for flips in (0, 1):
            echo_mit[flips][step], echo_mit_std[flips][step] = _zne_scalar(
                [
                    [s[f"echo{flips}"] if s else None for s in samples[li]]
                    for li in range(n_lam)
                ],
                lam_effs,
            )
        for q in range(L):
            site_mit[step, q], site_mit_std[step, q] = _zne_scalar(
                [
                    [s["site_z"][q] if s else None for s in samples[li]]
                    for li in range(n_lam)
                ],
                lam_effs,
            )
        raw_zpi_vals = [r["zpi"] for r in raws]
        zpi_raw[step] = float(np.mean(raw_zpi_vals))
        zpi_raw_std[step] = (
            float(np.std(raw_zpi_vals, ddof=1)) if len(raw_zpi_vals) > 1 else 0.0
        )
        for flips in (0, 1):
            echo_raw[flips][step] = float(np.mean([r[f"echo{flips}"] for r in raws]))
        site_raw[step] = np.mean([r["site_z"] for r in raws], axis=0)
        kept = [s["retained"] for s in samples[0] if s is not None]
        retained[step] = float(np.mean(kept)) if kept else 0.0

    return TrialSeries(
        zpi_mit=zpi_mit,
        zpi_mit_std=zpi_mit_std,
        zpi_raw=zpi_raw,
        zpi_raw_std=zpi_raw_std,
        echo_mit={k: (echo_mit[k], echo_mit_std[k]) for k in echo_mit},
        echo_raw=echo_raw,
        site_mit=site_mit,
        site_mit_std=site_mit_std,
        site_raw=site_raw,
        retained=retained,
        variants=variants,
    )


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    reference: dict
    trials: list[TrialSeries]


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run the magnetization/echo pipeline for every trial."""
    params = config.model_params()
    ref = reference_series(params, config.steps, config.impl)
    trials = [_run_trial(config, t) for t in range(config.trials)]
    return ExperimentResult(config=config, reference=ref, trials=trials)


def _mean_std_over_trials(arrays, stds):
    vals = np.stack(arrays)
    mean = vals.mean(axis=0)
    if len(arrays) > 1:
        return mean, vals.std(axis=0, ddof=1)
    return mean, stds[0]


def _series(config, values, errors) -> TimeSeries:
    steps = np.arange(config.steps + 1)
    dt_v = config.model_params().dt * config.model_params().V
    return series_from_values(steps, dt_v, values, errors)


def run_zpi(config: ExperimentConfig, result: ExperimentResult | None = None) -> dict:
    """Staggered-magnetization bundle: mitigated, unmitigated, references,
    per-site tables, accumulated error, and the subspace weight."""
    result = result or run_experiment(config)
    ref = result.reference
    L = config.sites
    out: dict = {}

    zpi_mean, zpi_std = _mean_std_over_trials(
        [t.zpi_mit for t in result.trials], [t.zpi_mit_std for t in result.trials]
    )
    raw_mean, raw_std = _mean_std_over_trials(
        [t.zpi_raw for t in result.trials], [t.zpi_raw_std for t in result.trials]
    )
    out["zpi_density_mitigated"] = _series(config, zpi_mean / L, zpi_std / L)
    out["zpi_density_unmitigated"] = _series(config, raw_mean / L, raw_std / L)
    out["zpi_density_ideal"] = _series(config, ref["zpi"] / L, None)
    out["zpi_density_projected"] = _series(config, ref["zpi_proj"] / L, None)
    out["fibonacci_weight_ideal"] = _series(config, ref["weight"], None)
    out["postselect_retained"] = _series(
        config, np.mean([t.retained for t in result.trials], axis=0), None
    )

    site_mean, site_std = _mean_std_over_trials(
        [t.site_mit for t in result.trials], [t.site_mit_std for t in result.trials]
    )
    if site_std is None:
        site_std = np.zeros_like(site_mean)
    ref_site = ref["site_z_proj"] if config.postselect else ref["site_z"]
    d_vals, d_err = accumulated_error(site_mean, ref_site, site_std)
    out["accumulated_error_mitigated"] = _series(config, d_vals, d_err)

    raw_site = np.mean([t.site_raw for t in result.trials], axis=0)
    d_raw, _ = accumulated_error(raw_site, ref["site_z"])
    out["accumulated_error_unmitigated"] = _series(config, d_raw, None)

    dt_v = config.model_params().dt * config.model_params().V
    rows = []
    for step in range(config.steps + 1):
        for q in range(L):
            rows.append(
                (
                    step,
                    float(step * dt_v),
                    q + 1,
                    float(site_mean[step, q]),
                    float(site_std[step, q]),
                )
            )
    out["per_site_z_mitigated"] = Table(
        columns=["step", "Vt", "site", "value", "std"], rows=rows
    )
    ref_rows = [
        (step, float(step * dt_v), q + 1, float(ref_site[step, q]), 0.0)
        for step in range(config.steps + 1)
        for q in range(L)
    ]
    out["per_site_z_reference"] = Table(
        columns=["step", "Vt", "site", "value", "std"], rows=ref_rows
    )
    out["variants"] = [v for t in result.trials for v in t.variants]
    return out


def run_loschmidt(config: ExperimentConfig, result: ExperimentResult | None = None) -> dict:
    """Return-probability series for 0 and 1 tolerated flips; reuses the
    magnetization pipeline's counts."""
    result = result or run_experiment(config)
    ref = result.reference
    out: dict = {}
    for flips in (0, 1):
        mean, std = _mean_std_over_trials(
            [t.echo_mit[flips][0] for t in result.trials],
            [t.echo_mit[flips][1] for t in result.trials],
        )
        out[f"loschmidt_f{flips}_mitigated"] = _series(config, mean, std)
        raw = np.mean([t.echo_raw[flips] for t in result.trials], axis=0)
        out[f"loschmidt_f{flips}_unmitigated"] = _series(config, raw, None)
        out[f"loschmidt_f{flips}_ideal"] = _series(config, ref[f"echo{flips}"], None)
        out[f"loschmidt_f{flips}_projected"] = _series(
            config, ref[f"echo{flips}_proj"], None
        )
    out["variants"] = [v for t in result.trials for v in t.variants]
    return out


# ---------------------------------------------------------------------------
# Correlator experiment
# ---------------------------------------------------------------------------

def _cy_reference(params: ModelParams, steps: int, impl: str) -> np.ndarray:
    """Noiseless Trotter correlator via the measurement protocol itself."""
    from .observables import simulate_cy_noiseless

    return np.array(
        [simulate_cy_noiseless(params, n, impl=impl) for n in range(steps + 1)]
    )


def run_cy(config: ExperimentConfig, regime: str | None = None) -> dict:
    """Correlator pipeline: 4 branches x 2 parities x floor(L/2) sources
    per step, twirl x scale variants each, readout mitigation and ZNE per
    local term (no postselection: the measurement is not in the Z basis)."""
    if regime is not None:
        config = replace(config, regime=regime)
    params = config.model_params()
    spec = config.noise_spec()
    L = params.L
    confusion = _calibrated_confusion(config, spec, trial=0)
    step_circ = build_trotter_step(params, impl=config.impl)
    prep = neel_prep_circuit(L)
    sources = list(range(2, L + 1, 2))
    n_lam = len(config.zne_factors)

    values = np.zeros(config.steps + 1, dtype=complex)
    stds = np.zeros(config.steps + 1)
    variants = []
    evolution_gates: tuple = ()
    for step in range(config.steps + 1):
        if step > 0:
            evolution_gates = evolution_gates + step_circ.gates
        branch_vals: dict = {}
        branch_vars: dict = {}
        for i in sources:
            for b in CY_BRANCHES:
                site_vals: dict[int, float] = {}
                site_vars: dict[int, float] = {}
                for parity in PARITIES:
                    base = Circuit(
                        L,
                        prep.gates
                        + cy_branch_prep(L, i, b).gates
                        + evolution_gates
                        + y_basis_rotation(L, parity).gates,
                    )
                    n2 = base.n_two_qubit
                    lam_effs = [
                        mitigation.effective_scale(n2, lam)
                        for lam in config.zne_factors
                    ]
                    per_lam: list[list[dict]] = [[] for _ in range(n_lam)]
                    for w in range(config.twirls):
                        for li, lam in enumerate(config.zne_factors):
                            key = [
                                config.seed,
                                7,
                                step,
                                i,
                                CY_BRANCHES.index(b),
                                PARITIES.index(parity),
                                w,
                                li,
                            ]
                            folded = mitigation.fold_gates_random(
                                base, lam, seed=key + [_ROLE_FOLD]
                            )
                            twirled = mitigation.twirl_circuit(
                                folded, seed=key + [_ROLE_TWIRL]
                            )
                            counts = noise.run_noisy_counts(
                                twirled,
                                spec,
                                config.shots,
                                key,
                                infinite=config.infinite_shots,
                                shots_per_trajectory=config.shots_per_trajectory,
                            )
                            if confusion is not None:
                                counts = mitigation.mitigate_readout(counts, confusion)
                            per_lam[li].append(pyp_expectation(counts, parity))
                            variants.append(
                                {
                                    "step": step,
                                    "source": i,
                                    "branch": b,
                                    "parity": parity,
                                    "twirl": w,
                                    "scale": lam,
                                    "two_qubit_gates": n2,
                                    "seed_key": key,
                                }
                            )
                    for j in per_lam[0][0]:
                        val, std = _zne_scalar(
                            [[s[j] for s in per_lam[li]] for li in range(n_lam)],
                            lam_effs,
                        )
                        site_vals[j] = val
                        site_vars[j] = std**2 if np.isfinite(std) else 0.0
                branch_vals[(i, b)] = site_vals
                branch_vars[(i, b)] = site_vars
        values[step] = assemble_cy(branch_vals, L)
        var_re = 0.0
        var_im = 0.0
        for i in sources:
            for j in range(1, L + 1):
                var_re += 0.25 * (
                    branch_vars[(i, "M+1")][j] + branch_vars[(i, "M-1")][j]
                )
                var_im += 0.25 * (
                    branch_vars[(i, "+Y")][j] + branch_vars[(i, "-Y")][j]
                )
        v = values[step]
        mag = abs(v)
        if mag > 0:
            stds[step] = np.sqrt(
                (v.real**2 * var_re + v.imag**2 * var_im)
            ) / mag
        else:
            stds[step] = np.sqrt(var_re + var_im)

    ref = _cy_reference(params, config.steps, config.impl)
    out = {
        "cy_mitigated": _series(config, values, stds),
        "cy_abs_mitigated": _series(config, np.abs(values), stds),
        "cy_ideal": _series(config, ref, None),
        "cy_abs_ideal": _series(config, np.abs(ref), None),
        "variants": variants,
    }
    return out


# ---------------------------------------------------------------------------
# Interaction-gate benchmark
# ---------------------------------------------------------------------------

def run_rzz_bench(config: ExperimentConfig, thetas=None, repeats: int = 4) -> dict:
    """Duration, modeled error rate, and SPAM-free slope per angle and
    realization over the benchmark grid."""
    from .qsim import rzz as rzz_gate
    from .tomography import spam_free_error

    spec = config.noise_spec()
    grid = (
        np.asarray(thetas, dtype=float)
        if thetas is not None
        else np.linspace(0.2, 2.4, 12)
    )
    rows = []
    for theta in grid:
        for impl in ("two-cnot", "scaled-rzx"):
            duration = rzz_duration(float(theta), impl, spec.pulse)
            model_p = _realized_error(float(theta), impl, spec)
            slope = spam_free_error(
                rzz_gate(0, 1, float(theta)),
                spec,
                repeats=repeats,
                shots=config.shots,
                seed=config.seed,
                infinite=config.infinite_shots,
                realization=impl,
            )
            rows.append(
                (
                    float(theta),
                    impl,
                    float(duration),
                    float(model_p),
                    float(slope.epsilon),
                    float(slope.epsilon_std),
                )
            )
    table = Table(
        columns=["theta", "impl", "duration_ns", "model_error", "qpt_slope", "slope_std"],
        rows=rows,
    )
    return {"rzz_bench": table}


def _realized_error(theta: float, impl: str, spec: NoiseSpec) -> float:
    from .qsim import cnot as cnot_gate
    from .qsim import rzx as rzx_gate

    if impl == "two-cnot":
        p = spec.two_qubit_error_prob(cnot_gate(0, 1))
        return 1.0 - (1.0 - p) ** 2
    return spec.two_qubit_error_prob(rzx_gate(0, 1, theta))


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def emit(results: dict, config: ExperimentConfig, out_dir=None) -> list[Path]:
    """Write one file per series/table plus a manifest with content hashes.

    Output is deterministic: fixed float formatting, sorted JSON keys,
    no timestamps; rerunning an identical config reproduces every byte.
    """
    out = Path(out_dir if out_dir is not None else config.out)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    hashes: dict[str, str] = {}
    for name in sorted(results):
        obj = results[name]
        if name == "variants":
            path = out / "variants.jsonl"
            lines = [json.dumps(v, sort_keys=True) for v in obj]
            path.write_text("\n".join(lines) + "\n")
        elif config.format == "csv":
            path = out / f"{name}.csv"
            obj.write_csv(path)
        else:
            path = out / f"{name}.json"
            payload = _json_payload(obj)
            path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
        hashes[path.name] = hashlib.sha1(path.read_bytes()).hexdigest()
        written.append(path)
    manifest = {
        "package_version": __version__,
        "config": config.to_dict(),
        "files": hashes,
    }
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    written.append(mpath)
    return written


def _json_payload(obj) -> dict:
    if isinstance(obj, TimeSeries):
        return {
            "columns": ["step", "Vt", "value_re", "value_im", "std"],
            "rows": [
                [
                    int(obj.steps[k]),
                    float(obj.times[k]),
                    float(complex(obj.values[k]).real),
                    float(complex(obj.values[k]).imag),
                    float(obj.errors[k]),
                ]
                for k in range(len(obj))
            ],
        }
    if isinstance(obj, Table):
        return {"columns": obj.columns, "rows": [list(r) for r in obj.rows]}
    raise TypeError(f"cannot serialize {type(obj)}")


def manifest_config_round_trip(path) -> ExperimentConfig:
    """Rebuild the config recorded in a manifest (audit hook)."""
    data = json.loads(Path(path).read_text())
    cfg = dict(data["config"])
    cfg["zne_factors"] = tuple(cfg["zne_factors"])
    return ExperimentConfig(**cfg)
