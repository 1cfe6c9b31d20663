"""Phenomenological hardware noise driven by a pulse-duration model.

The two-qubit interaction gate can be compiled two ways: a fixed pair of
CNOTs (duration independent of the rotation angle) or a single
cross-resonance pulse whose square-Gaussian envelope is rescaled to the
angle (duration constant below an amplitude threshold, affine above).
Longer schedules mean larger stochastic error, modeled as
p = 1 - exp(-duration / tau), with tau calibrated so the two-CNOT
compilation hits a configurable target error rate.

Noisy execution samples Pauli-insertion trajectories over the
statevector (exact for stochastic Pauli channels); exact density-matrix
evolution is available at width <= 4 as the verification substrate.
Relaxation (amplitude damping) is deliberately absent: it is not a Pauli
channel and would break exact trajectory unraveling; only Z-type
dephasing is modeled, leaving damping as a density-matrix extension.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .qsim import (
    Circuit,
    Counts,
    DensityOperator,
    Gate,
    KrausChannel,
    Statevector,
    _apply_matrix,
    _embed,
    gate_matrix,
    pauli_basis_labels,
    pauli_basis_matrices,
)

TWO_QUBIT_PAULI_LABELS = [lab for lab in pauli_basis_labels(2) if lab != "II"]


@dataclass(frozen=True)
class PulseParams:
    """Square-Gaussian cross-resonance pulse calibration.

    ``amp_ref`` and ``width_ref`` are the amplitude |A(pi/2)| and square
    width W(pi/2) (in samples) of the reference pulse; ``sigma`` is the
    Gaussian flank std, truncated at ``n_sigma`` deviations.  One sample
    lasts ``sample_dt_ns``.  ``single_pulse_ns`` is the duration of one
    single-qubit pulse (dressing/echo overhead, also the DD X-pulse
    length).
    """

    amp_ref: float = 0.25
    width_ref: float = 640.0
    sigma: float = 32.0
    n_sigma: float = 2.0
    sample_dt_ns: float = 0.2222
    single_pulse_ns: float = 35.5

    def __post_init__(self):
        for name in ("amp_ref", "sigma", "sample_dt_ns", "single_pulse_ns"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.width_ref < 0:
            raise ValueError("width_ref must be >= 0")
        if self.n_sigma < 1:
            raise ValueError("n_sigma must be >= 1")


def gaussian_flank_area_per_amp(pp: PulseParams) -> float:
    """sigma * sqrt(2 pi) * erf(n_sigma): flank area per unit amplitude."""
    return pp.sigma * math.sqrt(2.0 * math.pi) * math.erf(pp.n_sigma)


def pulse_area(pp: PulseParams) -> float:
    """Total area |A| W + |A| sigma sqrt(2 pi) erf(n_sigma) of the reference pulse."""
    return pp.amp_ref * pp.width_ref + pp.amp_ref * gaussian_flank_area_per_amp(pp)


def threshold_angle(pp: PulseParams) -> float:
    """Angle below which the width hits zero and only the amplitude scales."""
    alpha = pulse_area(pp)
    return (math.pi / (2.0 * alpha)) * pp.amp_ref * gaussian_flank_area_per_amp(pp)


def scaled_width(theta: float, pp: PulseParams) -> float:
    """Square width W(theta) for angles at or above the threshold."""
    if theta < 0:
        raise ValueError("theta must be >= 0")
    if theta < threshold_angle(pp):
        return 0.0
    alpha = pulse_area(pp)
    return 2.0 * alpha * theta / (math.pi * pp.amp_ref) - gaussian_flank_area_per_amp(pp)


def scaled_amplitude(theta: float, pp: PulseParams) -> float:
    """|A(theta)| for angles below the threshold (width pinned to zero)."""
    theta_star = threshold_angle(pp)
    if not 0.0 <= theta <= theta_star + 1e-12:
        raise ValueError(f"theta {theta} above the amplitude-scaling threshold {theta_star}")
    alpha = pulse_area(pp)
    return 2.0 * alpha * theta / (math.pi * gaussian_flank_area_per_amp(pp))


def cr_pulse_ns(theta: float, pp: PulseParams) -> float:
    """Duration of one scaled CR pulse: square width plus both flanks."""
    samples = scaled_width(theta, pp) + 2.0 * pp.n_sigma * pp.sigma
    return samples * pp.sample_dt_ns


def cnot_duration_ns(pp: PulseParams) -> float:
    """Echoed CR pair at the reference angle plus single-qubit overhead."""
    return 2.0 * cr_pulse_ns(math.pi / 2.0, pp) + 2.0 * pp.single_pulse_ns


def rzz_duration(theta: float, impl: str, pp: PulseParams) -> float:
    """Pulse-schedule duration in ns of the interaction gate at ``theta``.

    two-cnot: two CNOT schedules; the inner Z rotation is a virtual
    phase shift, so the total does not depend on theta.  scaled-rzx:
    one echoed pair of angle-scaled CR pulses plus dressing overhead.
    """
    if impl == "two-cnot":
        return 2.0 * cnot_duration_ns(pp)
    if impl in ("scaled-rzx", "rzz"):
        return 2.0 * cr_pulse_ns(theta, pp) + 2.0 * pp.single_pulse_ns
    raise ValueError(f"unknown impl {impl!r}")


def gate_error_rate(duration_ns: float, tau_err_ns: float) -> float:
    """p = 1 - exp(-duration/tau): zero at zero duration, monotone."""
    if duration_ns < 0:
        raise ValueError("duration must be >= 0")
    return 1.0 - math.exp(-duration_ns / tau_err_ns)


@dataclass(frozen=True)
class NoiseSpec:
    """Phenomenological error model for circuit execution.

    Two-qubit gate errors come from one of three sources, in precedence
    order: an explicit Pauli-pair rate map, a fixed depolarizing
    parameter, or the pulse-duration law calibrated so the two-CNOT
    interaction gate hits ``two_qubit_target_error``.  Readout errors
    are per-qubit (eps: 0->1, eta: 1->0).  Idle dephasing is a
    quasi-static per-trajectory Z rotation rate (std in rad/ns), which
    dynamical decoupling echoes out; the optional stochastic variant is
    a per-idle Z flip that DD does not cancel.
    """

    pulse: PulseParams = field(default_factory=PulseParams)
    two_qubit_pauli_rates: dict | None = None
    two_qubit_depolarizing: float | None = None
    two_qubit_target_error: float = 0.016
    single_qubit_depolarizing: float = 0.0
    readout_eps: float = 0.0
    readout_eta: float = 0.0
    idle_dephasing_rad_per_ns: float = 0.0
    idle_stochastic_rate_per_ns: float = 0.0
    coherent_overrotation: float = 0.0

    def __post_init__(self):
        if self.two_qubit_pauli_rates is not None:
            total = sum(self.two_qubit_pauli_rates.values())
            if total > 1.0 or any(v < 0 for v in self.two_qubit_pauli_rates.values()):
                raise ValueError("Pauli rates must be nonnegative with sum <= 1")
            if set(self.two_qubit_pauli_rates) - set(TWO_QUBIT_PAULI_LABELS):
                raise ValueError("Pauli rate keys must be two-qubit non-identity labels")
        for name in ("two_qubit_depolarizing", "two_qubit_target_error",
                     "single_qubit_depolarizing", "readout_eps", "readout_eta"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def tau_err_ns(self) -> float:
        """Calibrated so the two-CNOT interaction gate hits the target error."""
        d = rzz_duration(2.0, "two-cnot", self.pulse)
        return -d / math.log(1.0 - self.two_qubit_target_error)

    def two_qubit_error_prob(self, gate: Gate) -> float:
        """Depolarizing weight attached to one physical two-qubit gate."""
        if self.two_qubit_pauli_rates is not None:
            return sum(self.two_qubit_pauli_rates.values())
        if self.two_qubit_depolarizing is not None:
            return self.two_qubit_depolarizing
        if self.two_qubit_target_error == 0.0:
            return 0.0
        tau = self.tau_err_ns()
        if gate.kind == "CNOT":
            return gate_error_rate(cnot_duration_ns(self.pulse), tau)
        if gate.kind in ("RZX", "RZZ"):
            d = 2.0 * cr_pulse_ns(abs(gate.angle), self.pulse) + 2.0 * self.pulse.single_pulse_ns
            return gate_error_rate(d, tau)
        raise ValueError(f"no duration model for two-qubit kind {gate.kind!r}")

    def pauli_distribution(self, gate: Gate) -> tuple[list[str], np.ndarray]:
        """(labels, probabilities) over the 15 non-identity Pauli pairs.

        A depolarizing weight p maps to rate p/16 on each non-identity
        pair, i.e. rho -> (1-p) rho + p I/4.
        """
        if self.two_qubit_pauli_rates is not None:
            labels = list(self.two_qubit_pauli_rates)
            probs = np.array([self.two_qubit_pauli_rates[k] for k in labels])
            return labels, probs
        p = self.two_qubit_error_prob(gate)
        return TWO_QUBIT_PAULI_LABELS, np.full(15, p / 16.0)

    def is_gate_noisy(self) -> bool:
        if self.two_qubit_pauli_rates is not None:
            return sum(self.two_qubit_pauli_rates.values()) > 0
        if self.two_qubit_depolarizing is not None:
            return self.two_qubit_depolarizing > 0
        return self.two_qubit_target_error > 0

    def is_noiseless(self) -> bool:
        return (
            not self.is_gate_noisy()
            and self.single_qubit_depolarizing == 0.0
            and self.readout_eps == 0.0
            and self.readout_eta == 0.0
            and self.idle_dephasing_rad_per_ns == 0.0
            and self.idle_stochastic_rate_per_ns == 0.0
            and self.coherent_overrotation == 0.0
        )

    def has_readout_error(self) -> bool:
        return self.readout_eps > 0.0 or self.readout_eta > 0.0


def noiseless() -> NoiseSpec:
    return NoiseSpec(two_qubit_target_error=0.0)


def casablanca_like(**overrides) -> NoiseSpec:
    """Default device preset.

    The pulse constants are representative, not a device calibration:
    they put the amplitude threshold just below the benchmark grid start
    (0.2 rad) and land the scaled gate strictly shorter than the
    two-CNOT schedule for theta <= 2.5.
    """
    base = NoiseSpec(
        pulse=PulseParams(),
        two_qubit_target_error=0.016,
        readout_eps=0.03,
        readout_eta=0.02,
    )
    return replace(base, **overrides) if overrides else base


PRESETS = {
    "noiseless": noiseless,
    "casablanca-like": casablanca_like,
}


def preset(name: str, **overrides) -> NoiseSpec:
    if name not in PRESETS:
        raise ValueError(f"unknown noise preset {name!r}; have {sorted(PRESETS)}")
    spec = PRESETS[name]()
    return replace(spec, **overrides) if overrides else spec


_PULSE_KEYS = ("amp_ref", "width_ref", "sigma", "n_sigma", "sample_dt_ns", "single_pulse_ns")
_GATE_KEYS = (
    "two_qubit_target_error",
    "two_qubit_depolarizing",
    "single_qubit_depolarizing",
    "coherent_overrotation",
)


def load_noise_config(path) -> NoiseSpec:
    """Read a NoiseSpec from an INI document (see docs/noise-config.md).

    Sections: [pulse], [gates], [readout], [idle].  Unset keys fall back
    to the preset named by ``[gates] preset`` (default casablanca-like).
    """
    cp = configparser.ConfigParser()
    with open(path) as fh:
        cp.read_file(fh)
    name = cp.get("gates", "preset", fallback="casablanca-like")
    spec = preset(name)
    pulse_kwargs = {
        k: cp.getfloat("pulse", k)
        for k in _PULSE_KEYS
        if cp.has_option("pulse", k)
    }
    if pulse_kwargs:
        spec = replace(spec, pulse=replace(spec.pulse, **pulse_kwargs))
    gate_kwargs = {
        k: cp.getfloat("gates", k)
        for k in _GATE_KEYS
        if cp.has_option("gates", k)
    }
    if cp.has_option("readout", "eps"):
        gate_kwargs["readout_eps"] = cp.getfloat("readout", "eps")
    if cp.has_option("readout", "eta"):
        gate_kwargs["readout_eta"] = cp.getfloat("readout", "eta")
    if cp.has_option("idle", "dephasing_rad_per_ns"):
        gate_kwargs["idle_dephasing_rad_per_ns"] = cp.getfloat("idle", "dephasing_rad_per_ns")
    if cp.has_option("idle", "stochastic_rate_per_ns"):
        gate_kwargs["idle_stochastic_rate_per_ns"] = cp.getfloat("idle", "stochastic_rate_per_ns")
    return replace(spec, **gate_kwargs) if gate_kwargs else spec


def noisy_gate_channel(gate: Gate, spec: NoiseSpec) -> KrausChannel:
    """Ideal two-qubit unitary followed by its error channel.

    The error is either the stochastic Pauli channel drawn from the
    spec's rates or, when ``coherent_overrotation`` is set, the coherent
    unitary exp(-i delta ZZ/2) (a deliberately non-stochastic channel
    used to exercise the twirl theorem).
    """
    if not gate.is_two_qubit:
        raise ValueError("noisy_gate_channel expects a two-qubit gate")
    ideal = KrausChannel.unitary(gate_matrix(gate))
    if spec.coherent_overrotation:
        over = gate_matrix(Gate("RZZ", (0, 1), angle=spec.coherent_overrotation))
        return KrausChannel.unitary(over).compose(ideal)
    labels, probs = spec.pauli_distribution(gate)
    rates = {lab: float(pr) for lab, pr in zip(labels, probs) if pr > 0}
    if not rates:
        return ideal
    return KrausChannel.pauli(2, rates).compose(ideal)


# ---------------------------------------------------------------------------
# Readout confusion
# ---------------------------------------------------------------------------

@dataclass
class ConfusionMatrix:
    """Readout error matrix M with M @ p_ideal = p_noisy.

    tensor mode stores L single-qubit 2x2 factors; full mode the dense
    2^L x 2^L matrix.  Columns of a stochastic M sum to one.
    """

    method: str
    L: int
    factors: list[np.ndarray] | None = None
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.method == "tensor":
            if self.factors is None or len(self.factors) != self.L:
                raise ValueError("tensor mode needs one 2x2 factor per qubit")
            for f in self.factors:
                if f.shape != (2, 2) or np.any(f < -1e-12):
                    raise ValueError("confusion factors must be nonnegative 2x2")
                if np.max(np.abs(f.sum(axis=0) - 1.0)) > 1e-9:
                    raise ValueError("confusion factor columns must sum to 1")
        elif self.method == "full":
            dim = 2**self.L
            if self.matrix is None or self.matrix.shape != (dim, dim):
                raise ValueError("full mode needs the 2^L x 2^L matrix")
            if np.max(np.abs(self.matrix.sum(axis=0) - 1.0)) > 1e-9:
                raise ValueError("confusion matrix columns must sum to 1")
        else:
            raise ValueError("method must be 'tensor' or 'full'")

    @classmethod
    def identity(cls, L: int) -> "ConfusionMatrix":
        return cls("tensor", L, factors=[np.eye(2) for _ in range(L)])

    @classmethod
    def from_rates(cls, L: int, eps, eta) -> "ConfusionMatrix":
        eps = np.broadcast_to(np.asarray(eps, dtype=float), (L,))
        eta = np.broadcast_to(np.asarray(eta, dtype=float), (L,))
        factors = [
            np.array([[1.0 - e, n], [e, 1.0 - n]]) for e, n in zip(eps, eta)
        ]
        return cls("tensor", L, factors=factors)

    def apply_to_vector(self, vec: np.ndarray) -> np.ndarray:
        """Forward direction: p_noisy = M p_ideal."""
        if self.method == "full":
            return self.matrix @ vec
        out = vec.reshape([2] * self.L)
        for q, f in enumerate(self.factors):
            out = np.moveaxis(np.tensordot(f, out, axes=([1], [q])), 0, q)
        return out.reshape(-1)

    def invert_vector(self, vec: np.ndarray) -> np.ndarray:
        """Inverse direction: p_ideal = M^-1 p_noisy (may go negative)."""
        if self.method == "full":
            return np.linalg.solve(self.matrix, vec)
        out = vec.reshape([2] * self.L)
        for q, f in enumerate(self.factors):
            finv = np.linalg.inv(f)
            out = np.moveaxis(np.tensordot(finv, out, axes=([1], [q])), 0, q)
        return out.reshape(-1)

    def dense(self) -> np.ndarray:
        if self.method == "full":
            return self.matrix
        out = np.array([[1.0]])
        for f in self.factors:
            out = np.kron(out, f)
        return out


def apply_readout_error(counts: Counts, m: ConfusionMatrix, seed: int) -> Counts:
    """Forward (simulation-direction) readout noise on measured counts.

    Exact counts are pushed through M as probabilities; sampled counts
    get per-shot bit flips at the per-qubit rates (tensor mode) or are
    resampled from the full-matrix columns.
    """
    if m.L != counts.width:
        raise ValueError("confusion matrix width mismatch")
    if counts.exact:
        vec = m.apply_to_vector(counts.to_vector())
        return Counts.from_vector(vec, counts.width, counts.total_shots, exact=True)
    rng = np.random.default_rng(seed)
    out: dict[str, float] = {}
    if m.method == "tensor":
        L = counts.width
        eps = np.array([f[1, 0] for f in m.factors])
        eta = np.array([f[0, 1] for f in m.factors])
        keys = list(counts.data)
        mult = np.array([int(round(counts.data[k])) for k in keys])
        bits = np.array([[int(c) for c in k] for k in keys], dtype=np.int8)
        rows = np.repeat(bits, mult, axis=0)
        flip_prob = np.where(rows == 0, eps[None, :], eta[None, :])
        flipped = rows ^ (rng.random(rows.shape) < flip_prob)
        weights = 1 << np.arange(L - 1, -1, -1)
        idx = flipped @ weights
        vec = np.bincount(idx, minlength=2**L)
        out = {
            format(i, f"0{L}b"): float(v) for i, v in enumerate(vec) if v > 0
        }
    else:
        dim = 2**counts.width
        for bits, n in counts.data.items():
            col = m.matrix[:, int(bits, 2)]
            draws = rng.multinomial(int(round(n)), col / col.sum())
            for i in np.nonzero(draws)[0]:
                key = format(i, f"0{counts.width}b")
                out[key] = out.get(key, 0.0) + float(draws[i])
    return Counts(out, counts.total_shots, counts.width)


# ---------------------------------------------------------------------------
# Noisy execution: trajectory unfolding over the statevector
# ---------------------------------------------------------------------------

_PAULI_MATS_2Q = {
    lab: m for lab, m in zip(pauli_basis_labels(2), pauli_basis_matrices(2))
}


class _NoisePlan:
    """Per-circuit cache of gate matrices and error distributions.

    Noiseless single-qubit gates are fused into one 2x2 matrix per qubit
    between interaction points (sequential-equivalence optimization;
    disabled when per-gate single-qubit noise is switched on, since that
    noise attaches to individual gates).
    """

    def __init__(self, circuit: Circuit, spec: NoiseSpec):
        self.width = circuit.width
        self.ops: list[tuple] = []
        self.has_stochastic = False
        self.has_quasi_static = False
        over = spec.coherent_overrotation
        fuse = spec.single_qubit_depolarizing == 0.0
        pending: dict[int, np.ndarray] = {}

        def flush(q: int):
            mat = pending.pop(q, None)
            if mat is not None:
                self.ops.append(("gate", (q,), mat))

        for g in circuit.gates:
            if g.kind == "DELAY":
                flush(g.qubits[0])
                p_flip = 0.0
                if spec.idle_stochastic_rate_per_ns > 0 and g.duration_ns > 0:
                    p_flip = 0.5 * (1.0 - math.exp(-g.duration_ns * spec.idle_stochastic_rate_per_ns))
                    self.has_stochastic = True
                if spec.idle_dephasing_rad_per_ns > 0 and g.duration_ns > 0:
                    self.has_quasi_static = True
                self.ops.append(("delay", g.qubits, g.duration_ns, p_flip))
                continue
            mat = gate_matrix(g)
            if g.is_two_qubit:
                flush(g.qubits[0])
                flush(g.qubits[1])
                if over and g.kind in ("RZZ", "RZX"):
                    gen = "ZZ" if g.kind == "RZZ" else "ZX"
                    extra = gate_matrix(Gate("R" + gen, (0, 1), angle=over))
                    mat = extra @ mat
                labels, probs = spec.pauli_distribution(g)
                total = float(probs.sum())
                if total > 0:
                    self.has_stochastic = True
                    cum = np.cumsum(probs)
                    mats = [_PAULI_MATS_2Q[lab] for lab in labels]
                    self.ops.append(("gate2", g.qubits, mat, cum, mats, total))
                else:
                    self.ops.append(("gate", g.qubits, mat))
            elif fuse:
                q = g.qubits[0]
                pending[q] = mat @ pending[q] if q in pending else mat
            else:
                self.has_stochastic = True
                self.ops.append(("gate1", g.qubits, mat, spec.single_qubit_depolarizing))
        for q in sorted(pending):
            self.ops.append(("gate", (q,), pending[q]))
        self.stochastic = self.has_stochastic or self.has_quasi_static
        self.idle_sigma = spec.idle_dephasing_rad_per_ns

    def run(self, initial: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        width = self.width
        amps = initial.copy()
        omega = None
        if self.has_quasi_static:
            omega = rng.normal(0.0, self.idle_sigma, size=width)
        for op in self.ops:
            tag = op[0]
            if tag == "gate":
                amps = _apply_matrix(amps, op[2], op[1], width)
            elif tag == "gate2":
                _, qubits, mat, cum, mats, total = op
                amps = _apply_matrix(amps, mat, qubits, width)
                u = rng.random()
                if u < total:
                    k = int(np.searchsorted(cum, u, side="right"))
                    amps = _apply_matrix(amps, mats[k], qubits, width)
            elif tag == "gate1":
                _, qubits, mat, p1 = op
                amps = _apply_matrix(amps, mat, qubits, width)
                u = rng.random()
                if u < p1 * 0.75:
                    pauli = ("X", "Y", "Z")[min(int(u / (p1 * 0.25)), 2)]
                    amps = _apply_matrix(amps, _pauli1(pauli), qubits, width)
            else:  # delay
                _, qubits, dur, p_flip = op
                q = qubits[0]
                if omega is not None and dur > 0:
                    phase = omega[q] * dur
                    rzm = np.array(
                        [[np.exp(-0.5j * phase), 0], [0, np.exp(0.5j * phase)]]
                    )
                    amps = _apply_matrix(amps, rzm, qubits, width)
                if p_flip > 0 and rng.random() < p_flip:
                    amps = _apply_matrix(amps, _pauli1("Z"), qubits, width)
        return amps

    def run_batch(self, initial: np.ndarray, rngs: list[np.random.Generator]) -> np.ndarray:
        """All trajectories at once on a (T, 2^width) array.

        Per-trajectory generators are consumed in the same order as in
        ``run`` (quasi-static rates first, one uniform per noisy gate),
        so trajectory t here reproduces run(initial, rngs[t]) exactly.
        """
        width = self.width
        n_traj = len(rngs)
        psi = np.tile(initial, (n_traj, 1))
        omegas = None
        if self.has_quasi_static:
            omegas = np.stack([r.normal(0.0, self.idle_sigma, size=width) for r in rngs])
        for op in self.ops:
            tag = op[0]
            if tag == "gate":
                psi = _batch_apply(psi, op[2], op[1], width)
            elif tag == "gate2":
                _, qubits, mat, cum, mats, total = op
                psi = _batch_apply(psi, mat, qubits, width)
                us = np.array([r.random() for r in rngs])
                for t in np.nonzero(us < total)[0]:
                    k = int(np.searchsorted(cum, us[t], side="right"))
                    psi[t] = _apply_matrix(psi[t], mats[k], qubits, width)
            elif tag == "gate1":
                _, qubits, mat, p1 = op
                psi = _batch_apply(psi, mat, qubits, width)
                us = np.array([r.random() for r in rngs])
                for t in np.nonzero(us < p1 * 0.75)[0]:
                    pauli = ("X", "Y", "Z")[min(int(us[t] / (p1 * 0.25)), 2)]
                    psi[t] = _apply_matrix(psi[t], _pauli1(pauli), qubits, width)
            else:  # delay
                _, qubits, dur, p_flip = op
                q = qubits[0]
                if omegas is not None and dur > 0:
                    half = 0.5 * omegas[:, q] * dur
                    view = psi.reshape(n_traj, 1 << q, 2, -1)
                    view[:, :, 0, :] *= np.exp(-1j * half)[:, None, None]
                    view[:, :, 1, :] *= np.exp(1j * half)[:, None, None]
                if p_flip > 0:
                    us = np.array([r.random() for r in rngs])
                    for t in np.nonzero(us < p_flip)[0]:
                        view = psi[t].reshape(1 << q, 2, -1)
                        view[:, 1, :] *= -1.0
        return psi


def _pauli1(letter: str) -> np.ndarray:
    from .qsim import PAULI_1Q

    return PAULI_1Q[letter]


def _batch_apply(psi: np.ndarray, mat: np.ndarray, qubits: tuple[int, ...], width: int) -> np.ndarray:
    """Apply one gate to a (T, 2^width) stack of amplitude arrays."""
    n_traj = psi.shape[0]
    if len(qubits) == 1:
        q = qubits[0]
        view = psi.reshape(n_traj, 1 << q, 2, -1)
        a, b = view[:, :, 0, :], view[:, :, 1, :]
        out = np.empty_like(view)
        out[:, :, 0, :] = mat[0, 0] * a + mat[0, 1] * b
        out[:, :, 1, :] = mat[1, 0] * a + mat[1, 1] * b
        return out.reshape(n_traj, -1)
    q0, q1 = qubits
    arr = psi.reshape([n_traj] + [2] * width)
    moved = np.moveaxis(arr, (1 + q0, 1 + q1), (1, 2)).reshape(n_traj, 4, -1)
    out = mat @ moved
    out = np.moveaxis(
        out.reshape([n_traj, 2, 2] + [2] * (width - 2)), (1, 2), (1 + q0, 1 + q1)
    )
    return out.reshape(n_traj, -1)


def run_noisy_statevector(circuit: Circuit, spec: NoiseSpec, seed: int,
                          initial: Statevector | None = None) -> Statevector:
    """One noise trajectory: sampled Pauli insertions over the statevector."""
    plan = _NoisePlan(circuit, spec)
    init = (initial or Statevector.zero(circuit.width)).amplitudes
    rng = np.random.default_rng(seed)
    return Statevector(plan.run(init, rng), check=False)


def trajectory_expectations(
    circuit: Circuit,
    spec: NoiseSpec,
    paulis,
    trajectories: int,
    seed: int,
    initial: Statevector | None = None,
) -> np.ndarray:
    """Monte-Carlo averages of Pauli expectations over noise trajectories.

    Verification hook: for stochastic Pauli noise these converge to the
    exact channel values obtainable from ``run_noisy_density``.
    """
    from .qsim import expectation_pauli

    plan = _NoisePlan(circuit, spec)
    init = (initial or Statevector.zero(circuit.width)).amplitudes
    acc = np.zeros(len(paulis))
    for t in range(trajectories):
        rng = np.random.default_rng([seed, t])
        state = Statevector(plan.run(init, rng), check=False)
        for i, p in enumerate(paulis):
            acc[i] += expectation_pauli(state, p)
    return acc / trajectories


def run_noisy_counts(
    circuit: Circuit,
    spec: NoiseSpec,
    shots: int,
    seed,
    *,
    infinite: bool = False,
    shots_per_trajectory: int = 1024,
    trajectories: int | None = None,
    initial: Statevector | None = None,
) -> Counts:
    """Execute under the noise spec and measure.

    Shots are split across noise trajectories (one Pauli insertion
    pattern per trajectory); with ``infinite=True`` each trajectory
    contributes its exact outcome distribution instead of samples.
    Forward readout confusion is applied last.  ``seed`` may be an int
    or a sequence of ints; all randomness derives from it.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    width = circuit.width
    plan = _NoisePlan(circuit, spec)
    init = (initial or Statevector.zero(width)).amplitudes
    base = [int(v) for v in np.atleast_1d(seed)]

    if not plan.stochastic:
        n_traj = 1
    else:
        n_traj = trajectories or max(1, math.ceil(shots / shots_per_trajectory))
    rngs = [np.random.default_rng(base + [2, t]) for t in range(n_traj)]
    batch = plan.run_batch(init, rngs)

    if infinite:
        probs = np.mean(np.abs(batch) ** 2, axis=0)
        counts = Counts.from_vector(probs * shots, width, float(shots), exact=True)
    else:
        share = [shots // n_traj] * n_traj
        for i in range(shots % n_traj):
            share[i] += 1
        total = np.zeros(2**width, dtype=np.int64)
        for t in range(n_traj):
            if share[t] == 0:
                continue
            p = np.abs(batch[t]) ** 2
            total += rngs[t].multinomial(share[t], p / p.sum())
        counts = Counts.from_vector(total.astype(float), width, float(shots))

    if spec.has_readout_error():
        m = ConfusionMatrix.from_rates(width, spec.readout_eps, spec.readout_eta)
        counts = apply_readout_error(counts, m, base + [3])
    return counts


# ---------------------------------------------------------------------------
# Exact channel evolution (verification substrate, width <= 4)
# ---------------------------------------------------------------------------

def run_noisy_density(circuit: Circuit, spec: NoiseSpec,
                      initial: Statevector | None = None) -> DensityOperator:
    """Exact evolution of the full noise model at width <= 4.

    Quasi-static idle dephasing enters as its Gaussian ensemble average
    (off-diagonal decay exp(-(rate * T)^2 / 2)).
    """
    width = circuit.width
    if width > 4:
        raise ValueError("exact density evolution limited to width <= 4")
    init = initial or Statevector.zero(width)
    rho = np.outer(init.amplitudes, init.amplitudes.conj())
    over = spec.coherent_overrotation
    for g in circuit.gates:
        if g.kind == "DELAY":
            rho = _apply_idle_dephasing(rho, g.qubits[0], g.duration_ns, spec, width)
            continue
        mat = gate_matrix(g)
        if g.is_two_qubit and over and g.kind in ("RZZ", "RZX"):
            gen = "ZZ" if g.kind == "RZZ" else "ZX"
            mat = gate_matrix(Gate("R" + gen, (0, 1), angle=over)) @ mat
        u = _embed(mat, g.qubits, width)
        rho = u @ rho @ u.conj().T
        if g.is_two_qubit:
            labels, probs = spec.pauli_distribution(g)
            total = float(probs.sum())
            if total > 0:
                mixed = (1.0 - total) * rho
                for lab, pr in zip(labels, probs):
                    if pr > 0:
                        pm = _embed(_PAULI_MATS_2Q[lab], g.qubits, width)
                        mixed += pr * (pm @ rho @ pm.conj().T)
                rho = mixed
        elif spec.single_qubit_depolarizing > 0:
            p1 = spec.single_qubit_depolarizing
            mixed = (1.0 - 0.75 * p1) * rho
            for letter in "XYZ":
                pm = _embed(_pauli1(letter), g.qubits, width)
                mixed += 0.25 * p1 * (pm @ rho @ pm.conj().T)
            rho = mixed
    return DensityOperator(rho, check=False)


def _apply_idle_dephasing(rho, q, duration_ns, spec, width):
    factor = 1.0
    if spec.idle_dephasing_rad_per_ns > 0 and duration_ns > 0:
        factor *= math.exp(-0.5 * (spec.idle_dephasing_rad_per_ns * duration_ns) ** 2)
    if spec.idle_stochastic_rate_per_ns > 0 and duration_ns > 0:
        p_flip = 0.5 * (1.0 - math.exp(-duration_ns * spec.idle_stochastic_rate_per_ns))
        factor *= 1.0 - 2.0 * p_flip
    if factor == 1.0:
        return rho
    zmat = _embed(_pauli1("Z"), (q,), width)
    return 0.5 * (1.0 + factor) * rho + 0.5 * (1.0 - factor) * (zmat @ rho @ zmat)


def exact_noisy_probabilities(circuit: Circuit, spec: NoiseSpec,
                              initial: Statevector | None = None) -> np.ndarray:
    """Exact outcome distribution incl. forward readout (width <= 4)."""
    rho = run_noisy_density(circuit, spec, initial=initial)
    probs = np.real(np.diag(rho.matrix)).copy()
    probs[probs < 0] = 0.0
    probs /= probs.sum()
    if spec.has_readout_error():
        m = ConfusionMatrix.from_rates(circuit.width, spec.readout_eps, spec.readout_eta)
        probs = m.apply_to_vector(probs)
    return probs
