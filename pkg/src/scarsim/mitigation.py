"""Error-mitigation stack: twirling, folding ZNE, readout inversion,
subspace postselection, dynamical decoupling.

Pauli twirling dresses every two-qubit gate with uniformly random Pauli
pairs chosen to leave the logical gate unchanged.  For CNOT the closing
pair follows from Clifford conjugation; the interaction rotations
(generated by a two-qubit Pauli string) are non-Clifford for generic
angles, so the same pair closes the sandwich and the rotation angle
flips sign whenever the pair anticommutes with the generator.  Averaged
over all 16 pairs, any gate error channel becomes a stochastic Pauli
channel (diagonal Pauli transfer matrix).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .noise import ConfusionMatrix, NoiseSpec, run_noisy_counts
from .qsim import (
    Circuit,
    Counts,
    Gate,
    KrausChannel,
    pauli_basis_labels,
    pauli_gate,
    pauli_transfer_matrix,
)

# index convention: 0 = I, 1 = X, 2 = Y, 3 = Z

def twirl_cnot(alpha: int, beta: int) -> tuple[int, int]:
    """Closing Pauli pair (gamma, delta) with s^g s^d = CNOT s^a s^b CNOT.

    Closed-form in the Pauli indices; equality holds up to a global
    phase, verified exhaustively against matrix conjugation in tests.
    """
    if alpha not in (0, 1, 2, 3) or beta not in (0, 1, 2, 3):
        raise ValueError("Pauli indices must lie in 0..3")
    gamma = alpha + beta * (beta - 1) * (3.5 - beta) * (1.0 - 2.0 * alpha / 3.0)
    delta = beta + alpha * (alpha - 3) * (beta % 2 - 0.5)
    return int(round(gamma)), int(round(delta))


def _anticommutes(pauli: int, axis: str) -> bool:
    """Does the single-qubit Pauli anticommute with the given axis?"""
    if pauli == 0:
        return False
    return "IXYZ"[pauli] != axis


@dataclass(frozen=True)
class TwirlAssignment:
    """Dressing of one two-qubit gate: pre/post Pauli pairs and, for
    Pauli-rotation gates, the sign applied to the angle."""

    pre: tuple[int, int]
    post: tuple[int, int]
    angle_sign: int = 1


def twirl_rzz(alpha: int, beta: int) -> TwirlAssignment:
    """Twirl assignment for the ZZ rotation: same pair on both sides,
    angle sign flipped for pairs anticommuting with Z(x)Z."""
    return _twirl_rotation(alpha, beta, "ZZ")


def _twirl_rotation(alpha: int, beta: int, generator: str) -> TwirlAssignment:
    if alpha not in (0, 1, 2, 3) or beta not in (0, 1, 2, 3):
        raise ValueError("Pauli indices must lie in 0..3")
    anti = _anticommutes(alpha, generator[0]) ^ _anticommutes(beta, generator[1])
    return TwirlAssignment(pre=(alpha, beta), post=(alpha, beta), angle_sign=-1 if anti else 1)


_GENERATORS = {"RZZ": "ZZ", "RZX": "ZX"}


def twirl_circuit(circuit: Circuit, seed) -> Circuit:
    """Dress every two-qubit gate with independent uniform Pauli pairs.

    The noiseless unitary is unchanged up to a global phase; the added
    Paulis are ideal single-qubit gates (their own error is negligible
    next to the two-qubit error they tailor).
    """
    rng = np.random.default_rng(seed)
    gates: list[Gate] = []
    for g in circuit.gates:
        if not g.is_two_qubit:
            gates.append(g)
            continue
        alpha, beta = int(rng.integers(4)), int(rng.integers(4))
        if g.kind == "CNOT":
            gamma, delta = twirl_cnot(alpha, beta)
            dressed = g
        elif g.kind in _GENERATORS:
            assign = _twirl_rotation(alpha, beta, _GENERATORS[g.kind])
            gamma, delta = assign.post
            dressed = Gate(g.kind, g.qubits, angle=assign.angle_sign * g.angle)
        else:
            raise ValueError(f"cannot twirl two-qubit kind {g.kind!r}")
        for idx, q in zip((alpha, beta), g.qubits):
            pg = pauli_gate(idx, q)
            if pg is not None:
                gates.append(pg)
        gates.append(dressed)
        for idx, q in zip((gamma, delta), g.qubits):
            pg = pauli_gate(idx, q)
            if pg is not None:
                gates.append(pg)
    return Circuit(circuit.width, gates)


def effective_twirled_noise_ptm(noise_channel: KrausChannel) -> np.ndarray:
    """Pauli transfer matrix of the twirl-averaged two-qubit noise.

    Averages [s] N [s] over all 16 Pauli pairs; the result is the
    diagonal part of N's PTM, i.e. a stochastic Pauli channel.
    """
    if noise_channel.n_qubits != 2:
        raise ValueError("expects a two-qubit channel")
    labels = pauli_basis_labels(2)
    acc = np.zeros((16, 16))
    for lab in labels:
        pauli = KrausChannel.pauli(2, {lab: 1.0}) if lab != "II" else KrausChannel.unitary(np.eye(4))
        sandwich = pauli.compose(noise_channel.compose(pauli))
        acc += pauli_transfer_matrix(sandwich)
    return acc / 16.0


# ---------------------------------------------------------------------------
# Unitary folding and zero-noise extrapolation
# ---------------------------------------------------------------------------

def fold_count(n_two_qubit: int, lam: float) -> int:
    """Folds needed for scale lam: k = round((lam-1)/2 * N2), ties up."""
    if lam < 1.0:
        raise ValueError("scale factor must be >= 1")
    raw = 0.5 * (lam - 1.0) * n_two_qubit
    return int(np.floor(raw + 0.5))


def effective_scale(n_two_qubit: int, lam: float) -> float:
    """Actually realized scale (N2 + 2k) / N2 for the rounded fold count."""
    if n_two_qubit == 0:
        return 1.0
    return (n_two_qubit + 2 * fold_count(n_two_qubit, lam)) / n_two_qubit


def fold_gates_random(circuit: Circuit, lam: float, seed) -> Circuit:
    """Amplify noise by folding G -> G G^dag G on random two-qubit gates.

    Fold targets are drawn uniformly without replacement; for lam > 3
    every gate is folded floor(k / N2) times and a random remainder once
    more.  The noiseless unitary is unchanged.
    """
    if lam < 1.0:
        raise ValueError("scale factor must be >= 1")
    two_q = [i for i, g in enumerate(circuit.gates) if g.is_two_qubit]
    n2 = len(two_q)
    if n2 == 0 or lam == 1.0:
        return circuit
    k = fold_count(n2, lam)
    per_gate = [k // n2] * n2
    remainder = k % n2
    rng = np.random.default_rng(seed)
    if remainder:
        for j in rng.choice(n2, size=remainder, replace=False):
            per_gate[j] += 1
    folds = dict(zip(two_q, per_gate))
    gates: list[Gate] = []
    for i, g in enumerate(circuit.gates):
        gates.append(g)
        for _ in range(folds.get(i, 0)):
            gates.append(g.inverse())
            gates.append(g)
    return Circuit(circuit.width, gates)


@dataclass(frozen=True)
class ZNEConfig:
    scale_factors: tuple[float, ...] = (1.0, 1.5, 2.0)
    folds_seed: int = 0
    twirl_instances: int = 10

    def __post_init__(self):
        factors = tuple(self.scale_factors)
        if 1.0 not in factors:
            raise ValueError("scale factors must include 1.0")
        if list(factors) != sorted(factors):
            raise ValueError("scale factors must be sorted ascending")
        if self.twirl_instances < 1:
            raise ValueError("need at least one twirl instance")
        object.__setattr__(self, "scale_factors", factors)


@dataclass
class ZNEResult:
    """Linear extrapolation to zero noise: value = intercept + slope * lam."""

    intercept: float
    slope: float
    covariance: np.ndarray
    points: list[tuple[float, float, float]] = field(default_factory=list)

    def __post_init__(self):
        if not np.isfinite(self.intercept):
            raise ValueError("non-finite extrapolation intercept")
        if np.min(np.linalg.eigvalsh(self.covariance)) < -1e-12:
            raise ValueError("fit covariance is not positive semidefinite")

    @property
    def intercept_std(self) -> float:
        return float(np.sqrt(max(self.covariance[0, 0], 0.0)))


def zne_extrapolate(points) -> ZNEResult:
    """Weighted least-squares line through (lam, value, sigma) points.

    Weights are 1/sigma^2; if any sigma is zero (exact values) the fit
    falls back to an unweighted one with residual-based covariance.
    """
    pts = [(float(l), float(v), float(s)) for l, v, s in points]
    if len(pts) < 2:
        raise ValueError("need at least two points")
    lams = np.array([p[0] for p in pts])
    vals = np.array([p[1] for p in pts])
    sigs = np.array([p[2] for p in pts])
    if np.ptp(lams) == 0:
        raise ValueError("degenerate design matrix: all scale factors equal")
    design = np.column_stack([np.ones_like(lams), lams])
    if np.any(sigs <= 0):
        coef, *_ = np.linalg.lstsq(design, vals, rcond=None)
        resid = vals - design @ coef
        dof = max(len(pts) - 2, 1)
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.inv(design.T @ design)
    else:
        w = 1.0 / sigs**2
        xtwx = design.T @ (design * w[:, None])
        coef = np.linalg.solve(xtwx, design.T @ (vals * w))
        cov = np.linalg.inv(xtwx)
    return ZNEResult(intercept=float(coef[0]), slope=float(coef[1]),
                     covariance=cov, points=pts)


# ---------------------------------------------------------------------------
# Readout mitigation
# ---------------------------------------------------------------------------

def mitigate_readout(counts: Counts, m: ConfusionMatrix) -> Counts:
    """Invert the confusion matrix: quasi-counts, negatives preserved.

    Negative entries are kept (clipping would bias expectation values);
    the result is flagged ``quasi`` whenever any appear.
    """
    if m.L != counts.width:
        raise ValueError("confusion matrix width mismatch")
    if m.method == "full" and counts.width > 12:
        raise ValueError("full-matrix inversion limited to L <= 12")
    vec = m.invert_vector(counts.to_vector())
    quasi = bool(np.any(vec < -1e-12))
    return Counts.from_vector(
        vec, counts.width, counts.total_shots, exact=counts.exact, quasi=quasi
    )


def calibrate_confusion(
    spec: NoiseSpec,
    L: int,
    shots: int,
    method: str = "tensor",
    seed: int = 0,
    infinite: bool = False,
) -> ConfusionMatrix:
    """Estimate the readout matrix from simulated calibration circuits.

    tensor: prepare all-zeros and all-ones, read per-qubit flip rates.
    full (L <= 12): prepare every basis state; columns are the measured
    distributions.
    """
    if shots < 1:
        raise ValueError("calibration needs at least one shot")
    from .qsim import x as xgate

    if method == "tensor":
        factors = []
        zeros = run_noisy_counts(
            Circuit(L), spec, shots, [seed, 0], infinite=infinite
        )
        ones = run_noisy_counts(
            Circuit(L, [xgate(q) for q in range(L)]), spec, shots, [seed, 1],
            infinite=infinite,
        )
        p0 = zeros.to_vector() / zeros.total_shots
        p1 = ones.to_vector() / ones.total_shots
        idx = np.arange(2**L)
        for q in range(L):
            bit = (idx >> (L - 1 - q)) & 1
            eps_q = float(p0[bit == 1].sum())
            eta_q = float(p1[bit == 0].sum())
            factors.append(np.array([[1 - eps_q, eta_q], [eps_q, 1 - eta_q]]))
        return ConfusionMatrix("tensor", L, factors=factors)
    if method == "full":
        if L > 12:
            raise ValueError("full calibration limited to L <= 12")
        dim = 2**L
        mat = np.zeros((dim, dim))
        for b in range(dim):
            bits = format(b, f"0{L}b")
            prep = Circuit(L, [xgate(q) for q, ch in enumerate(bits) if ch == "1"])
            counts = run_noisy_counts(prep, spec, shots, [seed, 2, b], infinite=infinite)
            mat[:, b] = counts.to_vector() / counts.total_shots
        return ConfusionMatrix("full", L, matrix=mat)
    raise ValueError("method must be 'tensor' or 'full'")


# ---------------------------------------------------------------------------
# Postselection into the adjacent-1-free subspace
# ---------------------------------------------------------------------------

@dataclass
class PostselectionResult:
    counts: Counts
    retained_fraction: float
    empty: bool


def postselect(counts: Counts) -> PostselectionResult:
    """Drop bitstrings containing "11"; record the retained weight.

    Quasi-count inputs are filtered string-by-string before any
    renormalization happens downstream.  An empty retained set is
    flagged rather than raised; consumers must check.
    """
    kept = {k: v for k, v in counts.data.items() if "11" not in k}
    total_in = sum(counts.data.values())
    total_kept = sum(kept.values())
    retained = total_kept / total_in if total_in != 0 else 0.0
    empty = not kept or total_kept <= 0
    out = Counts(
        kept,
        total_shots=total_kept,
        width=counts.width,
        exact=counts.exact,
        quasi=counts.quasi,
    )
    return PostselectionResult(counts=out, retained_fraction=retained, empty=empty)


# ---------------------------------------------------------------------------
# Dynamical decoupling
# ---------------------------------------------------------------------------

def insert_dd(circuit: Circuit, t_x_pi_ns: float) -> Circuit:
    """Fill idle windows with the echo tau/4 - X_pi - tau/2 - X_-pi - tau/4.

    Each DELAY longer than twice the pi-pulse duration is replaced by
    the four-segment sequence with total delay tau = T - 2 t_x_pi; the
    paired pi rotations cancel any quasi-static Z rotation accrued
    during the window.  Shorter delays are left untouched.
    """
    if t_x_pi_ns <= 0:
        raise ValueError("pi-pulse duration must be positive")
    gates: list[Gate] = []
    for g in circuit.gates:
        if g.kind != "DELAY" or g.duration_ns <= 2 * t_x_pi_ns:
            gates.append(g)
            continue
        q = g.qubits[0]
        tau = g.duration_ns - 2 * t_x_pi_ns
        gates.extend(
            [
                Gate("DELAY", (q,), duration_ns=tau / 4),
                Gate("RX", (q,), angle=np.pi),
                Gate("DELAY", (q,), duration_ns=tau / 2),
                Gate("RX", (q,), angle=-np.pi),
                Gate("DELAY", (q,), duration_ns=tau / 4),
            ]
        )
    return Circuit(circuit.width, gates)
