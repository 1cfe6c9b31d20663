"""Dense statevector circuit simulation and small-system channel algebra.

Conventions, fixed once and used everywhere:

* Chain sites are numbered 1..L in physics formulas; qubit indices are
  0-based, qubit q <-> site q+1.
* Bitstring character k (leftmost = 0) is the measured bit of qubit k,
  i.e. site k+1.  Amplitude index i encodes qubit 0 as the most
  significant bit, so ``format(i, f"0{L}b")`` is the bitstring.
* |0> is the Z = +1 eigenstate (occupation n = 0).
* Rotations follow RP(theta) = exp(-i * theta * P / 2) for P in
  {X, Y, Z, ZZ, ZX}; S = diag(1, i).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import cos, sin, sqrt

import numpy as np

SQRT2_INV = 1.0 / sqrt(2.0)

ROTATION_KINDS = frozenset({"RX", "RY", "RZ", "RZZ", "RZX"})
TWO_QUBIT_KINDS = frozenset({"RZZ", "RZX", "CNOT"})
FIXED_KINDS = frozenset({"H", "S", "SDG", "X", "Y", "Z", "CNOT"})
ALL_KINDS = ROTATION_KINDS | FIXED_KINDS | {"CUSTOM", "DELAY"}

_FIXED_MATRICES = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) * SQRT2_INV,
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "SDG": np.array([[1, 0], [0, -1j]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "CNOT": np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    ),
}

PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": _FIXED_MATRICES["X"],
    "Y": _FIXED_MATRICES["Y"],
    "Z": _FIXED_MATRICES["Z"],
}
PAULI_LETTERS = "IXYZ"


@dataclass(frozen=True, eq=False)
class Gate:
    """One circuit operation on an ordered tuple of qubits.

    ``angle`` is required for rotation kinds and forbidden otherwise.
    ``matrix`` is only set for kind="CUSTOM"; ``duration_ns`` only for
    kind="DELAY" (an annotated idle window, identity in noiseless runs).
    """

    kind: str
    qubits: tuple[int, ...]
    angle: float | None = None
    matrix: np.ndarray | None = None
    duration_ns: float = 0.0

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"repeated qubit index in {self.qubits}")
        if any(q < 0 for q in self.qubits):
            raise ValueError("negative qubit index")
        if self.kind in ROTATION_KINDS:
            if self.angle is None or not np.isfinite(self.angle):
                raise ValueError(f"{self.kind} requires one finite angle")
        elif self.angle is not None:
            raise ValueError(f"{self.kind} must not carry an angle")
        if self.kind == "CUSTOM":
            if self.matrix is None:
                raise ValueError("CUSTOM gate requires a matrix")
            dim = 2 ** len(self.qubits)
            if self.matrix.shape != (dim, dim):
                raise ValueError("CUSTOM matrix shape does not match qubit count")
        expected = 2 if self.kind in TWO_QUBIT_KINDS else (len(self.qubits) if self.kind == "CUSTOM" else 1)
        if len(self.qubits) != expected:
            raise ValueError(f"{self.kind} acts on {expected} qubit(s), got {len(self.qubits)}")

    @property
    def is_two_qubit(self) -> bool:
        return len(self.qubits) == 2

    def inverse(self) -> "Gate":
        if self.kind in ROTATION_KINDS:
            return Gate(self.kind, self.qubits, angle=-self.angle)
        if self.kind in ("H", "X", "Y", "Z", "CNOT", "DELAY"):
            return self
        if self.kind == "S":
            return Gate("SDG", self.qubits)
        if self.kind == "SDG":
            return Gate("S", self.qubits)
        return Gate("CUSTOM", self.qubits, matrix=self.matrix.conj().T)


# -- terse constructors used throughout the package --

def rx(q: int, theta: float) -> Gate:
    return Gate("RX", (q,), angle=theta)


def ry(q: int, theta: float) -> Gate:
    return Gate("RY", (q,), angle=theta)


def rz(q: int, theta: float) -> Gate:
    return Gate("RZ", (q,), angle=theta)


def rzz(q0: int, q1: int, theta: float) -> Gate:
    return Gate("RZZ", (q0, q1), angle=theta)


def rzx(control: int, target: int, theta: float) -> Gate:
    return Gate("RZX", (control, target), angle=theta)


def cnot(control: int, target: int) -> Gate:
    return Gate("CNOT", (control, target))


def h(q: int) -> Gate:
    return Gate("H", (q,))


def s(q: int) -> Gate:
    return Gate("S", (q,))


def sdg(q: int) -> Gate:
    return Gate("SDG", (q,))


def x(q: int) -> Gate:
    return Gate("X", (q,))


def y(q: int) -> Gate:
    return Gate("Y", (q,))


def z(q: int) -> Gate:
    return Gate("Z", (q,))


def delay(q: int, duration_ns: float) -> Gate:
    if duration_ns < 0:
        raise ValueError("delay duration must be nonnegative")
    return Gate("DELAY", (q,), duration_ns=duration_ns)


def custom(matrix: np.ndarray, qubits: tuple[int, ...]) -> Gate:
    return Gate("CUSTOM", tuple(qubits), matrix=np.asarray(matrix, dtype=complex))


def pauli_gate(index: int, q: int) -> Gate | None:
    """Pauli index 0..3 -> None (identity skipped) or an X/Y/Z gate."""
    if index == 0:
        return None
    return Gate(PAULI_LETTERS[index], (q,))


def gate_matrix(gate: Gate) -> np.ndarray:
    """Unitary matrix of a gate (DELAY is the identity)."""
    k = gate.kind
    if k in _FIXED_MATRICES:
        return _FIXED_MATRICES[k]
    if k == "DELAY":
        return np.eye(2, dtype=complex)
    if k == "CUSTOM":
        return gate.matrix
    t = gate.angle
    c, sn = cos(t / 2.0), sin(t / 2.0)
    if k == "RX":
        return np.array([[c, -1j * sn], [-1j * sn, c]])
    if k == "RY":
        return np.array([[c, -sn], [sn, c]], dtype=complex)
    if k == "RZ":
        return np.array([[np.exp(-0.5j * t), 0], [0, np.exp(0.5j * t)]])
    if k == "RZZ":
        ph = np.exp(-0.5j * t)
        return np.diag([ph, ph.conjugate(), ph.conjugate(), ph])
    if k == "RZX":
        # block diagonal: RX(theta) on control=0, RX(-theta) on control=1
        rxm = np.array([[c, -1j * sn], [-1j * sn, c]])
        out = np.zeros((4, 4), dtype=complex)
        out[:2, :2] = rxm
        out[2:, 2:] = rxm.conj().T
        return out
    raise ValueError(f"unhandled kind {k}")


@dataclass(frozen=True)
class Circuit:
    """Ordered gate list on ``width`` qubits; immutable once built."""

    width: int
    gates: tuple[Gate, ...] = ()

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("circuit width must be >= 1")
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            if max(g.qubits) >= self.width:
                raise ValueError(
                    f"gate {g.kind} on {g.qubits} exceeds width {self.width}"
                )

    def __len__(self) -> int:
        return len(self.gates)

    @property
    def n_two_qubit(self) -> int:
        return sum(1 for g in self.gates if g.is_two_qubit)

    def extended(self, gates) -> "Circuit":
        return Circuit(self.width, self.gates + tuple(gates))

    def idle_intervals(self) -> dict[int, list[tuple[float, float]]]:
        """Per-qubit (start, length) idle windows in ns.

        Gates are treated as instantaneous in this IR; only DELAY
        annotations advance a qubit's clock, so intervals never overlap.
        """
        out: dict[int, list[tuple[float, float]]] = {}
        clock = [0.0] * self.width
        for g in self.gates:
            if g.kind == "DELAY":
                q = g.qubits[0]
                out.setdefault(q, []).append((clock[q], g.duration_ns))
                clock[q] += g.duration_ns
        return out


def concat(*circuits: Circuit) -> Circuit:
    widths = {c.width for c in circuits}
    if len(widths) != 1:
        raise ValueError(f"cannot concatenate circuits of widths {sorted(widths)}")
    gates: tuple[Gate, ...] = ()
    for c in circuits:
        gates = gates + c.gates
    return Circuit(circuits[0].width, gates)


class Statevector:
    """Complex amplitude vector over 2^width basis states, unit norm."""

    __slots__ = ("amplitudes",)

    def __init__(self, amplitudes: np.ndarray, check: bool = True):
        amps = np.asarray(amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.size & (amps.size - 1):
            raise ValueError("amplitude vector length must be a power of two")
        if check:
            norm = np.linalg.norm(amps)
            if abs(norm - 1.0) > 1e-10:
                raise ValueError(f"state norm {norm} deviates from 1 beyond 1e-10")
        self.amplitudes = amps

    @property
    def width(self) -> int:
        return int(self.amplitudes.size).bit_length() - 1

    @classmethod
    def zero(cls, width: int) -> "Statevector":
        amps = np.zeros(2**width, dtype=complex)
        amps[0] = 1.0
        return cls(amps, check=False)

    @classmethod
    def from_bitstring(cls, bits: str) -> "Statevector":
        if set(bits) - {"0", "1"}:
            raise ValueError(f"invalid bitstring {bits!r}")
        amps = np.zeros(2 ** len(bits), dtype=complex)
        amps[int(bits, 2)] = 1.0
        return cls(amps, check=False)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def copy(self) -> "Statevector":
        return Statevector(self.amplitudes.copy(), check=False)


def _apply_matrix(amps: np.ndarray, mat: np.ndarray, qubits: tuple[int, ...], width: int) -> np.ndarray:
    """Apply a 2^k x 2^k unitary to the listed qubits of a raw amplitude array."""
    k = len(qubits)
    if k == 1:
        q = qubits[0]
        psi = amps.reshape(1 << q, 2, -1)
        a, b = psi[:, 0, :], psi[:, 1, :]
        out = np.empty_like(psi)
        out[:, 0, :] = mat[0, 0] * a + mat[0, 1] * b
        out[:, 1, :] = mat[1, 0] * a + mat[1, 1] * b
        return out.reshape(-1)
    if k == 2:
        psi = np.moveaxis(amps.reshape([2] * width), qubits, (0, 1)).reshape(4, -1)
        out = mat @ psi
        return np.moveaxis(
            out.reshape([2, 2] + [2] * (width - 2)), (0, 1), qubits
        ).reshape(-1)
    psi = amps.reshape([2] * width)
    mat_t = mat.reshape([2] * (2 * k))
    psi = np.tensordot(mat_t, psi, axes=(list(range(k, 2 * k)), list(qubits)))
    psi = np.moveaxis(psi, range(k), qubits)
    return psi.reshape(-1)


def _apply_gate_arr(amps: np.ndarray, gate: Gate, width: int) -> np.ndarray:
    if gate.kind == "DELAY":
        return amps
    return _apply_matrix(amps, gate_matrix(gate), gate.qubits, width)


def apply_gate(state: Statevector, gate: Gate) -> Statevector:
    """Apply one gate; pure (returns a new state). Norm is preserved to 1e-12."""
    if gate.qubits and max(gate.qubits) >= state.width:
        raise ValueError(f"gate qubits {gate.qubits} out of range for width {state.width}")
    return Statevector(_apply_gate_arr(state.amplitudes, gate, state.width), check=False)


def run_circuit(initial: Statevector, circuit: Circuit) -> Statevector:
    """Apply gates in order; deterministic for noiseless circuits."""
    if initial.width != circuit.width:
        raise ValueError(
            f"state width {initial.width} != circuit width {circuit.width}"
        )
    amps = initial.amplitudes.copy()
    for g in circuit.gates:
        amps = _apply_gate_arr(amps, g, circuit.width)
    return Statevector(amps, check=False)


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    """Full unitary assembled column-by-column; oracle use, width <= 10."""
    if circuit.width > 10:
        raise ValueError("circuit_unitary limited to width <= 10")
    dim = 2**circuit.width
    cols = np.zeros((dim, dim), dtype=complex)
    for b in range(dim):
        amps = np.zeros(dim, dtype=complex)
        amps[b] = 1.0
        for g in circuit.gates:
            amps = _apply_gate_arr(amps, g, circuit.width)
        cols[:, b] = amps
    return cols


def states_equal_up_to_phase(a: Statevector, b: Statevector, tol: float = 1e-10) -> bool:
    return abs(abs(np.vdot(a.amplitudes, b.amplitudes)) - 1.0) < tol


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis with an overall sign."""

    letters: str
    sign: int = 1

    def __post_init__(self):
        if set(self.letters) - set(PAULI_LETTERS):
            raise ValueError(f"invalid Pauli letters {self.letters!r}")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    def __len__(self) -> int:
        return len(self.letters)

    def matrix(self) -> np.ndarray:
        out = np.array([[self.sign]], dtype=complex)
        for ch in self.letters:
            out = np.kron(out, PAULI_1Q[ch])
        return out


def expectation_pauli(state: Statevector, p: PauliString) -> float:
    """<psi|P|psi>, real to 1e-10 for the Hermitian Pauli string P."""
    if len(p) != state.width:
        raise ValueError(f"Pauli width {len(p)} != state width {state.width}")
    amps = state.amplitudes
    phi = amps
    for q, ch in enumerate(p.letters):
        if ch != "I":
            phi = _apply_matrix(phi, PAULI_1Q[ch], (q,), state.width)
    val = p.sign * np.vdot(amps, phi)
    if abs(val.imag) > 1e-10:
        raise ValueError(f"non-real expectation {val} for Hermitian Pauli")
    return float(val.real)


@dataclass
class Counts:
    """Measured bitstring multiplicities (leftmost character = site 1).

    ``exact`` marks infinite-shot data (float counts = probabilities x
    shots); ``quasi`` marks signed quasi-counts produced by readout
    inversion, where individual values may be negative.
    """

    data: dict[str, float]
    total_shots: float
    width: int
    exact: bool = False
    quasi: bool = False

    def __post_init__(self):
        for key in self.data:
            if len(key) != self.width or set(key) - {"0", "1"}:
                raise ValueError(f"bad bitstring key {key!r} for width {self.width}")
        if not self.quasi:
            total = sum(self.data.values())
            if abs(total - self.total_shots) > 1e-6 * max(1.0, self.total_shots):
                raise ValueError("counts do not sum to total_shots")

    def to_vector(self) -> np.ndarray:
        vec = np.zeros(2**self.width)
        for bits, n in self.data.items():
            vec[int(bits, 2)] = n
        return vec

    @classmethod
    def from_vector(cls, vec: np.ndarray, width: int, total_shots: float,
                    exact: bool = False, quasi: bool = False) -> "Counts":
        data = {
            format(i, f"0{width}b"): float(v)
            for i, v in enumerate(vec)
            if v != 0.0
        }
        return cls(data, total_shots, width, exact=exact, quasi=quasi)

    def probabilities(self) -> dict[str, float]:
        if self.total_shots == 0:
            raise ValueError("empty counts have no probabilities")
        return {k: v / self.total_shots for k, v in self.data.items()}


def sample_counts(state: Statevector, shots: int, seed: int, infinite: bool = False) -> Counts:
    """Multinomial sample from |amplitudes|^2, reproducible per seed.

    With ``infinite=True`` the exact probabilities scaled to ``shots``
    are returned instead of a sample.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    probs = state.probabilities()
    probs = probs / probs.sum()
    width = state.width
    if infinite:
        data = {
            format(i, f"0{width}b"): float(p * shots)
            for i, p in enumerate(probs)
            if p > 0.0
        }
        return Counts(data, float(shots), width, exact=True)
    rng = np.random.default_rng(seed)
    draws = rng.multinomial(shots, probs)
    data = {
        format(i, f"0{width}b"): float(n) for i, n in enumerate(draws) if n > 0
    }
    return Counts(data, float(shots), width)


# ---------------------------------------------------------------------------
# Small-system channel algebra (verification substrate, n <= 4)
# ---------------------------------------------------------------------------

class DensityOperator:
    """Dense 2^n x 2^n density matrix, n <= 4."""

    __slots__ = ("matrix",)

    def __init__(self, matrix: np.ndarray, check: bool = True):
        mat = np.asarray(matrix, dtype=complex)
        n = int(mat.shape[0]).bit_length() - 1
        if mat.shape != (2**n, 2**n) or n > 4:
            raise ValueError("density operator must be 2^n x 2^n with n <= 4")
        if check:
            if np.max(np.abs(mat - mat.conj().T)) > 1e-12:
                raise ValueError("density matrix not Hermitian within 1e-12")
            if abs(np.trace(mat) - 1.0) > 1e-12:
                raise ValueError("density matrix trace deviates from 1")
            if np.min(np.linalg.eigvalsh(mat)) < -1e-10:
                raise ValueError("density matrix has eigenvalue < -1e-10")
        self.matrix = mat

    @property
    def n_qubits(self) -> int:
        return int(self.matrix.shape[0]).bit_length() - 1

    @classmethod
    def from_statevector(cls, state: Statevector) -> "DensityOperator":
        return cls(np.outer(state.amplitudes, state.amplitudes.conj()), check=False)

    def expectation(self, op: np.ndarray) -> float:
        val = np.trace(op @ self.matrix)
        return float(val.real)


@dataclass
class KrausChannel:
    """Channel in Kraus form: rho -> sum_h E_h rho E_h^dag."""

    kraus_ops: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.kraus_ops:
            raise ValueError("channel needs at least one Kraus operator")
        dim = self.kraus_ops[0].shape[0]
        acc = np.zeros((dim, dim), dtype=complex)
        for e in self.kraus_ops:
            if e.shape != (dim, dim):
                raise ValueError("inconsistent Kraus operator shapes")
            acc += e.conj().T @ e
        if np.max(np.abs(acc - np.eye(dim))) > 1e-10:
            raise ValueError("Kraus operators do not sum to identity (not trace preserving)")

    @property
    def n_qubits(self) -> int:
        return int(self.kraus_ops[0].shape[0]).bit_length() - 1

    @classmethod
    def unitary(cls, u: np.ndarray) -> "KrausChannel":
        return cls([np.asarray(u, dtype=complex)])

    @classmethod
    def depolarizing(cls, n: int, p: float) -> "KrausChannel":
        """rho -> (1-p) rho + p I/2^n, expanded over the Pauli basis."""
        if not 0.0 <= p <= 1.0:
            raise ValueError("depolarizing strength must lie in [0, 1]")
        dim4 = 4**n
        ops = []
        for idx, pm in enumerate(pauli_basis_matrices(n)):
            w = 1.0 - p + p / dim4 if idx == 0 else p / dim4
            if w > 0.0:
                ops.append(np.sqrt(w) * pm)
        return cls(ops)

    @classmethod
    def pauli(cls, n: int, rates: dict[str, float]) -> "KrausChannel":
        """Stochastic Pauli channel; identity weight fills the remainder."""
        total = sum(rates.values())
        if total > 1.0 + 1e-12 or any(r < 0 for r in rates.values()):
            raise ValueError("Pauli rates must be nonnegative and sum to <= 1")
        ops = [np.sqrt(max(0.0, 1.0 - total)) * np.eye(2**n, dtype=complex)]
        for label, r in rates.items():
            if len(label) != n:
                raise ValueError(f"Pauli label {label!r} does not act on {n} qubits")
            if r > 0.0:
                ops.append(np.sqrt(r) * PauliString(label).matrix())
        return cls(ops)

    def compose(self, other: "KrausChannel") -> "KrausChannel":
        """self after other: (self . other)(rho)."""
        return KrausChannel([a @ b for a in self.kraus_ops for b in other.kraus_ops])

    def apply_matrix(self, mat: np.ndarray) -> np.ndarray:
        out = np.zeros_like(mat)
        for e in self.kraus_ops:
            out += e @ mat @ e.conj().T
        return out


def _embed(mat: np.ndarray, qubits: tuple[int, ...], width: int) -> np.ndarray:
    """Lift a 2^k operator on the listed qubits to the full 2^width space."""
    k = len(qubits)
    dim = 2**width
    mat_t = np.asarray(mat, dtype=complex).reshape([2] * (2 * k))
    full = np.eye(dim, dtype=complex).reshape([2] * (2 * width))
    # contract the k output axes of the identity with the gate inputs
    full = np.tensordot(mat_t, full, axes=(list(range(k, 2 * k)), list(qubits)))
    full = np.moveaxis(full, range(k), qubits)
    return full.reshape(dim, dim)


def apply_channel(rho: DensityOperator, ch: KrausChannel, qubits: tuple[int, ...] | list[int]) -> DensityOperator:
    """rho -> sum_h E_h rho E_h^dag with the channel embedded on ``qubits``."""
    qubits = tuple(qubits)
    if len(qubits) != ch.n_qubits:
        raise ValueError("channel arity does not match qubit list")
    width = rho.n_qubits
    out = np.zeros_like(rho.matrix)
    for e in ch.kraus_ops:
        e_full = _embed(e, qubits, width)
        out += e_full @ rho.matrix @ e_full.conj().T
    tr = np.trace(out).real
    if abs(tr - 1.0) > 1e-10:
        raise ValueError(f"channel application broke the trace: {tr}")
    return DensityOperator(out, check=False)


def pauli_basis_matrices(n: int) -> list[np.ndarray]:
    """4^n Pauli matrices ordered (I,X,Y,Z)^n, first qubit most significant."""
    mats = [np.array([[1]], dtype=complex)]
    for _ in range(n):
        mats = [np.kron(m, PAULI_1Q[ch]) for m in mats for ch in PAULI_LETTERS]
    return mats


def pauli_basis_labels(n: int) -> list[str]:
    labels = [""]
    for _ in range(n):
        labels = [lab + ch for lab in labels for ch in PAULI_LETTERS]
    return labels


def pauli_transfer_matrix(ch: KrausChannel) -> np.ndarray:
    """R[a, b] = Tr[P_a ch(P_b)] / 2^n over the Pauli basis, n <= 2."""
    n = ch.n_qubits
    if n > 2:
        raise ValueError("pauli_transfer_matrix limited to n <= 2")
    basis = pauli_basis_matrices(n)
    dim4 = len(basis)
    norm = 1.0 / 2**n
    out = np.zeros((dim4, dim4))
    for b, pb in enumerate(basis):
        image = ch.apply_matrix(pb)
        for a, pa in enumerate(basis):
            out[a, b] = (np.trace(pa @ image) * norm).real
    return out


def is_pauli_stochastic(ptm: np.ndarray, tol: float = 1e-10) -> bool:
    """A channel is a stochastic Pauli channel iff its PTM is diagonal."""
    off = ptm - np.diag(np.diag(ptm))
    return float(np.max(np.abs(off))) < tol
