"""Physics observables: staggered magnetization, return probability,
accumulated error, and the ancilla-free unequal-time correlator.

The correlator C_Y(t) = <Y_pi(t) Y_pi(0)> on the alternating initial
state reduces to local terms <Z2|(PYP)_j(t) Y_i|Z2> over even source
sites i.  Each local term is measured without an ancilla from four
prepared branches per source site:

    re: (1/2) [ <(PYP)_j(t)>_{M=+1} - <(PYP)_j(t)>_{M=-1} ]
    im: -(1/2) [ <(PYP)_j(t)>_{+Y} - <(PYP)_j(t)>_{-Y} ]

where the M branches prepare the Y eigenstates of qubit i (normalized
states; the projective outcome probabilities are exactly 1/2 because
<Z2|Y_i|Z2> = 0) and the +-Y branches rotate qubit i by -+pi/2 about Y.
All (PYP)_j of one parity commute and are read from a single
measurement after rotating that parity's qubits into the Y basis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams, neel_bitstring, neel_prep_circuit, trotter_step_matrix
from .qsim import (
    Circuit,
    Counts,
    Statevector,
    concat,
    h,
    run_circuit,
    ry,
    s,
    sample_counts,
    sdg,
    x,
)

CY_BRANCHES = ("M+1", "M-1", "+Y", "-Y")
PARITIES = ("even", "odd")


def stagger_sign(site: int) -> int:
    """(-1)^i for 1-based site i."""
    return -1 if site % 2 == 1 else 1


# ---------------------------------------------------------------------------
# Time series container
# ---------------------------------------------------------------------------

@dataclass
class TimeSeries:
    """Values on a strictly increasing Vt grid with per-point errors."""

    steps: np.ndarray
    times: np.ndarray
    values: np.ndarray
    errors: np.ndarray

    def __post_init__(self):
        self.steps = np.asarray(self.steps, dtype=int)
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values)
        self.errors = np.asarray(self.errors, dtype=float)
        n = len(self.steps)
        if not (len(self.times) == len(self.values) == len(self.errors) == n):
            raise ValueError("series columns must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.steps)

    def csv_rows(self) -> list[str]:
        rows = ["step,Vt,value_re,value_im,std"]
        for k in range(len(self)):
            v = complex(self.values[k])
            rows.append(
                f"{int(self.steps[k])},{self.times[k]:.12e},"
                f"{v.real:.12e},{v.imag:.12e},{self.errors[k]:.12e}"
            )
        return rows

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("\n".join(self.csv_rows()) + "\n")


def series_from_values(steps, dt_v, values, errors=None) -> TimeSeries:
    steps = np.asarray(steps, dtype=int)
    values = np.asarray(values)
    errors = np.zeros(len(steps)) if errors is None else np.asarray(errors, float)
    return TimeSeries(steps, steps * dt_v, values, errors)


# ---------------------------------------------------------------------------
# Bit-level estimators (work on sampled, exact, and quasi counts)
# ---------------------------------------------------------------------------

def _bits_and_weights(counts: Counts) -> tuple[np.ndarray, np.ndarray]:
    if not counts.data:
        raise ValueError("empty counts")
    keys = sorted(counts.data)
    bits = np.array([[int(c) for c in k] for k in keys], dtype=np.int8)
    weights = np.array([counts.data[k] for k in keys])
    total = weights.sum()
    if total == 0:
        raise ValueError("counts carry zero total weight")
    return bits, weights / total


def per_site_z(obj) -> np.ndarray:
    """<Z_i> for each site, from a state or from counts."""
    if isinstance(obj, Statevector):
        L = obj.width
        probs = obj.probabilities()
        idx = np.arange(2**L)
        bits = (idx[:, None] >> (L - 1 - np.arange(L))) & 1
        return probs @ (1.0 - 2.0 * bits)
    bits, w = _bits_and_weights(obj)
    return w @ (1.0 - 2.0 * bits)


def staggered_magnetization(obj) -> float:
    """sum_i (-1)^i <Z_i> (1-based sites): -L on |Z2>, +L on |Z2'>."""
    zs = per_site_z(obj)
    signs = np.array([stagger_sign(q + 1) for q in range(len(zs))])
    return float(signs @ zs)


def loschmidt_echo(counts: Counts, reference: str, flips_allowed: int = 0) -> float:
    """Weight fraction within Hamming distance ``flips_allowed`` of the
    reference bitstring."""
    if len(reference) != counts.width:
        raise ValueError("reference length must match counts width")
    if flips_allowed not in (0, 1):
        raise ValueError("flips_allowed must be 0 or 1")
    bits, w = _bits_and_weights(counts)
    ref = np.array([int(c) for c in reference], dtype=np.int8)
    dist = np.sum(bits != ref, axis=1)
    return float(w[dist <= flips_allowed].sum())


def loschmidt_echo_state(state: Statevector, reference: str) -> float:
    """|<ref|psi>|^2 (noiseless reference path)."""
    return float(np.abs(state.amplitudes[int(reference, 2)]) ** 2)


def accumulated_error(
    per_site_qpu: np.ndarray,
    per_site_ref: np.ndarray,
    per_site_std: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Running mean of the per-site mean squared magnetization deviation.

    Rows are steps 0..T.  D_0 is the step-0 integrand; for n >= 1,
    D_n = (1/n) sum_{k=1..n} e_k with e_k the per-site mean of
    |<Z_i>_ref - <Z_i>_qpu|^2 at step k.  Errors propagate to first
    order from the per-site standard deviations.
    """
    qpu = np.asarray(per_site_qpu, dtype=float)
    ref = np.asarray(per_site_ref, dtype=float)
    if qpu.shape != ref.shape:
        raise ValueError("QPU and reference series shapes differ")
    n_steps, L = qpu.shape
    diff = ref - qpu
    e = np.mean(diff**2, axis=1)
    d_vals = np.empty(n_steps)
    d_vals[0] = e[0]
    if n_steps > 1:
        d_vals[1:] = np.cumsum(e[1:]) / np.arange(1, n_steps)
    if per_site_std is None:
        return d_vals, np.zeros(n_steps)
    std = np.asarray(per_site_std, dtype=float)
    var_e = np.sum((2.0 * diff * std) ** 2, axis=1) / L**2
    d_err = np.empty(n_steps)
    d_err[0] = np.sqrt(var_e[0])
    if n_steps > 1:
        d_err[1:] = np.sqrt(np.cumsum(var_e[1:])) / np.arange(1, n_steps)
    return d_vals, d_err


# ---------------------------------------------------------------------------
# (PYP)_j estimation
# ---------------------------------------------------------------------------

def parity_sites(L: int, parity: str) -> list[int]:
    if parity == "even":
        return [j for j in range(1, L + 1) if j % 2 == 0]
    if parity == "odd":
        return [j for j in range(1, L + 1) if j % 2 == 1]
    raise ValueError("parity must be 'even' or 'odd'")


def y_basis_rotation(L: int, parity: str) -> Circuit:
    """Rotate the parity group's qubits from the Y to the Z basis
    (S-dagger then H), leaving the neighbor projectors in the Z basis."""
    gates = []
    for j in parity_sites(L, parity):
        q = j - 1
        gates.extend([sdg(q), h(q)])
    return Circuit(L, gates)


def pyp_expectation(counts: Counts, parity: str) -> dict[int, float]:
    """<(PYP)_j> for every site j of the parity, from one counts object.

    The counts come from a circuit whose parity-group qubits were
    rotated Y->Z before measurement: the rotated bit contributes
    (1 - 2b_j), the unrotated neighbors enter as ground-state
    indicators, one-sided at the chain ends.
    """
    L = counts.width
    bits, w = _bits_and_weights(counts)
    out: dict[int, float] = {}
    for j in parity_sites(L, parity):
        val = 1.0 - 2.0 * bits[:, j - 1]
        for nb in (j - 1, j + 1):
            if 1 <= nb <= L:
                val = val * (bits[:, nb - 1] == 0)
        out[j] = float(w @ val)
    return out


def pyp_matrix(L: int, j: int) -> np.ndarray:
    """Dense (PYP)_j operator (oracle use)."""
    if not 1 <= j <= L:
        raise ValueError("site out of range")
    from .qsim import PAULI_1Q

    proj = np.array([[1, 0], [0, 0]], dtype=complex)  # (1+Z)/2
    out = np.array([[1]], dtype=complex)
    for site in range(1, L + 1):
        if site == j:
            term = PAULI_1Q["Y"]
        elif site in (j - 1, j + 1):
            term = proj
        else:
            term = np.eye(2, dtype=complex)
        out = np.kron(out, term)
    return out


def ypi_matrix(L: int) -> np.ndarray:
    """Y_pi = sum_i (-1)^i (PYP)_i as a dense matrix."""
    out = np.zeros((2**L, 2**L), dtype=complex)
    for j in range(1, L + 1):
        out += stagger_sign(j) * pyp_matrix(L, j)
    return out


# ---------------------------------------------------------------------------
# Correlator circuits and assembly
# ---------------------------------------------------------------------------

def cy_branch_prep(L: int, i: int, branch: str) -> Circuit:
    """Source-site preparation layer applied after the Neel circuit.

    The M branches build the Y eigenstates of qubit i out of its |1>
    component (X or identity, then H, then S; with S = diag(1, i) the
    identity route lands on |-y>, so labels attach to the produced
    eigenstate).  The rotated branches apply exp(+-i pi Y_i / 4).
    """
    if i % 2 != 0:
        raise ValueError("source site must be even (the Neel state holds |1> there)")
    if not 2 <= i <= L:
        raise ValueError("source site out of range")
    q = i - 1
    if branch == "M+1":
        gates = [x(q), h(q), s(q)]
    elif branch == "M-1":
        gates = [h(q), s(q)]
    elif branch == "+Y":
        gates = [ry(q, -np.pi / 2)]  # exp(+i pi Y/4)
    elif branch == "-Y":
        gates = [ry(q, np.pi / 2)]
    else:
        raise ValueError(f"unknown branch {branch!r}")
    return Circuit(L, gates)


def build_cy_circuits(p: ModelParams, steps: int, i: int, impl: str = "rzz",
                      **trotter_kwargs) -> dict[str, Circuit]:
    """The four prep+evolve circuits for one even source site.

    Branch circuits differ from the plain evolution circuit only in the
    preparation layer on qubit i; the measurement-basis rotation is
    appended separately per parity group.
    """
    from .model import trotter_evolution_circuit

    evolve = trotter_evolution_circuit(p, steps, impl=impl, **trotter_kwargs)
    prep = neel_prep_circuit(p.L)
    return {
        b: concat(prep, cy_branch_prep(p.L, i, b), evolve) for b in CY_BRANCHES
    }


@dataclass(frozen=True)
class CYPlanEntry:
    source_site: int
    branch: str
    parity: str


@dataclass(frozen=True)
class CYPlan:
    """Measurement settings for one time step of the correlator."""

    L: int
    entries: tuple[CYPlanEntry, ...]

    def __post_init__(self):
        expected = 4 * 2 * (self.L // 2)
        if len(self.entries) != expected:
            raise ValueError(
                f"plan must hold 4 x 2 x floor(L/2) = {expected} settings"
            )


def build_cy_plan(L: int) -> CYPlan:
    entries = [
        CYPlanEntry(i, b, par)
        for i in range(2, L + 1, 2)
        for b in CY_BRANCHES
        for par in PARITIES
    ]
    return CYPlan(L=L, entries=tuple(entries))


def assemble_cy(branch_values: dict, L: int) -> complex:
    """Combine per-branch <(PYP)_j> values into C_Y(t).

    ``branch_values`` maps (source_site, branch) to {j: value} over all
    sites j.  Raises if any branch is missing.
    """
    total = 0.0 + 0.0j
    for i in range(2, L + 1, 2):
        for b in CY_BRANCHES:
            if (i, b) not in branch_values:
                raise ValueError(f"missing branch {(i, b)}")
        for j in range(1, L + 1):
            vm = branch_values[(i, "M+1")][j] - branch_values[(i, "M-1")][j]
            vy = branch_values[(i, "+Y")][j] - branch_values[(i, "-Y")][j]
            local = 0.5 * vm - 0.5j * vy
            total += stagger_sign(i) * stagger_sign(j) * local
    return total


def simulate_cy_noiseless(p: ModelParams, steps: int, impl: str = "rzz") -> complex:
    """Full measurement protocol in noiseless infinite-shot mode.

    This is the convention-pinning check: it must agree with
    ``cy_oracle`` before the protocol is trusted at scale.
    """
    values: dict = {}
    for i in range(2, p.L + 1, 2):
        circuits = build_cy_circuits(p, steps, i, impl=impl)
        for b, circ in circuits.items():
            psi = run_circuit(Statevector.zero(p.L), circ)
            per_site: dict[int, float] = {}
            for parity in PARITIES:
                rotated = run_circuit(psi, y_basis_rotation(p.L, parity))
                counts = sample_counts(rotated, shots=1, seed=0, infinite=True)
                per_site.update(pyp_expectation(counts, parity))
            values[(i, b)] = per_site
    return assemble_cy(values, p.L)


def cy_oracle(p: ModelParams, steps: int) -> complex:
    """Dense two-time correlator <Z2| U^dag Y_pi U Y_pi |Z2> with U the
    ``steps``-fold Trotter unitary built from matrix exponentials."""
    u_step = trotter_step_matrix(p)
    u = np.linalg.matrix_power(u_step, steps)
    ypi = ypi_matrix(p.L)
    psi0 = Statevector.from_bitstring(neel_bitstring(p.L)).amplitudes
    return complex(psi0.conj() @ u.conj().T @ ypi @ u @ ypi @ psi0)
