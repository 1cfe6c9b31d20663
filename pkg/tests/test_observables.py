"""Observables and the four-branch correlator measurement protocol."""
import numpy as np
import pytest

from scarsim.model import ModelParams, neel_bitstring, neel_state, qmbs_params
from scarsim.observables import (
    accumulated_error,
    assemble_cy,
    build_cy_circuits,
    build_cy_plan,
    cy_branch_prep,
    cy_oracle,
    loschmidt_echo,
    loschmidt_echo_state,
    pyp_expectation,
    pyp_matrix,
    series_from_values,
    simulate_cy_noiseless,
    staggered_magnetization,
    y_basis_rotation,
    ypi_matrix,
)
from scarsim.qsim import Counts, Statevector, run_circuit, sample_counts


class TestStaggeredMagnetization:
    def test_neel_state_extremal(self):
        assert staggered_magnetization(neel_state(6)) == pytest.approx(-6.0)

    def test_conjugate_neel(self):
        assert staggered_magnetization(neel_state(6, "Z2'")) == pytest.approx(6.0)

    def test_equal_mixture_cancels(self):
        counts = Counts({"0101": 500.0, "1010": 500.0}, 1000.0, 4)
        assert staggered_magnetization(counts) == pytest.approx(0.0)

    def test_counts_and_state_agree(self):
        state = neel_state(4)
        counts = sample_counts(state, 100, seed=0, infinite=True)
        assert staggered_magnetization(counts) == pytest.approx(
            staggered_magnetization(state)
        )

    def test_empty_counts_rejected(self):
        with pytest.raises(ValueError):
            staggered_magnetization(Counts({}, 0.0, 3, quasi=True))


class TestLoschmidt:
    def test_all_on_reference(self):
        counts = Counts({"0101": 800.0}, 800.0, 4)
        assert loschmidt_echo(counts, "0101") == pytest.approx(1.0)

    def test_single_flip_tolerance_adds_weight(self):
        counts = Counts({"0101": 500.0, "0100": 500.0}, 1000.0, 4)
        assert loschmidt_echo(counts, "0101", 0) == pytest.approx(0.5)
        assert loschmidt_echo(counts, "0101", 1) == pytest.approx(1.0)

    def test_tolerance_monotone(self):
        rng = np.random.default_rng(0)
        data = {format(i, "04b"): float(rng.integers(1, 50)) for i in range(16)}
        counts = Counts(data, sum(data.values()), 4)
        assert loschmidt_echo(counts, "0101", 1) >= loschmidt_echo(counts, "0101", 0)

    def test_state_path(self):
        assert loschmidt_echo_state(neel_state(5), neel_bitstring(5)) == pytest.approx(1.0)

    def test_consistency_with_magnetization_at_t0(self):
        counts = sample_counts(neel_state(6), 100, seed=0, infinite=True)
        assert loschmidt_echo(counts, neel_bitstring(6)) == pytest.approx(1.0)
        assert staggered_magnetization(counts) == pytest.approx(-6.0)


class TestAccumulatedError:
    def test_identical_series_zero(self):
        a = np.random.default_rng(1).normal(size=(8, 5))
        d, err = accumulated_error(a, a)
        np.testing.assert_allclose(d, 0.0)
        np.testing.assert_allclose(err, 0.0)

    def test_constant_offset(self):
        ref = np.zeros((6, 4))
        qpu = ref + 0.1
        d, _ = accumulated_error(qpu, ref)
        np.testing.assert_allclose(d, 0.01, atol=1e-14)

    def test_single_step_offset_decays_as_inverse_n(self):
        ref = np.zeros((7, 3))
        qpu = ref.copy()
        qpu[1, :] = 0.3
        d, _ = accumulated_error(qpu, ref)
        e1 = 0.3**2
        for n in range(1, 7):
            assert d[n] == pytest.approx(e1 / n)

    def test_error_propagation(self):
        ref = np.zeros((2, 2))
        qpu = np.array([[0.0, 0.0], [0.1, 0.2]])
        std = np.full((2, 2), 0.05)
        _, err = accumulated_error(qpu, ref, std)
        expected = np.sqrt((2 * 0.1 * 0.05) ** 2 + (2 * 0.2 * 0.05) ** 2) / 2
        assert err[1] == pytest.approx(expected)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            accumulated_error(np.zeros((3, 2)), np.zeros((4, 2)))


class TestTimeSeries:
    def test_csv_schema(self):
        ts = series_from_values([0, 1, 2], 1.0, [1.0, 0.5, -0.5j], [0.0, 0.1, 0.2])
        rows = ts.csv_rows()
        assert rows[0] == "step,Vt,value_re,value_im,std"
        assert rows[1].startswith("0,0.000000000000e+00,1.000000000000e+00")

    def test_strictly_increasing_times_enforced(self):
        with pytest.raises(ValueError):
            series_from_values([1, 1], 1.0, [0.0, 0.0])


class TestPYP:
    def test_zero_in_neel_state(self):
        # Y expectation vanishes in any Z-basis state
        for parity in ("even", "odd"):
            rotated = run_circuit(neel_state(5), y_basis_rotation(5, parity))
            counts = sample_counts(rotated, 1, seed=0, infinite=True)
            vals = pyp_expectation(counts, parity)
            for v in vals.values():
                assert v == pytest.approx(0.0, abs=1e-12)

    def test_local_correlator_t0_structure(self):
        # <Z2|(PYP)_j Y_i|Z2> = delta_ij for the even source site (L=3)
        L, i = 3, 2
        psi = neel_state(L).amplitudes
        from scarsim.qsim import PauliString

        y_i = PauliString("I" * (i - 1) + "Y" + "I" * (L - i)).matrix()
        for j in range(1, L + 1):
            val = psi.conj() @ pyp_matrix(L, j) @ y_i @ psi
            expected = 1.0 if j == i else 0.0
            assert complex(val) == pytest.approx(expected, abs=1e-12)

    def test_equal_parity_pyp_commute(self):
        L = 5
        for j in (1, 2, 3):
            a, b = pyp_matrix(L, j), pyp_matrix(L, j + 2)
            np.testing.assert_allclose(a @ b - b @ a, 0.0, atol=1e-12)

    def test_estimator_matches_dense_operator(self):
        # protocol estimate == <psi|(PYP)_j|psi> on a generic state
        rng = np.random.default_rng(8)
        amps = rng.normal(size=2**4) + 1j * rng.normal(size=2**4)
        psi = Statevector(amps / np.linalg.norm(amps))
        for parity in ("even", "odd"):
            rotated = run_circuit(psi, y_basis_rotation(4, parity))
            counts = sample_counts(rotated, 1, seed=0, infinite=True)
            est = pyp_expectation(counts, parity)
            for j, v in est.items():
                dense = np.real(
                    psi.amplitudes.conj() @ pyp_matrix(4, j) @ psi.amplitudes
                )
                assert v == pytest.approx(float(dense), abs=1e-10)

    def test_simultaneous_vs_separate_estimation(self):
        # one parity-group measurement == site-by-site rotations
        p = qmbs_params(5)
        from scarsim.model import trotter_evolution_circuit

        psi = run_circuit(
            neel_state(5), trotter_evolution_circuit(p, 3, impl="rzz")
        )
        rotated = run_circuit(psi, y_basis_rotation(5, "even"))
        counts = sample_counts(rotated, 1, seed=0, infinite=True)
        grouped = pyp_expectation(counts, "even")
        for j in (2, 4):
            single_rot = run_circuit(
                psi, Circuit_single_rotation(5, j)
            )
            counts_j = sample_counts(single_rot, 1, seed=0, infinite=True)
            bits, w = _bw(counts_j)
            val = 1.0 - 2.0 * bits[:, j - 1]
            for nb in (j - 1, j + 1):
                if 1 <= nb <= 5:
                    val = val * (bits[:, nb - 1] == 0)
            assert grouped[j] == pytest.approx(float(w @ val), abs=1e-10)


def Circuit_single_rotation(L, j):
    from scarsim.qsim import Circuit, h, sdg

    return Circuit(L, [sdg(j - 1), h(j - 1)])


def _bw(counts):
    from scarsim.observables import _bits_and_weights

    return _bits_and_weights(counts)


class TestCYBranches:
    def test_odd_source_rejected(self):
        with pytest.raises(ValueError):
            cy_branch_prep(5, 3, "M+1")

    def test_m_branches_prepare_orthogonal_y_eigenstates(self):
        L, i = 3, 2
        prep_base = run_circuit(Statevector.zero(L), neel_state_circ(L))
        states = {}
        for b in ("M+1", "M-1"):
            out = run_circuit(prep_base, cy_branch_prep(L, i, b))
            states[b] = out.amplitudes
        assert abs(np.vdot(states["M+1"], states["M-1"])) < 1e-12
        # verify the produced eigenstates of Y_i match the labels
        from scarsim.qsim import PauliString

        y_i = PauliString("IYI").matrix()
        for b, sign in (("M+1", 1.0), ("M-1", -1.0)):
            val = states[b].conj() @ y_i @ states[b]
            assert np.real(val) == pytest.approx(sign, abs=1e-12)

    def test_branches_differ_only_on_source_qubit(self):
        p = qmbs_params(4)
        from scarsim.model import trotter_evolution_circuit

        circuits = build_cy_circuits(p, 2, 2, impl="rzz")
        evolve = trotter_evolution_circuit(p, 2, impl="rzz")

        def describe(gates):
            return [(g.kind, g.qubits, g.angle) for g in gates]

        for circ in circuits.values():
            # every branch ends with the identical evolution block, and the
            # preparation layer acts on the source qubit only
            assert describe(circ.gates[-len(evolve.gates):]) == describe(evolve.gates)
            prep_extra = circ.gates[2 : len(circ.gates) - len(evolve.gates)]
            assert {g.qubits for g in prep_extra} == {(1,)}

    def test_plan_size(self):
        plan = build_cy_plan(5)
        assert len(plan.entries) == 4 * 2 * 2


class TestCYAssembly:
    @pytest.mark.parametrize("L", [3, 4, 5])
    def test_t0_value(self, L):
        p = ModelParams(V=1.0, Omega=0.24, dt=1.0, L=L)
        val = simulate_cy_noiseless(p, steps=0)
        assert val.real == pytest.approx(L // 2, abs=1e-10)
        assert abs(val.imag) < 1e-10

    @pytest.mark.parametrize("L", [3, 4, 5])
    def test_protocol_matches_dense_oracle(self, L):
        # pins every sign and normalization convention of the protocol
        p = ModelParams(V=1.0, Omega=0.24, dt=1.0, L=L)
        for steps in (1, 2, 4, 7, 10):
            got = simulate_cy_noiseless(p, steps)
            want = cy_oracle(p, steps)
            assert got == pytest.approx(want, abs=1e-9)

    def test_protocol_matches_oracle_other_params(self):
        p = ModelParams(V=1.0, Omega=2.0, dt=0.16, L=4)
        for steps in (3, 6):
            assert simulate_cy_noiseless(p, steps) == pytest.approx(
                cy_oracle(p, steps), abs=1e-9
            )

    def test_missing_branch_rejected(self):
        with pytest.raises(ValueError):
            assemble_cy({(2, "M+1"): {1: 0.0}}, L=4)

    def test_ypi_matrix_is_hermitian(self):
        m = ypi_matrix(4)
        np.testing.assert_allclose(m, m.conj().T, atol=1e-14)

    def test_scar_regime_oscillation_period_and_30_step_oracle(self):
        # |C_Y| oscillates near pi / (1.33 Omega) in the scar regime, and
        # the protocol tracks the dense oracle over the full 30-step window
        p = qmbs_params(5)
        vals = []
        for n in range(31):
            got = simulate_cy_noiseless(p, n, impl="rzz")
            assert got == pytest.approx(cy_oracle(p, n), abs=1e-8)
            vals.append(abs(got))
        sig = np.asarray(vals) - np.mean(vals)
        spectrum = np.abs(np.fft.rfft(sig))
        k = 1 + int(np.argmax(spectrum[1:]))
        period = len(sig) / k
        expected = np.pi / (1.33 * 0.24)
        assert abs(period - expected) / expected < 0.15

    def test_chaotic_regime_single_revival_then_decay(self):
        # one approximate revival, then incoherent low-amplitude dynamics
        from scarsim.model import chaotic_params

        p = chaotic_params(5)
        vals = np.array(
            [abs(simulate_cy_noiseless(p, n, impl="rzz")) for n in range(31)]
        )
        times = 0.16 * np.arange(31)
        initial = vals[0]
        assert initial == pytest.approx(2.0, abs=1e-9)
        revival_window = (times > 0.5) & (times < 2.5)
        assert vals[revival_window].max() > 0.7 * initial
        late = times > 2.5
        assert vals[late].max() < 0.5 * initial

    @pytest.mark.slow
    def test_l12_scar_correlator_period(self):
        # the 12-site correlator keeps oscillating at the same period
        p = qmbs_params(12)
        vals = np.array(
            [abs(simulate_cy_noiseless(p, n, impl="rzz")) for n in range(31)]
        )
        sig = vals - vals.mean()
        spectrum = np.abs(np.fft.rfft(sig))
        k = 1 + int(np.argmax(spectrum[1:]))
        period = len(sig) / k
        expected = np.pi / (1.33 * 0.24)
        assert abs(period - expected) / expected < 0.15


def neel_state_circ(L):
    from scarsim.model import neel_prep_circuit

    return neel_prep_circuit(L)
