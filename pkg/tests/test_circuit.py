import numpy as np
import pytest

from qne import circuit, qcore
from qne.circuit import CircuitLayout, Gate
from qne.errors import InvalidDimensionError, NumericalFailureError
from qne.qcore import DensityOperator

X = np.array([[0, 1], [1, 0]], dtype=complex)


def _layout(nq=2, layers=3, seed=0, rng_range=(3, 4)):
    return circuit.random_layout(nq, layers, rng_range, np.random.default_rng(seed))


def _dense_unitary(layout, theta):
    """Kronecker-product reference for build_unitary."""
    n = layout.num_qubits
    u = np.eye(layout.dim, dtype=complex)
    for g in layout.gates:
        if g.kind == "CNOT":
            c, t = g.qubits
            m = np.zeros((layout.dim, layout.dim))
            for i in range(layout.dim):
                bits = [(i >> (n - 1 - k)) & 1 for k in range(n)]
                if bits[c]:
                    bits[t] ^= 1
                j = sum(b << (n - 1 - k) for k, b in enumerate(bits))
                m[j, i] = 1
        else:
            mats = [np.eye(2)] * n
            mats = list(mats)
            mats[g.qubits[0]] = circuit.rotation_matrix(g.kind, theta[g.param_index])
            m = mats[0]
            for k in range(1, n):
                m = np.kron(m, mats[k])
        u = m @ u
    return u


class TestRandomLayout:
    def test_two_qubit_parameter_count(self):
        a = _layout(2, 3, seed=4)
        b = _layout(2, 3, seed=4)
        assert a.num_params <= 12
        assert a == b
        assert 9 <= len(a.gates) <= 12

    @pytest.mark.parametrize("seed", range(10))
    def test_six_qubit_gate_count(self, seed):
        layout = _layout(6, 5, seed)
        assert 15 <= len(layout.gates) <= 20

    @pytest.mark.parametrize("seed", range(10))
    def test_single_qubit_has_no_cnot(self, seed):
        layout = _layout(1, 4, seed)
        assert all(g.kind != "CNOT" for g in layout.gates)

    def test_param_indices_consecutive(self):
        layout = _layout(3, 6, seed=1)
        idx = [g.param_index for g in layout.gates if g.param_index is not None]
        assert idx == list(range(layout.num_params))

    def test_zero_qubits_rejected(self):
        with pytest.raises(InvalidDimensionError):
            circuit.random_layout(0, 3, (3, 4), np.random.default_rng(0))

    def test_range_checked(self):
        with pytest.raises(ValueError):
            circuit.random_layout(2, 3, (0, 4), np.random.default_rng(0))
        with pytest.raises(ValueError):
            circuit.random_layout(2, 3, (3, 9), np.random.default_rng(0))

    def test_json_round_trip(self, tmp_path):
        layout = _layout(4, 5, seed=3)
        text = layout.to_json()
        again = CircuitLayout.from_json(text)
        assert again == layout
        assert again.to_json() == text
        path = tmp_path / "layout.json"
        layout.save(path)
        assert CircuitLayout.load(path) == layout

    def test_invalid_gates(self):
        with pytest.raises(ValueError):
            Gate("CNOT", (1, 1))
        with pytest.raises(ValueError):
            Gate("CNOT", (0, 1), 0)
        with pytest.raises(ValueError):
            Gate("RX", (0,))
        with pytest.raises(ValueError):
            CircuitLayout(1, (Gate("RX", (1,), 0),))
        with pytest.raises(ValueError):
            CircuitLayout(1, (Gate("RX", (0,), 1),))


class TestBuildUnitary:
    def test_zero_angles_rotations_only(self):
        layout = _layout(1, 4, seed=2)
        u = circuit.build_unitary(layout, np.zeros(layout.num_params))
        np.testing.assert_allclose(u, np.eye(2), atol=1e-15)

    def test_rx_pi(self):
        layout = CircuitLayout(1, (Gate("RX", (0,), 0),))
        np.testing.assert_allclose(circuit.build_unitary(layout, [np.pi]), -1j * X, atol=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_unitary(self, seed):
        layout = _layout(2, 3, seed)
        theta = np.random.default_rng(seed).uniform(0, 2 * np.pi, layout.num_params)
        u = circuit.build_unitary(layout, theta)
        np.testing.assert_allclose(u.conj().T @ u, np.eye(4), atol=1e-10)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_kronecker_reference(self, seed):
        layout = _layout(3, 4, seed)
        theta = np.random.default_rng(seed).uniform(0, 2 * np.pi, layout.num_params)
        np.testing.assert_allclose(circuit.build_unitary(layout, theta), _dense_unitary(layout, theta), atol=1e-12)

    def test_cnot_convention(self):
        # Control qubit 0 is the most significant bit: |10> -> |11>.
        layout = CircuitLayout(2, (Gate("CNOT", (0, 1)),))
        u = circuit.build_unitary(layout, [])
        assert u[3, 2] == 1 and u[2, 3] == 1 and u[0, 0] == 1 and u[1, 1] == 1

    def test_two_pi_periodic(self):
        layout = _layout(2, 3, seed=1)
        theta = np.random.default_rng(0).uniform(0, 2 * np.pi, layout.num_params)
        base = circuit.build_unitary(layout, theta)
        for j in range(layout.num_params):
            shifted = theta.copy()
            shifted[j] += 2 * np.pi
            # RP(θ + 2π) = -RP(θ); the global sign cancels in U† ρ U, and
            # the 4π-periodic matrices are compared up to that sign.
            u = circuit.build_unitary(layout, shifted)
            np.testing.assert_allclose(u, -base, atol=1e-10)
            shifted[j] += 2 * np.pi
            np.testing.assert_allclose(circuit.build_unitary(layout, shifted), base, atol=1e-10)

    def test_length_mismatch(self):
        layout = _layout(2, 3)
        with pytest.raises(ValueError):
            circuit.build_unitary(layout, np.zeros(layout.num_params + 1))

    def test_shifted_unitaries_match_rebuild(self):
        layout = _layout(3, 5, seed=2)
        theta = np.random.default_rng(1).uniform(0, 6, layout.num_params)
        for j, (plus, minus) in enumerate(circuit.shifted_unitaries(layout, theta, 0.7)):
            t = theta.copy()
            t[j] += 0.7
            np.testing.assert_allclose(plus, circuit.build_unitary(layout, t), atol=1e-13)
            t[j] -= 1.4
            np.testing.assert_allclose(minus, circuit.build_unitary(layout, t), atol=1e-13)


class TestOutcomeDistribution:
    def test_identity_circuit_reads_diagonal(self):
        layout = CircuitLayout(2, (Gate("RZ", (0,), 0),))
        rho = DensityOperator.diagonal([0.1, 0.2, 0.3, 0.4])
        np.testing.assert_allclose(circuit.outcome_distribution(rho, layout, [0.0]), [0.1, 0.2, 0.3, 0.4])

    def test_maximally_mixed_is_uniform(self):
        layout = _layout(2, 3, seed=5)
        theta = np.random.default_rng(5).uniform(0, 6, layout.num_params)
        p = circuit.outcome_distribution(DensityOperator.maximally_mixed(4), layout, theta)
        np.testing.assert_allclose(p, np.full(4, 0.25), atol=1e-15)

    def test_matches_dense_conjugation(self):
        rng = np.random.default_rng(8)
        layout = _layout(2, 3, seed=8)
        theta = rng.uniform(0, 6, layout.num_params)
        rho = qcore.random_mixed_state(2, rng)
        u = circuit.build_unitary(layout, theta)
        expected = np.diag(u.conj().T @ rho.matrix @ u).real
        np.testing.assert_allclose(circuit.outcome_distribution(rho, layout, theta), expected, atol=1e-14)

    def test_raw_sums_to_one(self):
        rng = np.random.default_rng(13)
        for k in range(100):
            nq = 1 + k % 3
            layout = circuit.random_layout(nq, 3, (3, 4), rng)
            theta = rng.uniform(0, 2 * np.pi, layout.num_params)
            rho = qcore.random_mixed_state(nq, rng)
            u = circuit.build_unitary(layout, theta)
            raw = np.einsum("ai,ai->i", u.conj(), rho.matrix @ u).real
            assert abs(raw.sum() - 1.0) <= 1e-9

    def test_dimension_mismatch(self):
        layout = _layout(2, 3)
        with pytest.raises(InvalidDimensionError):
            circuit.outcome_distribution(DensityOperator.maximally_mixed(2), layout, np.zeros(layout.num_params))

    def test_normalization_drift_is_an_error(self):
        with pytest.raises(NumericalFailureError):
            circuit.clean_distribution(np.array([0.5, 0.5 + 1e-6]))
        with pytest.raises(NumericalFailureError):
            circuit.clean_distribution(np.array([1.0 + 1e-6, -1e-6]))
        np.testing.assert_array_equal(circuit.clean_distribution(np.array([1.0, -1e-13])), [1.0, 0.0])


class TestSampling:
    def test_pure_zero_state(self):
        layout = CircuitLayout(1, (Gate("RY", (0,), 0),))
        rho = DensityOperator.diagonal([1.0, 0.0])
        samples = circuit.sample_outcomes(rho, layout, [0.0], 500, np.random.default_rng(0))
        assert np.all(samples == 0)

    def test_maximally_mixed_frequency(self):
        layout = CircuitLayout(1, (Gate("RY", (0,), 0),))
        rho = DensityOperator.maximally_mixed(2)
        samples = circuit.sample_outcomes(rho, layout, [0.3], 10**5, np.random.default_rng(1))
        assert abs(np.mean(samples == 0) - 0.5) <= 0.01

    def test_deterministic(self):
        layout = _layout(2, 3)
        theta = np.ones(layout.num_params)
        rho = qcore.random_mixed_state(2, np.random.default_rng(0))
        a = circuit.sample_outcomes(rho, layout, theta, 50, np.random.default_rng(3))
        b = circuit.sample_outcomes(rho, layout, theta, 50, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("seed", range(3))
    def test_total_variation_converges(self, seed):
        rng = np.random.default_rng(seed)
        layout = _layout(2, 3, seed)
        theta = rng.uniform(0, 6, layout.num_params)
        rho = qcore.random_mixed_state(2, rng)
        p = circuit.outcome_distribution(rho, layout, theta)
        freq = np.bincount(circuit.sample_outcomes(rho, layout, theta, 10**5, rng), minlength=4) / 10**5
        assert 0.5 * np.abs(freq - p).sum() <= 0.02

    def test_zero_probability_outcomes_never_drawn(self):
        p = np.array([0.0, 0.5, 0.5, 0.0])
        samples = circuit.sample_from(p, 10**4, np.random.default_rng(0))
        assert set(np.unique(samples)) <= {1, 2}

    def test_needs_positive_n(self):
        with pytest.raises(ValueError):
            circuit.sample_from(np.array([1.0]), 0, np.random.default_rng(0))


class TestExpressivity:
    def test_full_rank_value(self):
        assert circuit.full_expressivity_rank(1) == 2
        assert circuit.full_expressivity_rank(2) == 12

    def test_single_rotation(self):
        layout = CircuitLayout(1, (Gate("RY", (0,), 0),))
        assert circuit.expressivity_rank(layout, [0.3]) == 1

    def test_z_rotation_commutes_with_diagonal(self):
        layout = CircuitLayout(1, (Gate("RZ", (0,), 0),))
        assert circuit.expressivity_rank(layout, [0.3]) == 0

    def test_euler_angles_reach_full_rank(self):
        layout = CircuitLayout(1, (Gate("RZ", (0,), 0), Gate("RY", (0,), 1), Gate("RZ", (0,), 2)))
        assert circuit.expressivity_rank(layout, [0.4, 1.1, 0.2]) == 2

    def test_rank_bounded_by_parameters(self):
        for seed in range(5):
            layout = _layout(2, 3, seed)
            assert circuit.expressivity_rank(layout) <= min(layout.num_params, 12)

    def test_find_expressive_layout(self):
        seed, layout = circuit.find_expressive_layout(2, 8, (3, 4))
        assert layout == _layout(2, 8, seed)
        assert circuit.expressivity_rank(layout) == 12
        for earlier in range(seed):
            assert circuit.expressivity_rank(_layout(2, 8, earlier)) < 12

    def test_find_gives_up(self):
        with pytest.raises(ValueError):
            circuit.find_expressive_layout(2, 1, (1, 1), max_tries=3)
