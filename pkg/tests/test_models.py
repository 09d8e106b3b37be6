import json
import math

import numpy as np
import pytest

from pqwalk import models
from pqwalk import hamiltonians as ham
from pqwalk.refsim import expm_hermitian


class TestHeisenberg:
    def test_clause_masks(self):
        inst = models.heisenberg(3, seed=0)
        spec = inst.spec
        assert spec.m == 3
        for term in spec.terms:
            assert bin(term["s"]).count("1") == 2

    def test_rejects_small_chain(self):
        with pytest.raises(ValueError):
            models.heisenberg(2, seed=0)

    def test_pure_exchange_traceless(self):
        inst = models.heisenberg(3, seed=0, h_override=[0, 0, 0])
        H = inst.spec.materialize_dense()
        assert abs(np.trace(H)) < 1e-12

    def test_max_norm_bound(self):
        n = 3
        inst = models.heisenberg(n, seed=5)
        raw = inst.spec.materialize_dense() * inst.spec.normalization
        assert np.max(np.abs(raw)) <= 4 * n + 1e-12

    def test_seed_reproducible(self):
        a = models.heisenberg(4, seed=9)
        b = models.heisenberg(4, seed=9)
        assert a.provenance["h"] == b.provenance["h"]
        assert np.allclose(a.spec.materialize_dense(), b.spec.materialize_dense())

    def test_passes_structure_suite(self):
        spec = models.heisenberg(3, seed=2).spec
        H = spec.materialize_dense()
        assert np.linalg.norm(H - H.conj().T, np.inf) < 1e-12
        assert np.max(np.abs(H)) <= 1 + 1e-12
        for w in range(spec.m):
            for j in range(spec.N):
                for t in range(spec.d):
                    k = spec.neighbor(w, j, t)
                    assert spec.L_inv(w, j, k) == spec.g(w, t)

    def test_oracle_cost_shapes(self):
        inst = models.heisenberg(3, seed=0)
        assert inst.oracle_costs["O_P"].gate_depth == 2  # ceil(log2 3)
        assert inst.oracle_costs["O_P"].gate_size == 3 * 2


class TestSyk:
    def test_jw_endpoints(self):
        assert models.jw_majorana(0, 3) == "XII"
        assert models.jw_majorana(1, 3) == "YII"
        assert models.jw_majorana(4, 3) == "ZZX"

    def test_anticommutation_dense(self):
        n = 2
        for p in range(2 * n):
            gp = models.string_matrix(models.jw_majorana(p, n))
            for q in range(2 * n):
                gq = models.string_matrix(models.jw_majorana(q, n))
                want = 2.0 * np.eye(2 ** n) if p == q else np.zeros((2 ** n,) * 2)
                assert np.allclose(gp @ gq + gq @ gp, want, atol=1e-12)

    def test_coupling_variance(self):
        n, J = 3, 1.0
        rng = np.random.default_rng(42)
        samples = models.sample_syk_couplings(10_000, n, J, rng)
        sigma2 = 6.0 * J * J / (2 * n) ** 3
        # sample variance of a Gaussian: var(s^2-hat) ~ 2 sigma^4 / N
        tol = 3.0 * sigma2 * math.sqrt(2.0 / len(samples))
        assert abs(np.var(samples) - sigma2) <= tol

    def test_instance_hermitian_normalized(self):
        spec = models.syk(3, seed=1).spec
        H = spec.materialize_dense()
        assert np.linalg.norm(H - H.conj().T, np.inf) < 1e-12
        assert np.max(np.abs(H)) <= 1 + 1e-12

    def test_seed_reproducible(self):
        a = models.syk(2, seed=4).provenance["couplings"]
        b = models.syk(2, seed=4).provenance["couplings"]
        assert a == b


class TestMolecular:
    def test_single_one_body_term(self):
        inst = models.molecular({"one_body": [[0, 0, 0.7, 0.0]], "two_body": []}, n=1)
        H = inst.spec.materialize_dense() * inst.spec.normalization
        # h00 a+ a = (h00/2)(I - Z)
        assert np.allclose(H, np.diag([0.0, 0.7]), atol=1e-12)

    def test_fermionic_anticommutation(self):
        n = 2
        for p in range(n):
            ap_dag = sum(c * models.string_matrix(s)
                         for s, c in models.jw_creation(p, n).items())
            for q in range(n):
                aq = sum(c * models.string_matrix(s)
                         for s, c in models.jw_annihilation(q, n).items())
                want = np.eye(4) if p == q else np.zeros((4, 4))
                assert np.allclose(ap_dag @ aq + aq @ ap_dag, want, atol=1e-12)

    def test_pure_one_body_hermitian(self):
        table = {"one_body": [[0, 0, 0.5, 0.0], [0, 1, 0.2, 0.1],
                              [1, 0, 0.2, -0.1], [1, 1, -0.3, 0.0]],
                 "two_body": []}
        spec = models.molecular(table).spec
        H = spec.materialize_dense()
        assert np.linalg.norm(H - H.conj().T, np.inf) < 1e-12

    def test_two_body_number_operator(self):
        # h_0110 a0+ a1+ a1 a0 acts as n0*n1: diagonal (0,0,0,1) on occupations
        table = {"one_body": [], "two_body": [[0, 1, 1, 0, 2.0, 0.0]]}
        spec = models.molecular(table).spec
        H = spec.materialize_dense() * spec.normalization
        want = np.diag([0.0, 0.0, 0.0, 1.0])
        assert np.allclose(H, want, atol=1e-12)

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError, match="Hermitian"):
            models.molecular({"one_body": [[0, 1, 0.2, 0.1], [1, 0, 0.2, 0.1]],
                              "two_body": []})

    def test_file_ingestion(self, tmp_path):
        path = tmp_path / "integrals.json"
        path.write_text(json.dumps({"one_body": [[0, 0, 0.7, 0.0]], "two_body": []}))
        inst = models.molecular(str(path))
        assert inst.spec.n == 1


class TestParity:
    def test_n1_peak(self):
        assert models.parity_amplitude(1, [1], math.pi / 2) == pytest.approx(1.0)

    def test_n2_half(self):
        amp = models.parity_amplitude(2, [1, 0], math.pi / 2)
        assert amp == pytest.approx(0.5, abs=1e-9)
        assert amp == pytest.approx(math.sin(math.pi / 4) ** 2, abs=1e-9)

    def test_t_zero(self):
        assert models.parity_amplitude(3, [1, 1, 0], 0.0) < 1e-12

    @pytest.mark.parametrize("N", range(1, 9))
    def test_closed_form(self, N):
        rng = np.random.default_rng(N)
        for x in rng.integers(0, 2, size=(4, N)):
            for t in rng.uniform(0.1, 3.0, 4):
                amp = models.parity_amplitude(N, x, t)
                assert amp == pytest.approx(models.parity_closed_form(N, t), abs=1e-9)

    def test_dominant_outcome_is_parity(self):
        N = 4
        rng = np.random.default_rng(0)
        for x in rng.integers(0, 2, size=(6, N)):
            par = int(np.bitwise_xor.reduce(x))
            H = models.parity_dense(N, x)
            U = expm_hermitian(H, math.pi * N / 2)
            col = np.abs(U[:, 0]) ** 2
            assert int(np.argmax(col)) == 2 * N + par

    def test_band_registration(self):
        inst = models.parity_ham(2, [1, 1])
        spec = inst.spec
        assert spec.family == "band" and spec.d == 7
        H = spec.materialize_dense() * spec.normalization
        assert np.allclose(H[:6, :6], models.parity_dense(2, [1, 1]), atol=1e-12)

    def test_size_cap(self):
        with pytest.raises(ValueError):
            models.parity_ham(11, [0] * 11)


class TestPauliAlgebra:
    def test_products(self):
        assert models.pauli_mul("X", "Y") == (1j, "Z")
        assert models.pauli_mul("Y", "X") == (-1j, "Z")
        assert models.pauli_mul("XZ", "XZ") == (1, "II")

    def test_string_matrix_order(self):
        m = models.string_matrix("XZ")  # X on qubit 0 (low bit), Z on qubit 1
        want = np.kron(models.PAULI["Z"], models.PAULI["X"])
        assert np.allclose(m, want)
