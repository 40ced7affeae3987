import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qudit_anneal.operators import (HamiltonianOperator, PauliTerm,
                                    apply_term, matvec, to_dense)

X2 = np.array([[0.0, 1.0], [1.0, 0.0]])
Z2 = np.array([[-1.0, 0.0], [0.0, 1.0]])  # Z|0> = -|0>
I2 = np.eye(2)


def kron_oracle(term: PauliTerm, n: int) -> np.ndarray:
    """Explicit tensor product, highest qubit leftmost (index = sum b_q 2^q)."""
    mats = {"X": X2, "Z": Z2}
    factors = dict(term.factors)
    out = np.array([[term.coefficient]])
    for q in reversed(range(n)):
        out = np.kron(out, mats[factors[q]] if q in factors else I2)
    return out


def random_operator(rng, n, max_terms=8, coeff_scale=2.0,
                    generic=False) -> HamiltonianOperator:
    """Random X/Z Pauli sum.  With generic=True every qubit additionally
    gets weak X and Z fields, which breaks the exact symmetries (untouched
    qubits, conserved strings) that make sparse random sums degenerate."""
    terms = []
    for _ in range(rng.integers(1, max_terms + 1)):
        size = int(rng.integers(1, min(n, 3) + 1))
        qs = rng.choice(n, size=size, replace=False)
        terms.append(PauliTerm(rng.uniform(-coeff_scale, coeff_scale),
                               {int(q): str(rng.choice(["X", "Z"])) for q in qs}))
    if generic:
        for q in range(n):
            terms.append(PauliTerm(rng.uniform(0.1, 0.5), {q: "X"}))
            terms.append(PauliTerm(rng.uniform(-0.5, -0.1), {q: "Z"}))
    return HamiltonianOperator(n, terms)


class TestPauliTerm:
    def test_rejects_y(self):
        with pytest.raises(ValueError, match="only X and Z"):
            PauliTerm(1.0, {0: "Y"})

    def test_rejects_repeated_index(self):
        with pytest.raises(ValueError, match="repeated"):
            PauliTerm(1.0, [(0, "X"), (0, "Z")])

    def test_rejects_negative_index(self):
        with pytest.raises(ValueError, match="negative"):
            PauliTerm(1.0, {-1: "X"})

    def test_factors_sorted(self):
        t = PauliTerm(1.0, [(3, "Z"), (1, "X")])
        assert t.factors == ((1, "X"), (3, "Z"))


class TestApplyTerm:
    def test_z_sign_convention(self):
        # Z|0> = -|0>
        out = apply_term(PauliTerm(1.0, {0: "Z"}), np.array([1.0, 0.0]))
        assert np.array_equal(out, [-1.0, 0.0])

    def test_x_flips_bit(self):
        out = apply_term(PauliTerm(1.0, {0: "X"}), np.array([1.0, 0.0]))
        assert np.array_equal(out, [0.0, 1.0])

    def test_zz_on_01(self):
        # |01>: qubit0 = 1, qubit1 = 0, i.e. basis index 1
        v = np.zeros(4)
        v[1] = 1.0
        expected = kron_oracle(PauliTerm(2.0, {0: "Z", 1: "Z"}), 2) @ v
        out = apply_term(PauliTerm(2.0, {0: "Z", 1: "Z"}), v)
        assert np.array_equal(out, expected)
        assert out[1] == -2.0

    def test_input_unmodified(self):
        v = np.array([1.0, 0.0])
        apply_term(PauliTerm(1.0, {0: "X"}), v)
        assert np.array_equal(v, [1.0, 0.0])

    def test_index_out_of_range(self):
        with pytest.raises(ValueError, match="qubit"):
            apply_term(PauliTerm(1.0, {3: "X"}), np.array([1.0, 0.0]))

    def test_non_power_of_two_state(self):
        with pytest.raises(ValueError, match="power of two"):
            apply_term(PauliTerm(1.0, {0: "X"}), np.ones(3))


class TestMatvec:
    def test_x_eigenvector(self):
        h = HamiltonianOperator(1, [PauliTerm(-0.5, {0: "X"})])
        v = np.array([1.0, 1.0]) / np.sqrt(2)
        assert np.allclose(matvec(h, v), -0.5 * v, atol=1e-15)

    def test_zero_terms(self):
        h = HamiltonianOperator(2, [])
        assert np.array_equal(matvec(h, np.ones(4)), np.zeros(4))

    def test_matches_dense_random(self):
        rng = np.random.default_rng(5)
        h = random_operator(rng, 3)
        v = rng.standard_normal(8)
        assert np.allclose(matvec(h, v), to_dense(h) @ v, atol=1e-14)

    def test_dimension_mismatch(self):
        h = HamiltonianOperator(2, [PauliTerm(1.0, {0: "Z"})])
        with pytest.raises(ValueError, match="mismatch"):
            matvec(h, np.ones(8))

    def test_term_order_canonical(self):
        terms = [PauliTerm(0.3, {1: "Z"}), PauliTerm(-1.0, {0: "X"})]
        a = HamiltonianOperator(2, terms)
        b = HamiltonianOperator(2, terms[::-1])
        v = np.random.default_rng(0).standard_normal(4)
        assert np.array_equal(matvec(a, v), matvec(b, v))


class TestToDense:
    def test_one_qubit_ax_bz(self):
        a, b = 0.7, -1.3
        h = HamiltonianOperator(1, [PauliTerm(a, {0: "X"}),
                                    PauliTerm(b, {0: "Z"})])
        assert np.allclose(to_dense(h), [[-b, a], [a, b]], atol=1e-15)

    def test_empty_is_zero_matrix(self):
        assert np.array_equal(to_dense(HamiltonianOperator(2, [])), np.zeros((4, 4)))

    def test_exact_symmetry(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            m = to_dense(random_operator(rng, rng.integers(1, 5)))
            assert np.max(np.abs(m - m.T)) == 0.0

    def test_dimension_cap(self):
        h = HamiltonianOperator(14, [PauliTerm(1.0, {0: "Z"})])
        with pytest.raises(ValueError, match="cap"):
            to_dense(h)

    def test_construction_time_index_check(self):
        with pytest.raises(ValueError, match="qubit 5"):
            HamiltonianOperator(2, [PauliTerm(1.0, {5: "X"})])


class TestOperatorProperties:
    def test_matvec_dense_agreement_100_ops(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            n = int(rng.integers(1, 7))
            h = random_operator(rng, n)
            v = rng.standard_normal(1 << n)
            err = np.max(np.abs(matvec(h, v) - to_dense(h) @ v))
            assert err <= 1e-13 * np.max(np.abs(v))

    def test_linearity(self):
        rng = np.random.default_rng(3)
        h = random_operator(rng, 5)
        u, v = rng.standard_normal((2, 32))
        a, b = rng.standard_normal(2)
        lhs = matvec(h, a * u + b * v)
        rhs = a * matvec(h, u) + b * matvec(h, v)
        assert np.max(np.abs(lhs - rhs)) <= 1e-13

    def test_hermiticity(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            h = random_operator(rng, 4)
            u, v = rng.standard_normal((2, 16))
            assert abs(u @ matvec(h, v) - matvec(h, u) @ v) <= 1e-13


@st.composite
def operators_and_vectors(draw):
    n = draw(st.integers(min_value=1, max_value=5))
    n_terms = draw(st.integers(min_value=1, max_value=6))
    terms = []
    for _ in range(n_terms):
        qubits = draw(st.lists(st.integers(0, n - 1), min_size=1,
                               max_size=min(n, 3), unique=True))
        axes = draw(st.lists(st.sampled_from(["X", "Z"]),
                             min_size=len(qubits), max_size=len(qubits)))
        coeff = draw(st.floats(min_value=-3, max_value=3,
                               allow_nan=False, allow_infinity=False))
        terms.append(PauliTerm(coeff, list(zip(qubits, axes))))
    seed = draw(st.integers(min_value=0, max_value=2**32 - 1))
    v = np.random.default_rng(seed).standard_normal(1 << n)
    return HamiltonianOperator(n, terms), v


@settings(max_examples=60, deadline=None)
@given(operators_and_vectors())
def test_apply_term_sum_equals_matvec(case):
    h, v = case
    total = np.zeros_like(v)
    for t in h.terms:
        total += apply_term(t, v)
    assert np.allclose(total, matvec(h, v), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(operators_and_vectors())
def test_dense_equals_matvec(case):
    h, v = case
    assert np.allclose(to_dense(h) @ v, matvec(h, v),
                       atol=1e-13 * max(1.0, np.max(np.abs(v))))
