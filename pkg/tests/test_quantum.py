import numpy as np
import pytest

from trianglecert.dist import bayesian_inversion, marginal
from trianglecert.entropic import chsh
from trianglecert.errors import DomainError
from trianglecert.quantum import (DensityState, Povm, TriangleQuantumModel,
                                  born_rule, classical_correlated, dagger,
                                  fritz_model, kron, mul, observable_povm,
                                  pauli, projectors_z, singlet, trace,
                                  werner_singlet)

HI = (1 + 1 / np.sqrt(2)) / 16
LO = (1 - 1 / np.sqrt(2)) / 16


def test_algebra_basics():
    i2 = np.eye(2)
    assert np.array_equal(kron(i2, i2), np.eye(4))
    assert trace(pauli("z")) == 0
    assert kron(pauli("x"), pauli("z"))[0, 2] == 1
    assert np.allclose(dagger(pauli("y")), pauli("y"))
    with pytest.raises(DomainError):
        mul(np.eye(2), np.eye(3))
    with pytest.raises(DomainError):
        trace(np.ones((2, 3)))


def test_observable_povm():
    pz = observable_povm(pauli("z"))
    assert np.allclose(pz.effects[0], np.diag([1.0, 0.0]))
    px = observable_povm(pauli("x"))
    plus = np.full((2, 2), 0.5)
    assert np.allclose(px.effects[0], plus)
    diag = observable_povm((pauli("x") + pauli("z")) / np.sqrt(2))
    assert abs(np.trace(diag.effects[0]) - 1) < 1e-12
    assert abs(np.trace(diag.effects[1]) - 1) < 1e-12
    with pytest.raises(DomainError):
        observable_povm(np.array([[0, 1], [0, 0]], dtype=complex))


def test_state_invariants():
    with pytest.raises(DomainError):
        DensityState(np.eye(4), (2, 2))  # trace 4
    with pytest.raises(DomainError):
        DensityState(np.diag([1.5, -0.5, 0, 0]).astype(complex), (2, 2))
    with pytest.raises(DomainError):
        Povm((np.eye(2) * 0.5,), dim=2)  # doesn't sum to identity


def test_born_rule_maximally_mixed_uniform():
    mixed = DensityState(np.eye(4) / 4, (2, 2))
    pz = projectors_z()
    basis = Povm(tuple(np.kron(pz[i], pz[j]) for i in range(2) for j in range(2)), 4)
    model = TriangleQuantumModel(mixed, mixed, mixed, basis, basis, basis)
    p = born_rule(model)
    assert np.allclose(p.probabilities, 1 / 64, atol=1e-12)


def test_fritz_against_independent_oracle(fritz, fritz_oracle_table):
    assert np.abs(fritz.probabilities - fritz_oracle_table).max() < 1e-12
    nz = fritz.probabilities[fritz.probabilities > 1e-12]
    assert nz.size == 16
    assert ((np.abs(nz - HI) < 1e-12) | (np.abs(nz - LO) < 1e-12)).all()
    assert (np.abs(nz - HI) < 1e-12).sum() == 8


def test_fritz_perfect_correlations(fritz):
    t = fritz.table()
    idx = np.indices((4, 4, 4))
    a0, b0 = idx[0] >> 1, idx[1] >> 1
    c0, c1 = idx[2] >> 1, idx[2] & 1
    assert t[a0 == c0].sum() == pytest.approx(1.0, abs=1e-12)
    assert t[b0 == c1].sum() == pytest.approx(1.0, abs=1e-12)


def test_fritz_visibility_zero_uniform_conditional():
    p = born_rule(fritz_model(0.0, 0.0))
    cond = bayesian_inversion(p)
    assert np.allclose(cond.table, 0.25, atol=1e-10)


def test_fritz_anticorrelation_parameter():
    p = born_rule(fritz_model(1.0, 3e-5))
    t = p.table()
    idx = np.indices((4, 4, 4))
    mism = idx[0] >> 1 != idx[2] >> 1
    assert t[mism].sum() == pytest.approx(3e-5, rel=1e-9)
    with pytest.raises(DomainError):
        fritz_model(1.0, 0.6)
    with pytest.raises(DomainError):
        fritz_model(-0.1, 0.0)


def test_chsh_tsirelson_scaling(fritz):
    for v in (0.0, 0.25, 0.5, 0.75, 1.0):
        p = born_rule(fritz_model(v, 0.0))
        s = chsh(bayesian_inversion(p))
        assert abs(s - 2 * np.sqrt(2) * v) < 1e-9


def test_fritz_a0b0_marginal_uniform(fritz):
    m = marginal(fritz, {"a", "b"}).table().reshape(2, 2, 2, 2).sum(axis=(1, 3))
    assert np.allclose(m, 0.25, atol=1e-12)


def _random_state(rng, dim=4):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    m = g @ g.conj().T
    return DensityState(m / np.trace(m).real, (2, 2))


def _random_povm(rng, dim=4, outcomes=4):
    mats = []
    for _ in range(outcomes):
        g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        mats.append(g @ g.conj().T)
    total = sum(mats)
    evals, evecs = np.linalg.eigh(total)
    inv_sqrt = evecs @ np.diag(evals**-0.5) @ evecs.conj().T
    return Povm(tuple(inv_sqrt @ m @ inv_sqrt for m in mats), dim)


def test_born_rule_valid_on_random_models():
    rng = np.random.default_rng(12)
    for _ in range(10):
        model = TriangleQuantumModel(
            _random_state(rng), _random_state(rng), _random_state(rng),
            _random_povm(rng), _random_povm(rng), _random_povm(rng))
        p = born_rule(model)
        assert p.probabilities.min() >= 0
        assert abs(p.probabilities.sum() - 1) < 1e-10


def test_born_rule_linear_in_state():
    rng = np.random.default_rng(7)
    povms = [_random_povm(rng) for _ in range(3)]
    rho1, rho2 = _random_state(rng), _random_state(rng)
    other = (_random_state(rng), _random_state(rng))
    t = 0.3
    mix = DensityState(t * rho1.matrix + (1 - t) * rho2.matrix, (2, 2))
    p_mix = born_rule(TriangleQuantumModel(mix, *other, *povms))
    p1 = born_rule(TriangleQuantumModel(rho1, *other, *povms))
    p2 = born_rule(TriangleQuantumModel(rho2, *other, *povms))
    combo = t * p1.probabilities + (1 - t) * p2.probabilities
    assert np.abs(p_mix.probabilities - combo).max() < 1e-10


def test_chsh_bounded_on_quantum_models():
    # wired measurement layout with random shared states: the inverted
    # conditional is a genuine quantum correlation, so Tsirelson applies
    rng = np.random.default_rng(21)
    bound = 2 * np.sqrt(2) + 1e-9
    wiring = fritz_model()
    for _ in range(100):
        model = TriangleQuantumModel(
            _random_state(rng), classical_correlated(0.0), classical_correlated(0.0),
            wiring.povm_a, wiring.povm_b, wiring.povm_c)
        cond = bayesian_inversion(born_rule(model))
        if cond.defined.all():
            assert chsh(cond) <= bound


def test_werner_and_classical_states():
    assert np.allclose(werner_singlet(1.0).matrix, singlet().matrix)
    lam = classical_correlated(0.2)
    diag = np.diag(lam.matrix).real
    assert diag[1] + diag[2] == pytest.approx(0.2)


def test_model_json_roundtrip():
    from trianglecert.quantum import model_from_json, model_to_json

    model = fritz_model(0.9, 1e-4)
    back = model_from_json(model_to_json(model))
    p1, p2 = born_rule(model), born_rule(back)
    assert np.abs(p1.probabilities - p2.probabilities).max() < 1e-14
