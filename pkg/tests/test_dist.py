import json

import numpy as np
import pytest

from trianglecert.dist import (ClassicalTriangleModel, OutcomeDistribution,
                               bayesian_inversion, marginal,
                               mix_with_uniform, random_classical_model,
                               realize_classical, recombine, sample_classical,
                               tensor_square, triangle_variables,
                               uniform_distribution)
from trianglecert.errors import DomainError

HI = (1 + 1 / np.sqrt(2)) / 16


def test_invariants_enforced():
    with pytest.raises(DomainError):
        OutcomeDistribution(triangle_variables(2), np.full(8, 0.2))
    with pytest.raises(DomainError):
        OutcomeDistribution(triangle_variables(2), np.array([1.5, -0.5] + [0.0] * 6))
    with pytest.raises(DomainError):
        OutcomeDistribution(triangle_variables(2), np.full(7, 1 / 7))


def test_json_roundtrip_bit_exact():
    rng = np.random.default_rng(0)
    w = rng.dirichlet(np.ones(64))
    p = OutcomeDistribution(triangle_variables(4), w)
    q = OutcomeDistribution.from_json(p.to_json())
    assert q.names == p.names
    assert np.array_equal(q.probabilities, p.probabilities)


def test_mix_identity_and_uniform(fritz):
    same = mix_with_uniform(fritz, 1.0)
    assert np.allclose(same.probabilities, fritz.probabilities, atol=0)
    flat = mix_with_uniform(fritz, 0.0)
    assert np.allclose(flat.probabilities, 1 / 64, atol=1e-15)
    with pytest.raises(DomainError):
        mix_with_uniform(fritz, 1.2)


def test_mix_half_fritz_value(fritz):
    mixed = mix_with_uniform(fritz, 0.5)
    expected = 0.5 * HI + 0.5 / 64
    assert abs(mixed.prob((0, 0, 0)) - expected) < 1e-12
    assert abs(expected - 0.061160) < 5e-7  # frozen from the analytic table


def test_mix_preserves_normalization(fritz):
    for v in np.linspace(0, 1, 7):
        assert abs(mix_with_uniform(fritz, v).probabilities.sum() - 1) < 1e-12


def test_tensor_square_uniform_and_point():
    u = uniform_distribution(triangle_variables(4))
    uu = tensor_square(u)
    assert uu.probabilities.size == 4096
    assert np.allclose(uu.probabilities, 1 / 4096, atol=1e-15)
    w = np.zeros(8)
    w[5] = 1.0
    pm = OutcomeDistribution(triangle_variables(2), w)
    sq = tensor_square(pm)
    assert sq.prob((1, 0, 1, 1, 0, 1)) == 1.0


def test_tensor_square_fritz_entry(fritz):
    sq = tensor_square(fritz)
    assert abs(sq.prob((0,) * 6) - HI**2) < 1e-12
    assert abs(HI**2 - 0.011384) < 5e-7


def test_tensor_square_marginal_is_p(fritz):
    sq = tensor_square(fritz)
    first = marginal(sq, {"a", "b", "c"})
    assert np.abs(first.probabilities - fritz.probabilities).max() < 1e-12


def test_marginal_examples(fritz):
    ma = marginal(fritz, {"a"})
    assert np.allclose(ma.probabilities, 0.25, atol=1e-12)
    whole = marginal(fritz, {"a", "b", "c"})
    assert np.array_equal(whole.probabilities, fritz.probabilities)
    u = uniform_distribution(triangle_variables(4))
    assert np.allclose(marginal(u, {"a", "b"}).probabilities, 1 / 16, atol=1e-15)
    with pytest.raises(DomainError):
        marginal(fritz, {"nope"})


def test_bayesian_inversion_fritz(fritz):
    cond = bayesian_inversion(fritz)
    assert cond.defined.all()
    assert abs(cond.table[0, 0, 0, 0] - (1 + 1 / np.sqrt(2)) / 4) < 1e-12
    assert abs(cond.table[0, 0, 0, 0] - 0.426777) < 5e-7


def test_bayesian_inversion_uniform_and_point():
    u = uniform_distribution(triangle_variables(4))
    cond = bayesian_inversion(u)
    assert np.allclose(cond.table, 0.25, atol=1e-15)
    w = np.zeros(64)
    w[0] = 1.0
    pm = OutcomeDistribution(triangle_variables(4), w)
    cond = bayesian_inversion(pm)
    assert cond.defined[0, 0] and cond.defined.sum() == 1
    assert cond.table[0, 0, 0, 0] == 1.0
    with pytest.raises(DomainError):
        cond.slice_at((1, 1))


def test_inversion_recombination_roundtrip(fritz):
    cond = bayesian_inversion(fritz)
    m = marginal(fritz, {"a", "b"}).table().reshape(2, 2, 2, 2).sum(axis=(1, 3))
    rebuilt = recombine(cond, m)
    direct = marginal(fritz, {"a", "b"}).table()
    assert np.abs(rebuilt - direct).max() < 1e-12


def test_realize_classical_examples():
    # deterministic responses ignoring latents -> point mass
    det = np.zeros((4, 2, 2))
    det[0] = 1.0
    model = ClassicalTriangleModel(
        prior_ab=np.array([0.5, 0.5]), prior_ac=np.array([0.5, 0.5]),
        prior_bc=np.array([0.5, 0.5]),
        response_a=det, response_b=det, response_c=det)
    p = realize_classical(model)
    assert p.prob((0, 0, 0)) == pytest.approx(1.0, abs=1e-12)

    # singleton latents -> product distribution
    rng = np.random.default_rng(3)
    qa, qb, qc = (rng.dirichlet(np.ones(4)) for _ in range(3))
    model = ClassicalTriangleModel(
        prior_ab=np.ones(1), prior_ac=np.ones(1), prior_bc=np.ones(1),
        response_a=qa.reshape(4, 1, 1), response_b=qb.reshape(4, 1, 1),
        response_c=qc.reshape(4, 1, 1))
    p = realize_classical(model)
    expected = np.einsum("a,b,c->abc", qa, qb, qc).reshape(-1)
    assert np.abs(p.probabilities - expected).max() < 1e-12


def test_realize_classical_matches_sampling():
    model = random_classical_model((4, 4, 4), seed=5)
    exact = realize_classical(model)
    n = 10**6
    sampled = sample_classical(model, n, seed=6)
    se = np.sqrt(np.maximum(exact.probabilities * (1 - exact.probabilities), 1e-12) / n)
    assert (np.abs(sampled.probabilities - exact.probabilities) < 3 * se + 1e-4).all()


def test_realize_classical_latent_relabel_invariance():
    model = random_classical_model((3, 2, 2), seed=9)
    p = realize_classical(model)
    perm = np.array([2, 0, 1])
    relabeled = ClassicalTriangleModel(
        prior_ab=model.prior_ab[perm], prior_ac=model.prior_ac,
        prior_bc=model.prior_bc,
        response_a=model.response_a[:, perm, :],
        response_b=model.response_b[:, perm, :],
        response_c=model.response_c)
    q = realize_classical(relabeled)
    assert np.abs(p.probabilities - q.probabilities).max() < 1e-12


def test_random_classical_model_deterministic():
    m1 = random_classical_model((2, 3, 4), seed=42)
    m2 = random_classical_model((2, 3, 4), seed=42)
    assert np.array_equal(m1.response_a, m2.response_a)
    assert np.array_equal(m1.prior_bc, m2.prior_bc)
    m3 = random_classical_model((1, 1, 1), seed=0)
    p = realize_classical(m3)
    t = p.table()
    outer = np.einsum("a,b,c->abc", t.sum(axis=(1, 2)), t.sum(axis=(0, 2)),
                      t.sum(axis=(0, 1)))
    assert np.abs(t - outer).max() < 1e-12
    with pytest.raises(DomainError):
        random_classical_model((0, 1, 1), seed=0)
