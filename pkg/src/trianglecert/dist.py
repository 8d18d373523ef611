"""Finite discrete distributions on named variables.

Probability tables are stored dense, row-major in variable order (the first
declared variable is the outermost index).  Composite quaternary outcomes
follow the fixed pairing convention ``value = 2*bit0 + bit1`` everywhere in
this package.

All containers are immutable after construction and all operations are pure
functions, so everything here is safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

NORM_ATOL = 1e-12
EMPIRICAL_ATOL = 1e-9


@dataclass(frozen=True)
class Variable:
    name: str
    cardinality: int

    def __post_init__(self):
        if not self.name:
            raise DomainError("variable name must be nonempty")
        if self.cardinality < 1:
            raise DomainError(f"cardinality must be >= 1, got {self.cardinality}")


@dataclass(frozen=True)
class OutcomeDistribution:
    """Joint probability table over named finite-cardinality variables."""

    variables: tuple[Variable, ...]
    probabilities: np.ndarray
    atol: float = NORM_ATOL

    def __post_init__(self):
        variables = tuple(
            v if isinstance(v, Variable) else Variable(*v) for v in self.variables
        )
        object.__setattr__(self, "variables", variables)
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise DomainError(f"duplicate variable names: {names}")
        p = np.asarray(self.probabilities, dtype=float).reshape(-1)
        size = math.prod(v.cardinality for v in variables)
        if p.size != size:
            raise DomainError(
                f"probability array has length {p.size}, expected {size}"
            )
        if not np.all(np.isfinite(p)):
            raise DomainError("probabilities must be finite")
        if p.min(initial=0.0) < -self.atol:
            raise DomainError(f"negative probability {p.min()}")
        p = np.clip(p, 0.0, None)
        total = p.sum()
        if abs(total - 1.0) > self.atol:
            raise DomainError(f"probabilities sum to {total}, not 1")
        p.flags.writeable = False
        object.__setattr__(self, "probabilities", p)

    # -- indexing helpers -------------------------------------------------

    @property
    def cards(self) -> tuple[int, ...]:
        return tuple(v.cardinality for v in self.variables)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def table(self) -> np.ndarray:
        """Probabilities reshaped to one axis per variable."""
        return self.probabilities.reshape(self.cards)

    def index_of(self, outcome) -> int:
        return int(np.ravel_multi_index(tuple(outcome), self.cards))

    def prob(self, outcome) -> float:
        return float(self.probabilities[self.index_of(outcome)])

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(
            {
                "variables": [
                    {"name": v.name, "cardinality": v.cardinality}
                    for v in self.variables
                ],
                "probabilities": self.probabilities.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str, atol: float = NORM_ATOL) -> "OutcomeDistribution":
        doc = json.loads(text)
        variables = tuple(
            Variable(v["name"], int(v["cardinality"])) for v in doc["variables"]
        )
        return cls(variables, np.array(doc["probabilities"], dtype=float), atol=atol)


@dataclass(frozen=True)
class ConditionalDistribution:
    """Table of conditionals p(outcomes | conditions).

    ``table`` has one axis per condition variable followed by one axis per
    outcome variable.  Conditioning cells whose marginal probability vanishes
    are flagged undefined in ``defined`` rather than silently zero-filled.
    """

    condition_variables: tuple[Variable, ...]
    outcome_variables: tuple[Variable, ...]
    table: np.ndarray
    defined: np.ndarray
    atol: float = NORM_ATOL

    def __post_init__(self):
        cond_cards = tuple(v.cardinality for v in self.condition_variables)
        out_cards = tuple(v.cardinality for v in self.outcome_variables)
        table = np.asarray(self.table, dtype=float).reshape(cond_cards + out_cards)
        defined = np.asarray(self.defined, dtype=bool).reshape(cond_cards)
        sums = table.reshape(cond_cards + (-1,)).sum(axis=-1)
        bad = defined & (np.abs(sums - 1.0) > self.atol)
        if bad.any():
            raise DomainError("defined conditional slices must sum to 1")
        table.flags.writeable = False
        defined.flags.writeable = False
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "defined", defined)

    def slice_at(self, condition) -> np.ndarray:
        if not self.defined[tuple(condition)]:
            raise DomainError(f"conditional undefined at condition {condition}")
        return self.table[tuple(condition)]


@dataclass(frozen=True)
class ClassicalTriangleModel:
    """Latent-variable model on the triangle: three independent sources and
    per-station response tables.

    ``response_a[a, i, j]`` is p(a | lam_ab=i, lam_ac=j); station B sees
    (lam_ab, lam_bc) and station C sees (lam_ac, lam_bc).
    """

    prior_ab: np.ndarray
    prior_ac: np.ndarray
    prior_bc: np.ndarray
    response_a: np.ndarray
    response_b: np.ndarray
    response_c: np.ndarray
    atol: float = field(default=NORM_ATOL, compare=False)

    def __post_init__(self):
        for attr in ("prior_ab", "prior_ac", "prior_bc"):
            p = np.asarray(getattr(self, attr), dtype=float)
            if p.ndim != 1 or p.min() < -self.atol or abs(p.sum() - 1.0) > self.atol:
                raise DomainError(f"{attr} is not a probability vector")
            p.flags.writeable = False
            object.__setattr__(self, attr, p)
        for attr in ("response_a", "response_b", "response_c"):
            r = np.asarray(getattr(self, attr), dtype=float)
            if r.ndim != 3 or r.min() < -self.atol:
                raise DomainError(f"{attr} must be a nonnegative (outcome, lam, lam) array")
            if np.abs(r.sum(axis=0) - 1.0).max() > self.atol:
                raise DomainError(f"{attr} columns must each sum to 1")
            r.flags.writeable = False
            object.__setattr__(self, attr, r)
        if self.response_a.shape[1] != self.prior_ab.size \
                or self.response_a.shape[2] != self.prior_ac.size \
                or self.response_b.shape[1] != self.prior_ab.size \
                or self.response_b.shape[2] != self.prior_bc.size \
                or self.response_c.shape[1] != self.prior_ac.size \
                or self.response_c.shape[2] != self.prior_bc.size:
            raise DomainError("response table shapes inconsistent with latent cardinalities")

    @property
    def latent_cards(self) -> tuple[int, int, int]:
        return (self.prior_ab.size, self.prior_ac.size, self.prior_bc.size)

    @property
    def outcome_card(self) -> int:
        return self.response_a.shape[0]


def uniform_distribution(variables) -> OutcomeDistribution:
    variables = tuple(v if isinstance(v, Variable) else Variable(*v) for v in variables)
    size = math.prod(v.cardinality for v in variables)
    return OutcomeDistribution(variables, np.full(size, 1.0 / size))


def triangle_variables(d: int = 4) -> tuple[Variable, Variable, Variable]:
    return (Variable("a", d), Variable("b", d), Variable("c", d))


def mix_with_uniform(p: OutcomeDistribution, v: float) -> OutcomeDistribution:
    """Convex mixture v*p + (1-v)*uniform on the same outcome space."""
    if not 0.0 <= v <= 1.0:
        raise DomainError(f"mixing weight must lie in [0, 1], got {v}")
    size = p.probabilities.size
    mixed = v * p.probabilities + (1.0 - v) / size
    return OutcomeDistribution(p.variables, mixed, atol=p.atol)


def tensor_square(p: OutcomeDistribution) -> OutcomeDistribution:
    """Product of two independent copies of p, second copy renamed name+'2'."""
    doubled = p.variables + tuple(
        Variable(v.name + "2", v.cardinality) for v in p.variables
    )
    probs = np.outer(p.probabilities, p.probabilities).reshape(-1)
    return OutcomeDistribution(doubled, probs, atol=max(p.atol, NORM_ATOL))


def marginal(p: OutcomeDistribution, keep) -> OutcomeDistribution:
    """Sum out every variable not named in ``keep`` (original order kept)."""
    keep = set([keep] if isinstance(keep, str) else keep)
    unknown = keep - set(p.names)
    if unknown:
        raise DomainError(f"unknown variable names: {sorted(unknown)}")
    drop_axes = tuple(i for i, v in enumerate(p.variables) if v.name not in keep)
    kept_vars = tuple(v for v in p.variables if v.name in keep)
    probs = p.table().sum(axis=drop_axes) if drop_axes else p.table()
    return OutcomeDistribution(kept_vars, probs.reshape(-1), atol=p.atol)


def split_bits(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Decompose quaternary values per the pairing convention x = 2*x0 + x1."""
    values = np.asarray(values)
    return values >> 1, values & 1


def bayesian_inversion(
    p: OutcomeDistribution, vars: tuple[str, str] = ("a", "b")
) -> ConditionalDistribution:
    """Conditional p(a1,b1 | a0,b0) for quaternary a=(a0,a1), b=(b0,b1).

    Remaining variables are summed out first.  Zero-probability conditioning
    cells come back flagged undefined.
    """
    n1, n2 = vars
    for name in vars:
        var = dict(zip(p.names, p.variables)).get(name)
        if var is None:
            raise DomainError(f"unknown variable {name!r}")
        if var.cardinality != 4:
            raise DomainError(f"{name} must be quaternary to split into bit pairs")
    m = marginal(p, vars)
    if m.names != (n1, n2):
        # keep declared order (marginal preserves p's order)
        t = m.table().T if m.names == (n2, n1) else None
        if t is None:
            raise DomainError("unexpected variable order")
        joint4 = t
    else:
        joint4 = m.table()
    # reshape 4x4 -> (a0,a1,b0,b1) then group conditions (a0,b0) first
    j = joint4.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3)  # (a0,b0,a1,b1)
    cond_marg = j.sum(axis=(2, 3))
    defined = cond_marg > 0.0
    table = np.zeros_like(j)
    nz = np.where(defined)
    table[nz] = j[nz] / cond_marg[nz][:, None, None]
    return ConditionalDistribution(
        condition_variables=(Variable(n1 + "0", 2), Variable(n2 + "0", 2)),
        outcome_variables=(Variable(n1 + "1", 2), Variable(n2 + "1", 2)),
        table=table,
        defined=defined,
        atol=max(p.atol, 1e-10),
    )


def recombine(cond: ConditionalDistribution, cond_marginal: np.ndarray) -> np.ndarray:
    """Inverse of bayesian_inversion: rebuild p(a0,a1,b0,b1) from the
    conditional and the (a0,b0) marginal."""
    j = cond.table * np.asarray(cond_marginal).reshape(2, 2, 1, 1)
    return j.transpose(0, 2, 1, 3).reshape(4, 4)


def realize_classical(model: ClassicalTriangleModel) -> OutcomeDistribution:
    """Exact summation over all latent triples of the triangle model."""
    probs = np.einsum(
        "i,j,k,aij,bik,cjk->abc",
        model.prior_ab,
        model.prior_ac,
        model.prior_bc,
        model.response_a,
        model.response_b,
        model.response_c,
        optimize=True,
    )
    d = model.outcome_card
    return OutcomeDistribution(triangle_variables(d), probs.reshape(-1))


def sample_classical(
    model: ClassicalTriangleModel, n: int, seed: int
) -> OutcomeDistribution:
    """Monte-Carlo estimate of realize_classical, for cross-checks."""
    rng = np.random.default_rng(seed)
    lab = rng.choice(model.prior_ab.size, size=n, p=model.prior_ab)
    lac = rng.choice(model.prior_ac.size, size=n, p=model.prior_ac)
    lbc = rng.choice(model.prior_bc.size, size=n, p=model.prior_bc)
    d = model.outcome_card
    u = rng.random((3, n))
    a = (model.response_a[:, lab, lac].cumsum(axis=0) < u[0]).sum(axis=0)
    b = (model.response_b[:, lab, lbc].cumsum(axis=0) < u[1]).sum(axis=0)
    c = (model.response_c[:, lac, lbc].cumsum(axis=0) < u[2]).sum(axis=0)
    counts = np.bincount((a * d + b) * d + c, minlength=d**3)
    return OutcomeDistribution(
        triangle_variables(d), counts / n, atol=EMPIRICAL_ATOL
    )


def random_classical_model(
    latent_cards: tuple[int, int, int], seed: int, outcome_card: int = 4
) -> ClassicalTriangleModel:
    """Seeded feasible-instance generator: a valid triangle model whose
    realization is triangle-compatible by construction."""
    if any(c < 1 for c in latent_cards):
        raise DomainError("latent cardinalities must be >= 1")
    rng = np.random.default_rng(seed)
    nab, nac, nbc = latent_cards
    d = outcome_card

    def dirichlet(shape):
        g = rng.gamma(1.0, size=shape)
        return g / g.sum(axis=0, keepdims=True)

    return ClassicalTriangleModel(
        prior_ab=dirichlet((nab,)),
        prior_ac=dirichlet((nac,)),
        prior_bc=dirichlet((nbc,)),
        response_a=dirichlet((d, nab, nac)),
        response_b=dirichlet((d, nab, nbc)),
        response_c=dirichlet((d, nac, nbc)),
    )
