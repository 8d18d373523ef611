"""Shannon-entropic quantities and the measurement-dependence-robust witness.

All entropies are in bits (log base 2); the witness combines the CHSH value
of the inverted conditional with an entropic bound computed from the
(a0, b0, C) marginal.  Negative witness values certify nonclassicality.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .dist import ConditionalDistribution, OutcomeDistribution, bayesian_inversion
from .errors import DomainError

LOG2_E = math.log2(math.e)


def shannon_entropy(p) -> float:
    """Entropy in bits with the 0*log(0) = 0 convention."""
    p = np.asarray(p, dtype=float).reshape(-1)
    nz = p[p > 0.0]
    return float(-(nz * np.log2(nz)).sum())


def _joint3(p: OutcomeDistribution) -> np.ndarray:
    """p(a0, b0, C) for a triangle distribution over quaternary a, b, c."""
    if p.cards != (4, 4, 4):
        raise DomainError(f"expected three quaternary variables, got {p.cards}")
    t = p.table().reshape(2, 2, 2, 2, 4)
    # axes: (a0, a1, b0, b1, C); drop the bit-1 axes
    return t.sum(axis=(1, 3))


def mutual_info(pxy: np.ndarray) -> float:
    """I(X;Y) in bits from a 2-axis joint table."""
    pxy = np.asarray(pxy, dtype=float)
    return (
        shannon_entropy(pxy.sum(axis=1))
        + shannon_entropy(pxy.sum(axis=0))
        - shannon_entropy(pxy)
    )


def tripartite_info(pxyz: np.ndarray) -> float:
    """I(X:Y:Z) = H(XYZ) - H(XY) - H(XZ) - H(YZ) + H(X) + H(Y) + H(Z)."""
    p = np.asarray(pxyz, dtype=float)
    return (
        shannon_entropy(p)
        - shannon_entropy(p.sum(axis=2))
        - shannon_entropy(p.sum(axis=1))
        - shannon_entropy(p.sum(axis=0))
        + shannon_entropy(p.sum(axis=(1, 2)))
        + shannon_entropy(p.sum(axis=(0, 2)))
        + shannon_entropy(p.sum(axis=(0, 1)))
    )


def theta_terms(p_a0b0C: np.ndarray) -> tuple[float, float, float]:
    """The three candidate upper bounds on measurement dependence."""
    p = np.asarray(p_a0b0C, dtype=float)
    if p.shape != (2, 2, 4):
        raise DomainError(f"expected a (2, 2, 4) table, got {p.shape}")
    h_ab = shannon_entropy(p.sum(axis=2))
    h_c = shannon_entropy(p.sum(axis=(0, 1)))
    h_abc = shannon_entropy(p)
    i3 = tripartite_info(p)
    i_ac = mutual_info(p.sum(axis=1))
    i_bc = mutual_info(p.sum(axis=0))
    term1 = h_abc - h_c  # H(a0,b0|C)
    term2 = h_ab - i3 - i_ac - i_bc
    term3 = h_ab + h_c - 2 * i3 - 2 * i_ac - 2 * i_bc
    return (term1, term2, term3)


def theta(p_a0b0C: np.ndarray) -> float:
    return min(theta_terms(p_a0b0C))


def chsh(cond: ConditionalDistribution) -> float:
    """CHSH value of p(a1,b1|a0,b0), maximized over the four placements of
    the minus sign so the result is independent of setting labels."""
    if not cond.defined.all():
        raise DomainError("all four conditioning cells must be defined")
    t = cond.table
    sign = np.array([1.0, -1.0])
    e = np.einsum("xyab,a,b->xy", t, sign, sign)
    combos = [
        abs(-e[0, 0] + e[0, 1] + e[1, 0] + e[1, 1]),
        abs(e[0, 0] - e[0, 1] + e[1, 0] + e[1, 1]),
        abs(e[0, 0] + e[0, 1] - e[1, 0] + e[1, 1]),
        abs(e[0, 0] + e[0, 1] + e[1, 0] - e[1, 1]),
    ]
    return float(max(combos))


@dataclass(frozen=True)
class EntropicReport:
    value: float                 # the witness E
    s_chsh: float
    theta: float                 # value used under the square root (>= 0)
    theta_terms: tuple[float, float, float]
    theta_raw: float             # min of the terms before clamping
    theta_clamped: bool
    entropies: dict

    def to_json(self) -> str:
        doc = {
            "E": self.value,
            "S_chsh": self.s_chsh,
            "theta": self.theta,
            "theta_terms": list(self.theta_terms),
            "theta_raw": self.theta_raw,
            "theta_clamped": self.theta_clamped,
            "entropies_bits": self.entropies,
        }
        return json.dumps(doc, indent=2)


def entropic_witness(p: OutcomeDistribution) -> EntropicReport:
    """E = 2 - S_CHSH + sqrt(16 * Theta / log2(e)); E < 0 certifies
    nonclassicality.

    A negative Theta minimum (possible on finite statistics) is clamped to 0
    before the square root and flagged.
    """
    cond = bayesian_inversion(p)
    s = chsh(cond)
    j3 = _joint3(p)
    terms = theta_terms(j3)
    raw = min(terms)
    clamped = raw < -1e-12  # don't flag float noise on analytic inputs
    th = max(raw, 0.0)
    value = 2.0 - s + math.sqrt(16.0 * th / LOG2_E)
    entropies = {
        "H(a0,b0,C)": shannon_entropy(j3),
        "H(a0,b0)": shannon_entropy(j3.sum(axis=2)),
        "H(C)": shannon_entropy(j3.sum(axis=(0, 1))),
        "I(a0:C)": mutual_info(j3.sum(axis=1)),
        "I(b0:C)": mutual_info(j3.sum(axis=0)),
        "I(a0:b0:C)": tripartite_info(j3),
    }
    return EntropicReport(
        value=value,
        s_chsh=s,
        theta=th,
        theta_terms=terms,
        theta_raw=raw,
        theta_clamped=clamped,
        entropies=entropies,
    )
