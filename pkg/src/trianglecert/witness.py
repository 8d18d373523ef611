"""Quadratic causal-compatibility inequalities: evaluation on distributions
and counts, Poissonian Monte-Carlo error bars, and noise sweeps.

A certificate is a coefficient vector y over marginal-pair indices
(i, j) in d^3 x d^3; its value on a distribution p is
V = sum_ij y_ij p_i p_j, nonnegative for every triangle-compatible p.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dist import OutcomeDistribution
from .errors import DomainError

MC_TRIALS_DEFAULT = 10_000


@dataclass(frozen=True)
class Certificate:
    """Dual vector over marginal-pair indices plus provenance metadata."""

    d: int
    values: np.ndarray            # length d**6, pair index = i * d**3 + j
    mode: str = "unknown"
    margin: float = 0.0           # -y.v on the distribution the LP targeted
    problem_hash: str = ""
    normalization: str = "max-abs-1"
    classes: tuple | None = None  # optional coefficient-class partition

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size != self.d**6:
            raise DomainError(f"certificate needs {self.d**6} coefficients, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise DomainError("certificate coefficients must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def pair_matrix(self) -> np.ndarray:
        n = self.d**3
        return self.values.reshape(n, n)

    def symmetrized(self) -> "Certificate":
        m = self.pair_matrix
        return Certificate(self.d, ((m + m.T) / 2.0).reshape(-1), self.mode,
                           self.margin, self.problem_hash, self.normalization,
                           self.classes)

    def to_json(self) -> str:
        doc = {
            "mode": self.mode,
            "d": self.d,
            "normalization": self.normalization,
            "margin": self.margin,
            "problem_hash": self.problem_hash,
            "coefficients": [
                {"index": int(i), "value": float(v)}
                for i, v in enumerate(self.values)
                if v != 0.0
            ],
            "verification": {},
        }
        if self.classes is not None:
            doc["classes"] = [list(map(int, c)) for c in self.classes]
        return json.dumps(doc)

    def with_verification(self, min_slack: float, y_dot_v: float) -> str:
        doc = json.loads(self.to_json())
        doc["verification"] = {"min_slack": min_slack, "y_dot_v": y_dot_v}
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Certificate":
        doc = json.loads(text)
        d = int(doc["d"])
        values = np.zeros(d**6)
        for entry in doc["coefficients"]:
            values[int(entry["index"])] = float(entry["value"])
        classes = doc.get("classes")
        return cls(d, values, doc.get("mode", "unknown"),
                   float(doc.get("margin", 0.0)), doc.get("problem_hash", ""),
                   doc.get("normalization", "unknown"),
                   tuple(map(tuple, classes)) if classes else None)


def certificate_from_lp(assembled, result, normalize: bool = True) -> Certificate:
    """De-twirl an infeasibility certificate to the marginal-pair space and
    normalize its scale to max |coefficient| = 1."""
    if result.status != "infeasible" or result.y is None:
        from .errors import StateError

        raise StateError("certificate extraction needs an infeasible LP result")
    y_full = assembled.detwirl(result.y)
    scale = np.abs(y_full).max()
    if normalize and scale > 0:
        y_full = y_full / scale
    margin = -float(y_full @ assembled.v_full)
    return Certificate(assembled.d, y_full, mode=assembled.mode, margin=margin,
                       problem_hash=assembled.problem_hash())


def evaluate(cert: Certificate, p: OutcomeDistribution) -> float:
    """V = sum_ij y_ij p_i p_j."""
    probs = p.probabilities
    n = cert.d**3
    if probs.size != n:
        raise DomainError(f"distribution has {probs.size} outcomes, certificate wants {n}")
    return float(probs @ cert.pair_matrix @ probs)


@dataclass(frozen=True)
class WitnessReport:
    value: float
    stderr: float
    sigmas: float
    trials: int
    seed: int
    flags: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "V": self.value,
            "stderr": self.stderr,
            "sigmas_below_zero": self.sigmas,
            "trials": self.trials,
            "seed": self.seed,
            "flags": self.flags,
        }, indent=1)


def poisson_mc_error(cert: Certificate, counts, trials: int = MC_TRIALS_DEFAULT,
                     seed: int = 0) -> WitnessReport:
    """Resample each count from a Poisson law with the observed mean,
    renormalize, evaluate; the spread across trials is the error bar."""
    counts = np.asarray(counts, dtype=float).reshape(-1)
    if counts.size != cert.d**3:
        raise DomainError("counts table size mismatch")
    if counts.min() < 0 or counts.sum() <= 0:
        raise DomainError("counts must be nonnegative with positive total")
    if trials < 1:
        raise DomainError("need at least one trial")
    rng = np.random.default_rng(seed)
    draws = rng.poisson(counts, size=(trials, counts.size)).astype(float)
    totals = draws.sum(axis=1)
    good = totals > 0
    draws[good] /= totals[good, None]
    y = cert.pair_matrix
    vals = np.einsum("ti,ij,tj->t", draws[good], y, draws[good])
    mean = float(vals.mean())
    if trials == 1 or vals.size < 2:
        return WitnessReport(mean, float("nan"), float("nan"), trials, seed,
                             flags={"stderr_undefined": True})
    stderr = float(vals.std(ddof=1))
    sigmas = -mean / stderr if (mean < 0 and stderr > 0) else 0.0
    flags = {}
    if not good.all():
        flags["empty_resamples"] = int((~good).sum())
    return WitnessReport(mean, stderr, float(sigmas), trials, seed, flags)


@dataclass(frozen=True)
class SweepPoint:
    parameter: str
    value: float
    V: float
    stderr: float


@dataclass(frozen=True)
class SweepTable:
    points: tuple[SweepPoint, ...]
    trend: dict

    def to_csv(self) -> str:
        lines = ["parameter,value,V,stderr"]
        for pt in self.points:
            lines.append(f"{pt.parameter},{pt.value!r},{pt.V!r},{pt.stderr!r}")
        return "\n".join(lines) + "\n"


def _trend_metadata(values: np.ndarray) -> dict:
    diffs = np.diff(values)
    return {
        "n_points": int(values.size),
        "nondecreasing_steps": int((diffs >= -1e-12).sum()),
        "nonincreasing_steps": int((diffs <= 1e-12).sum()),
        "first": float(values[0]),
        "last": float(values[-1]),
        "sign_change": bool(np.sign(values[0]) != np.sign(values[-1])),
    }


def noise_sweep(cert: Certificate, family, grid, parameter: str = "v",
                refine_crossing: bool = True) -> SweepTable:
    """Evaluate the certificate across a parameterized family of
    distributions; reports the V trend and refines any sign crossing by
    bisection to 1e-4 in the parameter."""
    grid = list(grid)
    pts = []
    vals = []
    for g in grid:
        V = evaluate(cert, family(g))
        pts.append(SweepPoint(parameter, float(g), V, 0.0))
        vals.append(V)
    vals = np.asarray(vals)
    trend = _trend_metadata(vals)
    crossing = None
    for i in range(len(grid) - 1):
        if np.sign(vals[i]) != np.sign(vals[i + 1]) and vals[i] != vals[i + 1]:
            lo, hi = grid[i], grid[i + 1]
            flo = vals[i]
            if refine_crossing:
                while abs(hi - lo) > 1e-4:
                    mid = 0.5 * (lo + hi)
                    fm = evaluate(cert, family(mid))
                    if np.sign(fm) == np.sign(flo) and fm != 0.0:
                        lo, flo = mid, fm
                    else:
                        hi = mid
            crossing = 0.5 * (lo + hi)
            break
    trend["crossing"] = crossing
    return SweepTable(tuple(pts), trend)
