"""Dense complex linear algebra and Born-rule evaluation for the triangle
network, including the (noisy) Fritz states and measurements.

Conventions fixed here once and used everywhere:

* qubit basis: sigma_z eigenstates, outcome 0 <-> eigenvalue +1;
* composite quaternary outcomes: value = 2*bit0 + bit1;
* station qubit order is (bit-0 qubit, bit-1 qubit), i.e. A = (A0, A1)
  where A0 is A's share of the A-C source and A1 its share of the A-B
  source (B analogous via B-C, C holds (C0, C1) = shares of A-C and B-C);
* the global source-order Hilbert space is (A1, B1) x (A0, C0) x (B0, C1),
  one factor pair per source, first factor to the alphabetically first
  station.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dist import OutcomeDistribution, triangle_variables
from .errors import DomainError

HERM_ATOL = 1e-10

I2 = np.eye(2, dtype=complex)


def pauli(name: str) -> np.ndarray:
    try:
        return {
            "x": np.array([[0, 1], [1, 0]], dtype=complex),
            "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
            "z": np.array([[1, 0], [0, -1]], dtype=complex),
        }[name]
    except KeyError:
        raise DomainError(f"unknown Pauli name {name!r}") from None


# -- minimal checked algebra -------------------------------------------------

def _as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise DomainError(f"expected a matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise DomainError("matrix entries must be finite")
    return m


def kron(a, b) -> np.ndarray:
    return np.kron(_as_matrix(a), _as_matrix(b))


def mul(a, b) -> np.ndarray:
    a, b = _as_matrix(a), _as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DomainError(f"dimension mismatch {a.shape} x {b.shape}")
    return a @ b


def dagger(a) -> np.ndarray:
    return _as_matrix(a).conj().T


def trace(a) -> complex:
    a = _as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise DomainError("trace requires a square matrix")
    return complex(np.trace(a))


def is_hermitian(a, atol: float = HERM_ATOL) -> bool:
    a = _as_matrix(a)
    return a.shape[0] == a.shape[1] and np.abs(a - a.conj().T).max() <= atol


# -- states and measurements --------------------------------------------------

@dataclass(frozen=True)
class DensityState:
    """Density operator with subsystem bookkeeping."""

    matrix: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        m = _as_matrix(self.matrix)
        dim = int(np.prod(self.dims))
        if m.shape != (dim, dim):
            raise DomainError(f"matrix shape {m.shape} != subsystem dims {self.dims}")
        if not is_hermitian(m):
            raise DomainError("density matrix must be Hermitian")
        if abs(np.trace(m).real - 1.0) > HERM_ATOL:
            raise DomainError(f"trace is {np.trace(m).real}, not 1")
        if np.linalg.eigvalsh(m).min() < -HERM_ATOL:
            raise DomainError("density matrix must be positive semidefinite")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))


@dataclass(frozen=True)
class Povm:
    """A positive operator-valued measure on a space of dimension ``dim``."""

    effects: tuple[np.ndarray, ...]
    dim: int

    def __post_init__(self):
        effects = tuple(_as_matrix(e) for e in self.effects)
        total = np.zeros((self.dim, self.dim), dtype=complex)
        for e in effects:
            if e.shape != (self.dim, self.dim):
                raise DomainError("effect dimension mismatch")
            if not is_hermitian(e):
                raise DomainError("POVM effects must be Hermitian")
            if np.linalg.eigvalsh(e).min() < -HERM_ATOL:
                raise DomainError("POVM effects must be positive semidefinite")
            total = total + e
        if np.abs(total - np.eye(self.dim)).max() > HERM_ATOL:
            raise DomainError("POVM effects must sum to the identity")
        for e in effects:
            e.flags.writeable = False
        object.__setattr__(self, "effects", effects)

    def __len__(self):
        return len(self.effects)


def observable_povm(obs) -> Povm:
    """Two-outcome POVM of a 2x2 observable: outcome 0 <-> larger eigenvalue."""
    obs = _as_matrix(obs)
    if obs.shape != (2, 2) or not is_hermitian(obs):
        raise DomainError("observable must be a Hermitian 2x2 matrix")
    evals, evecs = np.linalg.eigh(obs)  # ascending
    if abs(evals[1] - evals[0]) <= HERM_ATOL:
        raise DomainError("degenerate observable has no two-outcome POVM")
    plus = np.outer(evecs[:, 1], evecs[:, 1].conj())
    minus = np.outer(evecs[:, 0], evecs[:, 0].conj())
    return Povm((plus, minus), dim=2)


def projectors_z() -> tuple[np.ndarray, np.ndarray]:
    return (np.diag([1.0 + 0j, 0.0]), np.diag([0.0, 1.0 + 0j]))


# station qubits in source order: (A1, B1, A0, C0, B0, C1)
_SOURCE_ORDER = ("A1", "B1", "A0", "C0", "B0", "C1")
# and in station order: A=(A0,A1), B=(B0,B1), C=(C0,C1)
_STATION_ORDER = ("A0", "A1", "B0", "B1", "C0", "C1")
DEFAULT_ORDERING = {name: _SOURCE_ORDER.index(name) for name in _STATION_ORDER}


@dataclass(frozen=True)
class TriangleQuantumModel:
    """Three bipartite sources plus one 4-outcome POVM per station.

    ``ordering`` maps each station-order qubit label (A0, A1, B0, B1, C0, C1)
    to its position in the source-order tensor product; the default is the
    wiring described in the module docstring.
    """

    rho_ab: DensityState
    rho_ac: DensityState
    rho_bc: DensityState
    povm_a: Povm
    povm_b: Povm
    povm_c: Povm
    ordering: dict | None = None

    def __post_init__(self):
        for name in ("rho_ab", "rho_ac", "rho_bc"):
            if getattr(self, name).dims != (2, 2):
                raise DomainError(f"{name} must be a two-qubit state")
        for name in ("povm_a", "povm_b", "povm_c"):
            p = getattr(self, name)
            if p.dim != 4 or len(p) != 4:
                raise DomainError(f"{name} must have 4 outcomes on dimension 4")
        ordering = dict(DEFAULT_ORDERING if self.ordering is None else self.ordering)
        if sorted(ordering) != sorted(_STATION_ORDER) \
                or sorted(ordering.values()) != list(range(6)):
            raise DomainError("ordering must bijectively place the six station qubits")
        object.__setattr__(self, "ordering", ordering)


def permute_subsystems(op: np.ndarray, dims, perm) -> np.ndarray:
    """Reorder tensor factors of a square operator: output factor k is input
    factor perm[k]."""
    dims = list(dims)
    n = len(dims)
    t = op.reshape(dims + dims)
    axes = list(perm) + [n + p for p in perm]
    out_dims = int(np.prod(dims))
    return t.transpose(axes).reshape(out_dims, out_dims)


def born_rule(model: TriangleQuantumModel) -> OutcomeDistribution:
    """p(a,b,c) = Tr[(rho_AB x rho_AC x rho_BC) . Pi . (M^A_a x M^B_b x M^C_c) . Pi+]."""
    rho = np.kron(np.kron(model.rho_ab.matrix, model.rho_ac.matrix),
                  model.rho_bc.matrix)
    # station-order operator factor k must land on source-order slot
    # ordering[label]: permute so the source-order result reads station
    # factors in the right slots.
    perm = [0] * 6
    for k, label in enumerate(_STATION_ORDER):
        perm[model.ordering[label]] = k
    probs = np.empty(64)
    for a in range(4):
        ma = model.povm_a.effects[a]
        for b in range(4):
            mab = np.kron(ma, model.povm_b.effects[b])
            for c in range(4):
                m = np.kron(mab, model.povm_c.effects[c])
                m_src = permute_subsystems(m, [2] * 6, perm)
                val = np.trace(rho @ m_src)
                if abs(val.imag) > HERM_ATOL:
                    raise DomainError(f"probability has imaginary part {val.imag}")
                probs[(a * 4 + b) * 4 + c] = val.real
    return OutcomeDistribution(triangle_variables(4), probs, atol=1e-10)


def singlet() -> DensityState:
    psi = np.zeros(4, dtype=complex)
    psi[1], psi[2] = 1 / np.sqrt(2), -1 / np.sqrt(2)  # (|01> - |10>)/sqrt(2)
    return DensityState(np.outer(psi, psi.conj()), (2, 2))


def werner_singlet(visibility: float) -> DensityState:
    if not 0.0 <= visibility <= 1.0:
        raise DomainError(f"visibility must lie in [0, 1], got {visibility}")
    m = visibility * singlet().matrix + (1.0 - visibility) * np.eye(4) / 4.0
    return DensityState(m, (2, 2))


def classical_correlated(anticorr: float) -> DensityState:
    """Diagonal two-bit source with anticorrelation probability ``anticorr``."""
    if not 0.0 <= anticorr <= 0.5:
        raise DomainError(f"anticorrelation must lie in [0, 1/2], got {anticorr}")
    diag = np.array([
        (1.0 - anticorr) / 2, anticorr / 2, anticorr / 2, (1.0 - anticorr) / 2,
    ])
    return DensityState(np.diag(diag).astype(complex), (2, 2))


def _wired_povm(setting_effects, observable_for_setting) -> Povm:
    """4-outcome POVM M_(x0,x1) = P_x0 (x) E^{(x0)}_x1 on (bit0, bit1)."""
    effects = []
    for x0 in range(2):
        inner = observable_povm(observable_for_setting(x0))
        for x1 in range(2):
            effects.append(np.kron(setting_effects[x0], inner.effects[x1]))
    return Povm(tuple(effects), dim=4)


def fritz_model(visibility: float = 1.0, anticorr: float = 0.0) -> TriangleQuantumModel:
    """Fritz states and measurements with singlet visibility and classical
    anticorrelation noise.

    a1 measures sigma_z or sigma_x as a0 = 0 or 1; b1 measures
    (sigma_x - sigma_z)/sqrt2 or (sigma_x + sigma_z)/sqrt2 as b0 = 0 or 1.
    This assignment attains CHSH = 2*sqrt(2)*visibility on the inverted
    conditional, with the (a0,b0) = (0,0) correlator positive.
    """
    sx, sz = pauli("x"), pauli("z")
    pz = projectors_z()
    povm_a = _wired_povm(pz, lambda a0: sz if a0 == 0 else sx)
    povm_b = _wired_povm(pz, lambda b0: (sx - sz) / np.sqrt(2) if b0 == 0
                         else (sx + sz) / np.sqrt(2))
    povm_c = Povm(
        tuple(np.kron(pz[c0], pz[c1]) for c0 in range(2) for c1 in range(2)),
        dim=4,
    )
    lam = classical_correlated(anticorr)
    return TriangleQuantumModel(
        rho_ab=werner_singlet(visibility),
        rho_ac=lam,
        rho_bc=lam,
        povm_a=povm_a,
        povm_b=povm_b,
        povm_c=povm_c,
    )


def ideal_fritz_distribution() -> OutcomeDistribution:
    return born_rule(fritz_model(1.0, 0.0))


# -- serialization: complex matrices as nested [re, im] pairs -----------------

def _matrix_to_json(m: np.ndarray):
    return [[[float(x.real), float(x.imag)] for x in row] for row in m]


def _matrix_from_json(rows) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows])


def model_to_json(model: TriangleQuantumModel) -> str:
    import json

    return json.dumps({
        "states": {
            name: _matrix_to_json(getattr(model, name).matrix)
            for name in ("rho_ab", "rho_ac", "rho_bc")
        },
        "povms": {
            name: [_matrix_to_json(e) for e in getattr(model, name).effects]
            for name in ("povm_a", "povm_b", "povm_c")
        },
        "ordering": model.ordering,
    })


def model_from_json(text: str) -> TriangleQuantumModel:
    import json

    doc = json.loads(text)
    states = {k: DensityState(_matrix_from_json(v), (2, 2))
              for k, v in doc["states"].items()}
    povms = {k: Povm(tuple(_matrix_from_json(e) for e in effects), dim=4)
             for k, effects in doc["povms"].items()}
    return TriangleQuantumModel(states["rho_ab"], states["rho_ac"],
                                states["rho_bc"], povms["povm_a"],
                                povms["povm_b"], povms["povm_c"],
                                ordering=doc["ordering"])
