"""Second-order inflation LP of the triangle network.

The inflation duplicates every source, giving 12 observable variables; a
distribution p on the triangle is classically realizable only if some joint
p' >= 0 on the 12 variables (i) is invariant under the order-8 group generated
by the three source-copy swaps and (ii) marginalizes on the two disjoint
product triangles to the i.i.d. pair p (x) p.  Both conditions fold into one
linear system

    (M . G) p' = p_pair,        p' >= 0,

where M is the 0/1 marginalization matrix and G the group averaging operator
over columns.  Infeasibility certificates of this system are quadratic
causal-compatibility inequalities.

Index conventions (fixed here, used by every consumer):

* the 12 variables are ordered (a1, b1, c1, a2, b2, c2, ..., a4, b4, c4);
  position k has party k % 3 (0=a, 1=b, 2=c) and copy k // 3 + 1;
* joint indices are mixed-radix integers, first variable outermost;
* the observed marginal lives on positions (a1, b1, c1, a4, b4, c4) -- the
  two source-disjoint triangles; a marginal-pair index is
  (first triangle index) * d**3 + (second triangle index);
* copy-swap elements act on positions only; data-adapted symmetries add
  per-party outcome relabelings on top.
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .dist import OutcomeDistribution, tensor_square
from .errors import CapacityError, DomainError

N_VARS = 12
MARGINAL_POSITIONS = (0, 1, 2, 9, 10, 11)  # a1,b1,c1,a4,b4,c4
MAX_JOINT_SIZE = 4**12  # largest index space we agree to address


# ---------------------------------------------------------------------------
# sparse matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SparseMatrix:
    """COO triples sorted by (row, col), deduplicated, zeros dropped."""

    rows: int
    cols: int
    row_idx: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.row_idx, dtype=np.int64).reshape(-1)
        c = np.asarray(self.col_idx, dtype=np.int64).reshape(-1)
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not (r.size == c.size == v.size):
            raise DomainError("triple arrays must have equal length")
        if r.size and (r.min() < 0 or r.max() >= self.rows
                       or c.min() < 0 or c.max() >= self.cols):
            raise DomainError("indices out of range")
        if not np.all(np.isfinite(v)):
            raise DomainError("values must be finite")
        order = np.lexsort((c, r))
        r, c, v = r[order], c[order], v[order]
        if r.size:
            key_same = np.zeros(r.size, dtype=bool)
            key_same[1:] = (r[1:] == r[:-1]) & (c[1:] == c[:-1])
            if key_same.any():
                group = np.cumsum(~key_same) - 1
                v = np.bincount(group, weights=v)
                keep = ~key_same
                r, c = r[keep], c[keep]
        nz = v != 0.0
        r, c, v = r[nz], c[nz], v[nz]
        for arr in (r, c, v):
            arr.flags.writeable = False
        object.__setattr__(self, "row_idx", r)
        object.__setattr__(self, "col_idx", c)
        object.__setattr__(self, "values", v)

    @property
    def nnz(self) -> int:
        return self.values.size

    def to_scipy(self):
        from scipy import sparse

        return sparse.csr_matrix(
            (self.values, (self.row_idx, self.col_idx)), shape=(self.rows, self.cols)
        )

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        out[self.row_idx, self.col_idx] = self.values
        return out

    def transpose_dot(self, y: np.ndarray) -> np.ndarray:
        """y . A for a dense vector y."""
        out = np.zeros(self.cols)
        np.add.at(out, self.col_idx, y[self.row_idx] * self.values)
        return out

    def save_csv(self, path):
        with open(path, "w") as fh:
            fh.write(f"rows,cols,nnz\n{self.rows},{self.cols},{self.nnz}\n")
            fh.write("row,col,value\n")
            for r, c, v in zip(self.row_idx, self.col_idx, self.values):
                fh.write(f"{r},{c},{float(v)!r}\n")

    @classmethod
    def load_csv(cls, path) -> "SparseMatrix":
        with open(path) as fh:
            fh.readline()
            rows, cols, nnz = (int(t) for t in fh.readline().split(","))
            fh.readline()
            data = np.loadtxt(fh, delimiter=",", ndmin=2) if nnz else np.empty((0, 3))
        return cls(rows, cols, data[:, 0].astype(np.int64),
                   data[:, 1].astype(np.int64), data[:, 2])

    def save_binary(self, path):
        """Header (rows, cols, nnz as little-endian int64) + triples."""
        with open(path, "wb") as fh:
            fh.write(struct.pack("<qqq", self.rows, self.cols, self.nnz))
            fh.write(self.row_idx.astype("<i8").tobytes())
            fh.write(self.col_idx.astype("<i8").tobytes())
            fh.write(self.values.astype("<f8").tobytes())

    @classmethod
    def load_binary(cls, path) -> "SparseMatrix":
        with open(path, "rb") as fh:
            rows, cols, nnz = struct.unpack("<qqq", fh.read(24))
            buf = fh.read()
        r = np.frombuffer(buf, dtype="<i8", count=nnz, offset=0)
        c = np.frombuffer(buf, dtype="<i8", count=nnz, offset=8 * nnz)
        v = np.frombuffer(buf, dtype="<f8", count=nnz, offset=16 * nnz)
        return cls(rows, cols, r.copy(), c.copy(), v.copy())


@dataclass(frozen=True)
class IndexPermutation:
    """A bijection on {0, ..., n-1} given by its image array."""

    n: int
    image: np.ndarray

    def __post_init__(self):
        img = np.asarray(self.image, dtype=np.int64).reshape(-1)
        if img.size != self.n or np.unique(img).size != self.n:
            raise DomainError("image must be a permutation of 0..n-1")
        img.flags.writeable = False
        object.__setattr__(self, "image", img)


# ---------------------------------------------------------------------------
# symmetries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Symmetry:
    """A joint-space symmetry: permute variable positions, then relabel
    outcome values per party.

    ``src_of[k]`` is the input position whose digit lands at output position
    k; ``value_maps[party]`` relabels outcomes of that party.
    ``swap_marginal`` records whether the induced action on the marginal-pair
    space exchanges the two triangle blocks.
    """

    src_of: tuple[int, ...]
    value_maps: tuple[tuple[int, ...], ...]
    swap_marginal: bool

    def __post_init__(self):
        if sorted(self.src_of) != list(range(N_VARS)):
            raise DomainError("src_of must be a permutation of the 12 positions")
        for k, src in enumerate(self.src_of):
            if src % 3 != k % 3:
                raise DomainError("symmetries must preserve parties")
        if len(self.value_maps) != 3:
            raise DomainError("need one value map per party")
        d = len(self.value_maps[0])
        for m in self.value_maps:
            if sorted(m) != list(range(d)):
                raise DomainError("value maps must be permutations")

    @property
    def d(self) -> int:
        return len(self.value_maps[0])

    def is_identity(self) -> bool:
        return (self.src_of == tuple(range(N_VARS))
                and all(tuple(m) == tuple(range(self.d)) for m in self.value_maps))

    def key(self):
        return (self.src_of, self.value_maps)


def identity_symmetry(d: int) -> Symmetry:
    ident = tuple(range(d))
    return Symmetry(tuple(range(N_VARS)), (ident, ident, ident), False)


def compose(g: Symmetry, h: Symmetry) -> Symmetry:
    """The symmetry 'apply h, then g'."""
    src = tuple(h.src_of[g.src_of[k]] for k in range(N_VARS))
    vmaps = tuple(
        tuple(np.asarray(g.value_maps[p])[np.asarray(h.value_maps[p])])
        for p in range(3)
    )
    return Symmetry(src, vmaps, g.swap_marginal ^ h.swap_marginal)


def close_group(generators, d: int) -> list[Symmetry]:
    """Closure of the generators under composition, identity first."""
    elements = {identity_symmetry(d).key(): identity_symmetry(d)}
    frontier = list(generators)
    while frontier:
        g = frontier.pop()
        if g.key() in elements:
            continue
        elements[g.key()] = g
        for h in list(elements.values()):
            for cand in (compose(g, h), compose(h, g)):
                if cand.key() not in elements:
                    frontier.append(cand)
    out = sorted(elements.values(), key=lambda s: s.key())
    ident = identity_symmetry(d)
    out.remove(ident)
    return [ident] + out


def _swap_pairs(pairs) -> tuple[int, ...]:
    src = list(range(N_VARS))
    for i, j in pairs:
        src[i], src[j] = src[j], src[i]
    return tuple(src)


def copy_swap_generators(d: int) -> list[Symmetry]:
    """The three source-copy swaps of the second-order triangle inflation."""
    ident = tuple(range(d))
    vmaps = (ident, ident, ident)
    # positions: a{i} = 3(i-1), b{i} = 3(i-1)+1, c{i} = 3(i-1)+2
    pi1 = _swap_pairs([(0, 3), (6, 9), (1, 7), (4, 10)])   # lam_AB copies
    pi2 = _swap_pairs([(0, 6), (3, 9), (2, 5), (8, 11)])   # lam_AC copies
    pi3 = _swap_pairs([(1, 4), (7, 10), (2, 8), (5, 11)])  # lam_BC copies
    return [Symmetry(p, vmaps, True) for p in (pi1, pi2, pi3)]


def build_symmetry_group(d: int) -> list[Symmetry]:
    """The order-8 copy-swap group (identity first)."""
    if d < 2:
        raise DomainError("outcome cardinality must be >= 2")
    group = close_group(copy_swap_generators(d), d)
    assert len(group) == 8
    return group


# ---------------------------------------------------------------------------
# vectorized index actions
# ---------------------------------------------------------------------------

def _index_dtype(d: int):
    return np.int32 if d**N_VARS < 2**31 else np.int64


def joint_size(d: int) -> int:
    return d**N_VARS


def marginal_size(d: int) -> int:
    return d**6


def _digit(idx: np.ndarray, pos: int, d: int) -> np.ndarray:
    return (idx // d ** (N_VARS - 1 - pos)) % d


def apply_joint(sym: Symmetry, idx: np.ndarray, d: int) -> np.ndarray:
    """Indices of the relabeled assignments g(x) for an index array x."""
    out = np.zeros_like(idx)
    vmaps = [np.asarray(m, dtype=idx.dtype) for m in sym.value_maps]
    for k in range(N_VARS):
        dig = _digit(idx, sym.src_of[k], d)
        vm = vmaps[k % 3]
        out += vm[dig] * (d ** (N_VARS - 1 - k))
    return out


def marginal_index(idx: np.ndarray, d: int) -> np.ndarray:
    """Marginal-pair index of the joint assignments (digits at the two
    product triangles)."""
    out = np.zeros_like(idx)
    for t, pos in enumerate(MARGINAL_POSITIONS):
        out += _digit(idx, pos, d) * (d ** (5 - t))
    return out


def marginal_after(sym: Symmetry, idx: np.ndarray, d: int) -> np.ndarray:
    """marginal_index(apply_joint(sym, idx)) without materializing the
    permuted joint indices."""
    out = np.zeros_like(idx)
    vmaps = [np.asarray(m, dtype=idx.dtype) for m in sym.value_maps]
    for t, pos in enumerate(MARGINAL_POSITIONS):
        dig = _digit(idx, sym.src_of[pos], d)
        vm = vmaps[pos % 3]
        out += vm[dig] * (d ** (5 - t))
    return out


def apply_marginal(sym: Symmetry, m_idx: np.ndarray, d: int) -> np.ndarray:
    """The induced action on marginal-pair indices: optional block swap,
    then per-party value relabeling."""
    out = np.zeros_like(m_idx)
    vmaps = [np.asarray(m, dtype=m_idx.dtype) for m in sym.value_maps]
    for t in range(6):
        src_t = (t + 3) % 6 if sym.swap_marginal else t
        dig = (m_idx // d ** (5 - src_t)) % d
        vm = vmaps[t % 3]
        out += vm[dig] * (d ** (5 - t))
    return out


def joint_index_permutation(sym: Symmetry, d: int) -> IndexPermutation:
    """Materialized joint-space permutation (small d only)."""
    n = joint_size(d)
    if n > 2**22:
        raise CapacityError(f"refusing to materialize a permutation on {n} indices")
    idx = np.arange(n, dtype=_index_dtype(d))
    return IndexPermutation(n, apply_joint(sym, idx, d).astype(np.int64))


def marginal_index_permutation(sym: Symmetry, d: int) -> IndexPermutation:
    n = marginal_size(d)
    idx = np.arange(n, dtype=_index_dtype(d))
    return IndexPermutation(n, apply_marginal(sym, idx, d).astype(np.int64))


# ---------------------------------------------------------------------------
# marginalization matrix, orbits, twirling
# ---------------------------------------------------------------------------

def build_marginalization_matrix(d: int) -> SparseMatrix:
    """0/1 matrix mapping joint assignments to their marginal-pair cell:
    exactly one 1 per column, d**6 ones per row."""
    if d < 2:
        raise DomainError("outcome cardinality must be >= 2")
    n = joint_size(d)
    if n > MAX_JOINT_SIZE:
        raise CapacityError(
            f"joint index space {n} exceeds the addressable limit {MAX_JOINT_SIZE}"
        )
    cols = np.arange(n, dtype=_index_dtype(d))
    rows = marginal_index(cols, d)
    return SparseMatrix(marginal_size(d), n, rows.astype(np.int64),
                        cols.astype(np.int64), np.ones(n))


@dataclass(frozen=True)
class OrbitPartition:
    """Partition of {0..n-1} into group orbits."""

    n: int
    ids: np.ndarray          # orbit id per index
    reps: np.ndarray         # canonical (minimal) index per orbit
    sizes: np.ndarray        # orbit sizes

    @property
    def count(self) -> int:
        return self.reps.size


def orbit_partition(group, n: int, apply_fn) -> OrbitPartition:
    """Orbits under the listed elements; canonical representative is the
    lexicographic (numeric) minimum of the orbit."""
    idx = np.arange(n, dtype=np.int32 if n < 2**31 else np.int64)
    canon = idx.copy()
    for g in group:
        if g.is_identity():
            continue
        np.minimum(canon, apply_fn(g, idx), out=canon)
    reps, ids, sizes = np.unique(canon, return_inverse=True, return_counts=True)
    return OrbitPartition(n, ids.astype(np.int64), reps.astype(np.int64),
                          sizes.astype(np.int64))


def joint_orbit_partition(group, d: int) -> OrbitPartition:
    n = joint_size(d)
    if n > MAX_JOINT_SIZE:
        raise CapacityError(f"joint space {n} exceeds limit {MAX_JOINT_SIZE}")
    return orbit_partition(group, n, lambda g, idx: apply_joint(g, idx, d))


def marginal_orbit_partition(group, d: int) -> OrbitPartition:
    return orbit_partition(group, marginal_size(d),
                           lambda g, idx: apply_marginal(g, idx, d))


def symmetrize(M: SparseMatrix, group, d: int) -> SparseMatrix:
    """Projection onto the paired-invariant subspace:
    (1/|G|) sum_g P_row(g)^-1 . M . P_col(g).  Idempotent."""
    rows, cols, vals = [], [], []
    w = 1.0 / len(group)
    for g in group:
        # column action g on indices; paired row action on marginal indices
        new_cols = apply_joint(g, M.col_idx.astype(_index_dtype(d)), d)
        new_rows = apply_marginal(g, M.row_idx.astype(_index_dtype(d)), d)
        rows.append(new_rows.astype(np.int64))
        cols.append(new_cols.astype(np.int64))
        vals.append(M.values * w)
    return SparseMatrix(M.rows, M.cols, np.concatenate(rows),
                        np.concatenate(cols), np.concatenate(vals))


def twirl(M: SparseMatrix, row_orbits: OrbitPartition,
          col_orbits: OrbitPartition) -> SparseMatrix:
    """Orbit-collapsed matrix: every orbit of columns replaced by its mean
    column, then every orbit of rows by its mean row."""
    w = M.values / (row_orbits.sizes[row_orbits.ids[M.row_idx]]
                    * col_orbits.sizes[col_orbits.ids[M.col_idx]])
    return SparseMatrix(row_orbits.count, col_orbits.count,
                        row_orbits.ids[M.row_idx], col_orbits.ids[M.col_idx], w)


# ---------------------------------------------------------------------------
# data-adapted symmetries and coefficient classes
# ---------------------------------------------------------------------------

def _permutations(d: int):
    from itertools import permutations

    return [tuple(p) for p in permutations(range(d))]


def _float_floor(values: np.ndarray) -> float:
    """Rounding-noise floor: tolerance 0 means equal up to float rounding."""
    return 64.0 * np.finfo(float).eps * float(np.abs(values).max(initial=0.0))


def value_symmetries(seed: np.ndarray, d: int, tol: float = 0.0) -> list[Symmetry]:
    """All per-party outcome relabelings (sa, sb, sc) under which the seed
    distribution is invariant within tol.  For tol = 0 these form a group."""
    p = np.asarray(seed, dtype=float).reshape(d, d, d)
    eff = max(tol, _float_floor(p))
    perms = _permutations(d)
    # prune per party against single-axis marginals first to avoid d!**3 work
    out = []
    ident = tuple(range(d))
    pa, pb, pc = p.sum(axis=(1, 2)), p.sum(axis=(0, 2)), p.sum(axis=(0, 1))
    cand_a = [s for s in perms if np.abs(pa[list(s)] - pa).max() <= eff]
    cand_b = [s for s in perms if np.abs(pb[list(s)] - pb).max() <= eff]
    cand_c = [s for s in perms if np.abs(pc[list(s)] - pc).max() <= eff]
    for sa in cand_a:
        pa_perm = p[list(sa)]
        for sb in cand_b:
            pab_perm = pa_perm[:, list(sb)]
            for sc in cand_c:
                if (sa, sb, sc) == (ident, ident, ident):
                    continue
                if np.abs(pab_perm[:, :, list(sc)] - p).max() <= eff:
                    out.append(Symmetry(tuple(range(N_VARS)), (sa, sb, sc), False))
    return out


@dataclass(frozen=True)
class CoefficientClasses:
    """Partition of the marginal-pair index space into classes forced to
    share one inequality coefficient."""

    d: int
    ids: np.ndarray
    sizes: np.ndarray
    tolerance: float

    @property
    def count(self) -> int:
        return self.sizes.size

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.ids == k)


def coefficient_classes(seed_pair: np.ndarray, tolerance: float,
                        marginal_group, d: int) -> CoefficientClasses:
    """Group-orbit classes refined by seed agreement: i and j share a class
    iff some chain of group images connects them with seed values agreeing
    within the tolerance at each link."""
    if tolerance < 0:
        raise DomainError("tolerance must be >= 0")
    seed_pair = np.asarray(seed_pair, dtype=float).reshape(-1)
    n = marginal_size(d)
    if seed_pair.size != n:
        raise DomainError(f"seed vector must have length {n}")
    tolerance = max(tolerance, _float_floor(seed_pair))
    parent = np.arange(n, dtype=np.int64)

    def find(i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    idx = np.arange(n, dtype=_index_dtype(d))
    for g in marginal_group:
        if g.is_identity():
            continue
        j = apply_marginal(g, idx, d)
        ok = np.abs(seed_pair - seed_pair[j]) <= tolerance
        for i in np.flatnonzero(ok):
            ri, rj = find(i), find(int(j[i]))
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(n)])
    _, ids, sizes = np.unique(roots, return_inverse=True, return_counts=True)
    return CoefficientClasses(d, ids.astype(np.int64), sizes.astype(np.int64),
                              tolerance)


# ---------------------------------------------------------------------------
# problem container and LP assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InflationProblem:
    """Outcome cardinality, copy-swap group, and the marginal layout."""

    d: int
    group: list[Symmetry] = field(default=None)

    def __post_init__(self):
        if self.group is None:
            object.__setattr__(self, "group", build_symmetry_group(self.d))

    @property
    def joint_size(self) -> int:
        return joint_size(self.d)

    @property
    def marginal_size(self) -> int:
        return marginal_size(self.d)

    def marginalization_matrix(self) -> SparseMatrix:
        return build_marginalization_matrix(self.d)


def full_lp_matrix(problem: InflationProblem) -> SparseMatrix:
    """The column-symmetrized constraint matrix M . G on the full joint
    space.  Gated: only small cardinalities are materializable."""
    d = problem.d
    n = joint_size(d)
    if n > 2**22:
        raise CapacityError(
            f"full-mode matrix needs {n} columns; limit 2**22 = {2**22}. "
            "Use twirled or adapted mode."
        )
    idx = np.arange(n, dtype=_index_dtype(d))
    rows, cols = [], []
    for g in problem.group:
        rows.append(marginal_after(g, idx, d).astype(np.int64))
        cols.append(idx.astype(np.int64))
    w = np.full(n, 1.0 / len(problem.group))
    return SparseMatrix(marginal_size(d), n, np.concatenate(rows),
                        np.concatenate(cols), np.tile(w, len(problem.group)))


def _marginal_pair_vector(p: OutcomeDistribution, d: int) -> np.ndarray:
    if p.cards != (d, d, d):
        raise DomainError(f"expected three variables of cardinality {d}, got {p.cards}")
    return tensor_square(p).probabilities.copy()


def _trivial_classes(d: int) -> CoefficientClasses:
    n = marginal_size(d)
    return CoefficientClasses(d, np.arange(n, dtype=np.int64),
                              np.ones(n, dtype=np.int64), 0.0)


def _column_group_for_classes(problem: InflationProblem, classes: CoefficientClasses,
                              sigmas: list[Symmetry]) -> list[Symmetry]:
    """Closure of copy swaps and seed symmetries, filtered so every element's
    marginal action fixes every coefficient class setwise (the condition for
    column merging to be exact)."""
    d = problem.d
    idx = np.arange(marginal_size(d), dtype=_index_dtype(d))
    candidates = close_group(copy_swap_generators(d) + list(sigmas), d)
    while True:
        kept = []
        for g in candidates:
            img = apply_marginal(g, idx, d)
            if np.array_equal(classes.ids[img], classes.ids):
                kept.append(g)
        closed = close_group([g for g in kept if not g.is_identity()], d)
        if len(closed) == len(candidates):
            return closed
        candidates = closed


def _column_orbit_reps(problem: InflationProblem, col_group: list[Symmetry]) -> np.ndarray:
    """Canonical representatives of the joint-space column orbits, computed
    in two stages (copy group first, then the remaining symmetries) so the
    d = 4 space is swept only a few times."""
    d = problem.d
    n = joint_size(d)
    if n > MAX_JOINT_SIZE:
        raise CapacityError(f"joint space {n} exceeds limit {MAX_JOINT_SIZE}")
    dtype = _index_dtype(d)
    idx = np.arange(n, dtype=dtype)
    canon = idx.copy()
    for g in problem.group:
        if g.is_identity():
            continue
        np.minimum(canon, apply_joint(g, idx, d), out=canon)
    copy_keys = {g.key() for g in problem.group}
    extra = [g for g in col_group if g.key() not in copy_keys]
    reps = np.unique(canon)
    if extra:
        full = reps.copy()
        for g in extra:
            np.minimum(full, canon[apply_joint(g, reps, d)], out=full)
        reps = np.unique(full)
    return reps.astype(np.int64)


@dataclass(frozen=True)
class AssembledLp:
    """One inflation feasibility system A.x = v, x >= 0, plus the metadata
    needed to de-twirl dual certificates back to the marginal-pair space."""

    problem: InflationProblem
    mode: str                      # full | twirled | adapted
    v: np.ndarray                  # reduced right-hand side
    v_full: np.ndarray             # p (x) p on the d**6 marginal-pair space
    row_classes: CoefficientClasses
    matrix: SparseMatrix | None    # materialized constraint matrix, if small
    col_group: list[Symmetry] | None = None   # lazy-column mode
    col_reps: np.ndarray | None = None
    seed_tolerance: float = 0.0

    @property
    def d(self) -> int:
        return self.problem.d

    @property
    def n_rows(self) -> int:
        return self.v.size

    @property
    def n_cols(self) -> int:
        if self.matrix is not None:
            return self.matrix.cols
        return self.col_reps.size

    def problem_hash(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.d}|{self.mode}|{self.seed_tolerance}|".encode())
        h.update(self.row_classes.ids.tobytes())
        if self.col_reps is not None:
            h.update(np.asarray(self.col_reps[:1024]).tobytes())
        return h.hexdigest()[:16]

    # -- lazy column access -------------------------------------------------

    def columns_for(self, rep_subset: np.ndarray) -> SparseMatrix:
        """Reduced-matrix columns for a subset of column-orbit representatives."""
        if self.matrix is not None:
            raise DomainError("columns_for is only for lazily assembled systems")
        d = self.d
        reps = np.asarray(rep_subset, dtype=_index_dtype(d))
        nb = reps.size
        rows, cols, vals = [], [], []
        w = 1.0 / len(self.col_group)
        class_sizes = self.row_classes.sizes
        for g in self.col_group:
            m = marginal_after(g, reps, d)
            k = self.row_classes.ids[m]
            rows.append(k)
            cols.append(np.arange(nb, dtype=np.int64))
            vals.append(w / class_sizes[k])
        return SparseMatrix(self.n_rows, nb, np.concatenate(rows),
                            np.concatenate(cols), np.concatenate(vals))

    def price_columns(self, y: np.ndarray, chunk: int = 1 << 21) -> np.ndarray:
        """y . A over all column representatives (reduced system)."""
        if self.matrix is not None:
            return self.matrix.transpose_dot(y)
        d = self.d
        yw = (np.asarray(y, dtype=float) / self.row_classes.sizes
              / len(self.col_group))
        out = np.empty(self.col_reps.size)
        for lo in range(0, self.col_reps.size, chunk):
            reps = self.col_reps[lo:lo + chunk].astype(_index_dtype(d))
            acc = np.zeros(reps.size)
            for g in self.col_group:
                acc += yw[self.row_classes.ids[marginal_after(g, reps, d)]]
            out[lo:lo + chunk] = acc
        return out

    # -- certificate handling -------------------------------------------------

    def detwirl(self, y_reduced: np.ndarray) -> np.ndarray:
        """Lift a reduced dual vector to the d**6 marginal-pair space: every
        class member uniformly carries its class coefficient."""
        y_reduced = np.asarray(y_reduced, dtype=float)
        return y_reduced[self.row_classes.ids] / self.row_classes.sizes[self.row_classes.ids]


def assemble_lp(problem: InflationProblem, p: OutcomeDistribution, mode: str,
                seed: OutcomeDistribution | None = None,
                tolerance: float | None = None,
                allow_large: bool = False) -> AssembledLp:
    """Build the feasibility system for p in the requested mode.

    ``full``    -- column-symmetrized matrix on the whole joint space;
    ``twirled`` -- rows and columns collapsed by the copy-swap group;
    ``adapted`` -- additionally collapsed by outcome relabelings under which
                   the seed distribution (default: p itself) is invariant.
    """
    d = problem.d
    v_full = _marginal_pair_vector(p, d)
    if mode == "full":
        if joint_size(d) > 2**22 and not allow_large:
            raise CapacityError(
                f"full mode at d={d} needs {joint_size(d)} columns "
                f"(limit 2**22 without allow_large)"
            )
        return AssembledLp(problem, mode, v_full.copy(), v_full,
                           _trivial_classes(d), full_lp_matrix(problem))
    if mode == "twirled":
        classes_group = problem.group
        sigmas: list[Symmetry] = []
        tol = 0.0
    elif mode == "adapted":
        seed_dist = p if seed is None else seed
        seed_vec = seed_dist.probabilities
        if tolerance is None:
            # analytic seeds match exactly; empirical ones need slack
            tol = 0.0 if seed_dist.atol < 1e-9 else 1e-6
        else:
            tol = tolerance
        sigmas = value_symmetries(seed_vec, d, tol)
        if len(sigmas) > 64:
            # hyper-symmetric seeds (e.g. uniform) would blow up the group
            # closure and gain nothing over the copy-swap collapse
            sigmas = []
        classes_group = close_group(copy_swap_generators(d) + sigmas, d)
    else:
        raise DomainError(f"unknown mode {mode!r}")

    seed_pair = _marginal_pair_vector(p if seed is None else seed, d)
    classes = coefficient_classes(seed_pair, tol, classes_group, d)
    col_group = _column_group_for_classes(problem, classes, sigmas)
    v_red = np.bincount(classes.ids, weights=v_full,
                        minlength=classes.count) / classes.sizes
    reps = _column_orbit_reps(problem, col_group)
    assembled = AssembledLp(problem, mode, v_red, v_full, classes, None,
                            col_group=col_group, col_reps=reps,
                            seed_tolerance=tol)
    if reps.size <= 200_000:
        matrix = assembled.columns_for(reps)
        return AssembledLp(problem, mode, v_red, v_full, classes, matrix,
                           col_group=col_group, col_reps=reps,
                           seed_tolerance=tol)
    return assembled


def retarget(assembled: AssembledLp, p: OutcomeDistribution) -> AssembledLp:
    """The same assembled system (classes, orbits, matrix) aimed at a new
    target distribution; cheap compared to re-assembly."""
    v_full = _marginal_pair_vector(p, assembled.d)
    classes = assembled.row_classes
    v_red = np.bincount(classes.ids, weights=v_full,
                        minlength=classes.count) / classes.sizes
    if assembled.mode == "full":
        v_red = v_full.copy()
    return AssembledLp(assembled.problem, assembled.mode, v_red, v_full,
                       classes, assembled.matrix, col_group=assembled.col_group,
                       col_reps=assembled.col_reps,
                       seed_tolerance=assembled.seed_tolerance)


# ---------------------------------------------------------------------------
# certificate verification against the untwirled system
# ---------------------------------------------------------------------------

def certificate_column_values(problem: InflationProblem, y_full: np.ndarray,
                              chunk: int = 1 << 21):
    """Yield y . (M . G) over all joint columns, in chunks."""
    d = problem.d
    n = joint_size(d)
    y_full = np.asarray(y_full, dtype=float)
    w = 1.0 / len(problem.group)
    for lo in range(0, n, chunk):
        idx = np.arange(lo, min(lo + chunk, n), dtype=_index_dtype(d))
        acc = np.zeros(idx.size)
        for g in problem.group:
            acc += y_full[marginal_after(g, idx, d)]
        yield acc * w


def verify_certificate_streaming(problem: InflationProblem, y_full: np.ndarray,
                                 v_full: np.ndarray, tol: float = 1e-10):
    """Solver-independent Farkas check on the full system: min slack of
    y . (M . G) and the violation y . v."""
    min_slack = np.inf
    for vals in certificate_column_values(problem, y_full):
        min_slack = min(min_slack, float(vals.min()))
    y_dot_v = float(np.dot(np.asarray(y_full, dtype=float), v_full))
    return (min_slack >= -tol and y_dot_v < 0.0), min_slack, y_dot_v
