"""Multi-qudit systems, Hamiltonian expansions and universality verdicts.

A Hamiltonian is represented either densely or as an expansion over
coupling terms: tensor products of Gell-Mann matrices on a support set of
qudits, identity elsewhere, with real coefficients plus a trace offset
``tr(H)/D``.  Connectivity of the coupling hypergraph decides whether the
Hamiltonian entangles a qudit set, and the classifier sorts expansions
into the four simulation-universality classes.
"""

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .operators import (
    GellMannLabel,
    embed,
    gellmann_basis,
    gellmann_matrix,
    require_hermitian,
)

# Coefficients below EPS_ZERO times the largest coefficient magnitude are
# treated as floating-point dust and dropped.
EPS_ZERO = 1e-12

# Dense-matrix policy cap; everything here is desk scale by design.
MAX_TOTAL_DIM = 256


@dataclass(frozen=True)
class QuditSystem:
    """An ordered collection of finite-dimensional systems."""

    dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if not self.dims or any(d < 2 for d in self.dims):
            raise ValueError(f"every qudit dimension must be >= 2, got {self.dims}")
        if math.prod(self.dims) > MAX_TOTAL_DIM:
            raise ValueError(
                f"total dimension {math.prod(self.dims)} exceeds the supported "
                f"dense-matrix cap of {MAX_TOTAL_DIM}"
            )

    @property
    def size(self) -> int:
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    def qubits(self) -> tuple[int, ...]:
        return tuple(j for j, d in enumerate(self.dims) if d == 2)

    def non_qubits(self) -> tuple[int, ...]:
        return tuple(j for j, d in enumerate(self.dims) if d > 2)


@dataclass(frozen=True, order=True)
class CouplingTerm:
    """A tensor product of Gell-Mann factors on a support set of qudits.

    Stored as a sorted tuple of (qudit, label) pairs so terms are hashable
    dictionary keys with a deterministic order.
    """

    factors: tuple[tuple[int, GellMannLabel], ...]

    def __post_init__(self):
        pairs = tuple(sorted(self.factors))
        if not pairs:
            raise ValueError("a coupling term must touch at least one qudit")
        if len({q for q, _ in pairs}) != len(pairs):
            raise ValueError("duplicate qudit index in coupling term")
        object.__setattr__(self, "factors", pairs)

    @classmethod
    def of(cls, mapping: dict[int, GellMannLabel]) -> "CouplingTerm":
        return cls(tuple(mapping.items()))

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(q for q, _ in self.factors)

    def label_at(self, qudit: int) -> GellMannLabel:
        for q, label in self.factors:
            if q == qudit:
                return label
        raise KeyError(f"qudit {qudit} not in support {self.support}")

    def as_dict(self) -> dict[int, GellMannLabel]:
        return dict(self.factors)

    def without(self, qudit: int) -> "CouplingTerm":
        kept = tuple((q, lab) for q, lab in self.factors if q != qudit)
        return CouplingTerm(kept)

    def validate(self, system: QuditSystem) -> None:
        for q, label in self.factors:
            if not 0 <= q < system.size:
                raise ValueError(f"qudit index {q} out of range for {system.dims}")
            label.validate(system.dims[q])

    def matrix(self, system: QuditSystem) -> np.ndarray:
        self.validate(system)
        placed = {q: gellmann_matrix(system.dims[q], lab) for q, lab in self.factors}
        return embed(system.dims, placed)

    def __str__(self) -> str:
        return ",".join(f"{q}:{label}" for q, label in self.factors)


@dataclass
class Expansion:
    """Real coefficients over coupling terms plus a trace offset.

    The represented operator is ``trace_offset * I + sum h_a T_a``.
    Treated as immutable by convention; helpers return new instances.
    """

    system: QuditSystem
    coefficients: dict[CouplingTerm, float] = field(default_factory=dict)
    trace_offset: float = 0.0

    def terms(self) -> list[tuple[CouplingTerm, float]]:
        return [(t, self.coefficients[t]) for t in sorted(self.coefficients)]

    def max_coefficient(self) -> float:
        if not self.coefficients:
            return 0.0
        return max(abs(h) for h in self.coefficients.values())

    def thresholded(self, eps_rel: float = EPS_ZERO) -> "Expansion":
        cutoff = eps_rel * max(self.max_coefficient(), abs(self.trace_offset))
        kept = {t: h for t, h in self.coefficients.items() if abs(h) > cutoff}
        return Expansion(self.system, kept, self.trace_offset)

    def without_offset(self) -> "Expansion":
        return Expansion(self.system, dict(self.coefficients), 0.0)

    def supports(self) -> list[tuple[int, ...]]:
        return [t.support for t in sorted(self.coefficients)]


@lru_cache(maxsize=None)
def _site_stack(dim: int) -> np.ndarray:
    """Orthonormal single-site operator basis: I/sqrt(d) then Gell-Mann."""
    mats = [np.eye(dim, dtype=complex) / np.sqrt(dim)]
    mats += [g for _, g in gellmann_basis(dim)]
    return np.stack(mats)


def expand(ham: np.ndarray, system: QuditSystem, eps_rel: float = EPS_ZERO) -> Expansion:
    """Project a dense Hermitian operator onto the coupling-term basis.

    Coefficients are Hilbert-Schmidt projections; since Gell-Mann factors
    have unit norm and identity factors contribute their dimension, a term
    with support S gets ``h = tr(T H) / prod_{j not in S} d_j``.
    """
    dims = system.dims
    n = system.size
    big_d = system.total_dim
    if ham.shape != (big_d, big_d):
        raise ValueError(f"operator shape {ham.shape} does not match dimension {big_d}")
    require_hermitian(ham, "expanded operator")

    # Contract one site at a time against the orthonormal site basis; the
    # invariant keeps site j's row axis at position j and its column axis
    # at position n.
    coeff = ham.reshape(*dims, *dims)
    for j, d in enumerate(dims):
        stack = _site_stack(d)
        coeff = np.moveaxis(
            np.tensordot(stack.conj(), coeff, axes=([1, 2], [j, n])), 0, j
        )

    imag_resid = float(np.abs(coeff.imag).max())
    if imag_resid > 1e-12 * max(1.0, float(np.abs(coeff).max())):
        raise ValueError(f"expansion produced non-real coefficients ({imag_resid:.2e})")
    coeff = coeff.real

    site_labels = [gellmann_basis(d) for d in dims]
    inv_sqrt = [1.0 / np.sqrt(d) for d in dims]
    terms: dict[CouplingTerm, float] = {}
    trace_offset = 0.0
    for index in np.ndindex(*coeff.shape):
        value = float(coeff[index])
        if value == 0.0:
            continue
        if all(k == 0 for k in index):
            trace_offset = value / np.sqrt(big_d)
            continue
        factors = {}
        for j, k in enumerate(index):
            if k == 0:
                value *= inv_sqrt[j]
            else:
                factors[j] = site_labels[j][k - 1][0]
        terms[CouplingTerm.of(factors)] = value

    return Expansion(system, terms, trace_offset).thresholded(eps_rel)


def reconstruct(expansion: Expansion) -> np.ndarray:
    """Dense operator represented by an expansion."""
    system = expansion.system
    out = expansion.trace_offset * np.eye(system.total_dim, dtype=complex)
    for term, h in expansion.coefficients.items():
        out += h * term.matrix(system)
    return out


class _UnionFind:
    def __init__(self, elements):
        self.parent = {e: e for e in elements}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


@dataclass(frozen=True)
class Connectivity:
    """Result of a hypergraph connectivity check.

    Truthy when connected; otherwise ``partition`` is a witness bipartition
    (S, S-bar) that no term support crosses.
    """

    connected: bool
    partition: tuple[tuple[int, ...], tuple[int, ...]] | None = None

    def __bool__(self) -> bool:
        return self.connected


def is_entangling(expansion: Expansion, subset) -> Connectivity:
    """Whether the coupling hypergraph connects ``subset``.

    Vertices are the qudits of ``subset``; each term contributes its
    support intersected with ``subset`` as a hyperedge.  Union-find makes
    this near-linear in the number of factors.
    """
    subset = tuple(sorted(set(subset)))
    if not subset:
        raise ValueError("connectivity of an empty qudit set is undefined")
    for q in subset:
        if not 0 <= q < expansion.system.size:
            raise ValueError(f"qudit {q} outside the system")
    uf = _UnionFind(subset)
    inside = set(subset)
    for term in expansion.coefficients:
        edge = [q for q in term.support if q in inside]
        for a, b in zip(edge, edge[1:]):
            uf.union(a, b)
    head = uf.find(subset[0])
    component = tuple(q for q in subset if uf.find(q) == head)
    if len(component) == len(subset):
        return Connectivity(True)
    rest = tuple(q for q in subset if uf.find(q) != head)
    return Connectivity(False, (component, rest))


class VerdictKind(enum.Enum):
    NON_ENTANGLING = "NonEntangling"
    ODD_QUBIT_ONLY = "OddQubitOnly"
    UNIVERSAL_BY_EVEN_TERM = "UniversalByEvenTerm"
    UNIVERSAL_CONSTRUCTIVE = "UniversalConstructive"


@dataclass(frozen=True)
class Verdict:
    """Simulation-universality class of an expansion."""

    kind: VerdictKind
    partition: tuple[tuple[int, ...], tuple[int, ...]] | None = None

    def universal(self) -> bool:
        return self.kind in (
            VerdictKind.UNIVERSAL_BY_EVEN_TERM,
            VerdictKind.UNIVERSAL_CONSTRUCTIVE,
        )

    def describe(self) -> str:
        if self.kind is VerdictKind.NON_ENTANGLING and self.partition:
            left, right = self.partition
            return (
                f"{self.kind.value} {{{','.join(map(str, left))}}}"
                f"|{{{','.join(map(str, right))}}}"
            )
        return self.kind.value


def classify(expansion: Expansion) -> Verdict:
    """Classify an expansion by its universality class.

    Non-entangling Hamiltonians are rejected with a witness partition.
    All-qubit Hamiltonians split into the odd class (every support has odd
    cardinality, not universal) and the even class (universal, by
    classification only).  Any entangling Hamiltonian touching a non-qubit
    is universal with a constructive certificate available.
    """
    if not expansion.coefficients:
        raise ValueError("cannot classify an expansion with no coupling terms")
    system = expansion.system
    conn = is_entangling(expansion, range(system.size))
    if not conn:
        return Verdict(VerdictKind.NON_ENTANGLING, conn.partition)
    if all(d == 2 for d in system.dims):
        if all(len(t.support) % 2 == 1 for t in expansion.coefficients):
            return Verdict(VerdictKind.ODD_QUBIT_ONLY)
        return Verdict(VerdictKind.UNIVERSAL_BY_EVEN_TERM)
    return Verdict(VerdictKind.UNIVERSAL_CONSTRUCTIVE)
