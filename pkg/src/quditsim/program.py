"""Simulation-program intermediate representation and its semantics.

A program is a finite tree (shared subtrees allowed, so effectively a DAG)
whose leaves evolve either the source Hamiltonian (``Native``) or a free
local Hamiltonian (``Local``), combined by conjugation with local
unitaries, positively weighted sums, and commutators.  Its meaning is an
effective Hamiltonian:

* ``Native(w)``            ->  w * H
* ``Local(j, A)``          ->  A embedded on qudit j
* ``Conjugate(U, p)``      ->  U eff(p) U†
* ``Sum((w_i, p_i), ...)`` ->  sum_i w_i eff(p_i)
* ``Commutator(l, r)``     ->  i [eff(l), eff(r)]

Programs compile to unitary sequences with first-order product formulas:
sums interleave their children per step, commutators use the four-factor
group-commutator sequence with a square-root time slice.
"""

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .model import CouplingTerm, QuditSystem
from .operators import (
    LocalUnitary,
    dagger,
    embed,
    heisenberg_weyl,
    hermitian_exp,
    require_hermitian,
)

DEFAULT_BRANCH_CAP = 4096


class BranchCapExceeded(RuntimeError):
    """Raised when flat Trotter expansion would exceed the factor cap."""

    def __init__(self, required: int, cap: int):
        super().__init__(
            f"compilation needs {required} unitary factors, above the cap of {cap}; "
            "verify via the effective-Hamiltonian path instead"
        )
        self.required = required
        self.cap = cap


@dataclass(frozen=True, eq=False)
class Native:
    """Evolve the source Hamiltonian, scaled by a positive weight."""

    weight: float = 1.0

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError("native weight must be strictly positive")


@dataclass(frozen=True, eq=False)
class Local:
    """Evolve a Hermitian single-qudit Hamiltonian (a free resource)."""

    qudit: int
    operator: np.ndarray

    def __post_init__(self):
        require_hermitian(self.operator, "local Hamiltonian")


@dataclass(frozen=True, eq=False)
class Conjugate:
    unitary: LocalUnitary
    child: "SimulationProgram"


@dataclass(frozen=True, eq=False)
class Sum:
    children: tuple[tuple[float, "SimulationProgram"], ...]

    def __post_init__(self):
        if any(not w > 0 for w, _ in self.children):
            raise ValueError("sum weights must be strictly positive")


@dataclass(frozen=True, eq=False)
class Commutator:
    left: "SimulationProgram"
    right: "SimulationProgram"


SimulationProgram = Union[Native, Local, Conjugate, Sum, Commutator]


@dataclass(frozen=True)
class VerificationReport:
    """Trotter error per step count plus an empirical convergence order."""

    effective_norm_error: float
    trotter_errors: tuple[tuple[int, float], ...]
    order_estimate: float


def effective_hamiltonian(
    program: SimulationProgram, source: np.ndarray, system: QuditSystem
) -> np.ndarray:
    """Evaluate a program's effective Hamiltonian on a dense source.

    Shared subtrees are evaluated once (results memoized by node
    identity); isolation pipelines rely on this, since their twirl stages
    put hundreds of conjugation branches around one shared child.
    """
    big_d = system.total_dim
    if source.shape != (big_d, big_d):
        raise ValueError(f"source shape {source.shape} does not match dimension {big_d}")
    require_hermitian(source, "source Hamiltonian")
    cache: dict[int, np.ndarray] = {}

    def ev(node: SimulationProgram) -> np.ndarray:
        hit = cache.get(id(node))
        if hit is not None:
            return hit
        if isinstance(node, Native):
            out = node.weight * source
        elif isinstance(node, Local):
            out = embed(system.dims, {node.qudit: node.operator})
        elif isinstance(node, Conjugate):
            if node.unitary.dims != system.dims:
                raise ValueError("conjugation unitary does not match the system")
            u = node.unitary.matrix()
            out = u @ ev(node.child) @ dagger(u)
        elif isinstance(node, Sum):
            out = np.zeros((big_d, big_d), dtype=complex)
            for w, child in node.children:
                out = out + w * ev(child)
        elif isinstance(node, Commutator):
            left, right = ev(node.left), ev(node.right)
            out = 1j * (left @ right - right @ left)
        else:
            raise TypeError(f"not a program node: {node!r}")
        cache[id(node)] = out
        return out

    return ev(program)


def graft(outer: SimulationProgram, inner: SimulationProgram) -> SimulationProgram:
    """Substitute ``inner`` for every Native leaf of ``outer``.

    Native weights are preserved as an explicit scaling.  Rebuilding is
    memoized so subtree sharing in ``outer`` survives the substitution.
    """
    memo: dict[int, SimulationProgram] = {}

    def g(node: SimulationProgram) -> SimulationProgram:
        hit = memo.get(id(node))
        if hit is not None:
            return hit
        if isinstance(node, Native):
            out = inner if node.weight == 1.0 else Sum(((node.weight, inner),))
        elif isinstance(node, Local):
            out = node
        elif isinstance(node, Conjugate):
            out = Conjugate(node.unitary, g(node.child))
        elif isinstance(node, Sum):
            out = Sum(tuple((w, g(child)) for w, child in node.children))
        else:
            out = Commutator(g(node.left), g(node.right))
        memo[id(node)] = out
        return out

    return g(outer)


def iter_unique_nodes(program: SimulationProgram):
    """Yield each distinct node of a program DAG once."""
    seen: set[int] = set()
    stack = [program]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        yield node
        if isinstance(node, Conjugate):
            stack.append(node.child)
        elif isinstance(node, Sum):
            stack.extend(child for _, child in node.children)
        elif isinstance(node, Commutator):
            stack.append(node.left)
            stack.append(node.right)


def weights_all_positive(program: SimulationProgram) -> bool:
    for node in iter_unique_nodes(program):
        if isinstance(node, Native) and not node.weight > 0:
            return False
        if isinstance(node, Sum) and any(not w > 0 for w, _ in node.children):
            return False
    return True


def negate_isolated_term(term: CouplingTerm, system: QuditSystem) -> SimulationProgram:
    """Program whose effective Hamiltonian is minus the given term.

    Sums the non-identity Pauli-group conjugations on the lowest support
    qudit; for a traceless factor the twirl minus the identity branch
    flips the sign, leaving positive weights only.
    """
    term.validate(system)
    qudit = min(term.support)
    child = Native(1.0)
    branches = []
    for u in heisenberg_weyl(system.dims[qudit])[1:]:
        unit = LocalUnitary.from_factors(system.dims, {qudit: u})
        branches.append((1.0, Conjugate(unit, child)))
    return Sum(tuple(branches))


def _count_factors(program: SimulationProgram) -> int:
    """Flat unitary-factor count for one Trotter step."""
    memo: dict[int, int] = {}

    def count(node: SimulationProgram) -> int:
        hit = memo.get(id(node))
        if hit is not None:
            return hit
        if isinstance(node, (Native, Local)):
            out = 1
        elif isinstance(node, Conjugate):
            out = count(node.child) + 2
        elif isinstance(node, Sum):
            out = sum(count(child) for _, child in node.children)
        else:
            out = 2 * (count(node.left) + count(node.right))
        memo[id(node)] = out
        return out

    return count(program)


def trotter_compile(
    program: SimulationProgram,
    source: np.ndarray,
    system: QuditSystem,
    t: float,
    steps: int,
    branch_cap: int = DEFAULT_BRANCH_CAP,
) -> list[np.ndarray]:
    """Compile a program into unitary factors approximating exp(-i H_eff t).

    Factors are returned in application order (index 0 acts first on the
    state).  Sums interleave children once per step (first-order);
    commutator nodes emit the four-factor group commutator with time slice
    sqrt(t / steps).
    """
    if not isinstance(steps, int) or steps < 1:
        raise ValueError("steps must be a positive integer")
    if not math.isfinite(t):
        raise ValueError("evolution time must be finite")
    require_hermitian(source, "source Hamiltonian")
    required = steps * _count_factors(program)
    if required > branch_cap:
        raise BranchCapExceeded(required, branch_cap)
    dims = system.dims

    def evolve(node: SimulationProgram, tau: float) -> list[np.ndarray]:
        if isinstance(node, Native):
            return [hermitian_exp(source, node.weight * tau)]
        if isinstance(node, Local):
            return [hermitian_exp(embed(dims, {node.qudit: node.operator}), tau)]
        if isinstance(node, Conjugate):
            u = node.unitary.matrix()
            return [dagger(u)] + evolve(node.child, tau) + [u]
        if isinstance(node, Sum):
            out = []
            for w, child in node.children:
                out.extend(evolve(child, w * tau))
            return out
        if isinstance(node, Commutator):
            if tau == 0.0:
                return []
            if tau < 0.0:
                # i[R, L] = -i[L, R]: swapping operands evolves backwards.
                return evolve(Commutator(node.right, node.left), -tau)
            delta = math.sqrt(tau)
            return (
                evolve(node.right, delta)
                + evolve(node.left, -delta)
                + evolve(node.right, -delta)
                + evolve(node.left, delta)
            )
        raise TypeError(f"not a program node: {node!r}")

    return evolve(program, t / steps) * steps


def product_unitary(factors: list[np.ndarray], dim: int) -> np.ndarray:
    """Total unitary of a factor list given in application order."""
    out = np.eye(dim, dtype=complex)
    for factor in factors:
        out = factor @ out
    return out


def verify(
    program: SimulationProgram,
    source: np.ndarray,
    system: QuditSystem,
    t: float,
    steps_list,
    branch_cap: int = DEFAULT_BRANCH_CAP,
) -> VerificationReport:
    """Compare compiled products against exact effective evolution.

    For each step count the operator-norm (spectral) distance between the
    compiled product and ``exp(-i H_eff t)`` is recorded; the order
    estimate is the mean log-ratio of consecutive errors.
    """
    eff = effective_hamiltonian(program, source, system)
    target = hermitian_exp(eff, t)
    errors = []
    for steps in steps_list:
        one_step = _count_factors(program)
        factors = trotter_compile(program, source, system, t, steps, branch_cap)
        step_product = product_unitary(factors[:one_step], system.total_dim)
        total = np.linalg.matrix_power(step_product, steps)
        errors.append((int(steps), float(np.linalg.norm(total - target, 2))))

    ratios = []
    for (n1, e1), (n2, e2) in zip(errors, errors[1:]):
        if e1 > 1e-14 and e2 > 1e-14 and n2 != n1:
            ratios.append(math.log(e1 / e2) / math.log(n2 / n1))
    order = sum(ratios) / len(ratios) if ratios else 0.0
    best = min(e for _, e in errors) if errors else 0.0
    return VerificationReport(best, tuple(errors), order)
