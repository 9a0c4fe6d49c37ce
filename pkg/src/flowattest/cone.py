"""Exact integer-cone membership.

A measurement is valid for a candidate path exactly when the residual
``target = measured - base`` can be written as a nonnegative-integer
combination of the candidate's loop vectors.  This module decides that
membership exactly, with no floating point anywhere in the decision path,
and stops at the first exact hit - optimality is irrelevant.

Three exact engines are layered by instance shape:

1. integer propagation: support reduction, per-dimension gcd and capacity
   pruning, forced-variable fixing (resolves most instances outright);
2. bitset reachability over the residual box, when the box is small enough
   to afford it - generators are nonnegative, so partial sums never leave
   the box and saturating one generator at a time is complete.  This is
   the workhorse for low-dimension/many-generator instances, where pure
   branch-and-bound degenerates;
3. branch-and-bound on an exact rational phase-1 simplex for everything
   else (high-dimension instances, where the equality rows prune hard).

The decision problem is NP-hard in general, so adversarial inputs outside
the reachability budget can still be slow; they remain exactly decided.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd

from .lattice import lattice_basis
from .vectors import Vec

# Bitset reachability is used when the box holds at most this many states
# and the estimated sweep work (saturation passes times bitmap words) is
# affordable.
_DP_BIT_LIMIT = 1 << 26
_DP_WORK_LIMIT = 80_000_000
# Descent probes are worth a few tries; once they keep missing, plain
# branching is the better use of time.
_PROBE_ATTEMPTS = 4


@dataclass(frozen=True)
class ConeProblem:
    """``target`` may be negative componentwise; that is simply infeasible."""

    target: Vec
    generators: tuple[Vec, ...]


@dataclass
class ConeSolution:
    witness: tuple[int, ...] | None
    lp_solves: int


def cone_member(problem: ConeProblem) -> tuple[int, ...] | None:
    """Nonnegative integer scalars with ``sum(x_i * v_i) == target``, or None."""
    return solve_cone(problem.target, problem.generators).witness


def _propagate(target: Vec, gens: list[Vec], lb: list[int], ub: list[int]):
    """Shrink a box exactly; returns None (infeasible),
    ('witness', assign) or ('open', lb, ub, residual)."""
    dim = len(target)
    k = len(gens)
    while True:
        residual = list(target)
        for i in range(k):
            if lb[i]:
                gi = gens[i]
                for d in range(dim):
                    residual[d] -= lb[i] * gi[d]
        if any(r < 0 for r in residual):
            return None
        for i in range(k):
            if ub[i] > lb[i]:
                cap = min(residual[d] // gens[i][d] for d in range(dim) if gens[i][d] > 0)
                if lb[i] + cap < ub[i]:
                    ub[i] = lb[i] + cap
        changed = False
        for d in range(dim):
            r = residual[d]
            if r == 0:
                continue
            cover = [i for i in range(k) if ub[i] > lb[i] and gens[i][d] > 0]
            if not cover:
                return None
            g = 0
            capacity = 0
            for i in cover:
                g = gcd(g, gens[i][d])
                capacity += (ub[i] - lb[i]) * gens[i][d]
            if r % g or capacity < r:
                return None
            if len(cover) == 1:
                # The only generator reaching this dimension is forced.
                i = cover[0]
                lb[i] += r // gens[i][d]
                ub[i] = lb[i]
                changed = True
                break
        if not changed:
            if all(r == 0 for r in residual):
                return ("witness", lb)
            return ("open", lb, ub, residual)


def _in_lattice(residual: list[int], basis: list[Vec]) -> bool:
    """Exact membership of ``residual`` in the integer lattice of ``basis``.

    Back-substitution over an echelon basis; a nonnegative combination need
    not exist, but a residual outside the lattice certainly has none.
    """
    r = list(residual)
    for row in basis:
        pivot = next(i for i, x in enumerate(row) if x)
        q, rem = divmod(r[pivot], row[pivot])
        if rem:
            return False
        if q:
            r = [a - q * b for a, b in zip(r, row)]
    return all(x == 0 for x in r)


def _repeat_pattern(pattern: int, block_bits: int, reps: int) -> int:
    """Concatenate ``reps`` copies of a ``block_bits``-wide pattern."""
    built = pattern
    blocks = 1
    while blocks * 2 <= reps:
        built |= built << (blocks * block_bits)
        blocks *= 2
    remaining = reps - blocks
    if remaining:
        built |= (built & ((1 << (remaining * block_bits)) - 1)) << (blocks * block_bits)
    return built


def _dp_plan(residual: list[int], gens: list[Vec]):
    """Box geometry and work estimate for bitset reachability, or None."""
    bits = 1
    for r in residual:
        bits *= r + 1
        if bits > _DP_BIT_LIMIT:
            return None
    passes = 0
    for g in gens:
        passes += min(r // v for r, v in zip(residual, g) if v > 0) + 1
    if passes * (bits // 64 + 1) > _DP_WORK_LIMIT:
        return None
    strides = [0] * len(residual)
    stride = 1
    for d in reversed(range(len(residual))):
        strides[d] = stride
        stride *= residual[d] + 1
    return bits, strides


def _dp_decide(residual: list[int], gens: list[Vec]):
    """(planned, counts) where counts aligns with ``gens`` or is None.

    Generators that do not fit inside the box even once can never be used
    and are excluded up front.
    """
    usable = [j for j, g in enumerate(gens) if all(v <= r for v, r in zip(g, residual))]
    subset = [gens[j] for j in usable]
    plan = _dp_plan(residual, subset)
    if plan is None:
        return False, None
    counts = _dp_reachable(residual, subset, plan)
    if counts is None:
        return True, None
    full = [0] * len(gens)
    for j, count in zip(usable, counts):
        full[j] = count
    return True, full


def _dp_reachable(residual: list[int], gens: list[Vec], plan) -> list[int] | None:
    """Exact reachability of ``residual`` by nonnegative generator sums.

    One big integer is the bitmap of reachable box states.  Because the
    generators are componentwise nonnegative, any sum can be built one
    generator at a time without ever leaving the box, so saturating each
    generator once (repeating its masked shift to a fixed point) covers
    every combination.  Snapshots per generator let the witness be read
    back afterwards.
    """
    bits, strides = plan
    dim = len(residual)
    shifts = []
    masks = []
    for g in gens:
        shifts.append(sum(v * s for v, s in zip(g, strides)))
        # Mask of source states s with s + g still inside the box.
        mask = (1 << (residual[dim - 1] - g[dim - 1] + 1)) - 1
        for d in reversed(range(dim - 1)):
            block = strides[d]
            mask = _repeat_pattern(mask, block, residual[d] - g[d] + 1)
        masks.append(mask)
    reach = 1  # only the origin, before any generator is applied
    snapshots = []
    for shift, mask in zip(shifts, masks):
        while True:
            grown = reach | ((reach & mask) << shift)
            if grown == reach:
                break
            reach = grown
        snapshots.append(reach)
    goal = sum(r * s for r, s in zip(residual, strides))
    if not (reach >> goal) & 1:
        return None
    # Walk the layers backwards: how many copies of each generator were
    # needed to first reach the goal within its snapshot.
    counts = [0] * len(gens)
    index = goal
    for i in reversed(range(len(gens))):
        previous = snapshots[i - 1] if i else 1
        while not (previous >> index) & 1:
            counts[i] += 1
            index -= shifts[i]
        assert index >= 0
    return counts


def _lp_feasible(A: list[list[int]], b: list[int], caps: list[int]) -> list[Fraction] | None:
    """Exact phase-1 simplex for {z : A z = b, 0 <= z <= caps}.

    Cap rows start with their slack basic; equality rows start with an
    artificial.  Bland's rule on both the entering and leaving choice
    guarantees termination.  Returns a basic feasible point or None.
    """
    m1 = len(A)
    k = len(caps)
    ncols = 2 * k + m1
    zero = Fraction(0)
    one = Fraction(1)
    tableau: list[list[Fraction]] = []
    basis: list[int] = []
    for r in range(m1):
        row = [Fraction(A[r][j]) for j in range(k)]
        row += [zero] * k
        row += [one if j == r else zero for j in range(m1)]
        row.append(Fraction(b[r]))
        tableau.append(row)
        basis.append(2 * k + r)
    for i in range(k):
        row = [zero] * ncols + [Fraction(caps[i])]
        row[i] = one
        row[k + i] = one
        tableau.append(row)
        basis.append(k + i)
    # Reduced costs for "minimize sum of artificials".
    obj = [zero] * (ncols + 1)
    for j in range(ncols + 1):
        total = sum(tableau[r][j] for r in range(m1))
        cost = one if 2 * k <= j < ncols else zero
        obj[j] = cost - total

    while True:
        enter = next((j for j in range(ncols) if obj[j] < 0), None)
        if enter is None:
            break
        leave = None
        best_ratio = None
        for r, row in enumerate(tableau):
            coeff = row[enter]
            if coeff > 0:
                ratio = row[-1] / coeff
                if (
                    best_ratio is None
                    or ratio < best_ratio
                    or (ratio == best_ratio and basis[r] < basis[leave])
                ):
                    best_ratio = ratio
                    leave = r
        assert leave is not None, "phase-1 objective is bounded"
        pivot_row = tableau[leave]
        inv = one / pivot_row[enter]
        tableau[leave] = [x * inv for x in pivot_row]
        pivot_row = tableau[leave]
        for r, row in enumerate(tableau):
            if r != leave and row[enter] != 0:
                factor = row[enter]
                tableau[r] = [x - factor * p for x, p in zip(row, pivot_row)]
        if obj[enter] != 0:
            factor = obj[enter]
            obj = [x - factor * p for x, p in zip(obj, pivot_row)]
        basis[leave] = enter

    if -obj[-1] > 0:
        return None
    solution = [zero] * k
    for r, var in enumerate(basis):
        if var < k:
            solution[var] = tableau[r][-1]
    return solution


def solve_cone(target: Vec, generators: tuple[Vec, ...]) -> ConeSolution:
    dim = len(target)
    n = len(generators)
    if any(t < 0 for t in target):
        return ConeSolution(None, 0)
    if all(t == 0 for t in target):
        return ConeSolution((0,) * n, 0)
    active = [i for i, g in enumerate(generators) if any(g)]
    gens = [generators[i] for i in active]
    k = len(gens)

    def assemble(assign: list[int], lp_solves: int) -> ConeSolution:
        witness = [0] * n
        for idx, value in zip(active, assign):
            witness[idx] = value
        return ConeSolution(tuple(witness), lp_solves)

    root_ub = [
        min(target[d] // g[d] for d in range(dim) if g[d] > 0) for g in gens
    ]
    lp_solves = 0
    probes_left = _PROBE_ATTEMPTS
    stack: list[tuple[list[int], list[int]]] = [([0] * k, root_ub)]
    while stack:
        lb, ub = stack.pop()
        outcome = _propagate(target, gens, lb, ub)
        if outcome is None:
            continue
        if outcome[0] == "witness":
            return assemble(outcome[1], lp_solves)
        _, lb, ub, residual = outcome
        free = [i for i in range(k) if ub[i] > lb[i]]
        free_gens = [gens[i] for i in free]

        # A residual outside the generators' integer lattice has no
        # combination at all, nonnegative or otherwise.
        if not _in_lattice(residual, lattice_basis(free_gens)):
            continue

        # When the residual box is small enough, bitset reachability decides
        # this node outright.  A witness it finds ignores branching bounds,
        # but any nonnegative exact combination is globally valid, and an
        # unreachable residual prunes the node exactly.
        planned, counts = _dp_decide(residual, free_gens)
        if planned:
            if counts is None:
                continue
            assign = list(lb)
            for j, i in enumerate(free):
                assign[i] += counts[j]
            return assemble(assign, lp_solves)

        rows = [d for d in range(dim) if residual[d] > 0]
        caps = [ub[i] - lb[i] for i in free]
        lp_solves += 1
        relaxed = _lp_feasible(
            [[gens[i][d] for i in free] for d in rows],
            [residual[d] for d in rows],
            caps,
        )
        if relaxed is None:
            continue
        fractional = [j for j, z in enumerate(relaxed) if z.denominator != 1]
        if not fractional:
            assign = list(lb)
            for j, z in enumerate(relaxed):
                assign[free[j]] += int(z)
            return assemble(assign, lp_solves)

        # Cheap integer probe: a basic solution has few fractional entries;
        # try every floor/ceil rounding of them before branching.
        if len(fractional) <= 4:
            rounded = _round_probe(relaxed, fractional, free_gens, residual, caps)
            if rounded is not None:
                assign = list(lb)
                for j, value in enumerate(rounded):
                    assign[free[j]] += value
                return assemble(assign, lp_solves)

        # Descent probe: peel off the relaxation's integer part.  What is
        # left is at most one generator's worth per variable, a box small
        # enough for reachability even when the node's own box is not.  A
        # hit is a global witness; a miss proves nothing and we branch.
        floors = [z.numerator // z.denominator for z in relaxed]
        if probes_left and any(floors):
            peeled = list(residual)
            for j, count in enumerate(floors):
                if count:
                    for d in range(dim):
                        peeled[d] -= count * free_gens[j][d]
            planned, counts = _dp_decide(peeled, free_gens)
            if planned:
                if counts is not None:
                    assign = list(lb)
                    for j, i in enumerate(free):
                        assign[i] += floors[j] + counts[j]
                    return assemble(assign, lp_solves)
                probes_left -= 1

        # Branch on the most fractional variable, nearest side first
        # (the stack is LIFO).
        frac_at = max(
            fractional,
            key=lambda j: min(
                relaxed[j] - (relaxed[j].numerator // relaxed[j].denominator),
                1 - (relaxed[j] - (relaxed[j].numerator // relaxed[j].denominator)),
            ),
        )
        i = free[frac_at]
        z = relaxed[frac_at]
        floor_x = lb[i] + z.numerator // z.denominator
        low = (list(lb), list(ub))
        low[1][i] = floor_x
        high = (list(lb), list(ub))
        high[0][i] = floor_x + 1
        if z - (z.numerator // z.denominator) >= Fraction(1, 2):
            stack.append(low)
            stack.append(high)
        else:
            stack.append(high)
            stack.append(low)
    return ConeSolution(None, lp_solves)


def _round_probe(
    relaxed: list[Fraction],
    fractional: list[int],
    gens: list[Vec],
    residual: list[int],
    caps: list[int],
) -> list[int] | None:
    """Test every floor/ceil rounding of the fractional coordinates."""
    base = [z.numerator // z.denominator for z in relaxed]
    dim = len(residual)
    for mask in range(1 << len(fractional)):
        candidate = list(base)
        ok = True
        for bit, j in enumerate(fractional):
            if mask >> bit & 1:
                candidate[j] += 1
            if candidate[j] > caps[j]:
                ok = False
                break
        if not ok:
            continue
        for d in range(dim):
            if sum(x * g[d] for x, g in zip(candidate, gens)) != residual[d]:
                break
        else:
            return candidate
    return None
