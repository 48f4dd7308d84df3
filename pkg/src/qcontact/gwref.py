"""Independent reference evaluation of genus-0 descendant invariants.

This module computes, from first principles, the invariants the engine
ships as base data.  It works in two stages:

1. ``ordinary`` evaluates gravitational descendants (ordinary psi classes)
   of a structure-constant target using the standard genus-0 calculus:
   the dimension filter, the string, dilaton and divisor equations, the
   topological recursion relation, the closed zero-class formula, and
   divisor-led reconstruction of primary invariants from a handful of
   classical seeds (one line through two points, and its analogues).

2. ``modified`` converts invariants of the modified (forgetful-compatible)
   psi classes to ordinary ones by expanding psi-bar = psi minus the sum of
   soft boundary divisors carrying the mark on a contracted tree.  Each
   boundary term factors into a moduli-of-curves integral (a multinomial)
   and a smaller invariant with the contracted marks merged by cup product
   at the gluing mark.

Every value is an exact rational.  The two stages are cross-checked in the
test suite against hand-computed incidence-variety values and branched
cover counts.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from math import factorial
from typing import Dict, Iterable, List, Sequence, Tuple

from .target import TargetModel

# ordinary key: (delta, sorted tuple of (a, basis)), mixed key adds the
# remaining modified power: (abar, b, basis)
OrdKey = Tuple[Tuple[int, ...], Tuple[Tuple[int, int], ...]]
MixKey = Tuple[Tuple[int, ...], Tuple[Tuple[int, int, int], ...]]


class ReferenceError_(RuntimeError):
    """The reference recursion could not determine a value."""


# Primary seeds: per target name, divisor-free primary invariants with at
# most two insertions.  Each is the count of lines (or rulings) through the
# appropriate point conditions.
_PRIMARY_SEEDS = {
    "p1": {((1,), ()): Fraction(1)},
    "p2": {((1,), ((0, 2), (0, 2))): Fraction(1)},
    "p3": {((1,), ((0, 3), (0, 3))): Fraction(1)},
    "p1xp1": {
        ((1, 0), ((0, 3),)): Fraction(1),
        ((0, 1), ((0, 3),)): Fraction(1),
    },
}


class ReferenceEvaluator:
    """Memoizing evaluator bound to one target model."""

    def __init__(self, target: TargetModel):
        self.target = target
        if target.name not in _PRIMARY_SEEDS:
            raise ReferenceError_(
                f"no primary seeds for target {target.name!r}"
            )
        self._seeds = _PRIMARY_SEEDS[target.name]
        self._ord_cache: Dict[OrdKey, Fraction] = {}
        self._mix_cache: Dict[MixKey, Fraction] = {}
        self._primary_batches: set = set()
        self._divisors = tuple(
            i for i in range(target.rank) if target.codim(i) == 1
        )
        # decompositions T_k = T_h cup T_g with codim(T_h) = 1, for the
        # divisor-led reconstruction of primaries
        self._decomps: Dict[int, List[Tuple[int, int]]] = {}
        for k in range(target.rank):
            if target.codim(k) < 2:
                continue
            out = []
            for h in self._divisors:
                for g in range(target.rank):
                    if target.cup[h][g][k] == 1 and all(
                        target.cup[h][g][m] == 0
                        for m in range(target.rank)
                        if m != k
                    ):
                        out.append((h, g))
            if not out:
                raise ReferenceError_(
                    f"basis class {target.basis[k].name} is not divisor-led"
                )
            self._decomps[k] = out

    # -- helpers ---------------------------------------------------------

    def _div_pair(self, d: int, delta: Sequence[int]) -> Fraction:
        """Intersection number of the divisor T_d with the curve class."""
        pairs = self._divisor_curve_matrix()
        return sum(Fraction(m) * Fraction(x) for m, x in zip(pairs[d], delta))

    def _divisor_curve_matrix(self):
        """Rows: divisor basis index -> pairing with each lattice component."""
        if hasattr(self, "_dcm"):
            return self._dcm
        target = self.target
        k = target.curve_rank
        matrix: Dict[int, Tuple[int, ...]] = {}
        if target.name in ("p1", "p2", "p3"):
            matrix[1] = (1,)
        elif target.name == "p1xp1":
            # a = [pt x P1] meets curves of the first ruling once
            matrix[target.basis_index("a")] = (1, 0)
            matrix[target.basis_index("b")] = (0, 1)
        else:
            raise ReferenceError_(
                f"no divisor/curve pairings for target {target.name!r}"
            )
        self._dcm = matrix
        return matrix

    def _cup_merge(self, indices: Iterable[int]) -> List[Tuple[int, Fraction]]:
        """Cup product of basis classes, expanded as (basis, coeff) terms."""
        target = self.target
        acc = {0: Fraction(1)}
        for idx in indices:
            nxt: Dict[int, Fraction] = {}
            for i, c in acc.items():
                for k in range(target.rank):
                    sc = target.cup[i][idx][k]
                    if sc:
                        nxt[k] = nxt.get(k, Fraction(0)) + c * sc
            acc = {k: v for k, v in nxt.items() if v != 0}
            if not acc:
                return []
        return sorted(acc.items(), key=lambda kv: kv[0])

    def _integral(self, indices: Iterable[int]) -> Fraction:
        merged = self._cup_merge(indices)
        point = self.target.point_index
        for k, v in merged:
            if k == point:
                return v
        return Fraction(0)

    def _dim_ok(self, delta, ins_weights, n) -> bool:
        target = self.target
        if all(d == 0 for d in delta) and n < 3:
            return False
        return ins_weights == target.vdim(delta, n)

    # -- ordinary gravitational descendants -------------------------------

    def ordinary(self, delta: Sequence[int], insertions: Iterable[Tuple[int, int]]) -> Fraction:
        """Genus-0 gravitational descendant with ordinary psi powers."""
        delta = tuple(delta)
        ins = tuple(sorted(tuple(i) for i in insertions))
        if any(d < 0 for d in delta):
            raise ValueError(f"not effective: {delta}")
        key = (delta, ins)
        cached = self._ord_cache.get(key)
        if cached is not None:
            return cached
        value = self._ordinary_uncached(delta, ins)
        self._ord_cache[key] = value
        return value

    def _ordinary_uncached(self, delta, ins) -> Fraction:
        target = self.target
        n = len(ins)
        weight = sum(a + target.codim(b) for a, b in ins)
        if all(d == 0 for d in delta):
            # M_{0,n} x X splits: psi powers integrate over the curve factor
            # (a multinomial), classes over X
            if n < 3 or sum(a for a, _ in ins) != n - 3:
                return Fraction(0)
            coeff = Fraction(factorial(n - 3))
            for a, _ in ins:
                coeff /= factorial(a)
            return coeff * self._integral(b for _, b in ins)
        if weight != target.vdim(delta, n):
            return Fraction(0)

        # string equation
        if (0, 0) in ins:
            rest = _remove_one(ins, (0, 0))
            total = Fraction(0)
            for (a, b), mult in _multiplicities(rest):
                if a == 0:
                    continue
                total += mult * self.ordinary(delta, _replace_one(rest, (a, b), (a - 1, b)))
            return total

        # dilaton equation
        if (1, 0) in ins:
            rest = _remove_one(ins, (1, 0))
            return (len(rest) - 2) * self.ordinary(delta, rest)

        total_psi = sum(a for a, _ in ins)
        if total_psi == 0:
            return self._primary(delta, ins)

        if n >= 3:
            return self._trr(delta, ins)
        return self._grow(delta, ins)

    def _grow(self, delta, ins) -> Fraction:
        """Raise the mark count via the divisor equation solved backwards."""
        target = self.target
        d = next(
            i for i in self._divisors if self._div_pair(i, delta) > 0
        )
        pairing = self._div_pair(d, delta)
        grown = self.ordinary(delta, ins + ((0, d),))
        corrections = Fraction(0)
        for (a, b), mult in _multiplicities(ins):
            if a == 0:
                continue
            for k, coeff in self._cup_merge([d, b]):
                corrections += (
                    mult
                    * coeff
                    * self.ordinary(delta, _replace_one(ins, (a, b), (a - 1, k)))
                )
        return (grown - corrections) / pairing

    def _trr(self, delta, ins) -> Fraction:
        """Topological recursion relation stripping one psi power."""
        target = self.target
        ins_l = list(ins)
        # deterministic choice: strip from the largest decorated insertion
        lead = max(i for i in ins_l if i[0] >= 1)
        ins_l.remove(lead)
        m2 = ins_l.pop()
        m3 = ins_l.pop()
        rest = tuple(ins_l)
        a1, g1 = lead
        ginv = target.pairing_inverse()
        total = Fraction(0)
        for d1 in _splittings(delta):
            d2 = tuple(x - y for x, y in zip(delta, d1))
            for s1, s2, mult in _submultisets(rest):
                if all(x == 0 for x in d1) and len(s1) < 1:
                    continue
                side1 = ((a1 - 1, g1),) + s1
                for e in range(target.rank):
                    left = self.ordinary(d1, side1 + ((0, e),))
                    if left == 0:
                        continue
                    for f in range(target.rank):
                        if ginv[e][f] == 0:
                            continue
                        right = self.ordinary(
                            d2, ((0, f),) + (m2, m3) + s2
                        )
                        if right == 0:
                            continue
                        total += mult * left * ginv[e][f] * right
        return total

    # -- primary reconstruction -----------------------------------------

    def _primary(self, delta, ins) -> Fraction:
        """Primary invariant (no psi powers), positive class."""
        target = self.target
        # strip divisor insertions (no correction terms for primaries)
        for d in self._divisors:
            if (0, d) in ins:
                pairing = self._div_pair(d, delta)
                return pairing * self.ordinary(delta, _remove_one(ins, (0, d)))
        if len(ins) <= 2:
            seed = self._seeds.get((delta, ins))
            if seed is not None:
                return seed
            return Fraction(0)
        self._solve_primary_batch(delta, len(ins))
        key = (delta, ins)
        if key not in self._ord_cache:
            raise ReferenceError_(f"primary reconstruction failed for {key}")
        return self._ord_cache[key]

    def _alive_primary_multisets(self, delta, n) -> List[Tuple[Tuple[int, int], ...]]:
        target = self.target
        heavy = [i for i in range(target.rank) if target.codim(i) >= 2]
        out = []
        for combo in itertools.combinations_with_replacement(heavy, n):
            ins = tuple((0, b) for b in combo)
            weight = sum(target.codim(b) for b in combo)
            if weight == target.vdim(delta, n):
                out.append(ins)
        return out

    def _solve_primary_batch(self, delta, n) -> None:
        """Exact linear solve for all divisor-free primaries at (delta, n)."""
        batch = (tuple(delta), n)
        if batch in self._primary_batches:
            return
        self._primary_batches.add(batch)
        unknowns = self._alive_primary_multisets(delta, n)
        if not unknowns:
            return
        index = {u: i for i, u in enumerate(unknowns)}
        rows: List[List[Fraction]] = []
        rhs: List[Fraction] = []
        for unknown in unknowns:
            members = sorted(set(unknown))
            for gamma in members:
                rest_after_gamma = _remove_one(unknown, gamma)
                for alpha, beta in itertools.combinations_with_replacement(
                    sorted(set(rest_after_gamma)), 2
                ):
                    try:
                        rest = _remove_one(_remove_one(rest_after_gamma, alpha), beta)
                    except ValueError:
                        continue
                    for h, gp in self._decomps[gamma[1]]:
                        row, const = self._km_equation(
                            delta, h, gp, alpha[1], beta[1], rest, index
                        )
                        if any(c != 0 for c in row):
                            rows.append(row)
                            rhs.append(const)
        solution = _solve_exact(rows, rhs, len(unknowns))
        for u, i in index.items():
            if solution[i] is None:
                raise ReferenceError_(
                    f"primary system underdetermined at {delta}, {u}"
                )
            self._ord_cache[(tuple(delta), u)] = solution[i]

    def _km_equation(self, delta, h, gp, alpha, beta, rest, index):
        """One associativity relation; returns (coefficient row, constant).

        The relation compares the two bracketings of the four slots
        (T_h, T_gp, T_alpha, T_beta) with spectator insertions ``rest``:
        sum over curve splittings and mark distributions of
        <x y R1 T_e> g^{ef} <T_f z w R2>, first with (x,y,z,w) the slots in
        order, then minus the version with the outer slots swapped.  Terms
        proportional to a batch unknown go to the coefficient row; all other
        factors are strictly smaller and are evaluated recursively.
        """
        delta = tuple(delta)
        target = self.target
        ginv = target.pairing_inverse()
        row = [Fraction(0)] * len(index)
        const_box = [Fraction(0)]

        def accumulate(sign, x, y, z, w):
            for d1 in _splittings(delta):
                d2 = tuple(p - q for p, q in zip(delta, d1))
                for s1, s2, mult in _submultisets(rest):
                    for e in range(target.rank):
                        for f in range(target.rank):
                            g_ef = ginv[e][f]
                            if g_ef == 0:
                                continue
                            left = (d1, _sorted_ins(((0, x), (0, y), (0, e)) + s1))
                            right = (d2, _sorted_ins(((0, f), (0, z), (0, w)) + s2))
                            self._accumulate_product(
                                sign * mult * g_ef, left, right, row, const_box, delta, index
                            )

        accumulate(1, h, gp, alpha, beta)
        accumulate(-1, alpha, gp, h, beta)
        return row, -const_box[0]

    def _accumulate_product(self, scalar, left_key, right_key, row, const_box, delta, index):
        """Add scalar * <left> * <right> to the running equation."""
        lu = left_key[1] if (left_key[0] == delta and left_key[1] in index) else None
        ru = right_key[1] if (right_key[0] == delta and right_key[1] in index) else None
        if lu is not None and ru is not None:
            # impossible: the complementary class of a full-degree factor is zero,
            # and zero-class factors are never batch unknowns
            raise ReferenceError_("unexpected quadratic term in primary system")
        if lu is not None:
            other = self.ordinary(*right_key)
            if other != 0:
                row[index[lu]] += scalar * other
            return
        if ru is not None:
            other = self.ordinary(*left_key)
            if other != 0:
                row[index[ru]] += scalar * other
            return
        left = self.ordinary(*left_key)
        if left == 0:
            return
        const_box[0] += scalar * left * self.ordinary(*right_key)

    # -- modified psi classes ---------------------------------------------

    def modified(self, delta: Sequence[int], insertions: Iterable[Tuple[int, int]]) -> Fraction:
        """Enumerative descendant: modified psi powers, positive class."""
        delta = tuple(delta)
        if all(d == 0 for d in delta):
            ins = tuple(sorted(tuple(i) for i in insertions))
            if len(ins) != 3 or any(a for a, _ in ins):
                raise ValueError("zero-class keys are plain three-point only")
            return self._integral(b for _, b in ins)
        marks = tuple(sorted((a, 0, b) for a, b in insertions))
        return self._mixed(delta, marks)

    def _mixed(self, delta, marks: Tuple[Tuple[int, int, int], ...]) -> Fraction:
        key = (delta, marks)
        cached = self._mix_cache.get(key)
        if cached is not None:
            return cached
        value = self._mixed_uncached(delta, marks)
        self._mix_cache[key] = value
        return value

    def _mixed_uncached(self, delta, marks) -> Fraction:
        target = self.target
        n = len(marks)
        weight = sum(abar + b + target.codim(g) for abar, b, g in marks)
        if weight != target.vdim(delta, n):
            return Fraction(0)
        if all(abar == 0 for abar, _, _ in marks):
            return self.ordinary(delta, tuple((b, g) for _, b, g in marks))
        # expand one modified power: psi-bar = psi - (soft boundary sum)
        marks_l = list(marks)
        i = max(range(n), key=lambda j: marks_l[j])
        abar, b, g = marks_l[i]
        swapped = list(marks_l)
        swapped[i] = (abar - 1, b + 1, g)
        total = self._mixed(delta, tuple(sorted(swapped)))
        others = marks_l[:i] + marks_l[i + 1:]
        # soft boundary terms: choose the other marks joining i on the
        # contracted tree; the tree integral forces the ordinary powers to
        # fill dim M_{0,k+1} and contributes a multinomial
        for s1, s2, mult in _submultisets(tuple(others)):
            if len(s1) < 1:
                continue
            k = len(s1) + 1  # contracted marks including i
            b_total = b + sum(bb for _, bb, _ in s1)
            if b_total != k - 2:
                continue
            coeff = Fraction(factorial(k - 2))
            coeff /= factorial(b)
            for _, bb, _ in s1:
                coeff /= factorial(bb)
            abar_merge = (abar - 1) + sum(aa for aa, _, _ in s1)
            for merged_basis, cup_coeff in self._cup_merge(
                [g] + [gg for _, _, gg in s1]
            ):
                merged_mark = (abar_merge, 0, merged_basis)
                sub = tuple(sorted(tuple(s2) + (merged_mark,)))
                total -= (
                    mult
                    * coeff
                    * cup_coeff
                    * self._mixed(delta, sub)
                )
        return total


# -- multiset utilities ------------------------------------------------------


def _sorted_ins(ins):
    return tuple(sorted(ins))


def _remove_one(ins: tuple, item) -> tuple:
    out = list(ins)
    out.remove(item)
    return tuple(out)


def _replace_one(ins: tuple, old, new) -> tuple:
    out = list(ins)
    out.remove(old)
    out.append(new)
    return tuple(sorted(out))


def _multiplicities(ins: tuple):
    seen = {}
    for item in ins:
        seen[item] = seen.get(item, 0) + 1
    return sorted(seen.items())


def _submultisets(ins: tuple):
    """Yield (s1, s2, count) over sub-multisets of a multiset of marks."""
    items = _multiplicities(ins)
    choices = [range(m + 1) for _, m in items]
    for counts in itertools.product(*choices):
        s1 = []
        s2 = []
        weight = 1
        for (item, mult), c in zip(items, counts):
            s1.extend([item] * c)
            s2.extend([item] * (mult - c))
            weight *= _binom(mult, c)
        yield tuple(sorted(s1)), tuple(sorted(s2)), weight


def _binom(n, k):
    if k < 0 or k > n:
        return 0
    out = 1
    for i in range(k):
        out = out * (n - i) // (i + 1)
    return out


def _splittings(delta):
    """All effective d1 with d1 + d2 = delta (both parts may be zero)."""
    ranges = [range(d + 1) for d in delta]
    return [tuple(t) for t in itertools.product(*ranges)]


def _solve_exact(rows, rhs, n_unknowns):
    """Gaussian elimination over the rationals; None marks free unknowns."""
    aug = [list(r) + [v] for r, v in zip(rows, rhs)]
    pivots = {}
    row_i = 0
    for col in range(n_unknowns):
        pivot = None
        for r in range(row_i, len(aug)):
            if aug[r][col] != 0:
                pivot = r
                break
        if pivot is None:
            continue
        aug[row_i], aug[pivot] = aug[pivot], aug[row_i]
        pv = aug[row_i][col]
        aug[row_i] = [x / pv for x in aug[row_i]]
        for r in range(len(aug)):
            if r != row_i and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[row_i])]
        pivots[col] = row_i
        row_i += 1
    for r in range(row_i, len(aug)):
        if aug[r][n_unknowns] != 0 and all(x == 0 for x in aug[r][:n_unknowns]):
            raise ReferenceError_("inconsistent primary system")
    out = []
    for col in range(n_unknowns):
        if col in pivots:
            row = aug[pivots[col]]
            if any(row[c] != 0 for c in range(n_unknowns) if c != col):
                out.append(None)
            else:
                out.append(row[n_unknowns])
        else:
            out.append(None)
    return out
