"""The deforming element and the order-d tangency quantum product.

The quantum correction ("bullet") sums, over nonzero effective curve
classes and numbers of auxiliary marks, duality classes with the deforming
insertions distributed multinomially over psi powers 0..d, each cupped
with the exponential twist exp(2 z chi_1) at the output.  The contact
product adds the cup product to the correction; extending by series
linearity gives the ring structure on truncated series.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

from .classes import gw_class_with_output
from .descendants import (
    DescendantTable,
    Insertion,
    MissingKeys,
    effective_classes,
    normalize_key,
)
from .polyring import TruncatedPoly, TruncationProfile, VariableTable
from .target import CohElement, TargetModel


class DeformingElement:
    """The tuple (chi_0, ..., chi_d); chi_t vanishes for t beyond the order."""

    def __init__(self, chis: Sequence[CohElement]):
        if len(chis) < 1:
            raise ValueError("a deforming element lists chi_0..chi_d, d >= 0")
        for chi in chis:
            for poly in chi.coeffs:
                for exps in poly.terms:
                    tab = poly.table
                    if any(exps[i] for i in tab.novikov_indices) or exps[tab.z_index]:
                        raise ValueError(
                            "deforming classes must not involve q or z"
                        )
        self.chis = tuple(chis)

    @property
    def order(self) -> int:
        return len(self.chis) - 1

    def chi(self, t: int) -> Optional[CohElement]:
        """chi_t, or None when t exceeds the order (the zero class)."""
        if 0 <= t < len(self.chis):
            chi = self.chis[t]
            return None if chi.is_zero() else chi
        return None

    @classmethod
    def zero(cls, target, var_table, profile, order: int = 0) -> "DeformingElement":
        z = CohElement.zero(target, var_table, profile)
        return cls([z] * (order + 1))


def _check_generator(elem: CohElement) -> None:
    for poly in elem.coeffs:
        tab = poly.table
        for exps in poly.terms:
            if any(exps[i] for i in tab.novikov_indices) or exps[tab.z_index]:
                raise ValueError("product generators must be q- and z-free")


def bullet(
    alpha: CohElement,
    beta: CohElement,
    defelt: DeformingElement,
    table: DescendantTable,
    target: TargetModel,
    profile: TruncationProfile,
    value_fn: Optional[Callable] = None,
):
    """Quantum correction term of the order-d product.

    Returns a CohElement, or MissingKeys listing every absent invariant.
    """
    _check_generator(alpha)
    _check_generator(beta)
    var_table = alpha.table
    d = defelt.order
    z = TruncatedPoly.variable(var_table, profile, "z")
    chi1 = defelt.chi(1)
    if chi1 is None:
        twist = CohElement.basis_element(target, var_table, profile, 0)
    else:
        twist = chi1.scale_poly(z.scale(2)).exp_alg()

    core = CohElement.zero(target, var_table, profile)
    missing: Optional[MissingKeys] = None
    for delta in effective_classes(profile.q_caps):
        q_mono = TruncatedPoly.monomial(
            var_table, profile, 1,
            {var_table.variables[i].name: e
             for i, e in zip(var_table.novikov_indices, delta)},
        )
        if q_mono.is_zero():
            continue  # outside the profile (total-degree cap)
        for n in range(profile.z_cap + 1):
            zn = TruncatedPoly.variable(var_table, profile, "z", n) if n else None
            for counts in _compositions(n, d + 1):
                slots: List = [(0, alpha), (0, beta)]
                weight = Fraction(1)
                dead = False
                for t, n_t in enumerate(counts):
                    if n_t == 0:
                        continue
                    chi_t = defelt.chi(t)
                    if chi_t is None:
                        dead = True
                        break
                    slots.extend([(t, chi_t)] * n_t)
                    weight /= _factorial(n_t)
                if dead:
                    continue
                cls = gw_class_with_output(
                    table, target, delta, slots, twist, var_table, profile,
                    value_fn=value_fn,
                )
                if isinstance(cls, MissingKeys):
                    missing = cls if missing is None else missing.union(cls)
                    continue
                if cls.is_zero():
                    continue
                scalar = q_mono.scale(weight)
                if zn is not None:
                    scalar = scalar * zn
                core = core + cls.scale_poly(scalar)
    if missing is not None:
        return missing
    return core


def contact(
    alpha: CohElement,
    beta: CohElement,
    defelt: DeformingElement,
    table: DescendantTable,
    target: TargetModel,
    profile: TruncationProfile,
    value_fn: Optional[Callable] = None,
):
    """Order-d tangency quantum product: cup product plus the correction."""
    b = bullet(alpha, beta, defelt, table, target, profile, value_fn=value_fn)
    if isinstance(b, MissingKeys):
        return b
    return alpha.cup(beta) + b


def contact_series(
    a_series: CohElement,
    b_series: CohElement,
    defelt: DeformingElement,
    table: DescendantTable,
    target: TargetModel,
    profile: TruncationProfile,
    cache: Optional[dict] = None,
    value_fn: Optional[Callable] = None,
):
    """Series-linear extension: expand over the basis, recombine scalars."""
    var_table = a_series.table
    n = target.rank
    result = CohElement.zero(target, var_table, profile)
    missing: Optional[MissingKeys] = None
    for i in range(n):
        ai = a_series.coeffs[i]
        if ai.is_zero():
            continue
        for j in range(n):
            bj = b_series.coeffs[j]
            if bj.is_zero():
                continue
            prod = _basis_contact(
                i, j, defelt, table, target, profile, var_table, cache, value_fn
            )
            if isinstance(prod, MissingKeys):
                missing = prod if missing is None else missing.union(prod)
                continue
            result = result + prod.scale_poly(ai * bj)
    if missing is not None:
        return missing
    return result


def _basis_contact(i, j, defelt, table, target, profile, var_table, cache, value_fn):
    key = (i, j) if i <= j else (j, i)
    if cache is not None and key in cache:
        return cache[key]
    ti = CohElement.basis_element(target, var_table, profile, key[0])
    tj = CohElement.basis_element(target, var_table, profile, key[1])
    out = contact(ti, tj, defelt, table, target, profile, value_fn=value_fn)
    if cache is not None:
        cache[key] = out
    return out


def demanded_keys(
    target: TargetModel,
    d: int,
    q_caps: Sequence[int],
    z_budget: int,
    table: Optional[DescendantTable] = None,
):
    """Every table key the order-d product can request within the caps.

    Keys have three plain ring insertions plus up to ``z_budget`` deforming
    marks with psi power at most d; structurally-zero keys are omitted.
    """
    probe = table if table is not None else DescendantTable(target)
    n = target.rank
    mark_types = [
        (t, b)
        for t in range(d + 1)
        for b in range(n)
        if not (t == 0 and b == 0)
    ]
    plain_types = list(range(1, n))
    out = set()
    for delta in effective_classes(q_caps):
        for trio in itertools.combinations_with_replacement(plain_types, 3):
            base = [Insertion(0, b) for b in trio]
            for size in range(z_budget + 1):
                for marks in itertools.combinations_with_replacement(mark_types, size):
                    ins = base + [Insertion(a, b) for a, b in marks]
                    key = normalize_key(delta, ins)
                    if not probe.forced_zero(key):
                        out.add(key)
    return sorted(out)


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


_FACT = [1]


def _factorial(n: int) -> int:
    while len(_FACT) <= n:
        _FACT.append(_FACT[-1] * len(_FACT))
    return _FACT[n]
