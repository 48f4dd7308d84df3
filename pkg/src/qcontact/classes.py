"""Cohomology-valued descendant classes via Poincare duality.

A class is reconstructed from its pairings against the basis: the value
paired with T_k is a table invariant, and the dual pairing matrix turns
the vector of pairings back into a cohomology element.  An insertion at
the output mark with no psi content factors out as a cup product.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

from .descendants import DescendantTable, MissingKeys
from .polyring import TruncatedPoly, TruncationProfile, VariableTable
from .target import CohElement, TargetModel


def gw_class(
    table: DescendantTable,
    target: TargetModel,
    delta: Sequence[int],
    inputs: Sequence,
    var_table: VariableTable,
    profile: TruncationProfile,
    value_fn: Optional[Callable] = None,
):
    """The unique class pairing against every T_k as the table prescribes.

    ``inputs`` is a list of decorated insertions ``(a, CohElement)`` (or
    slot option lists, as in multilinear_eval).  Returns a CohElement, or
    MissingKeys when needed invariants are absent.
    """
    delta = tuple(delta)
    if all(d == 0 for d in delta):
        plain = [i for i in inputs if isinstance(i, tuple)]
        if len(inputs) != 2 or len(plain) != 2 or any(a != 0 for a, _ in plain):
            raise ValueError(
                "the zero class takes exactly two plain inputs (the output "
                "mark supplies the third)"
            )
    ginv = target.pairing_inverse()
    n = target.rank
    pairings = table.eval_with_probes(delta, list(inputs), value_fn=value_fn)
    if isinstance(pairings, MissingKeys):
        return pairings
    coeffs = [TruncatedPoly.zero(var_table, profile) for _ in range(n)]
    for k in range(n):
        if pairings[k].is_zero():
            continue
        for l in range(n):
            if ginv[k][l]:
                coeffs[l] = coeffs[l] + pairings[k].scale(ginv[k][l])
    return CohElement(target, coeffs)


def gw_class_with_output(
    table: DescendantTable,
    target: TargetModel,
    delta: Sequence[int],
    inputs: Sequence,
    omega: CohElement,
    var_table: VariableTable,
    profile: TruncationProfile,
    value_fn: Optional[Callable] = None,
):
    """Class with a pure-cohomology output insertion: cup the duality class."""
    base = gw_class(table, target, delta, inputs, var_table, profile, value_fn)
    if isinstance(base, MissingKeys):
        return base
    return base.cup(omega)
