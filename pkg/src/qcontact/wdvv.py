"""Associativity verification and the invariant-solving recursion.

``assoc_residual`` compares the two bracketings of a triple product; it
vanishes identically whenever the table is complete and consistent through
the truncation profile.  ``solve`` runs the identity backwards: missing
invariants become placeholder parameters, the residual is computed once
with fully symbolic deformation coefficients, and every coefficient of a
monomial in (q, z, parameters) is one exact equation.  Equations linear in
the remaining placeholders are eliminated by exact Gaussian steps, degree
by degree, until the demanded table closure is complete.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .contact import DeformingElement, contact, contact_series, demanded_keys
from .descendants import (
    DescendantKey,
    DescendantTable,
    MissingKeys,
    Unknown,
    Value,
    effective_classes,
)
from .polyring import TruncatedPoly, TruncationProfile, VariableTable
from .target import CohElement, TargetModel


class InconsistentSystemError(RuntimeError):
    """The associativity equations contradict the stored data."""


class UnderdeterminedError(RuntimeError):
    """The equations do not pin every demanded invariant."""

    def __init__(self, missing: Sequence[DescendantKey]):
        self.missing = tuple(missing)
        super().__init__(
            f"{len(self.missing)} demanded keys remain unknown: "
            + ", ".join(repr(k) for k in self.missing[:8])
            + ("..." if len(self.missing) > 8 else "")
        )


def assoc_residual(
    alpha: CohElement,
    beta: CohElement,
    gamma: CohElement,
    defelt: DeformingElement,
    table: DescendantTable,
    target: TargetModel,
    profile: TruncationProfile,
    cache: Optional[dict] = None,
    value_fn=None,
):
    """(alpha * beta) * gamma minus alpha * (beta * gamma)."""
    if cache is None:
        cache = {}
    ab = contact_series(
        alpha, beta, defelt, table, target, profile, cache=cache, value_fn=value_fn
    )
    bc = contact_series(
        beta, gamma, defelt, table, target, profile, cache=cache, value_fn=value_fn
    )
    missing = None
    if isinstance(ab, MissingKeys):
        missing = ab
    if isinstance(bc, MissingKeys):
        missing = bc if missing is None else missing.union(bc)
    if missing is None:
        abc = contact_series(
            ab, gamma, defelt, table, target, profile, cache=cache, value_fn=value_fn
        )
        a_bc = contact_series(
            alpha, bc, defelt, table, target, profile, cache=cache, value_fn=value_fn
        )
        if isinstance(abc, MissingKeys):
            missing = abc
        if isinstance(a_bc, MissingKeys):
            missing = a_bc if missing is None else missing.union(a_bc)
        if missing is None:
            return abc - a_bc
    return missing


class VerifyReport:
    """Line-oriented result of the ring-axiom checks."""

    def __init__(self):
        self.lines: List[str] = []
        self.failures = 0
        self.missing: set = set()

    def record(self, name: str, ok: bool, detail: str = ""):
        status = "PASS" if ok else "FAIL"
        if not ok:
            self.failures += 1
        self.lines.append(f"{status} {name}" + (f": {detail}" if detail else ""))

    def record_missing(self, name: str, keys):
        self.missing.update(keys)
        self.lines.append(f"MISSING {name}: {len(keys)} keys unavailable")

    @property
    def passed(self) -> bool:
        return self.failures == 0 and not self.missing

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def verify_suite(
    target: TargetModel,
    defelt: DeformingElement,
    table: DescendantTable,
    profile: TruncationProfile,
    var_table: VariableTable,
) -> VerifyReport:
    """Identity, commutativity, and associativity over all basis tuples."""
    report = VerifyReport()
    n = target.rank
    cache: dict = {}
    basis = [
        CohElement.basis_element(target, var_table, profile, i) for i in range(n)
    ]
    names = [target.basis[i].name for i in range(n)]
    for j in range(n):
        result = contact(basis[0], basis[j], defelt, table, target, profile)
        if isinstance(result, MissingKeys):
            report.record_missing(f"identity 1*{names[j]}", result.keys)
            continue
        report.record(
            f"identity 1*{names[j]}",
            result == basis[j],
            "" if result == basis[j] else f"got {result.render()}",
        )
    for i in range(n):
        for j in range(i, n):
            left = contact(basis[i], basis[j], defelt, table, target, profile)
            right = contact(basis[j], basis[i], defelt, table, target, profile)
            name = f"commutativity {names[i]}*{names[j]}"
            if isinstance(left, MissingKeys) or isinstance(right, MissingKeys):
                keys = set()
                if isinstance(left, MissingKeys):
                    keys |= left.keys
                if isinstance(right, MissingKeys):
                    keys |= right.keys
                report.record_missing(name, keys)
                continue
            report.record(name, left == right)
    for i in range(n):
        for k in range(i + 1, n):
            for j in range(n):
                name = f"associativity ({names[i]}*{names[j]})*{names[k]}"
                residual = assoc_residual(
                    basis[i], basis[j], basis[k], defelt, table, target, profile,
                    cache=cache,
                )
                if isinstance(residual, MissingKeys):
                    report.record_missing(name, residual.keys)
                    continue
                ok = residual.is_zero()
                report.record(
                    name, ok, "" if ok else f"residual {residual.render()}"
                )
    return report


def residual_leading_q_degree(residual: CohElement) -> Optional[int]:
    """Smallest total q-degree carrying a nonzero term, if any."""
    best = None
    for poly in residual.coeffs:
        tab = poly.table
        for exps in poly.terms:
            deg = sum(exps[i] for i in tab.novikov_indices)
            if best is None or deg < best:
                best = deg
    return best


# -- the solver -------------------------------------------------------------


class SolveResult:
    def __init__(self):
        self.solved: List[Tuple[DescendantKey, Fraction]] = []
        self.log: List[str] = []

    def text(self) -> str:
        return "\n".join(self.log) + ("\n" if self.log else "")


def default_harvest_marks(target: TargetModel, q_caps: Sequence[int]) -> int:
    """Marks needed so every divisor-free key within caps can be reached.

    Divisor-free keys have per-insertion dimension excess at least one, so
    their size is bounded by the total excess budget of the class.
    """
    best = 0
    for delta in effective_classes(q_caps):
        budget = target.vdim(delta, 3) - 3
        best = max(best, budget)
    return max(0, best - 3)


def solve(
    target: TargetModel,
    d: int,
    profile: TruncationProfile,
    table: DescendantTable,
    harvest_marks: Optional[int] = None,
) -> SolveResult:
    """Complete the table through the profile by the associativity recursion.

    Iterates total q-degrees ascending.  At each stage, still-unknown
    invariants up to that degree become placeholder parameters, the residual
    over all basis triples is computed with fully symbolic deformation
    coefficients and the stage's total-degree cut, and every monomial
    coefficient becomes one exact equation.  Equations are kept across
    stages (keyed by invariant, not placeholder index) and eliminated by
    exact Gaussian rounds; products of two unknowns defer an equation until
    one factor is determined.  Fails loudly on contradiction; reports
    demanded keys it cannot determine.
    """
    result = SolveResult()
    if harvest_marks is None:
        harvest_marks = profile.z_cap
    # the contract is the profile closure; the harvest may reach further
    demanded = demanded_keys(target, d, profile.q_caps, profile.z_cap, table)
    reachable = demanded_keys(target, d, profile.q_caps, harvest_marks, table)
    if all(not isinstance(table.lookup(k), Unknown) for k in demanded):
        result.log.append("table already complete; nothing to solve")
        return result

    pool: List[Dict[tuple, Fraction]] = []
    seen_eqs: set = set()
    mention_count: Dict[DescendantKey, int] = {}
    max_degree = sum(profile.q_caps)
    for stage in range(2, max_degree + 1):
        # equations at one q-monomial only involve unknowns of that exact
        # class at top degree, so each class is harvested independently
        for delta in effective_classes(profile.q_caps):
            if sum(delta) != stage:
                continue
            shard_unknowns = sorted(
                k
                for k in reachable
                if all(a <= b for a, b in zip(k.delta, delta))
                and isinstance(table.lookup(k), Unknown)
            )
            if shard_unknowns:
                _harvest_stage(
                    target, d, profile, table, delta, harvest_marks,
                    shard_unknowns, pool, seen_eqs,
                )
            _eliminate(pool, table, result, mention_count)

    still_missing = [
        k for k in demanded if isinstance(table.lookup(k), Unknown)
    ]
    if still_missing:
        raise UnderdeterminedError(still_missing)
    return result


def _harvest_stage(
    target, d, profile, table, shard_delta, harvest_marks, unknowns, pool, seen_eqs
):
    """Append one class shard's residual-coefficient equations to the pool.

    Equations are maps from monomials in table keys (tuples of (key, power))
    to rational coefficients; the empty monomial is the constant part.
    """
    stage = sum(shard_delta)
    chi_params = [f"c{t}_{i}" for t in range(d + 1) for i in range(target.rank)]
    u_params = [f"u{i}" for i in range(len(unknowns))]
    var_table = VariableTable.build(target.curve_rank, chi_params + u_params)
    # coefficients beyond the deepest unknown's mark count are known-only
    stage_marks = max(
        (len(k.insertions) - 3 for k in unknowns), default=0
    )
    stage_marks = min(harvest_marks, stage_marks)
    stage_profile = TruncationProfile(
        shard_delta, stage_marks, None, q_total_cap=stage
    )
    u_index = {key: i for i, key in enumerate(unknowns)}
    u_offset = len(var_table) - len(u_params)
    u_polys = [
        TruncatedPoly.variable(var_table, stage_profile, name)
        for name in u_params
    ]

    def value_fn(key):
        found = table.lookup(key)
        if isinstance(found, Unknown):
            idx = u_index.get(key)
            if idx is None:
                raise InconsistentSystemError(f"unexpected key {key!r}")
            return Value(u_polys[idx])
        return found

    chis = [
        CohElement(
            target,
            [
                TruncatedPoly.variable(var_table, stage_profile, f"c{t}_{i}")
                for i in range(target.rank)
            ],
        )
        for t in range(d + 1)
    ]
    defelt = DeformingElement(chis)
    cache: dict = {}
    n = target.rank
    basis = [
        CohElement.basis_element(target, var_table, stage_profile, i)
        for i in range(n)
    ]
    raw: Dict[tuple, Dict[tuple, Fraction]] = {}
    for i in range(1, n):
        for k in range(i + 1, n):
            for j in range(1, n):
                residual = assoc_residual(
                    basis[i], basis[j], basis[k], defelt, table, target,
                    stage_profile, cache=cache, value_fn=value_fn,
                )
                if isinstance(residual, MissingKeys):
                    raise InconsistentSystemError(
                        "placeholder lookup failed during harvest"
                    )
                for comp, poly in enumerate(residual.coeffs):
                    for exps, coeff in poly.terms.items():
                        u_part = []
                        base_part = list(exps)
                        for rel in range(len(u_params)):
                            p = exps[u_offset + rel]
                            if p:
                                u_part.append((unknowns[rel], p))
                                base_part[u_offset + rel] = 0
                        eq_key = (comp, i, j, k, tuple(base_part))
                        eq = raw.setdefault(eq_key, {})
                        mono = tuple(sorted(u_part))
                        eq[mono] = eq.get(mono, Fraction(0)) + coeff
    for eq_key in sorted(raw):
        eq = {m: c for m, c in raw[eq_key].items() if c != 0}
        if not eq:
            continue
        fingerprint = tuple(sorted(eq.items()))
        if fingerprint in seen_eqs:
            continue
        seen_eqs.add(fingerprint)
        pool.append(eq)


def _eliminate(pool, table, result: SolveResult, mention_count):
    """Exact elimination rounds over the accumulated equations."""
    while True:
        rows = []
        for eq in pool:
            reduced = _substitute(eq, table)
            if reduced is None:
                continue
            const, linear = reduced
            if not linear:
                if const != 0:
                    raise InconsistentSystemError(
                        f"contradictory equation: 0 = {const}"
                    )
                continue
            rows.append((linear, -const))
        if not rows:
            return
        solved_now = _gauss_round(rows, mention_count)
        if not solved_now:
            return
        for key, value in solved_now:
            mentions = mention_count.get(key, 1)
            table.insert(key, value, "solved")
            result.solved.append((key, value))
            result.log.append(
                f"{_key_text(table.target, key)} = {value} "
                f"(from {mentions} equations, {max(0, mentions - 1)} redundant)"
            )


def _substitute(eq, table):
    """Split an equation into (constant, {key: coeff}) if currently linear."""
    const = Fraction(0)
    linear: Dict[DescendantKey, Fraction] = {}
    for mono, coeff in eq.items():
        value = coeff
        pending = []
        for key, power in mono:
            found = table.lookup(key)
            if isinstance(found, Value):
                value *= found.value ** power
            else:
                pending.extend([key] * power)
        if not pending:
            const += value
        elif len(pending) == 1:
            if value != 0:
                linear[pending[0]] = linear.get(pending[0], Fraction(0)) + value
        else:
            return None  # still nonlinear; retry after more values land
    linear = {k: c for k, c in linear.items() if c != 0}
    return const, linear


def _gauss_round(rows, mention_count):
    """One exact elimination sweep; returns the list of pinned (key, value)."""
    cols = sorted({k for linear, _ in rows for k in linear})
    col_pos = {c: i for i, c in enumerate(cols)}
    matrix = []
    for linear, rhs in rows:
        row = [Fraction(0)] * len(cols)
        for k, c in linear.items():
            row[col_pos[k]] = c
        row.append(rhs)
        matrix.append(row)
        for k in linear:
            mention_count[k] = mention_count.get(k, 0) + 1
    n_cols = len(cols)
    row_i = 0
    pivots = {}
    for col in range(n_cols):
        pivot = next(
            (r for r in range(row_i, len(matrix)) if matrix[r][col] != 0), None
        )
        if pivot is None:
            continue
        matrix[row_i], matrix[pivot] = matrix[pivot], matrix[row_i]
        pv = matrix[row_i][col]
        matrix[row_i] = [x / pv for x in matrix[row_i]]
        for r in range(len(matrix)):
            if r != row_i and matrix[r][col] != 0:
                f = matrix[r][col]
                matrix[r] = [x - f * y for x, y in zip(matrix[r], matrix[row_i])]
        pivots[col] = row_i
        row_i += 1
    for r in range(row_i, len(matrix)):
        if matrix[r][n_cols] != 0:
            raise InconsistentSystemError(
                f"contradictory linear system: 0 = {matrix[r][n_cols]}"
            )
    solved = []
    for col, r in pivots.items():
        row = matrix[r]
        if all(row[c] == 0 for c in range(n_cols) if c != col):
            solved.append((cols[col], row[n_cols]))
    return solved


def _key_text(target, key) -> str:
    delta = ",".join(str(x) for x in key.delta)
    ins = ";".join(f"{a}:{target.basis[b].name}" for a, b in key.insertions)
    return f"delta=<{delta}> ins=<{ins}>"
