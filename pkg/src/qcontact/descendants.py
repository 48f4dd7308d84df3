"""Canonical store of enumerative descendant invariants.

Keys are a curve class plus a sorted multiset of insertions (power of the
modified psi class, basis index).  Lookup applies, in order: the dimension
filter, fundamental-class vanishing for positive classes, and direct
three-point evaluation at the zero class; only then the stored table.
``Unknown`` is an explicit result so the recursion engine can target
missing entries.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence, Tuple, Union

from .polyring import TruncatedPoly
from .target import CohElement, TargetModel

PROVENANCES = ("base", "ingested", "solved")


class DegenerateKeyError(ValueError):
    """A zero-class key that is not a plain three-point insertion."""


class ConsistencyError(ValueError):
    """Two data sources disagree about the value of one invariant."""


class Insertion(tuple):
    """One mark: (a, basis_index) with a = power of the modified psi class."""

    __slots__ = ()

    def __new__(cls, a: int, basis: int):
        if a < 0:
            raise ValueError("psi power must be nonnegative")
        return super().__new__(cls, (a, basis))

    @property
    def a(self) -> int:
        return self[0]

    @property
    def basis(self) -> int:
        return self[1]

    def __repr__(self) -> str:
        return f"Insertion(a={self[0]}, basis={self[1]})"


class DescendantKey(tuple):
    """Normalized key: (delta tuple, sorted insertion tuple)."""

    __slots__ = ()

    def __new__(cls, delta: Tuple[int, ...], insertions: Tuple[Insertion, ...]):
        return super().__new__(cls, (tuple(delta), tuple(insertions)))

    @property
    def delta(self) -> Tuple[int, ...]:
        return self[0]

    @property
    def insertions(self) -> Tuple[Insertion, ...]:
        return self[1]

    def __repr__(self) -> str:
        ins = " ".join(f"t{a}({b})" for a, b in self.insertions)
        return f"<key d={','.join(map(str, self.delta))} {ins}>"


def normalize_key(delta: Sequence[int], insertions: Iterable[Tuple[int, int]]) -> DescendantKey:
    """Sorted canonical key; rejects degenerate zero-class shapes."""
    delta = tuple(int(d) for d in delta)
    if any(d < 0 for d in delta):
        raise ValueError(f"not an effective class: {delta}")
    items = list(insertions)
    if all(isinstance(i, Insertion) for i in items):
        ins = tuple(sorted(items))
    else:
        ins = tuple(sorted(Insertion(a, b) for a, b in items))
    if not any(delta):
        if len(ins) != 3 or any(i[0] != 0 for i in ins):
            raise DegenerateKeyError(
                "the zero class supports exactly three plain insertions"
            )
    return DescendantKey(delta, ins)


# -- lookup results ---------------------------------------------------------


class Zero:
    """Forced to vanish by a structural rule."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "Zero"


class Value:
    __slots__ = ("value",)

    def __init__(self, value: Fraction):
        self.value = value

    def __repr__(self) -> str:
        return f"Value({self.value})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Value) and self.value == other.value


class Unknown:
    """Not forced to vanish and not present in the table."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "Unknown"


ZERO = Zero()
UNKNOWN = Unknown()

LookupResult = Union[Zero, Value, Unknown]


class DescendantTable:
    """Mutable single-writer store of invariant values.

    ``dimension_filter`` may be switched off for debugging; all shipped
    data and the solver assume it on.
    """

    def __init__(self, target: TargetModel, dimension_filter: bool = True):
        self.target = target
        self.dimension_filter = dimension_filter
        self.entries: dict = {}

    def copy(self) -> "DescendantTable":
        out = DescendantTable(self.target, self.dimension_filter)
        out.entries = dict(self.entries)
        return out

    # -- rules ---------------------------------------------------------

    def forced_zero(self, key: DescendantKey) -> bool:
        """True when a structural rule pins the key to zero."""
        target = self.target
        delta, ins = key.delta, key.insertions
        positive = any(delta)
        if self.dimension_filter:
            excess = sum(a + target.codim(b) - 1 for a, b in ins)
            if excess != target.vdim_base(delta):
                return True
        if positive and any(a == 0 and b == 0 for a, b in ins):
            return True
        return False

    def lookup(self, key: DescendantKey) -> LookupResult:
        if self.forced_zero(key):
            return ZERO
        if not any(key.delta):
            i, j, k = (ins.basis for ins in key.insertions)
            return Value(self.target.triple_integral(i, j, k))
        entry = self.entries.get(key)
        if entry is None:
            return UNKNOWN
        return Value(entry[0])

    # -- writes ----------------------------------------------------------

    def insert(self, key: DescendantKey, value, provenance: str) -> "DescendantTable":
        if provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {provenance!r}")
        value = Fraction(value)
        if self.forced_zero(key):
            raise ConsistencyError(f"{key!r} is forced to zero by rule")
        if not any(key.delta):
            raise ConsistencyError("zero-class values are computed, never stored")
        existing = self.entries.get(key)
        if existing is not None and existing[0] != value:
            raise ConsistencyError(
                f"conflicting values for {key!r}: {existing[0]} vs {value}"
            )
        self.entries[key] = (value, provenance)
        return self

    # -- persistence -------------------------------------------------------

    def persist(self) -> str:
        """Deterministic line format, sorted by key."""
        lines = []
        for key in sorted(self.entries):
            value, src = self.entries[key]
            delta = ",".join(str(d) for d in key.delta)
            ins = ";".join(
                f"{a}:{self.target.basis[b].name}" for a, b in key.insertions
            )
            lines.append(f"delta=<{delta}> ins=<{ins}> val={_frac_text(value)} src={src}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def ingest(cls, target: TargetModel, stream: str) -> "DescendantTable":
        table = cls(target)
        table.ingest_into(stream)
        return table

    def ingest_into(self, stream: str, provenance: Optional[str] = None) -> "DescendantTable":
        for lineno, raw in enumerate(stream.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                fields = dict(part.split("=", 1) for part in line.split())
                delta = tuple(int(d) for d in fields["delta"].strip("<>").split(","))
                ins = []
                body = fields["ins"].strip("<>")
                if body:
                    for item in body.split(";"):
                        a, _, name = item.partition(":")
                        ins.append((int(a), self.target.basis_index(name)))
                value = Fraction(fields["val"])
                src = provenance or fields.get("src", "ingested")
            except (KeyError, ValueError, ZeroDivisionError) as exc:
                raise ValueError(f"line {lineno}: cannot parse {raw!r} ({exc})") from None
            self.insert(normalize_key(delta, ins), value, src)
        return self

    # -- evaluation --------------------------------------------------------

    def multilinear_eval(
        self,
        delta: Sequence[int],
        slots: Sequence,
        value_fn: Optional[Callable[[DescendantKey], LookupResult]] = None,
    ):
        """Expand general-class slots over the basis and sum weighted lookups.

        Each slot is either a pair ``(a, CohElement)`` or a list of such
        pairs (a formal sum of decorated insertions).  Coefficients may be
        scalars or PARAM polynomials; the result is a TruncatedPoly, or
        MissingKeys if any needed entry is absent.  ``value_fn`` overrides
        the table lookup (the solver injects placeholder unknowns this way).
        """
        result = self._expand_eval(delta, slots, value_fn, probes=False)
        if isinstance(result, MissingKeys):
            return result
        return result[0]

    def eval_with_probes(
        self,
        delta: Sequence[int],
        slots: Sequence,
        value_fn: Optional[Callable[[DescendantKey], LookupResult]] = None,
    ):
        """multilinear_eval with one extra plain basis insertion per probe.

        Returns a list indexed by the probe's basis class: each entry is the
        evaluation of the slots together with one plain insertion of that
        class.  The slot expansion is shared across probes.
        """
        return self._expand_eval(delta, slots, value_fn, probes=True)

    def _expand_eval(self, delta, slots, value_fn, probes: bool):
        """Shared multiset expansion over slot options.

        Runs of identical slots expand as multisets with multinomial
        weights, and branches whose dimension excess cannot reach the
        filter's budget are pruned before any key is built.
        """
        if value_fn is None:
            value_fn = self.lookup
        target = self.target
        groups = []  # [multiplicity, [(Insertion, excess, coeff-poly), ...]]
        some_poly = None
        for slot in slots:
            if isinstance(slot, tuple):
                slot = [slot]
            opts = []
            for a, elem in slot:
                for idx, coeff in enumerate(elem.coeffs):
                    if coeff.is_zero():
                        continue
                    some_poly = coeff
                    opts.append(
                        (Insertion(a, idx), a + target.codim(idx) - 1, coeff)
                    )
            if groups and groups[-1][1] == opts:
                groups[-1][0] += 1
            else:
                groups.append([1, opts])
        if some_poly is None:
            raise ValueError("multilinear evaluation needs a nonzero slot")
        table_, profile = some_poly.table, some_poly.profile
        delta = tuple(delta)
        positive = any(delta)
        budget = target.vdim_base(delta)
        n_out = target.rank if probes else 1
        totals = [TruncatedPoly.zero(table_, profile) for _ in range(n_out)]
        missing: set = set()
        one = TruncatedPoly.const(table_, profile, 1)
        prune = self.dimension_filter

        # bounds on the excess the remaining groups can still contribute
        n_groups = len(groups)
        rem_min = [0] * (n_groups + 1)
        rem_max = [0] * (n_groups + 1)
        for gi in range(n_groups - 1, -1, -1):
            mult, opts = groups[gi]
            exs = [e for _, e, _ in opts]
            rem_min[gi] = rem_min[gi + 1] + (mult * min(exs) if exs else 0)
            rem_max[gi] = rem_max[gi + 1] + (mult * max(exs) if exs else 0)
        if probes:
            probe_opts = [
                (k, target.codim(k) - 1)
                for k in range(target.rank)
                if not (positive and target.codim(k) == 0)
            ]
            probe_lo = min(e for _, e in probe_opts)
            probe_hi = max(e for _, e in probe_opts)
        else:
            probe_lo = probe_hi = 0

        def finish(ins_acc: tuple, excess: int, weight: TruncatedPoly):
            if probes:
                for k, pe in probe_opts:
                    if prune and excess + pe != budget:
                        continue
                    try:
                        key = normalize_key(delta, ins_acc + (Insertion(0, k),))
                    except DegenerateKeyError:
                        continue
                    result = value_fn(key)
                    if isinstance(result, Zero):
                        continue
                    if isinstance(result, Unknown):
                        missing.add(key)
                        continue
                    value = result.value
                    if isinstance(value, TruncatedPoly):
                        totals[k] = totals[k] + weight * value
                    else:
                        totals[k] = totals[k] + weight.scale(value)
            else:
                if prune and excess != budget:
                    return
                try:
                    key = normalize_key(delta, ins_acc)
                except DegenerateKeyError:
                    return
                result = value_fn(key)
                if isinstance(result, Zero):
                    return
                if isinstance(result, Unknown):
                    missing.add(key)
                    return
                value = result.value
                if isinstance(value, TruncatedPoly):
                    totals[0] = totals[0] + weight * value
                else:
                    totals[0] = totals[0] + weight.scale(value)

        def expand(gi: int, ins_acc: tuple, excess: int, weight: TruncatedPoly):
            if gi == n_groups:
                finish(ins_acc, excess, weight)
                return
            mult, opts = groups[gi]
            for counts in _compositions(mult, len(opts)):
                ex = excess
                for c, (_, e, _) in zip(counts, opts):
                    ex += c * e
                if prune and (
                    ex + rem_min[gi + 1] > budget - probe_lo
                    or ex + rem_max[gi + 1] < budget - probe_hi
                ):
                    continue
                w = weight.scale(_multinomial(mult, counts))
                ins = list(ins_acc)
                for c, (insertion, _, coeff) in zip(counts, opts):
                    if c == 0:
                        continue
                    ins.extend([insertion] * c)
                    for _ in range(c):
                        w = w * coeff
                    if w.is_zero():
                        break
                if w.is_zero():
                    continue
                expand(gi + 1, tuple(ins), ex, w)

        expand(0, (), 0, one)
        if missing:
            return MissingKeys(frozenset(missing))
        return totals


class MissingKeys:
    """Marker carrying the set of table keys a computation still needs."""

    __slots__ = ("keys",)

    def __init__(self, keys: frozenset):
        self.keys = keys

    def union(self, other: "MissingKeys") -> "MissingKeys":
        return MissingKeys(self.keys | other.keys)

    def __repr__(self) -> str:
        return f"MissingKeys({len(self.keys)} keys)"


# -- effective classes and base data ----------------------------------------


def effective_classes(q_caps: Sequence[int]):
    """Nonzero effective classes within caps, ascending by total degree."""
    ranges = [range(c + 1) for c in q_caps]
    classes = [d for d in itertools.product(*ranges) if any(d)]
    classes.sort(key=lambda d: (sum(d), d))
    return classes


def alive_keys(
    target: TargetModel,
    delta: Sequence[int],
    a_max: int,
    max_size: int,
):
    """All keys at ``delta`` passing the structural rules, up to max_size marks.

    Enumerates by per-insertion dimension excess (psi power plus codim minus
    one), which the filter pins to a fixed total, so the walk stays small.
    """
    delta = tuple(delta)
    budget = target.vdim(delta, 3) - 3  # excess total, independent of size
    types = []
    for a in range(a_max + 1):
        for b in range(target.rank):
            if a == 0 and b == 0:
                continue  # killed for positive classes
            types.append(((a, b), a + target.codim(b) - 1))
    positive = [(t, e) for t, e in types if e > 0]
    neutral = [t for t, e in types if e == 0]
    out = []

    def pad(core: tuple, start: int, room: int):
        out.append(core)
        for i in range(start, len(neutral)):
            if room <= 0:
                break
            for extra in range(1, room + 1):
                pad(core + (neutral[i],) * extra, i + 1, room - extra)

    def walk(i: int, left: int, acc: tuple):
        if left == 0:
            if len(acc) <= max_size:
                pad(acc, 0, max_size - len(acc))
            return
        if i == len(positive):
            return
        (t, e) = positive[i]
        walk(i + 1, left, acc)
        most = min(left // e, max_size - len(acc))
        for c in range(1, most + 1):
            if len(acc) + c <= max_size:
                walk(i + 1, left - c * e, acc + (t,) * c)

    if budget >= 0:
        walk(0, budget, ())
    keys = []
    for ins in out:
        key = normalize_key(delta, ins)
        if len(key.insertions) <= max_size:
            keys.append(key)
    return sorted(set(keys))


def recursion_reachable(target: TargetModel, key: DescendantKey) -> bool:
    """Whether the associativity recursion can determine a key.

    At minimal degree there are no nontrivial splittings, so nothing is
    determined.  At higher degree the linearized equations pin a key only
    through the relation whose three displayed ring slots all carry plain
    insertions of codimension at least two; keys with fewer such insertions
    sit in the kernel of the linearized system and must ship as base data.
    """
    if sum(key.delta) <= 1:
        return False
    heavy = sum(
        1 for a, b in key.insertions if a == 0 and target.codim(b) >= 2
    )
    return heavy >= 3


def populate_base(
    table: DescendantTable,
    a_max: int,
    q_caps: Sequence[int],
    max_marks: int,
) -> DescendantTable:
    """Insert reference-computed base data the recursion cannot reach.

    Covers every structurally-alive key of minimal degree, and keys at
    higher degree whose shape the recursion cannot produce, with psi powers
    up to ``a_max`` and up to ``max_marks`` deforming marks beyond the three
    ring insertions.
    """
    from .gwref import ReferenceEvaluator

    ref = ReferenceEvaluator(table.target)
    max_size = max_marks + 3
    for delta in effective_classes(q_caps):
        for key in alive_keys(table.target, delta, a_max, max_size):
            if recursion_reachable(table.target, key):
                continue
            if key in table.entries:
                continue
            value = ref.modified(delta, [(a, b) for a, b in key.insertions])
            table.insert(key, value, "base")
    return table


def _frac_text(value: Fraction) -> str:
    return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"


def _compositions(total: int, parts: int):
    """All tuples of ``parts`` nonnegative integers summing to ``total``."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def _multinomial(total: int, counts: Sequence[int]) -> int:
    out = 1
    remaining = total
    for c in counts:
        out *= _binomial(remaining, c)
        remaining -= c
    return out


def _binomial(n: int, k: int) -> int:
    if k < 0 or k > n:
        return 0
    out = 1
    for i in range(k):
        out = out * (n - i) // (i + 1)
    return out
