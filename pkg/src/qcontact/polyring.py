"""Exact sparse multivariate polynomials with graded truncation.

Every scalar in the engine is a ``TruncatedPoly``: a sparse map from
exponent tuples to ``fractions.Fraction``, carrying a ``TruncationProfile``
that caps the exponents.  Variables are grouped:

  * NOVIKOV  -- one variable per curve-class lattice component (q, or q1..qk),
                capped per component;
  * ZVAR     -- the single formal deformation variable z, capped;
  * PARAM    -- auxiliary formal parameters (deformation coefficients,
                metric deformation directions, solver unknowns), capped by
                total degree or unbounded.

All arithmetic is exact; truncation happens during accumulation so that
products never materialise out-of-profile terms.  Values are immutable
after construction and safe to share.
"""

from __future__ import annotations

import operator as _op
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Optional, Sequence

NOVIKOV = "novikov"
ZVAR = "z"
PARAM = "param"

_GROUPS = (NOVIKOV, ZVAR, PARAM)


class Variable:
    """A named variable with its group tag (and lattice component for NOVIKOV)."""

    __slots__ = ("name", "group", "component")

    def __init__(self, name: str, group: str, component: int = -1):
        if group not in _GROUPS:
            raise ValueError(f"unknown variable group {group!r}")
        if group == NOVIKOV and component < 0:
            raise ValueError("NOVIKOV variables need a lattice component index")
        self.name = name
        self.group = group
        self.component = component

    def __repr__(self) -> str:
        return f"Variable({self.name!r}, {self.group!r}, {self.component})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Variable)
            and self.name == other.name
            and self.group == other.group
            and self.component == other.component
        )

    def __hash__(self) -> int:
        return hash((self.name, self.group, self.component))


class VariableTable:
    """Ordered list of variables shared by all polynomials of one context.

    Exactly one ZVAR variable named ``z`` is required; NOVIKOV components
    must cover ``0..curve_rank-1`` exactly once each.
    """

    def __init__(self, variables: Sequence[Variable]):
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique")
        zs = [v for v in variables if v.group == ZVAR]
        if len(zs) != 1 or zs[0].name != "z":
            raise ValueError("exactly one ZVAR variable named 'z' is required")
        comps = sorted(v.component for v in variables if v.group == NOVIKOV)
        if comps != list(range(len(comps))):
            raise ValueError("NOVIKOV components must cover 0..k-1")
        self.variables = tuple(variables)
        self._index = {v.name: i for i, v in enumerate(self.variables)}
        self.novikov_indices = tuple(
            i for i, v in enumerate(self.variables) if v.group == NOVIKOV
        )
        self.z_index = next(
            i for i, v in enumerate(self.variables) if v.group == ZVAR
        )
        self.param_indices = tuple(
            i for i, v in enumerate(self.variables) if v.group == PARAM
        )

    @classmethod
    def build(cls, curve_rank: int, params: Iterable[str] = ()) -> "VariableTable":
        """Standard layout: q-variables first, then z, then PARAM names in order."""
        qnames = ["q"] if curve_rank == 1 else [f"q{i+1}" for i in range(curve_rank)]
        variables = [Variable(n, NOVIKOV, i) for i, n in enumerate(qnames)]
        variables.append(Variable("z", ZVAR))
        variables.extend(Variable(p, PARAM) for p in params)
        return cls(variables)

    def with_params(self, extra: Iterable[str]) -> "VariableTable":
        """A new table extending this one with additional PARAM variables."""
        return VariableTable(
            list(self.variables) + [Variable(p, PARAM) for p in extra]
        )

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown variable {name!r}") from None

    def __len__(self) -> int:
        return len(self.variables)

    def __eq__(self, other) -> bool:
        return isinstance(other, VariableTable) and self.variables == other.variables

    def __hash__(self) -> int:
        return hash(self.variables)


class TruncationProfile:
    """Per-group exponent caps.

    ``param_cap=None`` leaves PARAMs unbounded; ``q_total_cap`` optionally
    bounds the total degree across all NOVIKOV components (on top of the
    per-component caps).
    """

    __slots__ = ("q_caps", "z_cap", "param_cap", "q_total_cap")

    def __init__(
        self,
        q_caps: Sequence[int],
        z_cap: int,
        param_cap: Optional[int] = None,
        q_total_cap: Optional[int] = None,
    ):
        if any(c < 0 for c in q_caps) or z_cap < 0:
            raise ValueError("truncation caps must be nonnegative")
        if param_cap is not None and param_cap < 0:
            raise ValueError("truncation caps must be nonnegative")
        if q_total_cap is not None and q_total_cap < 0:
            raise ValueError("truncation caps must be nonnegative")
        self.q_caps = tuple(q_caps)
        self.z_cap = z_cap
        self.param_cap = param_cap
        self.q_total_cap = q_total_cap

    def min_with(self, other: "TruncationProfile") -> "TruncationProfile":
        if len(self.q_caps) != len(other.q_caps):
            raise ValueError("profiles have different lattice ranks")
        return TruncationProfile(
            tuple(min(a, b) for a, b in zip(self.q_caps, other.q_caps)),
            min(self.z_cap, other.z_cap),
            _opt_min(self.param_cap, other.param_cap),
            _opt_min(self.q_total_cap, other.q_total_cap),
        )

    def no_looser_than(self, other: "TruncationProfile") -> bool:
        """True if self truncates at least as hard as ``other`` in every direction."""
        if any(a > b for a, b in zip(self.q_caps, other.q_caps)):
            return False
        if self.z_cap > other.z_cap:
            return False
        if other.param_cap is not None:
            if self.param_cap is None or self.param_cap > other.param_cap:
                return False
        if other.q_total_cap is not None:
            if self.q_total_cap is None or self.q_total_cap > other.q_total_cap:
                return False
        return True

    def allows(self, exps: Sequence[int], table: VariableTable) -> bool:
        q_total = 0
        for cap, i in zip(self.q_caps, table.novikov_indices):
            e = exps[i]
            if e > cap:
                return False
            q_total += e
        if self.q_total_cap is not None and q_total > self.q_total_cap:
            return False
        if exps[table.z_index] > self.z_cap:
            return False
        if self.param_cap is not None:
            if sum(exps[i] for i in table.param_indices) > self.param_cap:
                return False
        return True

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TruncationProfile)
            and self.q_caps == other.q_caps
            and self.z_cap == other.z_cap
            and self.param_cap == other.param_cap
            and self.q_total_cap == other.q_total_cap
        )

    def __repr__(self) -> str:
        return (
            f"TruncationProfile({self.q_caps}, {self.z_cap}, "
            f"{self.param_cap}, {self.q_total_cap})"
        )


def _opt_min(a: Optional[int], b: Optional[int]) -> Optional[int]:
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"not an exact rational: {value!r}")


class TruncatedPoly:
    """Immutable sparse polynomial over the rationals, respecting a profile.

    Equality compares the variable table and the term map; the profile is
    bookkeeping and does not take part (two renderings of the same element
    at different caps are the same element).
    """

    __slots__ = ("table", "profile", "terms")

    def __init__(
        self,
        table: VariableTable,
        profile: TruncationProfile,
        terms: Mapping[tuple, Fraction],
    ):
        clean = {}
        for exps, coeff in terms.items():
            if coeff == 0:
                continue
            if profile.allows(exps, table):
                clean[exps] = coeff
        self.table = table
        self.profile = profile
        self.terms = clean

    # -- constructors -------------------------------------------------

    @classmethod
    def zero(cls, table: VariableTable, profile: TruncationProfile) -> "TruncatedPoly":
        return cls(table, profile, {})

    @classmethod
    def const(cls, table, profile, value) -> "TruncatedPoly":
        c = _as_fraction(value)
        if c == 0:
            return cls.zero(table, profile)
        return cls(table, profile, {(0,) * len(table): c})

    @classmethod
    def variable(cls, table, profile, name: str, power: int = 1) -> "TruncatedPoly":
        idx = table.index(name)
        exps = [0] * len(table)
        exps[idx] = power
        return cls(table, profile, {tuple(exps): Fraction(1)})

    @classmethod
    def monomial(cls, table, profile, coeff, powers: Mapping[str, int]) -> "TruncatedPoly":
        exps = [0] * len(table)
        for name, p in powers.items():
            exps[table.index(name)] = p
        return cls(table, profile, {tuple(exps): _as_fraction(coeff)})

    # -- queries ------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def constant_term(self) -> Fraction:
        return self.terms.get((0,) * len(self.table), Fraction(0))

    def coefficient(self, powers: Mapping[str, int]) -> Fraction:
        exps = [0] * len(self.table)
        for name, p in powers.items():
            exps[self.table.index(name)] = p
        return self.terms.get(tuple(exps), Fraction(0))

    def as_fraction(self) -> Fraction:
        """The value of a constant polynomial; error if not constant."""
        if not self.terms:
            return Fraction(0)
        if len(self.terms) == 1:
            exps, coeff = next(iter(self.terms.items()))
            if not any(exps):
                return coeff
        raise ValueError(f"not a constant polynomial: {self.render()}")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TruncatedPoly)
            and self.table == other.table
            and self.terms == other.terms
        )

    def __hash__(self) -> int:
        return hash((self.table, frozenset(self.terms.items())))

    def __repr__(self) -> str:
        return f"<poly {self.render()}>"

    # -- arithmetic ---------------------------------------------------

    def _check_compatible(self, other: "TruncatedPoly") -> TruncationProfile:
        if self.table != other.table:
            raise ValueError("mismatched variable tables")
        if self.profile == other.profile:
            return self.profile
        return self.profile.min_with(other.profile)

    @classmethod
    def _raw(cls, table, profile, terms: dict) -> "TruncatedPoly":
        """Internal: wrap an already-clean term map without re-filtering."""
        poly = cls.__new__(cls)
        poly.table = table
        poly.profile = profile
        poly.terms = terms
        return poly

    def __add__(self, other: "TruncatedPoly") -> "TruncatedPoly":
        profile = self._check_compatible(other)
        if not other.terms:
            return TruncatedPoly._raw(self.table, profile, dict(self.terms))
        out = dict(self.terms)
        for exps, coeff in other.terms.items():
            s = out.get(exps)
            if s is None:
                out[exps] = coeff
            else:
                s = s + coeff
                if s:
                    out[exps] = s
                else:
                    del out[exps]
        return TruncatedPoly._raw(self.table, profile, out)

    def __sub__(self, other: "TruncatedPoly") -> "TruncatedPoly":
        return self + (-other)

    def __neg__(self) -> "TruncatedPoly":
        return TruncatedPoly._raw(
            self.table, self.profile, {e: -c for e, c in self.terms.items()}
        )

    def scale(self, value) -> "TruncatedPoly":
        c = _as_fraction(value)
        if c == 0:
            return TruncatedPoly._raw(self.table, self.profile, {})
        return TruncatedPoly._raw(
            self.table, self.profile, {e: c * v for e, v in self.terms.items()}
        )

    def __mul__(self, other: "TruncatedPoly") -> "TruncatedPoly":
        profile = self._check_compatible(other)
        table = self.table
        out: dict = {}
        terms_a, terms_b = self.terms, other.terms
        if not terms_a or not terms_b:
            return TruncatedPoly._raw(table, profile, {})
        if len(terms_a) > len(terms_b):
            terms_a, terms_b = terms_b, terms_a
        allows = profile.allows
        add = _op.add
        same_profile = self.profile == other.profile
        # Out-of-profile products are discarded here, never stored.
        for e1, c1 in terms_a.items():
            if same_profile and not any(e1):
                # scalar term against in-profile terms: no truncation triggers
                for e2, c2 in terms_b.items():
                    s = out.get(e2)
                    if s is None:
                        out[e2] = c1 * c2
                    else:
                        s = s + c1 * c2
                        if s:
                            out[e2] = s
                        else:
                            del out[e2]
                continue
            for e2, c2 in terms_b.items():
                exps = tuple(map(add, e1, e2))
                if not allows(exps, table):
                    continue
                s = out.get(exps)
                if s is None:
                    out[exps] = c1 * c2
                else:
                    s = s + c1 * c2
                    if s:
                        out[exps] = s
                    else:
                        del out[exps]
        return TruncatedPoly._raw(table, profile, out)

    def truncate(self, profile: TruncationProfile) -> "TruncatedPoly":
        """Drop terms outside ``profile``; only tightening is allowed."""
        if not profile.no_looser_than(self.profile):
            raise ValueError("cannot loosen a truncation profile")
        return TruncatedPoly(self.table, profile, self.terms)

    def exp_series(self) -> "TruncatedPoly":
        """sum_m self**m / m!, exact, requiring termination under the profile.

        Termination needs a zero constant term and, in every monomial, at
        least one variable whose exponent is capped by the profile.
        """
        if self.constant_term() != 0:
            raise ValueError("exp_series needs a zero constant term")
        table, profile = self.table, self.profile
        capped = set()
        for i in table.novikov_indices:
            capped.add(i)
        capped.add(table.z_index)
        if profile.param_cap is not None:
            capped.update(table.param_indices)
        for exps in self.terms:
            if not any(exps[i] for i in capped):
                raise ValueError(
                    "exp_series would not terminate: uncapped variable present"
                )
        result = TruncatedPoly.const(table, profile, 1)
        power = TruncatedPoly.const(table, profile, 1)
        m = 0
        while True:
            power = power * self
            if power.is_zero():
                return result
            m += 1
            result = result + power.scale(Fraction(1, _factorial(m)))

    def differentiate(self, name: str) -> "TruncatedPoly":
        """Formal partial derivative with respect to one variable."""
        idx = self.table.index(name)
        out = {}
        for exps, coeff in self.terms.items():
            p = exps[idx]
            if p == 0:
                continue
            reduced = list(exps)
            reduced[idx] = p - 1
            out[tuple(reduced)] = coeff * p
        return TruncatedPoly(self.table, self.profile, out)

    def substitute(self, replacements: Mapping[str, "TruncatedPoly"]) -> "TruncatedPoly":
        """Replace variables by polynomials (computed exactly, re-truncated)."""
        table, profile = self.table, self.profile
        idx_repl = {self.table.index(n): p for n, p in replacements.items()}
        result = TruncatedPoly.zero(table, profile)
        for exps, coeff in self.terms.items():
            base = [0] * len(table)
            for i, e in enumerate(exps):
                if i not in idx_repl:
                    base[i] = e
            term = TruncatedPoly(table, profile, {tuple(base): coeff})
            for i, e in enumerate(exps):
                if i in idx_repl and e:
                    rep = idx_repl[i]
                    for _ in range(e):
                        term = term * rep
            result = result + term
        return result

    # -- text format ----------------------------------------------------

    def sorted_terms(self) -> Iterator[tuple]:
        """Terms in graded lexicographic order (total degree, then exponents)."""
        return iter(sorted(self.terms.items(), key=lambda kv: (sum(kv[0]), kv[0])))

    def render(self) -> str:
        """Canonical text: graded-lex term order, rationals as p/q, e.g.
        ``1 - 2*y0 + 5/6*q^2*z``."""
        if not self.terms:
            return "0"
        pieces = []
        for exps, coeff in self.sorted_terms():
            factors = []
            for i, e in enumerate(exps):
                if e == 0:
                    continue
                name = self.table.variables[i].name
                factors.append(name if e == 1 else f"{name}^{e}")
            mag = abs(coeff)
            if not factors:
                body = _frac_str(mag)
            elif mag == 1:
                body = "*".join(factors)
            else:
                body = "*".join([_frac_str(mag)] + factors)
            if not pieces:
                pieces.append(body if coeff > 0 else f"-{body}")
            else:
                pieces.append(f"+ {body}" if coeff > 0 else f"- {body}")
        return " ".join(pieces)

    @classmethod
    def parse(cls, text: str, table: VariableTable, profile: TruncationProfile) -> "TruncatedPoly":
        """Parse the canonical rendering (also accepts leading '+')."""
        text = text.strip()
        if text == "0":
            return cls.zero(table, profile)
        terms: dict = {}
        for sign, body in _split_terms(text):
            coeff = Fraction(sign)
            exps = [0] * len(table)
            for factor in body.split("*"):
                factor = factor.strip()
                if not factor:
                    raise ValueError(f"empty factor in {text!r}")
                if _looks_rational(factor):
                    coeff *= Fraction(factor)
                    continue
                if "^" in factor:
                    name, _, power = factor.partition("^")
                    exps[table.index(name.strip())] += int(power)
                else:
                    exps[table.index(factor)] += 1
            key = tuple(exps)
            terms[key] = terms.get(key, Fraction(0)) + coeff
        return cls(table, profile, terms)


def _frac_str(value: Fraction) -> str:
    return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"


def _looks_rational(token: str) -> bool:
    t = token.lstrip("+-")
    if "/" in t:
        num, _, den = t.partition("/")
        return num.isdigit() and den.isdigit()
    return t.isdigit()


def _split_terms(text: str):
    """Yield (sign, body) for each term of a rendered polynomial."""
    out = []
    sign = 1
    token = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch in "+-" and (i == 0 or text[i - 1] == " "):
            if token and "".join(token).strip():
                out.append((sign, "".join(token).strip()))
            sign = 1 if ch == "+" else -1
            token = []
        else:
            token.append(ch)
        i += 1
    if token and "".join(token).strip():
        out.append((sign, "".join(token).strip()))
    if not out:
        raise ValueError(f"cannot parse polynomial {text!r}")
    return out


_FACTORIALS = [1]


def _factorial(n: int) -> int:
    while len(_FACTORIALS) <= n:
        _FACTORIALS.append(_FACTORIALS[-1] * len(_FACTORIALS))
    return _FACTORIALS[n]
