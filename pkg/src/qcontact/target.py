"""Finite models of the even cohomology ring of a target variety.

A ``TargetModel`` is pure structure-constant data: graded basis, cup
products, Poincare pairing, effective-curve lattice rank, and the first
Chern pairings that grade the Novikov variables.  ``CohElement`` is a
basis-indexed vector of ``TruncatedPoly`` scalars over a shared variable
table; it carries every cohomology-valued quantity in the engine.
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Mapping, Sequence

from .polyring import TruncatedPoly, TruncationProfile, VariableTable


class TargetValidationError(ValueError):
    """A target model violates one of its structural axioms."""


class BasisClass:
    __slots__ = ("name", "codim")

    def __init__(self, name: str, codim: int):
        self.name = name
        self.codim = codim

    def __repr__(self) -> str:
        return f"BasisClass({self.name!r}, {self.codim})"


class TargetModel:
    """Validated structure-constant model of H*(X).

    ``cup[i][j][k]`` is the coefficient of basis k in T_i cup T_j, and
    ``pairing[i][j]`` is the integral of T_i cup T_j over X.  Only
    even-degree classes are supported; ``codim`` is complex codimension.
    """

    def __init__(
        self,
        name: str,
        dim: int,
        basis: Sequence[BasisClass],
        cup: Sequence[Sequence[Sequence[Fraction]]],
        pairing: Sequence[Sequence[Fraction]],
        curve_rank: int,
        c1: Sequence[int],
    ):
        self.name = name
        self.dim = dim
        self.basis = tuple(basis)
        self.cup = tuple(tuple(tuple(row) for row in plane) for plane in cup)
        self.pairing = tuple(tuple(row) for row in pairing)
        self.curve_rank = curve_rank
        self.c1 = tuple(c1)
        self._vdim_base_cache: dict = {}
        self._validate()
        self._pairing_inverse = _invert_matrix(self.pairing)
        # triple[i][j][k] = integral of T_i T_j T_k, used by the three-point rule
        n = len(self.basis)
        self._triple = tuple(
            tuple(
                tuple(
                    sum(
                        self.cup[i][j][m] * self.pairing[m][k]
                        for m in range(n)
                    )
                    for k in range(n)
                )
                for j in range(n)
            )
            for i in range(n)
        )

    # -- validation ----------------------------------------------------

    def _validate(self) -> None:
        n = len(self.basis)
        names = [b.name for b in self.basis]
        if len(set(names)) != len(names):
            raise TargetValidationError("basis names must be unique")
        if n == 0 or self.basis[0].codim != 0:
            raise TargetValidationError("basis[0] must be the identity with codim 0")
        if sum(1 for b in self.basis if b.codim == 0) != 1:
            raise TargetValidationError("exactly one codim-0 basis class allowed")
        points = [i for i, b in enumerate(self.basis) if b.codim == self.dim]
        if len(points) != 1:
            raise TargetValidationError(
                "exactly one basis class of top codimension required"
            )
        if any(b.codim < 0 or b.codim > self.dim for b in self.basis):
            raise TargetValidationError("codims must lie in [0, dim]")
        if self.curve_rank < 1 or len(self.c1) != self.curve_rank:
            raise TargetValidationError("c1 must list one pairing per lattice component")
        if len(self.cup) != n or any(
            len(p) != n or any(len(row) != n for row in p) for p in self.cup
        ):
            raise TargetValidationError("cup tensor has wrong shape")
        if len(self.pairing) != n or any(len(r) != n for r in self.pairing):
            raise TargetValidationError("pairing matrix has wrong shape")

        for i in range(n):
            for j in range(n):
                for k in range(n):
                    if self.cup[i][j][k] != self.cup[j][i][k]:
                        raise TargetValidationError("cup constants are not commutative")
                    if (
                        self.cup[i][j][k] != 0
                        and self.basis[k].codim
                        != self.basis[i].codim + self.basis[j].codim
                    ):
                        raise TargetValidationError("cup constants violate the grading")
        for j in range(n):
            for k in range(n):
                expected = Fraction(1) if j == k else Fraction(0)
                if self.cup[0][j][k] != expected:
                    raise TargetValidationError("cup with the identity is not identity")
        for i in range(n):
            for j in range(n):
                for l in range(n):
                    for m in range(n):
                        left = sum(
                            self.cup[i][j][k] * self.cup[k][l][m] for k in range(n)
                        )
                        right = sum(
                            self.cup[j][l][k] * self.cup[i][k][m] for k in range(n)
                        )
                        if left != right:
                            raise TargetValidationError(
                                "cup constants are not associative"
                            )
        for i in range(n):
            for j in range(n):
                if self.pairing[i][j] != self.pairing[j][i]:
                    raise TargetValidationError("pairing is not symmetric")
                if (
                    self.pairing[i][j] != 0
                    and self.basis[i].codim + self.basis[j].codim != self.dim
                ):
                    raise TargetValidationError("pairing violates the grading")
        point = points[0]
        for i in range(n):
            for j in range(n):
                integral = self.cup[i][j][point]
                if integral != self.pairing[i][j]:
                    raise TargetValidationError(
                        "pairing disagrees with cup integrals"
                    )
        if self.pairing[0][point] != 1:
            raise TargetValidationError("point class must integrate to exactly 1")
        try:
            _invert_matrix(self.pairing)
        except ZeroDivisionError:
            raise TargetValidationError("pairing matrix is singular") from None

    # -- basic data ------------------------------------------------------

    @property
    def rank(self) -> int:
        return len(self.basis)

    @property
    def point_index(self) -> int:
        return next(i for i, b in enumerate(self.basis) if b.codim == self.dim)

    def basis_index(self, name: str) -> int:
        for i, b in enumerate(self.basis):
            if b.name == name:
                return i
        raise KeyError(f"no basis class named {name!r}")

    def codim(self, i: int) -> int:
        return self.basis[i].codim

    def pairing_inverse(self) -> tuple:
        """Exact inverse of the Poincare pairing matrix."""
        return self._pairing_inverse

    def triple_integral(self, i: int, j: int, k: int) -> Fraction:
        """Integral over X of T_i cup T_j cup T_k."""
        return self._triple[i][j][k]

    def vdim(self, delta: Sequence[int], n_marks: int) -> int:
        """Expected dimension of the n-marked genus-0 space in class delta."""
        if all(d == 0 for d in delta) and n_marks < 3:
            raise ValueError("the zero class needs at least 3 marks")
        return self.vdim_base(delta) + n_marks

    def vdim_base(self, delta) -> int:
        """vdim minus the mark count; also the total insertion excess filter."""
        delta = tuple(delta)
        cached = self._vdim_base_cache.get(delta)
        if cached is None:
            if len(delta) != self.curve_rank or any(d < 0 for d in delta):
                raise ValueError(f"not an effective class: {delta}")
            cached = self.dim + sum(c * d for c, d in zip(self.c1, delta)) - 3
            self._vdim_base_cache[delta] = cached
        return cached

    def __repr__(self) -> str:
        return f"<TargetModel {self.name} dim={self.dim} rank={self.rank}>"


# -- built-in models -----------------------------------------------------


def _fr(x) -> Fraction:
    return Fraction(x)


def _model_projective(r: int, name: str) -> TargetModel:
    """P^r: basis 1, h, ..., h^r with h^i cup h^j = h^(i+j)."""
    n = r + 1
    basis = [BasisClass("1" if i == 0 else ("h" if i == 1 else f"h^{i}"), i) for i in range(n)]
    cup = [
        [
            [
                _fr(1) if i + j == k else _fr(0)
                for k in range(n)
            ]
            for j in range(n)
        ]
        for i in range(n)
    ]
    pairing = [[_fr(1) if i + j == r else _fr(0) for j in range(n)] for i in range(n)]
    return TargetModel(name, r, basis, cup, pairing, 1, (r + 1,))


def _model_p1xp1() -> TargetModel:
    # basis 1, a, b, p with a cup b = p; curve lattice (d1, d2) with
    # <a, (d1,d2)> = d1, <b, (d1,d2)> = d2.
    basis = [BasisClass("1", 0), BasisClass("a", 1), BasisClass("b", 1), BasisClass("p", 2)]
    n = 4
    cup = [[[_fr(0)] * n for _ in range(n)] for _ in range(n)]
    for j in range(n):
        cup[0][j][j] = _fr(1)
        cup[j][0][j] = _fr(1)
    cup[1][2][3] = _fr(1)
    cup[2][1][3] = _fr(1)
    pairing = [[_fr(0)] * n for _ in range(n)]
    pairing[0][3] = pairing[3][0] = _fr(1)
    pairing[1][2] = pairing[2][1] = _fr(1)
    return TargetModel("p1xp1", 2, basis, cup, pairing, 2, (2, 2))


_BUILTINS = {
    "p1": lambda: _model_projective(1, "p1"),
    "p2": lambda: _model_projective(2, "p2"),
    "p3": lambda: _model_projective(3, "p3"),
    "p1xp1": _model_p1xp1,
}


def builtin_target(name: str) -> TargetModel:
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown built-in target {name!r}") from None
    return factory()


# -- config files ---------------------------------------------------------


def load_target(config) -> TargetModel:
    """Build a validated model from a JSON-compatible config (text or dict)."""
    if isinstance(config, str):
        config = json.loads(config)
    try:
        name = config["name"]
        dim = int(config["dim"])
        basis = [BasisClass(b["name"], int(b["codim"])) for b in config["basis"]]
        curve_rank = int(config["curveRank"])
        c1 = [int(c) for c in config["c1"]]
    except KeyError as exc:
        raise TargetValidationError(f"config is missing key {exc}") from None
    n = len(basis)
    cup = [[[Fraction(0)] * n for _ in range(n)] for _ in range(n)]
    for entry in config["cup"]:
        i, j, k = int(entry["i"]), int(entry["j"]), int(entry["k"])
        cup[i][j][k] = Fraction(str(entry["coeff"]))
    pairing = [[Fraction(0)] * n for _ in range(n)]
    for entry in config["pairing"]:
        i, j = int(entry["i"]), int(entry["j"])
        pairing[i][j] = Fraction(str(entry["value"]))
    return TargetModel(name, dim, basis, cup, pairing, curve_rank, c1)


def target_to_config(model: TargetModel) -> dict:
    """Inverse of load_target, for round trips."""
    cup = []
    n = model.rank
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if model.cup[i][j][k] != 0:
                    cup.append(
                        {"i": i, "j": j, "k": k, "coeff": _frac_text(model.cup[i][j][k])}
                    )
    pairing = []
    for i in range(n):
        for j in range(n):
            if model.pairing[i][j] != 0:
                pairing.append({"i": i, "j": j, "value": _frac_text(model.pairing[i][j])})
    return {
        "name": model.name,
        "dim": model.dim,
        "basis": [{"name": b.name, "codim": b.codim} for b in model.basis],
        "cup": cup,
        "pairing": pairing,
        "curveRank": model.curve_rank,
        "c1": list(model.c1),
    }


def _frac_text(value: Fraction) -> str:
    return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"


# -- cohomology-valued elements -------------------------------------------


class CohElement:
    """Basis-indexed vector of TruncatedPoly scalars over a shared table."""

    __slots__ = ("target", "coeffs")

    def __init__(self, target: TargetModel, coeffs: Sequence[TruncatedPoly]):
        if len(coeffs) != target.rank:
            raise ValueError("coefficient vector length must match the basis")
        table = coeffs[0].table
        if any(c.table != table for c in coeffs):
            raise ValueError("all coefficients must share one variable table")
        self.target = target
        self.coeffs = tuple(coeffs)

    # -- constructors ---------------------------------------------------

    @classmethod
    def zero(cls, target, table, profile) -> "CohElement":
        z = TruncatedPoly.zero(table, profile)
        return cls(target, [z] * target.rank)

    @classmethod
    def basis_element(cls, target, table, profile, index: int) -> "CohElement":
        coeffs = [TruncatedPoly.zero(table, profile) for _ in range(target.rank)]
        coeffs[index] = TruncatedPoly.const(table, profile, 1)
        return cls(target, coeffs)

    @classmethod
    def from_scalars(cls, target, table, profile, scalars: Mapping[int, object]) -> "CohElement":
        coeffs = [TruncatedPoly.zero(table, profile) for _ in range(target.rank)]
        for idx, val in scalars.items():
            if isinstance(val, TruncatedPoly):
                coeffs[idx] = val
            else:
                coeffs[idx] = TruncatedPoly.const(table, profile, val)
        return cls(target, coeffs)

    # -- structure ------------------------------------------------------

    @property
    def table(self) -> VariableTable:
        return self.coeffs[0].table

    @property
    def profile(self) -> TruncationProfile:
        return self.coeffs[0].profile

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.coeffs)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, CohElement)
            and self.target is other.target
            and self.coeffs == other.coeffs
        )

    def __add__(self, other: "CohElement") -> "CohElement":
        return CohElement(
            self.target, [a + b for a, b in zip(self.coeffs, other.coeffs)]
        )

    def __sub__(self, other: "CohElement") -> "CohElement":
        return CohElement(
            self.target, [a - b for a, b in zip(self.coeffs, other.coeffs)]
        )

    def __neg__(self) -> "CohElement":
        return CohElement(self.target, [-a for a in self.coeffs])

    def scale(self, value) -> "CohElement":
        return CohElement(self.target, [c.scale(value) for c in self.coeffs])

    def scale_poly(self, poly: TruncatedPoly) -> "CohElement":
        return CohElement(self.target, [c * poly for c in self.coeffs])

    def cup(self, other: "CohElement") -> "CohElement":
        """Bilinear extension of the cup structure constants."""
        if self.target is not other.target and self.target.name != other.target.name:
            raise ValueError("cup of elements over different targets")
        target = self.target
        n = target.rank
        out = [TruncatedPoly.zero(self.table, self.profile) for _ in range(n)]
        for i, a in enumerate(self.coeffs):
            if a.is_zero():
                continue
            for j, b in enumerate(other.coeffs):
                if b.is_zero():
                    continue
                ab = a * b
                if ab.is_zero():
                    continue
                for k in range(n):
                    c = target.cup[i][j][k]
                    if c:
                        out[k] = out[k] + ab.scale(c)
        return CohElement(target, out)

    def integrate(self) -> TruncatedPoly:
        """Coefficient of the point class (the codim-dim basis element)."""
        return self.coeffs[self.target.point_index]

    def exp_alg(self) -> "CohElement":
        """Algebra exponential: exp of the scalar part times the finite
        exponential of the nilpotent (positive-codim) part."""
        target, table, profile = self.target, self.table, self.profile
        scalar = self.coeffs[0]
        nilpotent = CohElement(
            target,
            [TruncatedPoly.zero(table, profile)] + list(self.coeffs[1:]),
        )
        result = CohElement.basis_element(target, table, profile, 0)
        power = CohElement.basis_element(target, table, profile, 0)
        fact = 1
        for m in range(1, target.dim + 1):
            power = power.cup(nilpotent)
            if power.is_zero():
                break
            fact *= m
            result = result + power.scale(Fraction(1, fact))
        return result.scale_poly(scalar.exp_series())

    def render(self) -> str:
        """Human-readable sum of per-basis scalars, identity term printed bare."""
        parts = []
        for i, c in enumerate(self.coeffs):
            if c.is_zero():
                continue
            text = c.render()
            name = self.target.basis[i].name
            if i == 0:
                parts.append(text)
            elif text == "1":
                parts.append(name)
            elif text == "-1":
                parts.append(f"-{name}")
            elif "+" in text or (text.count("-") - text.startswith("-")) > 0:
                parts.append(f"({text})*{name}")
            else:
                parts.append(f"{text}*{name}")
        if not parts:
            return "0"
        return " + ".join(parts).replace("+ -", "- ")

    def __repr__(self) -> str:
        return f"<CohElement {self.render()}>"


def _invert_matrix(matrix: Sequence[Sequence[Fraction]]) -> tuple:
    """Exact inverse by Gauss-Jordan elimination with first-nonzero pivoting."""
    n = len(matrix)
    aug = [list(row) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(matrix)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            raise ZeroDivisionError("singular matrix")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        pv = aug[col][col]
        aug[col] = [x / pv for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    return tuple(tuple(row[n:]) for row in aug)


def dual_pairing_inverse(target: TargetModel) -> tuple:
    """Exact inverse g^{kl} of the Poincare pairing g_{ij}."""
    return target.pairing_inverse()
