"""Dense exterior algebra over a real vector space of dimension 3 to 5.

Basis blades of grade k are the k-subsets of {0, .., dim-1}, listed in
increasing bitmask order: for dim 3, grade 2 this is e01, e02, e12.  The same
ordering indexes coblades of alternating forms.

Contraction conventions
-----------------------
* ``interior_vector(v, w)`` puts ``v`` in the first slot of ``w``.
* ``interior_coform(a, m)`` is the mirror operation, so that
  ``a ⌟ (q ∧ v) = <a, q> v - <a, v> q``.
* A bivector contracts into a form with ``ι_{a∧b} = ι_b ∘ ι_a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

import numpy as np

from .errors import EvaluationError, InvalidArgumentError, ProjdynError

MIN_DIM = 3
MAX_DIM = 5

ArrayLike = Union[np.ndarray, list, tuple]


# --------------------------------------------------------------------------
# blade tables


@lru_cache(maxsize=None)
def blades(dim: int, grade: int) -> tuple[tuple[int, ...], ...]:
    """Sorted index tuples of the grade-``grade`` basis blades, bitmask order."""
    masks = [m for m in range(1 << dim) if bin(m).count("1") == grade]
    return tuple(tuple(i for i in range(dim) if m >> i & 1) for m in masks)


@lru_cache(maxsize=None)
def blade_index(dim: int, grade: int) -> dict[tuple[int, ...], int]:
    return {b: n for n, b in enumerate(blades(dim, grade))}


def _merge_sign(a: tuple[int, ...], b: tuple[int, ...]) -> int:
    inversions = sum(1 for i in a for j in b if i > j)
    return -1 if inversions % 2 else 1


@lru_cache(maxsize=None)
def _wedge_table(dim: int, j: int, k: int):
    ia, ib, io, sg = [], [], [], []
    out = blade_index(dim, j + k)
    for na, a in enumerate(blades(dim, j)):
        for nb, b in enumerate(blades(dim, k)):
            if set(a) & set(b):
                continue
            ia.append(na)
            ib.append(nb)
            io.append(out[tuple(sorted(a + b))])
            sg.append(_merge_sign(a, b))
    return (np.array(ia, dtype=int), np.array(ib, dtype=int),
            np.array(io, dtype=int), np.array(sg, dtype=float))


@lru_cache(maxsize=None)
def _contract_table(dim: int, k: int):
    """Rows (source blade, removed index, target blade, sign) for degree-1 contraction."""
    src, elem, dst, sg = [], [], [], []
    out = blade_index(dim, k - 1)
    for n, b in enumerate(blades(dim, k)):
        for p, i in enumerate(b):
            src.append(n)
            elem.append(i)
            dst.append(out[b[:p] + b[p + 1:]])
            sg.append(-1.0 if p % 2 else 1.0)
    return (np.array(src, dtype=int), np.array(elem, dtype=int),
            np.array(dst, dtype=int), np.array(sg, dtype=float))


def wedge_arrays(dim: int, j: int, k: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Coefficient-level wedge product, no validation."""
    ia, ib, io, sg = _wedge_table(dim, j, k)
    out = np.zeros(math.comb(dim, j + k))
    np.add.at(out, io, sg * a[ia] * b[ib])
    return out


def contract_arrays(dim: int, k: int, first: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Contract a grade-1 coefficient array into the first slot of a grade-k array."""
    src, elem, dst, sg = _contract_table(dim, k)
    out = np.zeros(math.comb(dim, k - 1))
    np.add.at(out, dst, sg * first[elem] * m[src])
    return out


def bivector_contract_arrays(dim: int, k: int, f: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``f ⌟ w`` for a bivector f and a degree-k form w, with ι_{a∧b} = ι_b ∘ ι_a."""
    out = np.zeros(math.comb(dim, k - 2))
    eye = np.eye(dim)
    for coeff, (i, j) in zip(f, blades(dim, 2)):
        if coeff == 0.0:
            continue
        inner = contract_arrays(dim, k, eye[i], w)
        out += coeff * contract_arrays(dim, k - 1, eye[j], inner)
    return out


def exterior_power(matrix: ArrayLike, grade: int) -> np.ndarray:
    """Matrix of the induced map Λ^grade(g) on blade coefficients."""
    g = np.asarray(matrix, dtype=float)
    dim = g.shape[0]
    basis = blades(dim, grade)
    out = np.empty((len(basis), len(basis)))
    for col, blade in enumerate(basis):
        acc = np.ones(1)
        for r, i in enumerate(blade):
            acc = wedge_arrays(dim, r, 1, acc, g[:, i])
        out[:, col] = acc
    return out


# --------------------------------------------------------------------------
# value types


def _check_dim(dim: int) -> None:
    if not MIN_DIM <= dim <= MAX_DIM:
        raise InvalidArgumentError(f"dim must be in {MIN_DIM}..{MAX_DIM}, got {dim}")


class _Graded:
    __slots__ = ("dim", "grade", "coeffs")

    def __init__(self, dim: int, grade: int, coeffs: ArrayLike):
        _check_dim(dim)
        if not 0 <= grade <= dim:
            raise InvalidArgumentError(f"grade {grade} out of range for dim {dim}")
        arr = np.array(coeffs, dtype=float).reshape(-1)
        if arr.size != math.comb(dim, grade):
            raise InvalidArgumentError(
                f"expected {math.comb(dim, grade)} coefficients for grade {grade} "
                f"in dim {dim}, got {arr.size}"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "grade", grade)
        object.__setattr__(self, "coeffs", arr)

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    @classmethod
    def zero(cls, dim: int, grade: int):
        return cls(dim, grade, np.zeros(math.comb(dim, grade)))

    @classmethod
    def basis(cls, dim: int, *indices: int):
        """Unit blade ``e_i ∧ e_j ∧ ...`` (0-based indices, any order)."""
        if len(set(indices)) != len(indices):
            return cls.zero(dim, len(indices))
        out = np.zeros(math.comb(dim, len(indices)))
        order = tuple(sorted(indices))
        perm = [order.index(i) for i in indices]
        inversions = sum(1 for a in range(len(perm)) for b in range(a + 1, len(perm)) if perm[a] > perm[b])
        out[blade_index(dim, len(indices))[order]] = -1.0 if inversions % 2 else 1.0
        return cls(dim, len(indices), out)

    @classmethod
    def vector(cls, components: ArrayLike):
        arr = np.asarray(components, dtype=float).reshape(-1)
        return cls(arr.size, 1, arr)

    def _same(self, other) -> None:
        if type(other) is not type(self):
            raise InvalidArgumentError(f"cannot combine {type(self).__name__} with {type(other).__name__}")
        if other.dim != self.dim or other.grade != self.grade:
            raise InvalidArgumentError("dimension or grade mismatch")

    def __add__(self, other):
        self._same(other)
        return type(self)(self.dim, self.grade, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._same(other)
        return type(self)(self.dim, self.grade, self.coeffs - other.coeffs)

    def __neg__(self):
        return type(self)(self.dim, self.grade, -self.coeffs)

    def __mul__(self, scalar: float):
        if not np.isscalar(scalar):
            return NotImplemented
        return type(self)(self.dim, self.grade, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar: float):
        return type(self)(self.dim, self.grade, self.coeffs / float(scalar))

    def __eq__(self, other):
        return (type(other) is type(self) and other.dim == self.dim
                and other.grade == self.grade and np.array_equal(other.coeffs, self.coeffs))

    __hash__ = None

    def __array__(self, dtype=None, copy=None):
        return np.array(self.coeffs, dtype=dtype)

    def __getitem__(self, blade):
        if isinstance(blade, (int, np.integer)):
            return self.coeffs[blade]
        order = tuple(sorted(blade))
        sign = 1.0 if _merge_perm_parity(blade) == 0 else -1.0
        return sign * self.coeffs[blade_index(self.dim, self.grade)[order]]

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def allclose(self, other, atol: float = 1e-12, rtol: float = 0.0) -> bool:
        self._same(other)
        return bool(np.allclose(self.coeffs, other.coeffs, atol=atol, rtol=rtol))

    def terms(self) -> dict[tuple[int, ...], float]:
        """Non-zero coefficients keyed by blade."""
        return {b: float(c) for b, c in zip(blades(self.dim, self.grade), self.coeffs) if c != 0.0}

    def __repr__(self):
        name = "e" if isinstance(self, Multivector) else "ε"
        parts = [f"{c:+.6g}·{name}{''.join(map(str, b))}" for b, c in self.terms().items()]
        return f"{type(self).__name__}(dim={self.dim}, grade={self.grade}, {' '.join(parts) or '0'})"


def _merge_perm_parity(seq) -> int:
    seq = list(seq)
    return sum(1 for a in range(len(seq)) for b in range(a + 1, len(seq)) if seq[a] > seq[b]) % 2


class Multivector(_Graded):
    """Homogeneous element of Λ^grade V with dense blade coefficients."""

    __slots__ = ()


class AlternatingForm(_Graded):
    """Element of Λ^degree V* with dense coblade coefficients."""

    __slots__ = ()

    @property
    def degree(self) -> int:
        return self.grade

    def pair(self, v: Multivector) -> float:
        """Full evaluation <form, v> for a multivector of the same grade."""
        if v.dim != self.dim or v.grade != self.grade:
            raise InvalidArgumentError("pairing requires equal dim and grade")
        return float(self.coeffs @ v.coeffs)


@dataclass(frozen=True)
class HomogeneityTag:
    """Degree ``s`` of a field along rays: F(λq) = λ^s F(q) for λ > 0."""

    s: float

    def __post_init__(self):
        if not math.isfinite(self.s):
            raise InvalidArgumentError("homogeneity degree must be finite")


def as_array(v, dim: int | None = None) -> np.ndarray:
    """Coefficients of a grade-1 value given either as Multivector or array."""
    arr = np.asarray(v.coeffs if isinstance(v, _Graded) else v, dtype=float).reshape(-1)
    if dim is not None and arr.size != dim:
        raise InvalidArgumentError(f"expected {dim} components, got {arr.size}")
    return arr


# --------------------------------------------------------------------------
# operations


def wedge(a: _Graded, b: _Graded) -> _Graded:
    """Exterior product of two multivectors or of two forms."""
    if type(a) is not type(b):
        raise InvalidArgumentError("wedge needs two Multivectors or two AlternatingForms")
    if a.dim != b.dim:
        raise InvalidArgumentError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if a.grade + b.grade > a.dim:
        raise InvalidArgumentError(f"grade {a.grade}+{b.grade} exceeds dim {a.dim}")
    return type(a)(a.dim, a.grade + b.grade, wedge_arrays(a.dim, a.grade, b.grade, a.coeffs, b.coeffs))


def interior_vector(v: Multivector, w: AlternatingForm) -> AlternatingForm:
    """ι_v w: insert the vector ``v`` in the first slot of ``w``."""
    if not isinstance(v, Multivector) or v.grade != 1:
        raise InvalidArgumentError("interior_vector needs a grade-1 Multivector")
    if not isinstance(w, AlternatingForm):
        raise InvalidArgumentError("interior_vector contracts into an AlternatingForm")
    if v.dim != w.dim:
        raise InvalidArgumentError(f"dimension mismatch: {v.dim} vs {w.dim}")
    if w.degree == 0:
        raise InvalidArgumentError("cannot contract into a 0-form")
    return AlternatingForm(w.dim, w.degree - 1, contract_arrays(w.dim, w.degree, v.coeffs, w.coeffs))


def interior_coform(alpha: AlternatingForm, m: Multivector) -> Multivector:
    """α ⌟ m for a covector α; on q∧v gives <α,q> v - <α,v> q."""
    if not isinstance(alpha, AlternatingForm) or alpha.degree != 1:
        raise InvalidArgumentError("interior_coform needs a degree-1 AlternatingForm")
    if not isinstance(m, Multivector):
        raise InvalidArgumentError("interior_coform contracts into a Multivector")
    if alpha.dim != m.dim:
        raise InvalidArgumentError(f"dimension mismatch: {alpha.dim} vs {m.dim}")
    if m.grade == 0:
        raise InvalidArgumentError("cannot contract into a scalar")
    return Multivector(m.dim, m.grade - 1, contract_arrays(m.dim, m.grade, alpha.coeffs, m.coeffs))


def volume_contract(f: Multivector, mu: AlternatingForm) -> AlternatingForm:
    """f ⌟ μ for a bivector f and a top-degree form μ."""
    if not isinstance(f, Multivector) or f.grade != 2:
        raise InvalidArgumentError("volume_contract needs a bivector")
    if not isinstance(mu, AlternatingForm) or mu.degree != mu.dim:
        raise InvalidArgumentError("volume_contract needs a top-degree form")
    if f.dim != mu.dim:
        raise InvalidArgumentError(f"dimension mismatch: {f.dim} vs {mu.dim}")
    if not np.any(mu.coeffs):
        raise InvalidArgumentError("volume form must be non-zero")
    return AlternatingForm(mu.dim, mu.dim - 2, bivector_contract_arrays(mu.dim, mu.dim, f.coeffs, mu.coeffs))


def default_step(q: np.ndarray) -> float:
    return np.cbrt(np.finfo(float).eps) * max(1.0, float(np.max(np.abs(q))))


FormField = Callable[[np.ndarray], Union[AlternatingForm, float]]


def _eval_form(field: FormField, x: np.ndarray, dim: int) -> AlternatingForm:
    try:
        val = field(x)
    except (ProjdynError, ArithmeticError, ValueError) as exc:
        raise EvaluationError(f"field evaluation failed at {x}: {exc}") from exc
    if not isinstance(val, AlternatingForm):
        val = AlternatingForm(dim, 0, [float(val)])
    if not np.all(np.isfinite(val.coeffs)):
        raise EvaluationError(f"non-finite field value at {x}")
    return val


def numeric_d(field: FormField, q, step: float | None = None) -> AlternatingForm:
    """Central-difference exterior derivative of a form field at ``q``.

    ``field`` maps a coordinate array to an AlternatingForm (or a float for a
    0-form).  Component error is O(step**2).
    """
    x = as_array(q)
    dim = x.size
    _check_dim(dim)
    h = default_step(x) if step is None else float(step)
    if not h > 0:
        raise InvalidArgumentError("step must be positive")
    partials = []
    degree = None
    for i in range(dim):
        dx = np.zeros(dim)
        dx[i] = h
        plus = _eval_form(field, x + dx, dim)
        minus = _eval_form(field, x - dx, dim)
        degree = plus.degree
        partials.append((plus.coeffs - minus.coeffs) / (2.0 * h))
    if degree >= dim:
        raise InvalidArgumentError("exterior derivative of a top-degree form is not representable")
    out = np.zeros(math.comb(dim, degree + 1))
    eye = np.eye(dim)
    for i in range(dim):
        out += wedge_arrays(dim, 1, degree, eye[i], partials[i])
    return AlternatingForm(dim, degree + 1, out)
