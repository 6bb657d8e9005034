"""Projective force fields: bivector fields of degree -2 with q ∧ f(q) = 0.

The central variants all have the shape f(q) = Ψ(q) q ∧ c for a coefficient
Ψ homogeneous of degree -3; they differ in how Ψ is built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, InvalidArgumentError, SingularityError, VerticalScreenError
from .exterior import HomogeneityTag, Multivector, _check_dim, as_array, contract_arrays, wedge_arrays
from .screens import Screen, _check_on_screen

SINGULARITY_CUTOFF = 1e-6
DEGREE = HomogeneityTag(-2.0)


def distance_ratio(q: np.ndarray, c: np.ndarray) -> float:
    """Sine of the angle between q and the line [c]."""
    nq = np.linalg.norm(q)
    if nq == 0.0:
        return 0.0
    return float(np.linalg.norm(wedge_arrays(q.size, 1, 1, q, c)) / (nq * np.linalg.norm(c)))


class ForceField:
    kind = "abstract"
    dim: int
    center: Optional[np.ndarray] = None
    homogeneity = DEGREE

    def evaluate(self, q: np.ndarray) -> np.ndarray:
        """Bivector coefficients of f(q); raises on singular or foreign points."""
        raise NotImplementedError

    def __call__(self, q) -> Multivector:
        return Multivector(self.dim, 2, self.evaluate(as_array(q, self.dim)))

    def describe(self) -> dict:
        return {"type": self.kind}


class ZeroField(ForceField):
    kind = "zero"

    def __init__(self, dim: int):
        _check_dim(dim)
        self.dim = dim

    def evaluate(self, q):
        return np.zeros(math.comb(self.dim, 2))


class _CentralBase(ForceField):
    """f(q) = Ψ(q) q ∧ c with a singularity cutoff around [c]."""

    translation_invariant = False

    def __init__(self, c, cutoff: float = SINGULARITY_CUTOFF):
        self.center = as_array(c).copy()
        self.dim = self.center.size
        _check_dim(self.dim)
        if not np.any(self.center):
            raise InvalidArgumentError("center c must be non-zero")
        self.cutoff = cutoff

    def _guard(self, q: np.ndarray) -> None:
        if distance_ratio(q, self.center) < self.cutoff:
            raise SingularityError(f"point {q} is within the cutoff of the center line")

    def coefficient(self, q) -> float:
        raise NotImplementedError

    def evaluate(self, q):
        q = np.asarray(q, dtype=float)
        self._guard(q)
        return self.coefficient(q) * wedge_arrays(self.dim, 1, 1, q, self.center)


class CentralField(_CentralBase):
    """Projective extension of the affine central system q'' = -ψ(q)(q - c).

    ``psi`` is evaluated on the affine screen <h, q> = 1.  The center is
    rescaled so that it lies on that screen.
    """

    kind = "central"

    def __init__(self, c, h, psi: Callable[[np.ndarray], float], cutoff=SINGULARITY_CUTOFF, label=None):
        h = as_array(h)
        c = as_array(c)
        hc = float(h @ c)
        if hc == 0.0:
            raise InvalidArgumentError("center must not lie on the kernel of h")
        super().__init__(c / hc, cutoff)
        if h.size != self.dim:
            raise InvalidArgumentError("h and c must share a dimension")
        self.h = h
        self.psi = psi
        self.label = label

    def coefficient(self, q) -> float:
        hq = float(self.h @ q)
        if hq <= 0.0:
            raise DomainError(f"<h, q> = {hq} is not positive")
        return hq**-3 * float(self.psi(q / hq))

    def describe(self):
        out = {"type": "central", "c": self.center.tolist(), "h": self.h.tolist()}
        if self.label is not None:
            out["psi"] = self.label
        return out


class JacobiAttractor(_CentralBase):
    """Central field whose Ψ is invariant under translations along c.

    ``Psi`` must be defined on V minus [c], homogeneous of degree -3 and
    satisfy Ψ(q + γc) = Ψ(q).  Only sampled validation is possible.
    """

    kind = "jacobi"
    translation_invariant = True

    def __init__(self, c, Psi: Callable[[np.ndarray], float], cutoff=SINGULARITY_CUTOFF, meta=None):
        super().__init__(c, cutoff)
        self.Psi = Psi
        self.meta = meta or {}

    @classmethod
    def from_phi(cls, c, h, phi, cutoff=SINGULARITY_CUTOFF, meta=None):
        """Ψ(q) = φ(q - <h, q> c) with c rescaled so that <h, c> = 1."""
        h, c = as_array(h), as_array(c)
        hc = float(h @ c)
        if hc == 0.0:
            raise InvalidArgumentError("<h, c> must be non-zero")
        c = c / hc

        def Psi(q):
            return float(phi(q - float(h @ q) * c))

        attractor = cls(c, Psi, cutoff, meta)
        attractor.h = h
        return attractor

    @classmethod
    def anisotropic(cls, M, c=None, h=None, cutoff=SINGULARITY_CUTOFF):
        """φ(v) = (v·Mv)^(-3/2); defaults put c on the last axis."""
        M = np.array(M, dtype=float)
        dim = M.shape[0]
        if c is None:
            c = np.eye(dim)[-1]
        if h is None:
            h = np.eye(dim)[-1]

        def phi(v):
            return float(v @ M @ v) ** -1.5

        return cls.from_phi(c, h, phi, cutoff, meta={"M": M.tolist(), "h": as_array(h).tolist()})

    def coefficient(self, q) -> float:
        return float(self.Psi(q))

    def describe(self):
        return {"type": "jacobi", "c": self.center.tolist(), **self.meta}


class KeplerField(_CentralBase):
    """f(q) = B(q, q)^(-3/2) q ∧ c for a semi-definite B with kernel exactly [c]."""

    kind = "kepler"
    translation_invariant = True

    def __init__(self, c, B, cutoff=SINGULARITY_CUTOFF):
        super().__init__(c, cutoff)
        B = np.array(B, dtype=float)
        if B.shape != (self.dim, self.dim) or not np.allclose(B, B.T):
            raise InvalidArgumentError("B must be a symmetric dim x dim matrix")
        w, v = np.linalg.eigh(B)
        scale = max(1.0, abs(w).max())
        if w.min() < -1e-12 * scale:
            raise InvalidArgumentError("B must be positive semi-definite")
        if np.sum(np.abs(w) <= 1e-12 * scale) != 1:
            raise InvalidArgumentError("B must have a one-dimensional kernel")
        if np.linalg.norm(B @ self.center) > 1e-12 * scale * np.linalg.norm(self.center):
            raise InvalidArgumentError("kernel of B must be the line [c]")
        self.B = 0.5 * (B + B.T)

    @classmethod
    def standard(cls, dim: int, cutoff=SINGULARITY_CUTOFF):
        """c on the last axis, B the Euclidean form on the first dim-1 axes."""
        B = np.eye(dim)
        B[-1, -1] = 0.0
        return cls(np.eye(dim)[-1], B, cutoff)

    def coefficient(self, q) -> float:
        return float(q @ self.B @ q) ** -1.5

    def describe(self):
        return {"type": "kepler", "c": self.center.tolist(), "B": self.B.tolist()}


class CustomField(ForceField):
    """Wraps a raw callable returning bivector coefficients; in-process only."""

    kind = "custom"

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], dim: int, tag: HomogeneityTag = DEGREE):
        _check_dim(dim)
        self.dim = dim
        self.fn = fn
        self.homogeneity = tag

    def evaluate(self, q):
        return as_array(self.fn(np.asarray(q, dtype=float)), math.comb(self.dim, 2))


# --------------------------------------------------------------------------
# operations


def eval_force(fs: ForceField, q) -> Multivector:
    return fs(q)


def central_from_psi(c, h, psi, cutoff=SINGULARITY_CUTOFF, label=None) -> CentralField:
    return CentralField(c, h, psi, cutoff, label)


def restrict_to_screen(fs: ForceField, s: Screen, q) -> Multivector:
    """Screen force f_h = dh(q) ⌟ f(q) at a point of the screen."""
    x = as_array(q, s.dim)
    _check_on_screen(s, x)
    return Multivector.vector(contract_arrays(s.dim, 2, s.gradient(x), fs.evaluate(x)))


def power_law_field(c, h, beta: float, B=None, cutoff=SINGULARITY_CUTOFF) -> CentralField:
    """Projective extension of q'' = -|q - c|^beta (q - c) on the screen <h, q> = 1."""
    h, c = as_array(h), as_array(c)
    c = c / float(h @ c)
    B = degenerate_norm_form(h, c) if B is None else np.array(B, dtype=float)
    beta = float(beta)

    def psi(x):
        d = x - c
        return math.sqrt(float(d @ B @ d)) ** beta

    return CentralField(c, h, psi, cutoff, label={"kind": "power", "beta": beta})


def degenerate_norm_form(h, c) -> np.ndarray:
    """B(q, q) = |q - <h, q> c|^2 (coordinate norm) with c rescaled to <h, c> = 1."""
    h, c = as_array(h), as_array(c)
    c = c / float(h @ c)
    P = np.eye(h.size) - np.outer(c, h)
    return P.T @ P


@dataclass(frozen=True)
class HalphenTransform:
    """Power-law central force q'' = -|q - c|^beta (q - c) seen on a second flat screen.

    On the screen <h1, q> = 1 the motion, in the new time, obeys
    q1'' = -|q1 - c1|^beta <h, q1>^exponent * mass * (q1 - c1)
    with exponent = -3 - beta and mass = <h1, c>.
    """

    beta: float
    exponent: float
    mass: float
    h: np.ndarray
    h1: np.ndarray
    c: np.ndarray
    c1: np.ndarray
    B: np.ndarray = field(repr=False)

    def _norm(self, v: np.ndarray) -> float:
        return math.sqrt(float(v @ self.B @ v))

    def source_force(self, q) -> np.ndarray:
        """Acceleration of the original system at a point of the first screen."""
        q = as_array(q)
        d = q - self.c
        return -self._norm(d) ** self.beta * d

    def closed_form(self, q1) -> np.ndarray:
        """Transformed acceleration at a point of the second screen."""
        q1 = as_array(q1)
        d = q1 - self.c1
        return -self._norm(d) ** self.beta * float(self.h @ q1) ** self.exponent * self.mass * d

    def appell_transport(self, q1) -> np.ndarray:
        """Transport the source acceleration through the change of projection.

        Uses q1'' = u^2 (u q'' - <h1, q''> q) with u = <h1, q>, which holds in
        the time rescaled by u^2.
        """
        q1 = as_array(q1)
        q = q1 / float(self.h @ q1)
        acc = self.source_force(q)
        u = float(self.h1 @ q)
        return u**2 * (u * acc - float(self.h1 @ acc) * q)

    def projective_field(self) -> CentralField:
        """The same force as a projective field, built from ψ = |q - c|^beta."""
        B, beta = self.B, self.beta

        def psi(x):
            d = x - self.c
            return math.sqrt(float(d @ B @ d)) ** beta

        return CentralField(self.c, self.h, psi, label={"kind": "power", "beta": beta})

    def as_dict(self) -> dict:
        return {"beta": self.beta, "exponent": self.exponent, "mass": self.mass}


def halphen_transform(beta: float, h, h1, c, B=None) -> HalphenTransform:
    """Transformed power-law data for a change of flat screen from h to h1.

    ``B`` is the degenerate quadratic form extending the Euclidean structure
    of the first screen; by default the coordinate norm of q - <h, q> c.
    """
    h, h1, c = as_array(h), as_array(h1), as_array(c)
    hc = float(h @ c)
    if hc == 0.0:
        raise InvalidArgumentError("center must not lie on the kernel of h")
    c = c / hc
    mass = float(h1 @ c)
    if abs(mass) < 1e-14 * np.linalg.norm(h1) * np.linalg.norm(c):
        raise VerticalScreenError("target screen contains the center direction; no closed form")
    B = degenerate_norm_form(h, c) if B is None else np.array(B, dtype=float)
    return HalphenTransform(
        beta=float(beta),
        exponent=-3.0 - float(beta),
        mass=mass,
        h=h,
        h1=h1,
        c=c,
        c1=c / mass,
        B=B,
    )


# --------------------------------------------------------------------------
# validation


@dataclass
class FieldValidationReport:
    max_homogeneity_residual: float
    max_decomposability_residual: float
    max_translation_residual: Optional[float]
    sample_count: int
    resampled: int
    tolerance: float

    @property
    def passed(self) -> bool:
        res = [self.max_homogeneity_residual, self.max_decomposability_residual]
        if self.max_translation_residual is not None:
            res.append(self.max_translation_residual)
        return all(r < self.tolerance for r in res)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def as_dict(self) -> dict:
        return {
            "max_homogeneity_residual": self.max_homogeneity_residual,
            "max_decomposability_residual": self.max_decomposability_residual,
            "max_translation_residual": self.max_translation_residual,
            "sample_count": self.sample_count,
            "resampled": self.resampled,
            "tolerance": self.tolerance,
            "verdict": self.verdict,
        }


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0.0 else float(np.linalg.norm(a - b) / scale)


def validate_field(fs: ForceField, samples: int = 100, seed: int = 0, tol: float = 1e-10,
                   scales=(0.5, 2.0)) -> FieldValidationReport:
    """Sampled check of degree -2 homogeneity and q ∧ f(q) = 0.

    Singular or out-of-domain samples are redrawn and counted.
    """
    if samples < 1:
        raise InvalidArgumentError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    degree = -2.0
    hom = dec = 0.0
    trans = 0.0 if getattr(fs, "translation_invariant", False) else None
    resampled = accepted = 0
    while accepted < samples:
        if resampled > 100 * samples:
            raise DomainError("could not find enough regular sample points")
        q = rng.standard_normal(fs.dim)
        try:
            f0 = fs.evaluate(q)
            scaled = [(lam, fs.evaluate(lam * q)) for lam in scales]
            if trans is not None:
                gamma = rng.uniform(-2.0, 2.0)
                shifted = fs.coefficient(q + gamma * fs.center)
        except (SingularityError, DomainError):
            resampled += 1
            continue
        accepted += 1
        for lam, f1 in scaled:
            hom = max(hom, _rel(f1, lam**degree * f0))
        nf = np.linalg.norm(f0)
        if nf > 0.0:
            dec = max(dec, float(np.linalg.norm(wedge_arrays(fs.dim, 1, 2, q, f0)) / (np.linalg.norm(q) * nf)))
        if trans is not None:
            base = fs.coefficient(q)
            trans = max(trans, abs(shifted - base) / max(abs(base), abs(shifted), 1e-300))
    return FieldValidationReport(hom, dec, trans, accepted, resampled, tol)
