"""
Probability-law primitives: launch-time densities with point atoms, first-passage
models, expectations across atoms, and the launch/transit convolution.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, stats
from scipy.special import exprel, xlogy

from src.errors import InvalidDensityError

logger = logging.getLogger(__name__)

MASS_TOL = 1e-12
MASS_TOL_QUAD = 1e-9
QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12
QUAD_LIMIT = 200
INVERSION_NODES = 2049


# --------------------------------------------------------------------
# Quadrature helper
# --------------------------------------------------------------------
def integrate_panels(func: Callable[[float], float], lo: float, hi: float,
                     cuts: Sequence[float] = ()) -> float:
    """
    Integrates func over [lo, hi] one panel at a time, splitting at every cut
    that falls strictly inside the interval. hi may be +inf.
    """
    if not hi > lo:
        return 0.0
    inner = sorted({float(c) for c in cuts if lo < c < hi and math.isfinite(c)})
    edges = [lo] + inner + [hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        value, _ = integrate.quad(func, a, b, epsabs=QUAD_EPSABS,
                                  epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
        total += value
    return total


# --------------------------------------------------------------------
# Building blocks
# --------------------------------------------------------------------
@dataclass(frozen=True)
class Atom:
    location: float
    mass: float

    def __post_init__(self):
        if not math.isfinite(self.location):
            raise InvalidDensityError(f"atom location must be finite, got {self.location}")
        if not 0.0 < self.mass <= 1.0:
            raise InvalidDensityError(f"atom mass must lie in (0, 1], got {self.mass}")


@dataclass(frozen=True)
class Piece:
    """
    One continuous piece of a density on [start, end).

    kind "const":    level
    kind "exp":      level * exp(-rate * (t - start)); end may be +inf when rate > 0
    kind "callable": func(t), vectorized over numpy arrays
    """
    start: float
    end: float
    kind: str = "const"
    level: float = 0.0
    rate: float = 0.0
    func: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in ("const", "exp", "callable"):
            raise InvalidDensityError(f"unknown piece kind '{self.kind}'")
        if not (math.isfinite(self.start) and self.end > self.start):
            raise InvalidDensityError(f"piece needs start < end, got [{self.start}, {self.end})")
        if math.isinf(self.end) and not (self.kind == "exp" and self.rate > 0):
            raise InvalidDensityError("only a decaying exponential piece may extend to infinity")
        if self.kind == "callable":
            if self.func is None:
                raise InvalidDensityError("callable piece needs a func")
            sampled = np.asarray(self.func(np.linspace(self.start, self.end, 257)[:-1]), float)
            if np.any(~np.isfinite(sampled)) or np.any(sampled < 0):
                raise InvalidDensityError("callable piece is negative or non-finite")
        elif self.level < 0 or not math.isfinite(self.level):
            raise InvalidDensityError(f"piece level must be a finite nonnegative value, got {self.level}")

    @classmethod
    def constant(cls, start: float, end: float, level: float) -> "Piece":
        return cls(float(start), float(end), "const", float(level))

    @classmethod
    def exponential(cls, start: float, level: float, rate: float,
                    end: float = math.inf) -> "Piece":
        return cls(float(start), float(end), "exp", float(level), float(rate))

    @classmethod
    def from_callable(cls, start: float, end: float, func: Callable) -> "Piece":
        return cls(float(start), float(end), "callable", func=func)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= self.start) & (t < self.end)
        if self.kind == "const":
            values = np.full(t.shape, self.level)
        elif self.kind == "exp":
            values = self.level * np.exp(-self.rate * np.where(inside, t - self.start, 0.0))
        else:
            values = np.asarray(self.func(np.where(inside, t, self.start)), float) * np.ones(t.shape)
        return np.where(inside, values, 0.0)

    def value(self, t: float) -> float:
        """Scalar density, the fast path used inside quadrature."""
        if not self.start <= t < self.end:
            return 0.0
        if self.kind == "const":
            return self.level
        if self.kind == "exp":
            return self.level * math.exp(-self.rate * (t - self.start))
        return float(self.func(t))

    def mass_up_to(self, t):
        t = np.asarray(t, dtype=float)
        hi = np.clip(t, self.start, self.end)
        width = hi - self.start
        if self.kind == "const":
            out = self.level * width
        elif self.kind == "exp":
            if self.rate == 0.0:
                out = self.level * width
            else:
                out = self.level * -np.expm1(-self.rate * width) / self.rate
        else:
            out = np.vectorize(lambda h: integrate_panels(self.value, self.start, h))(hi)
        return out if out.ndim else float(out)

    @property
    def mass(self) -> float:
        return float(self.mass_up_to(self.end))

    def moment(self) -> float:
        return integrate_panels(lambda t: t * self.value(t), self.start, self.end)

    def neg_entropy_integral(self) -> float:
        """-integral of f log f over the piece."""
        if self.kind == "const":
            return -float(xlogy(self.level, self.level)) * (self.end - self.start)
        if self.kind == "exp" and math.isinf(self.end) and self.level > 0:
            return self.mass * (1.0 - math.log(self.level))
        return integrate_panels(lambda t: -float(xlogy(self.value(t), self.value(t))),
                                self.start, self.end)

    def invert(self, u: np.ndarray) -> np.ndarray:
        """Maps uniforms on [0,1) to draws from this piece, renormalized."""
        u = np.asarray(u, dtype=float)
        width = self.end - self.start
        if self.kind == "const" or (self.kind == "exp" and self.rate == 0.0):
            return self.start + u * width
        if self.kind == "exp":
            span = 1.0 if math.isinf(width) else -math.expm1(-self.rate * width)
            return self.start - np.log1p(-u * span) / self.rate
        nodes = np.linspace(self.start, self.end, INVERSION_NODES)
        heights = self.pdf(np.minimum(nodes, np.nextafter(self.end, self.start)))
        cumulative = integrate.cumulative_trapezoid(heights, nodes, initial=0.0)
        return np.interp(u * cumulative[-1], cumulative, nodes)


# --------------------------------------------------------------------
# Mixed atom + continuous density
# --------------------------------------------------------------------
@dataclass(frozen=True)
class MixedDensity1D:
    atoms: tuple = ()
    pieces: tuple = ()

    def __post_init__(self):
        atoms = tuple(sorted(self.atoms, key=lambda a: a.location))
        pieces = tuple(self.pieces)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "pieces", pieces)

        if not atoms and not pieces:
            raise InvalidDensityError("density has neither atoms nor pieces")
        locations = [a.location for a in atoms]
        if len(set(locations)) != len(locations):
            raise InvalidDensityError("atom locations must be distinct")
        for prev, nxt in zip(pieces[:-1], pieces[1:]):
            if nxt.start < prev.end:
                raise InvalidDensityError(
                    f"pieces overlap or are unsorted: [{prev.start}, {prev.end}) then [{nxt.start}, {nxt.end})")

        total = self.total_mass()
        tol = MASS_TOL_QUAD if any(p.kind == "callable" for p in pieces) else MASS_TOL
        if abs(total - 1.0) > tol:
            raise InvalidDensityError(f"total mass is {total!r}, expected 1")

    # --- Constructors ---
    @classmethod
    def point_mass(cls, location: float = 0.0) -> "MixedDensity1D":
        return cls(atoms=(Atom(float(location), 1.0),))

    @classmethod
    def uniform(cls, start: float, end: float) -> "MixedDensity1D":
        return cls(pieces=(Piece.constant(start, end, 1.0 / (end - start)),))

    # --- Shape ---
    @property
    def support(self) -> tuple:
        lows = [a.location for a in self.atoms] + [p.start for p in self.pieces]
        highs = [a.location for a in self.atoms] + [p.end for p in self.pieces]
        return min(lows), max(highs)

    @property
    def has_atoms(self) -> bool:
        return bool(self.atoms)

    def breakpoints(self) -> list:
        points = {a.location for a in self.atoms}
        for p in self.pieces:
            points.add(p.start)
            if math.isfinite(p.end):
                points.add(p.end)
        return sorted(points)

    # --- Evaluation ---
    def total_mass(self) -> float:
        return math.fsum([a.mass for a in self.atoms] + [p.mass for p in self.pieces])

    def pdf(self, t):
        """Density of the continuous part only."""
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        for p in self.pieces:
            out = out + p.pdf(t)
        return out if out.ndim else float(out)

    def value(self, t: float) -> float:
        return sum(p.value(t) for p in self.pieces)

    def cdf(self, t):
        """Right-continuous F(t), atoms at t included."""
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        for a in self.atoms:
            out = out + a.mass * (t >= a.location)
        for p in self.pieces:
            out = out + p.mass_up_to(t)
        out = np.minimum(out, 1.0)
        return out if out.ndim else float(out)

    def cdf_left(self, t):
        """F(t-), atoms at t excluded."""
        t = np.asarray(t, dtype=float)
        out = self.cdf(t) - sum(a.mass * (t == a.location) for a in self.atoms)
        return np.asarray(out) if np.ndim(out) else float(out)

    def mean(self) -> float:
        return math.fsum([a.mass * a.location for a in self.atoms] + [p.moment() for p in self.pieces])

    def sample(self, stream: np.random.Generator, size) -> np.ndarray:
        weights = np.array([a.mass for a in self.atoms] + [p.mass for p in self.pieces])
        weights = weights / weights.sum()
        component = stream.choice(len(weights), size=size, p=weights)
        u = stream.random(size)
        out = np.empty(np.shape(component))
        n_atoms = len(self.atoms)
        for i, atom in enumerate(self.atoms):
            out[component == i] = atom.location
        for j, piece in enumerate(self.pieces):
            mask = component == n_atoms + j
            out[mask] = piece.invert(u[mask])
        return out


def differential_entropy(density: MixedDensity1D) -> float:
    """-integral of f log f in nats; only defined for atom-free densities."""
    if density.has_atoms:
        raise ValueError("differential entropy is undefined for a density with atoms")
    return math.fsum(p.neg_entropy_integral() for p in density.pieces)


# --------------------------------------------------------------------
# First-passage models
# --------------------------------------------------------------------
@dataclass(frozen=True)
class FirstPassageModel:
    """A transit-time law on [0, inf) wrapping a frozen scipy.stats distribution."""
    law: object = field(compare=False)
    name: str
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise InvalidDensityError(f"passage rate must be positive, got {self.mu}")
        if float(self.law.cdf(0.0)) != 0.0:
            raise InvalidDensityError("first-passage law must put no mass at 0")
        if not math.isclose(float(self.law.mean()), 1.0 / self.mu, rel_tol=1e-9):
            raise InvalidDensityError(f"mean passage {self.law.mean()} does not equal 1/mu")

    @classmethod
    def exponential(cls, mu: float) -> "FirstPassageModel":
        return cls(stats.expon(scale=1.0 / mu), "exponential", float(mu))

    @classmethod
    def uniform(cls, mu: float) -> "FirstPassageModel":
        """Uniform on [0, 2/mu]: same mean as the exponential, not memoryless."""
        return cls(stats.uniform(loc=0.0, scale=2.0 / mu), "uniform", float(mu))

    @classmethod
    def gamma(cls, mu: float, shape: float) -> "FirstPassageModel":
        if shape < 1:
            raise InvalidDensityError("gamma passage with shape < 1 has a singular density at 0")
        return cls(stats.gamma(a=shape, scale=1.0 / (shape * mu)), f"gamma{shape:g}", float(mu))

    @property
    def is_exponential(self) -> bool:
        return self.name == "exponential"

    @property
    def mean_passage(self) -> float:
        return 1.0 / self.mu

    @property
    def edges(self) -> list:
        """Finite kinks of the passage density (quadrature cut points)."""
        lo, hi = self.law.support()
        return [e for e in (lo, hi) if math.isfinite(e)]

    def pdf(self, d):
        return self.law.pdf(d)

    def logpdf(self, d):
        return self.law.logpdf(d)

    def cdf(self, d):
        d = np.asarray(d, dtype=float)
        out = np.where(d <= 0, 0.0, self.law.cdf(np.maximum(d, 0.0)))
        return out if out.ndim else float(out)

    def ccdf(self, d):
        d = np.asarray(d, dtype=float)
        out = np.where(d <= 0, 1.0, self.law.sf(np.maximum(d, 0.0)))
        return out if out.ndim else float(out)

    def entropy(self) -> float:
        return float(self.law.entropy())


def eval_cdf(model: FirstPassageModel, d):
    """G(d); zero for d <= 0. The survival function is 1 - G(d)."""
    return model.cdf(d)


def sample(model: FirstPassageModel, stream: np.random.Generator, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    return np.asarray(model.law.rvs(size=n, random_state=stream), dtype=float)


# --------------------------------------------------------------------
# Expectations across atoms
# --------------------------------------------------------------------
class JumpConvention(Enum):
    """How an integrand that jumps at an atom is valued there."""
    AVERAGE = "average"
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class JumpIntegrand:
    """
    outer(psi(t)) where psi jumps at atom locations. limits(x) returns the
    (left, right) values of psi at x; psi may be scalar or vector valued.
    power=k marks outer(u) == u**k so the average has a closed form.
    """
    psi: Callable
    outer: Callable
    limits: Callable
    power: Optional[int] = None

    def __call__(self, t: float) -> float:
        return float(self.outer(self.psi(t)))


def power_integrand(psi: Callable, limits: Callable, k: int) -> JumpIntegrand:
    return JumpIntegrand(psi=psi, outer=lambda u: u ** k, limits=limits, power=k)


def jump_value(integrand: JumpIntegrand, location: float,
               convention: JumpConvention = JumpConvention.AVERAGE) -> float:
    left, right = integrand.limits(location)
    if convention is JumpConvention.LEFT:
        return float(integrand.outer(left))
    if convention is JumpConvention.RIGHT:
        return float(integrand.outer(right))

    if integrand.power is not None and np.ndim(left) == 0:
        k = integrand.power
        a, b = float(left), float(right)
        if a == b:
            return a ** k
        return (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a))

    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    if np.array_equal(left, right):
        return float(integrand.outer(left if left.ndim else float(left)))
    step = right - left
    value, _ = integrate.quad(lambda v: float(integrand.outer(left + v * step)), 0.0, 1.0,
                              epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
    return value


def mixed_expectation(density: MixedDensity1D, integrand: Callable,
                      convention: JumpConvention = JumpConvention.AVERAGE) -> float:
    """
    E[h(T)] for a mixed density: each atom contributes mass times the convention
    value of h across its jump, the continuous part is integrated panel by panel.
    """
    cuts = density.breakpoints()
    terms = []
    for atom in density.atoms:
        if isinstance(integrand, JumpIntegrand):
            value = jump_value(integrand, atom.location, convention)
        else:
            value = float(integrand(atom.location))
        if not math.isfinite(value):
            raise ValueError(f"integrand is not finite at atom {atom.location}")
        terms.append(atom.mass * value)

    for piece in density.pieces:
        part = integrate_panels(lambda t, p=piece: p.value(t) * float(integrand(t)),
                                piece.start, piece.end, cuts)
        if not math.isfinite(part):
            raise ValueError(f"integrand is not finite on [{piece.start}, {piece.end})")
        terms.append(part)
    return math.fsum(terms)


# --------------------------------------------------------------------
# Launch/transit convolution
# --------------------------------------------------------------------
def _exp_window(piece: Piece, mu: float, lo: float, hi: float, t: float) -> float:
    """integral over [lo, hi] of piece(x) * exp(-mu (t - x)) for a const/exp piece, hi <= t."""
    if hi <= lo:
        return 0.0
    rate = piece.rate if piece.kind == "exp" else 0.0
    width = hi - lo
    diff = mu - rate
    if diff >= 0:
        base = math.exp(-rate * (hi - piece.start) - mu * (t - hi))
        return piece.level * base * width * float(exprel(-diff * width))
    base = math.exp(-rate * (lo - piece.start) - mu * (t - lo))
    return piece.level * base * width * float(exprel(diff * width))


def _continuous_transit(density: MixedDensity1D, passage: FirstPassageModel, t: float,
                        kernel: str) -> float:
    """integral over x <= t of f(x) k(t - x) for k in {'ccdf', 'pdf', 'cdf'}."""
    total = []
    for piece in density.pieces:
        lo, hi = piece.start, min(piece.end, t)
        if hi <= lo:
            continue
        if passage.is_exponential and piece.kind != "callable" and kernel != "cdf":
            window = _exp_window(piece, passage.mu, lo, hi, t)
            total.append(passage.mu * window if kernel == "pdf" else window)
            continue
        k = {"ccdf": passage.ccdf, "pdf": passage.pdf, "cdf": passage.cdf}[kernel]
        cuts = [t - e for e in passage.edges] + density.breakpoints()
        total.append(integrate_panels(lambda x, p=piece: p.value(x) * float(k(t - x)), lo, hi, cuts))
    return math.fsum(total)


def transit_mass(density: MixedDensity1D, passage: FirstPassageModel, t: float,
                 include_atom_at_t: bool = True) -> float:
    """
    Probability that a token launched from this density has launched by t and
    is still in transit at t. include_atom_at_t selects the right limit at an atom.
    """
    atoms = [a.mass * float(passage.ccdf(t - a.location)) for a in density.atoms
             if a.location < t or (include_atom_at_t and a.location == t)]
    return math.fsum(atoms) + _continuous_transit(density, passage, t, "ccdf")


def convolve(input: MixedDensity1D, passage: FirstPassageModel, s: float) -> float:
    """Output density f_S(s) of S = T + D; atoms of T smear into the passage density."""
    if s < 0:
        raise ValueError(f"s must be nonnegative, got {s}")
    atoms = [a.mass * float(passage.pdf(s - a.location)) for a in input.atoms if a.location <= s]
    return math.fsum(atoms) + _continuous_transit(input, passage, s, "pdf")


def output_cdf(input: MixedDensity1D, passage: FirstPassageModel, s: float) -> float:
    """P(S <= s) for S = T + D."""
    atoms = [a.mass * float(passage.cdf(s - a.location)) for a in input.atoms if a.location <= s]
    if passage.is_exponential:
        cont = float(sum(p.mass_up_to(s) for p in input.pieces))
        return math.fsum(atoms) + cont - _continuous_transit(input, passage, s, "ccdf")
    return math.fsum(atoms) + _continuous_transit(input, passage, s, "cdf")


def output_density(input: MixedDensity1D, passage: FirstPassageModel) -> Callable:
    """Vectorized s -> f_S(s)."""
    return np.vectorize(lambda s: convolve(input, passage, s) if s >= 0 else 0.0, otypes=[float])
