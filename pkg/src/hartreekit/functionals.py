"""Conserved quantities and virial functionals for the Hartree flow.

Conventions: mass M = int |u|^2; interaction P = int (|x|^{-g} * |u|^2)|u|^2;
form norm ||u||_{HV}^2 = ||grad u||^2 + int V|u|^2; energy
E = 1/2 ||u||_{HV}^2 - 1/4 P; variance I = int |x|^2 |u|^2 with
I' = 4 Im int conj(u) x.grad u and
I'' = 8 ||u||_{HV}^2 - 2g P - e,   e = 4 int (2V + x.grad V)|u|^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectral import Field, abs_sq, fftn, ifftn, integrate, riesz_convolve

CSV_COLUMNS = (
    "t",
    "mass",
    "energy",
    "grad_sq",
    "hv_sq",
    "p_value",
    "variance_I",
    "virial_I1",
    "virial_I2",
    "e_term",
    "z",
)


def mass(u: Field) -> float:
    return float(integrate(abs_sq(u)))


def grad_norm_sq(u: Field) -> float:
    """||grad u||^2 via Parseval."""
    g = u.grid
    uhat = fftn(u.values)
    return float((g.k_sq * (uhat * uhat.conj()).real).sum() * g.cell_volume / g.points**g.dim)


def potential_term(u: Field, v: Field) -> float:
    """int V |u|^2."""
    return float((v.values * (u.values * u.values.conj()).real).sum() * u.grid.cell_volume)


def hv_norm_sq(u: Field, v: Field | None = None) -> float:
    out = grad_norm_sq(u)
    if v is not None:
        out += potential_term(u, v)
    return out


def p_functional(u: Field, gamma: float) -> float:
    w = abs_sq(u)
    pot = riesz_convolve(w, gamma)
    return float((pot.values * w.values).sum() * u.grid.cell_volume)


def energy(u: Field, v: Field | None, gamma: float) -> float:
    return 0.5 * hv_norm_sq(u, v) - 0.25 * p_functional(u, gamma)


def weinstein(u: Field, v: Field | None, gamma: float) -> float:
    """W(u) = P(u) / (||u||_{HV}^gamma ||u||_{L2}^{4-gamma}); scale and phase invariant."""
    m = mass(u)
    hv = hv_norm_sq(u, v)
    if m <= 0 or hv <= 0:
        raise ValueError("weinstein quotient needs positive mass and form norm")
    return p_functional(u, gamma) / (hv ** (gamma / 2.0) * m ** ((4.0 - gamma) / 2.0))


def variance(u: Field) -> float:
    """I = int |x|^2 |u|^2."""
    return float((u.grid.r_sq * (u.values * u.values.conj()).real).sum() * u.grid.cell_volume)


def virial_first(u: Field) -> float:
    """I' = 4 Im int conj(u) x.grad u."""
    g = u.grid
    uhat = fftn(u.values)
    acc = 0.0
    uc = u.values.conj()
    for x, xi in zip(g.coords, g.freqs):
        du = ifftn(1j * xi * uhat)
        acc += float((uc * x * du).imag.sum())
    return 4.0 * acc * g.cell_volume


def e_term(u: Field, virial_weight: Field) -> float:
    """e = 4 int (2V + x.grad V) |u|^2."""
    return 4.0 * float(
        (virial_weight.values * (u.values * u.values.conj()).real).sum() * u.grid.cell_volume
    )


def virial_second(
    u: Field,
    v: Field | None,
    virial_weight: Field | None,
    gamma: float,
    rtol_consistency: float | None = 1e-5,
) -> float:
    """I'' = 8||u||_{HV}^2 - 2 gamma P - e.

    When both v and the weight are supplied, e is cross-checked against the
    integration-by-parts route int (x.grad V)|u|^2 = -int V (d|u|^2 + x.grad|u|^2),
    which never differentiates V; disagreement beyond rtol_consistency means
    the weight field does not belong to this potential.  Pass None to skip
    (sharp-interface potentials carry a surface term the sampled weight
    deliberately omits).
    """
    gs = grad_norm_sq(u)
    p = p_functional(u, gamma)
    vt = potential_term(u, v) if v is not None else 0.0
    e = e_term(u, virial_weight) if virial_weight is not None else 0.0
    if rtol_consistency is not None and v is not None and virial_weight is not None:
        g = u.grid
        rho = (u.values * u.values.conj()).real
        rhohat = fftn(rho)
        xgrad_rho = np.zeros(g.shape)
        for x, xi in zip(g.coords, g.freqs):
            xgrad_rho += x * ifftn(1j * xi * rhohat).real
        xgrad_v_term = -float((v.values * (g.dim * rho + xgrad_rho)).sum() * g.cell_volume)
        e_ibp = 8.0 * vt + 4.0 * xgrad_v_term
        scale = abs(e) + abs(e_ibp) + 8.0 * abs(vt) + 8.0 * gs
        if abs(e - e_ibp) > rtol_consistency * max(scale, 1e-300):
            raise AssertionError(
                f"virial weight inconsistent with potential: e={e!r} vs ibp {e_ibp!r}"
            )
    return 8.0 * (gs + vt) - 2.0 * gamma * p - e


@dataclass
class FunctionalSnapshot:
    """All monitored functionals of one state at one time."""

    time: float
    mass: float
    energy: float
    grad_sq: float
    hv_sq: float
    p_value: float
    variance_I: float
    virial_I1: float
    virial_I2: float
    e_term: float
    e_term_approximate: bool = False

    @property
    def z(self) -> float:
        return math.sqrt(max(self.variance_I, 0.0))

    def csv_row(self) -> list:
        return [
            self.time,
            self.mass,
            self.energy,
            self.grad_sq,
            self.hv_sq,
            self.p_value,
            self.variance_I,
            self.virial_I1,
            self.virial_I2,
            self.e_term,
            self.z,
        ]

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "mass": self.mass,
            "energy": self.energy,
            "grad_sq": self.grad_sq,
            "hv_sq": self.hv_sq,
            "p_value": self.p_value,
            "variance_I": self.variance_I,
            "virial_I1": self.virial_I1,
            "virial_I2": self.virial_I2,
            "e_term": self.e_term,
            "e_term_approximate": self.e_term_approximate,
            "z": self.z,
        }


def take_snapshot(
    u: Field,
    t: float,
    v: Field | None,
    virial_weight: Field | None,
    gamma: float,
    e_term_approximate: bool = False,
) -> FunctionalSnapshot:
    """Evaluate every monitored functional, sharing transforms where possible."""
    g = u.grid
    h_d = g.cell_volume
    w2 = (u.values * u.values.conj()).real
    m = float(w2.sum() * h_d)
    var = float((g.r_sq * w2).sum() * h_d)

    uhat = fftn(u.values)
    nrm = h_d / g.points**g.dim
    gs = float((g.k_sq * (uhat * uhat.conj()).real).sum() * nrm)

    i1 = 0.0
    uc = u.values.conj()
    for x, xi in zip(g.coords, g.freqs):
        du = ifftn(1j * xi * uhat)
        i1 += float((uc * x * du).imag.sum())
    i1 *= 4.0 * h_d

    pot = riesz_convolve(Field(g, w2), gamma)
    p = float((pot.values * w2).sum() * h_d)

    vt = float((v.values * w2).sum() * h_d) if v is not None else 0.0
    e = (
        4.0 * float((virial_weight.values * w2).sum() * h_d)
        if virial_weight is not None
        else 0.0
    )
    hv = gs + vt
    return FunctionalSnapshot(
        time=t,
        mass=m,
        energy=0.5 * hv - 0.25 * p,
        grad_sq=gs,
        hv_sq=hv,
        p_value=p,
        variance_I=var,
        virial_I1=i1,
        virial_I2=8.0 * hv - 2.0 * gamma * p - e,
        e_term=e,
        e_term_approximate=e_term_approximate,
    )


def cauchy_schwarz_gap(u: Field, v: Field | None, gamma: float, c_q: float) -> float:
    """I * (||u||_{HV}^2 - P^{2/g} / (c_q M^{(4-g)/g})) - (I'/4)^2, nonnegative by interpolation.

    c_q is the sharp constant C_Q = C_GN^{2/gamma} built from the ground
    state; the middle factor is nonnegative by the sharp inequality, and the
    whole expression is the discriminant-type gap behind the variance
    convexity estimates.
    """
    m = mass(u)
    hv = hv_norm_sq(u, v)
    p = p_functional(u, gamma)
    i = variance(u)
    i1 = virial_first(u)
    return i * (hv - p ** (2.0 / gamma) / (c_q * m ** ((4.0 - gamma) / gamma))) - (i1 / 4.0) ** 2
