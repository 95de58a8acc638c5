"""Threshold algebra and the super-threshold dichotomy classifier.

Everything here is scalar work on conserved quantities: the critical exponent
s_c, the mass-energy ratio ME against a ground-state reference, the auxiliary
function f(x) whose stationary point x0 calibrates the virial argument, the
admission condition on I'(0), and the hypothesis conjunctions that turn those
numbers into a verdict.  The two reference branches (free profile when the
negative part of V vanishes, potential-pinned profile otherwise) are chosen
by the caller; classify() validates the choice against the potential.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .functionals import FunctionalSnapshot, take_snapshot
from .ground_state import GroundState
from .potentials import (
    PotentialSpec,
    check_admissible,
    eval_potential,
    eval_virial_weight,
    sign_classify,
)
from .spectral import Field

# strict theorem inequalities count as satisfied only beyond this
# margin-to-scale ratio, so grid noise cannot flip a verdict silently
STRICTNESS = 1e-8


def s_crit(gamma: float) -> float:
    """Scaling-critical Sobolev index (gamma - 2)/2."""
    if gamma == 2.0:
        warnings.warn("gamma = 2 sits on the mass-critical boundary; s_c = 0", stacklevel=2)
    return (gamma - 2.0) / 2.0


def _k0(gamma: float) -> float:
    # (8/(g-2))^{2/g} (g-2)/(2g); ties the sharp constant to the invariant below
    return (8.0 / (gamma - 2.0)) ** (2.0 / gamma) * (gamma - 2.0) / (2.0 * gamma)


def free_reference_invariant(c_q: float, gamma: float) -> float:
    """Scale-invariant product E(Q) M(Q)^{(4-gamma)/(gamma-2)} of the free
    ground-state family, recovered from the sharp constant alone.

    Every member of the frequency-scaled family shares this value, so it is
    the natural denominator scale for ME when only scalars are available."""
    if c_q <= 0:
        raise ValueError(f"c_q must be positive, got {c_q}")
    return (c_q / _k0(gamma)) ** (gamma / (2.0 - gamma))


def me_from_scalars(mass: float, energy: float, c_q: float, gamma: float) -> float:
    """ME built from conserved scalars and the sharp constant (free branch).

    Returns nan when energy <= 0: the fractional power is undefined there and
    the classifier handles that regime separately."""
    if mass <= 0:
        raise ValueError(f"mass must be positive, got {mass}")
    if energy <= 0:
        return math.nan
    sc = s_crit(gamma)
    jay = free_reference_invariant(c_q, gamma)
    return mass ** (1.0 - sc) * energy**sc / jay**sc


def me_ratio(u0: FunctionalSnapshot, gs: GroundState, gamma: float) -> float:
    """M^{1-s_c} E^{s_c} of the data over the same product of the reference.

    The caller passes the branch-correct reference (free profile for
    vanishing V_-, pinned profile otherwise).  Nonpositive data energy makes
    the fractional power undefined; that is reported as nan rather than an
    exception because the classifier routes those inputs to the convexity
    argument instead."""
    sc = s_crit(gamma)
    if gs.mass <= 0 or gs.energy <= 0:
        raise ValueError(
            f"reference state has M={gs.mass}, E={gs.energy}; both must be positive"
        )
    if u0.energy <= 0:
        return math.nan
    return (u0.mass / gs.mass) ** (1.0 - sc) * (u0.energy / gs.energy) ** sc


def f_eval(x: float, energy: float, mass: float, c_q: float, gamma: float) -> float:
    """The comparison function f(x) on (-inf, 16 E]."""
    top = 16.0 * energy - x
    if top < 0:
        raise ValueError(f"x = {x} exceeds 16 E = {16.0 * energy}; f is not defined there")
    g2 = gamma - 2.0
    return (
        2.0 * gamma * energy / g2
        - x / (4.0 * g2)
        - (top / (2.0 * g2)) ** (2.0 / gamma) / (c_q * mass ** ((4.0 - gamma) / gamma))
    )


def f_deriv(x: float, energy: float, mass: float, c_q: float, gamma: float) -> float:
    """df/dx; singular at the endpoint x = 16 E."""
    top = 16.0 * energy - x
    if top < 0:
        raise ValueError(f"x = {x} exceeds 16 E = {16.0 * energy}; f is not defined there")
    if top == 0:
        raise ValueError("df/dx is singular at x = 16 E")
    g2 = gamma - 2.0
    return -1.0 / (4.0 * g2) + (top / (2.0 * g2)) ** ((2.0 - gamma) / gamma) / (
        gamma * g2 * c_q * mass ** ((4.0 - gamma) / gamma)
    )


def x0_solve(energy: float, mass: float, c_q: float, gamma: float) -> float:
    """Unique stationary point of f, in closed form.

    Isolating the power term in f'(x0) = 0 gives
    16 E - x0 = 2 (gamma-2) * [gamma c_q M^{(4-gamma)/gamma} / 4]^{gamma/(2-gamma)},
    assembled in log space since the exponent is negative.  The result is
    validated against f'(x0) = 0 and f(x0) = x0/8 before being returned."""
    if mass <= 0 or c_q <= 0:
        raise ValueError(
            f"x0 needs positive mass and c_q, got mass={mass}, c_q={c_q}"
        )
    g2 = gamma - 2.0
    logt = (gamma / (2.0 - gamma)) * (
        math.log(gamma) + math.log(c_q) + (4.0 - gamma) / gamma * math.log(mass) - math.log(4.0)
    )
    gap = 2.0 * g2 * math.exp(logt)
    x0 = 16.0 * energy - gap
    # validate on the representable gap: once 16E - x0 sinks toward the ulp of
    # 16E the identities cannot be evaluated at full precision, so the
    # tolerance widens with the representation error instead of lying
    top_back = 16.0 * energy - x0
    if top_back <= 0.0:
        warnings.warn(
            "x0 is indistinguishable from 16E at double precision; "
            "identity validation skipped",
            stacklevel=2,
        )
        return x0
    rel_cap = max(1e-10, 64.0 * np.finfo(float).eps * abs(16.0 * energy) / top_back)
    fp = f_deriv(x0, energy, mass, c_q, gamma)
    fv = f_eval(x0, energy, mass, c_q, gamma)
    scale_fp = 1.0 / (4.0 * g2)
    scale_fv = max(abs(x0) / 8.0, 1e-4 * (abs(16.0 * energy) + gap))
    if abs(fp) > rel_cap * scale_fp or abs(fv - x0 / 8.0) > rel_cap * scale_fv:
        raise ArithmeticError(
            f"x0 = {x0} failed its defining identities: f'(x0) = {fp:.3e} "
            f"(scale {scale_fp:.3e}), f(x0) - x0/8 = {fv - x0 / 8.0:.3e} (scale {scale_fv:.3e})"
        )
    return x0


@dataclass
class Condition18:
    """Admission condition on the initial virial slope, both printed forms.

    satisfied/margin follow the theorem-stated form
    ME (1 - I'(0)^2 / (32 E I(0))) <= 1.  The companion form
    z'(0)^2 >= x0/2 is strictly stronger whenever x0 > 0; when the data falls
    in the window between the two boundaries, agrees is False and the note
    says so.  Disagreement outside that window would be a bug and raises."""

    satisfied: bool
    margin: float  # 1 - LHS; nonnegative means satisfied
    lhs: float
    z_prime_sq: float
    x0_half: float
    z_sq_boundary: float  # 8E (1 - 1/ME), the exact threshold of the stated form
    paper_form_satisfied: bool
    agrees: bool
    degenerate: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "satisfied": self.satisfied,
            "margin": self.margin,
            "lhs": self.lhs,
            "z_prime_sq": self.z_prime_sq,
            "x0_half": self.x0_half,
            "z_sq_boundary": self.z_sq_boundary,
            "paper_form_satisfied": self.paper_form_satisfied,
            "agrees": self.agrees,
            "degenerate": self.degenerate,
            "note": self.note,
        }


def check_condition_1_8(u0: FunctionalSnapshot, gs: GroundState, gamma: float) -> Condition18:
    """Evaluate the admission condition and its companion slope form."""
    i0 = u0.variance_I
    i1 = u0.virial_I1
    energy = u0.energy
    if i0 <= 0:
        return Condition18(
            satisfied=False, margin=-math.inf, lhs=math.inf, z_prime_sq=math.nan,
            x0_half=math.nan, z_sq_boundary=math.nan, paper_form_satisfied=False,
            agrees=True, degenerate=True,
            note="I(0) = 0: variance degenerate, condition cannot be evaluated",
        )
    me = me_ratio(u0, gs, gamma)
    if math.isnan(me):
        return Condition18(
            satisfied=False, margin=-math.inf, lhs=math.nan, z_prime_sq=i1 * i1 / (4.0 * i0),
            x0_half=math.nan, z_sq_boundary=math.nan, paper_form_satisfied=False,
            agrees=True, degenerate=True,
            note="E <= 0: ME undefined, condition not applicable (convexity regime)",
        )
    lhs = me * (1.0 - i1 * i1 / (32.0 * energy * i0))
    margin = 1.0 - lhs
    satisfied = lhs <= 1.0 + STRICTNESS

    z_prime_sq = i1 * i1 / (4.0 * i0)
    x0 = x0_solve(energy, u0.mass, gs.c_q, gamma)
    x0_half = x0 / 2.0
    boundary = 8.0 * energy * (1.0 - 1.0 / me)
    scale = max(abs(x0_half), abs(boundary), z_prime_sq, 1e-300)
    paper_sat = z_prime_sq >= x0_half - STRICTNESS * scale
    agrees = paper_sat == satisfied
    note = ""
    if not agrees:
        if boundary - STRICTNESS * scale <= z_prime_sq < x0_half + STRICTNESS * scale:
            note = (
                "z'(0)^2 lies between the stated boundary 8E(1-1/ME) and x0/2; "
                "the two printed forms of the condition differ in this window "
                "and the stated form is authoritative"
            )
        else:
            raise AssertionError(
                f"condition forms disagree outside the boundary window: "
                f"z'^2={z_prime_sq}, boundary={boundary}, x0/2={x0_half}"
            )
    return Condition18(
        satisfied=satisfied, margin=margin, lhs=lhs, z_prime_sq=z_prime_sq,
        x0_half=x0_half, z_sq_boundary=boundary, paper_form_satisfied=paper_sat,
        agrees=agrees, note=note,
    )


@dataclass
class DichotomyReport:
    """Everything the super-threshold classifier measured, plus the verdict."""

    verdict: str  # BlowUp | Global | BlowUpNegativeEnergy | Indeterminate
    gamma: float
    s_c: float
    me: float
    x0: float
    f_x0: float
    I0: float
    I1_0: float
    mass: float
    energy: float
    cond_me_gt_1: dict
    cond_1_8: dict
    sign_2V_xgradV: str
    cond_mp: dict
    sigma_membership: dict
    admissibility: dict
    branch: str  # free | pinned
    failed_blowup: list = dc_field(default_factory=list)
    failed_global: list = dc_field(default_factory=list)
    subthreshold: dict = dc_field(default_factory=dict)
    notes: list = dc_field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "gamma": self.gamma,
            "s_c": self.s_c,
            "me": self.me,
            "x0": self.x0,
            "f_x0": self.f_x0,
            "I0": self.I0,
            "I1_0": self.I1_0,
            "mass": self.mass,
            "energy": self.energy,
            "cond_me_gt_1": self.cond_me_gt_1,
            "cond_1_8": self.cond_1_8,
            "sign_2V_xgradV": self.sign_2V_xgradV,
            "cond_mp": self.cond_mp,
            "sigma_membership": self.sigma_membership,
            "admissibility": self.admissibility,
            "branch": self.branch,
            "failed_blowup": list(self.failed_blowup),
            "failed_global": list(self.failed_global),
            "subthreshold": self.subthreshold,
            "notes": list(self.notes),
        }


def _shell_variance_fraction(u: Field, shell: float = 0.1) -> float:
    grid = u.grid
    dens = np.abs(u.values) ** 2 * grid.r_sq
    total = float(dens.sum())
    if total == 0.0:
        return 0.0
    cut = (1.0 - shell) * grid.half_length
    mask = np.zeros(grid.shape, dtype=bool)
    for ax in grid.coords:
        mask |= np.abs(ax) >= cut
    return float(dens[mask].sum()) / total


def _sign_of_values(values, rtol: float = 1e-10) -> str:
    sup = float(np.abs(values).max())
    if sup == 0.0:
        return "zero"
    lo = float(values.min())
    hi = float(values.max())
    if lo >= -rtol * sup and hi <= rtol * sup:
        return "zero"
    if lo >= -rtol * sup:
        return "nonnegative"
    if hi <= rtol * sup:
        return "nonpositive"
    return "mixed"


def _negative_part_vanishes(spec: PotentialSpec, grid) -> bool:
    if spec.is_zero:
        return True
    v = eval_potential(spec, grid)
    sup = float(np.abs(v.values).max())
    return sup == 0.0 or float(v.values.min()) >= -1e-12 * sup


def classify(u0: Field, potential: PotentialSpec, gs: GroundState, gamma: float) -> DichotomyReport:
    """Apply the super-threshold dichotomy hypotheses to initial data.

    gs must be the branch-correct reference: the free profile when the
    negative part of V vanishes, the potential-pinned profile otherwise.
    Nothing here raises on data that merely fails hypotheses; the verdict
    degrades to Indeterminate with the failures listed."""
    grid = u0.grid
    free_branch = _negative_part_vanishes(potential, grid)
    if free_branch and not gs.potential.is_zero:
        raise ValueError(
            "V_- vanishes, so the reference must be the free profile; got one "
            f"solved with potential kind {gs.potential.kind!r}"
        )
    if not free_branch and gs.potential.to_dict() != potential.to_dict():
        raise ValueError(
            "V_- is nontrivial, so the reference must be pinned to the same "
            "potential; the provided reference was solved with a different one"
        )

    vfield = None if potential.is_zero else eval_potential(potential, grid)
    wfield = None if potential.is_zero else eval_virial_weight(potential, grid)
    snap = take_snapshot(
        u0, 0.0, vfield, wfield, gamma,
        e_term_approximate=potential.xgrad_is_distributional,
    )
    if snap.mass <= 0:
        raise ValueError("initial data has zero mass")

    notes: list = []
    sc = s_crit(gamma)
    adm = check_admissible(potential, grid)
    frac = _shell_variance_fraction(u0)
    sigma_ok = frac < 1e-6
    sigma_rec = {"shell_fraction": frac, "satisfied": sigma_ok, "threshold": 1e-6}
    if not sigma_ok:
        notes.append(
            "outer-shell variance fraction exceeds 1e-6; the data is not "
            "numerically localized enough to trust x-weighted quantities"
        )
    sign_w = sign_classify(potential, grid)
    if snap.e_term_approximate:
        notes.append("2V + x.grad V has a distributional part; its sign and e-term use the flagged interior value")

    me = me_ratio(snap, gs, gamma)
    energy = snap.energy

    # scalars that exist whenever they are defined at all
    x0 = math.nan
    f_x0 = math.nan
    if not math.isnan(me):
        x0 = x0_solve(energy, snap.mass, gs.c_q, gamma)
        f_x0 = f_eval(x0, energy, snap.mass, gs.c_q, gamma)
        scale16 = max(abs(16.0 * energy), 1e-300)
        me_above = me > 1.0 + STRICTNESS
        me_below = me < 1.0 - STRICTNESS
        if (me_above and x0 < -STRICTNESS * scale16) or (me_below and x0 > STRICTNESS * scale16):
            raise AssertionError(
                f"ME > 1 and x0 > 0 must agree: me={me}, x0={x0}, 16E={16.0 * energy}"
            )

    cond18 = check_condition_1_8(snap, gs, gamma)

    mp_u = snap.mass ** (1.0 - sc) * snap.p_value**sc
    mp_q = gs.mass ** (1.0 - sc) * gs.snapshot.p_value**sc
    mp_margin = mp_u - mp_q
    mp_rec = {
        "product_u": mp_u,
        "product_gs": mp_q,
        "margin": mp_margin,
        "scale": mp_q,
        "gt_satisfied": mp_margin > STRICTNESS * mp_q,
        "lt_satisfied": mp_margin < -STRICTNESS * mp_q,
    }

    me_rec = {
        "value": me,
        "margin": me - 1.0 if not math.isnan(me) else math.nan,
        "satisfied": (not math.isnan(me)) and me > 1.0 + STRICTNESS,
    }

    i1 = snap.virial_I1
    i1_tol = STRICTNESS * (math.sqrt(32.0 * abs(energy) * snap.variance_I) + abs(i1))
    i1_nonpos = i1 <= i1_tol
    i1_nonneg = i1 >= -i1_tol

    sign_ok_blowup = sign_w in ("nonnegative", "zero")
    sign_ok_global = sign_w in ("nonpositive", "zero")

    # negative-energy data bypasses ME: convexity closes the argument only
    # when the weight keeps e(t) >= 0, otherwise nothing is concluded
    if energy < 0:
        failed = []
        if not sigma_ok:
            failed.append("sigma_membership")
        if not adm.admissible:
            failed.append("admissible_potential")
        if not sign_ok_blowup:
            failed.append("weight_sign_nonnegative")
        verdict = "BlowUpNegativeEnergy" if not failed else "Indeterminate"
        if verdict == "BlowUpNegativeEnergy":
            notes.append("E_V(u0) < 0: concavity of the variance forces finite-time blow-up")
        else:
            notes.append("E_V(u0) < 0 but the convexity hypotheses are incomplete")
        return DichotomyReport(
            verdict=verdict, gamma=gamma, s_c=sc, me=me, x0=x0, f_x0=f_x0,
            I0=snap.variance_I, I1_0=i1, mass=snap.mass, energy=energy,
            cond_me_gt_1=me_rec, cond_1_8=cond18.to_dict(), sign_2V_xgradV=sign_w,
            cond_mp=mp_rec, sigma_membership=sigma_rec, admissibility=adm.to_dict(),
            branch="free" if free_branch else "pinned",
            failed_blowup=failed, failed_global=failed + ["me_gt_1"],
            subthreshold=_subthreshold_record(snap, potential, gs, gamma, me),
            notes=notes,
        )

    common = [
        ("sigma_membership", sigma_ok),
        ("admissible_potential", adm.admissible),
        ("me_gt_1", me_rec["satisfied"]),
        ("virial_bound_1_8", cond18.satisfied),
    ]
    blowup_hyps = common + [
        ("I1_nonpositive", i1_nonpos),
        ("weight_sign_nonnegative", sign_ok_blowup),
        ("mp_product_above", mp_rec["gt_satisfied"]),
    ]
    global_hyps = common + [
        ("I1_nonnegative", i1_nonneg),
        ("weight_sign_nonpositive", sign_ok_global),
        ("mp_product_below", mp_rec["lt_satisfied"]),
    ]
    failed_blowup = [name for name, ok in blowup_hyps if not ok]
    failed_global = [name for name, ok in global_hyps if not ok]

    if not failed_blowup and not failed_global:
        # cannot happen: the product inequalities are strict and opposed
        raise AssertionError("both hypothesis sets satisfied; strict product comparison is broken")
    if not failed_blowup:
        verdict = "BlowUp"
    elif not failed_global:
        verdict = "Global"
    else:
        verdict = "Indeterminate"

    return DichotomyReport(
        verdict=verdict, gamma=gamma, s_c=sc, me=me, x0=x0, f_x0=f_x0,
        I0=snap.variance_I, I1_0=i1, mass=snap.mass, energy=energy,
        cond_me_gt_1=me_rec, cond_1_8=cond18.to_dict(), sign_2V_xgradV=sign_w,
        cond_mp=mp_rec, sigma_membership=sigma_rec, admissibility=adm.to_dict(),
        branch="free" if free_branch else "pinned",
        failed_blowup=failed_blowup, failed_global=failed_global,
        subthreshold=_subthreshold_record(snap, potential, gs, gamma, me),
        notes=notes,
    )


def _subthreshold_record(
    snap: FunctionalSnapshot, potential: PotentialSpec, gs: GroundState, gamma: float, me: float
) -> dict:
    """Sub-threshold comparison record; verdict NotApplicable unless ME < 1,
    V >= 0 pointwise, and the reference is the free profile."""
    grid = gs.field.grid
    regime = "native" if (gamma == 3.0 and grid.dim == 5) else "heuristic-extension"
    rec = {
        "verdict": "NotApplicable",
        "regime": regime,
        "product_u": math.nan,
        "product_gs": math.nan,
        "margin": math.nan,
        "notes": [],
    }
    if math.isnan(me) or me >= 1.0 - STRICTNESS:
        rec["notes"].append("ME is not below 1")
        return rec
    if not potential.is_zero:
        v = eval_potential(potential, grid)
        if _sign_of_values(v.values) not in ("nonnegative", "zero"):
            rec["notes"].append("V takes negative values; the sub-threshold result needs V >= 0")
            return rec
    if not gs.potential.is_zero:
        rec["notes"].append("reference is not the free profile")
        return rec

    prod_u = math.sqrt(max(snap.hv_sq, 0.0) * snap.mass)
    prod_q = math.sqrt(gs.snapshot.hv_sq * gs.mass)
    margin = prod_u - prod_q
    rec.update(product_u=prod_u, product_gs=prod_q, margin=margin)
    if margin < -STRICTNESS * prod_q:
        rec["verdict"] = "GlobalScattersPredicted"
        if not potential.is_zero:
            xg = eval_virial_weight(potential, grid).values - 2.0 * eval_potential(potential, grid).values
            if _sign_of_values(xg) not in ("nonpositive", "zero"):
                rec["notes"].append(
                    "scattering additionally needs x.grad V <= 0, which fails here; "
                    "only persistence below the product threshold is predicted"
                )
    elif margin > STRICTNESS * prod_q:
        rec["verdict"] = "BlowUpPredicted"
        wsign = sign_classify(potential, grid)
        if wsign not in ("nonnegative", "zero"):
            rec["notes"].append(
                "gradient growth additionally needs 2V + x.grad V >= 0, which fails here; "
                "only persistence above the product threshold is predicted"
            )
    else:
        rec["notes"].append("product sits on the threshold within tolerance")
    if regime == "heuristic-extension":
        rec["notes"].append("outside the stated (gamma, d) = (3, 5) regime; prediction is a heuristic extension")
    return rec


def classify_subthreshold(
    u0: Field, potential: PotentialSpec, gs: GroundState, gamma: float
) -> dict:
    """Sub-threshold product comparison as a standalone call."""
    grid = u0.grid
    vfield = None if potential.is_zero else eval_potential(potential, grid)
    wfield = None if potential.is_zero else eval_virial_weight(potential, grid)
    snap = take_snapshot(
        u0, 0.0, vfield, wfield, gamma,
        e_term_approximate=potential.xgrad_is_distributional,
    )
    me = me_ratio(snap, gs, gamma)
    return _subthreshold_record(snap, potential, gs, gamma, me)
