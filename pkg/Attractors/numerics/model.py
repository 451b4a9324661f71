'''
Model: exponents, nonlinearities and the structural assumptions they must meet

The biomass M and nutrient ρ evolve by

    ∂t M = ∇·(M^α ∇M − M^γ ∇ρ) − f(M, ρ)
    ∂t ρ = Δρ − g(M, ρ)

with M = 0 and ρ = 1 on ∂Ω. The reaction terms are always carried in split form

    f(M, ρ) = L·M + f̃(M^β, ρ)          L the linear coefficient (F5 for conforming specs)
    g(M, ρ) = G1·ρ + g₂(ρ)·M

which is what the solver consumes: L is integrated exactly, f̃ and g by a
positivity-preserving weighting.

Naming conventions used herein:

alpha     α, the diffusion degeneracy exponent
gamma     γ, the taxis exponent
beta      β, the exponent inside f̃
F1..F5    structural constants of the reaction term f
G1, G2    structural constants of the consumption term g
xi        ξ, the growth exponent bounding |f|
s         the first argument of f̃, standing for M^β

Validators here never raise on a failed condition; they return a ValidationReport
listing every check with its slack (positive means satisfied with room to spare) and,
for sampled checks, the witness where the worst margin was found.
'''
import json
import math

import numpy as np

from collections import namedtuple

from .enums import NonlinearityKind
from .util import canonical_json, sha256_of

from Site.logutils import log


class ModelError(ValueError):
    '''
    Raised for model parameters or inputs that break a hard contract.
    '''


# One named condition in a validation report. witness is a dict of the sample point
# where the worst margin was seen, or None for closed-form checks.
Check = namedtuple("Check", ("name", "passed", "slack", "witness"), defaults=(None,))


class ValidationReport:
    '''
    An ordered collection of Checks.
    '''

    def __init__(self, title, checks=()):
        self.title = title
        self.checks = list(checks)

    def add(self, name, passed, slack, witness=None):
        self.checks.append(Check(name, bool(passed), float(slack), witness))

    def __iter__(self):
        return iter(self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def as_dict(self):
        return {"title": self.title,
                "passed": self.passed,
                "checks": [c._asdict() for c in self.checks]}

    def lines(self):
        '''
        Human readable lines, one per check, for the validate command.
        '''
        for c in self.checks:
            witness = ""
            if c.witness:
                witness = " at " + ", ".join(f"{k}={v:.6g}" for k, v in c.witness.items())
            yield f"{'PASS' if c.passed else 'FAIL'}  {c.name:<40s} slack={c.slack: .6g}{witness}"


class NonlinearitySpec:
    '''
    The reaction pair f, g in split form.

    :param kind: a NonlinearityKind
    :param f_tilde: f̃(s, ρ), vectorized, s standing for M^β
    :param g2: g₂(ρ), vectorized
    :param linear_sign: +1 or −1, the linear coefficient of f is linear_sign·F5
    :param g_linear: multiplies G1 in g (0 switches the G1·ρ term off)
    :param f_override: if given, f(M, ρ) is computed by this instead of the split form.
                       Only meant for probing the validators with non-conforming f.
    '''

    def __init__(self, kind, f_tilde, g2, linear_sign=1.0, g_linear=1.0, f_override=None, label=None):
        self.kind = kind
        self.f_tilde = f_tilde
        self.g2 = g2
        self.linear_sign = float(linear_sign)
        self.g_linear = float(g_linear)
        self.f_override = f_override
        self.label = label or kind.name

    def __repr__(self):
        return f"NonlinearitySpec({self.label})"


def _saturation(s):
    return s / (s + 1.0)


def example2_corrected_spec():
    '''
    f = F5·M − M^β/(M^β+1)·arctan ρ and g = G1·ρ + M·ρ/(ρ+1).
    '''
    return NonlinearitySpec(NonlinearityKind.example2_corrected,
                            f_tilde=lambda s, rho: -_saturation(s) * np.arctan(rho),
                            g2=lambda rho: rho / (rho + 1.0),
                            linear_sign=1.0)


def example2_printed_spec():
    '''
    The same pair with the sign of f flipped: f = −F5·M + M^β/(M^β+1)·arctan ρ.
    '''
    return NonlinearitySpec(NonlinearityKind.example2_printed,
                            f_tilde=lambda s, rho: _saturation(s) * np.arctan(rho),
                            g2=lambda rho: rho / (rho + 1.0),
                            linear_sign=-1.0)


def example1_spec():
    '''
    f = −M, g ≡ 0. With ρ₀ ≡ 1 the taxis term vanishes and M solves a porous medium
    equation with linear growth, the regime with an infinite dimensional attractor.
    '''
    return NonlinearitySpec(NonlinearityKind.custom,
                            f_tilde=lambda s, rho: np.zeros(np.broadcast(s, rho).shape),
                            g2=lambda rho: np.zeros(np.shape(rho)),
                            linear_sign=-1.0, g_linear=0.0, label="example1")


def zero_reaction_spec():
    '''
    f ≡ 0 and g ≡ 0, pure transport.
    '''
    return NonlinearitySpec(NonlinearityKind.custom,
                            f_tilde=lambda s, rho: np.zeros(np.broadcast(s, rho).shape),
                            g2=lambda rho: np.zeros(np.shape(rho)),
                            linear_sign=0.0, g_linear=0.0, label="zero")


# Spec names accepted in JSON model documents
SPEC_FACTORIES = {"example2_corrected": example2_corrected_spec,
                  "example2_printed": example2_printed_spec,
                  "example1": example1_spec,
                  "zero": zero_reaction_spec}

# The structural constants default to the corrected Example 2 values. ξ = 2 because
# the corrected f grows linearly in M, and 2 < α − γ + 2 whenever γ < α.
DEFAULT_CONSTANTS = {"F1": 1.0 + math.pi / 2,
                     "F2": 0.5,
                     "F3": math.pi / 2,
                     "F5": 1.0,
                     "G1": 1.0,
                     "G2": 1.0,
                     "xi": 2.0}

# nondegenerate switches the solver's diffusion exponent to 0 (the infinite speed
# contrast) while alpha keeps its validated value.
ModelParams = namedtuple("ModelParams",
                         ("alpha", "gamma", "beta", "spec", "F1", "F2", "F3", "F5", "G1", "G2", "xi", "nondegenerate"),
                         defaults=(None,) + tuple(DEFAULT_CONSTANTS[k] for k in ("F1", "F2", "F3", "F5", "G1", "G2", "xi")) + (False,))


def make_params(alpha, gamma, beta, spec=None, **constants):
    '''
    ModelParams with contract checks. spec may be a NonlinearitySpec or a spec name.
    '''
    if spec is None:
        spec = example2_corrected_spec()
    elif isinstance(spec, str):
        if spec not in SPEC_FACTORIES:
            raise ModelError(f"unknown nonlinearity spec '{spec}', expected one of {sorted(SPEC_FACTORIES)}")
        spec = SPEC_FACTORIES[spec]()

    unknown = set(constants) - set(DEFAULT_CONSTANTS) - {"nondegenerate"}
    if unknown:
        raise ModelError(f"unknown model constants: {sorted(unknown)}")

    params = ModelParams(float(alpha), float(gamma), float(beta), spec, **constants)

    if not params.alpha > 0:
        raise ModelError(f"alpha must be positive, got {params.alpha}")
    for name in ("F1", "F2", "F3", "G1", "G2", "xi"):
        if getattr(params, name) < 0:
            raise ModelError(f"{name} must be nonnegative, got {getattr(params, name)}")
    if not params.F5 > 0:
        raise ModelError(f"F5 must be positive, got {params.F5}")

    return params


def params_from_config(conf):
    '''
    ModelParams from a JSON model document:
        {alpha, gamma, beta, spec, constants: {F1..F5, G1, G2, xi}, nondegenerate}
    '''
    constants = dict(conf.get("constants", {}))
    if conf.get("nondegenerate"):
        constants["nondegenerate"] = True
    return make_params(conf["alpha"], conf["gamma"], conf["beta"], conf.get("spec", "example2_corrected"), **constants)


def params_to_config(params):
    return {"alpha": params.alpha,
            "gamma": params.gamma,
            "beta": params.beta,
            "spec": params.spec.label,
            "constants": {k: getattr(params, k) for k in DEFAULT_CONSTANTS},
            "nondegenerate": bool(params.nondegenerate)}


def model_hash(params):
    return sha256_of(canonical_json(params_to_config(params)))


def diffusion_exponent(params):
    return 0.0 if params.nondegenerate else params.alpha


def linear_coefficient(params):
    '''
    L in f = L·M + f̃(M^β, ρ).
    '''
    return params.spec.linear_sign * params.F5


def _nonnegative(M, rho):
    M = np.asarray(M, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(M < 0) or np.any(rho < 0):
        raise ModelError("f and g are only defined for M ≥ 0 and ρ ≥ 0")
    return M, rho


def _scalar_or_array(value):
    return float(value) if np.ndim(value) == 0 else value


def eval_f_tilde(params, s, rho):
    return params.spec.f_tilde(s, rho)


def eval_f(params, M, rho):
    '''
    f(M, ρ), vectorized over M and ρ.
    '''
    M, rho = _nonnegative(M, rho)
    spec = params.spec
    if spec.f_override is not None:
        return _scalar_or_array(spec.f_override(M, rho))
    return _scalar_or_array(linear_coefficient(params) * M + spec.f_tilde(M ** params.beta, rho))


def eval_g(params, M, rho):
    '''
    g(M, ρ) = G1·ρ + g₂(ρ)·M, vectorized over M and ρ.
    '''
    M, rho = _nonnegative(M, rho)
    spec = params.spec
    return _scalar_or_array(spec.g_linear * params.G1 * rho + spec.g2(rho) * M)


def validate_balance(alpha, gamma, beta):
    '''
    The exponent balance 1 + α/2 < γ < α, β > 1 + α/2 and α > 0, reported with slacks.
    '''
    report = ValidationReport("balance conditions")
    report.add("alpha > 0", alpha > 0, alpha)
    report.add("gamma > 1 + alpha/2", gamma > 1 + alpha / 2, gamma - 1 - alpha / 2)
    report.add("gamma < alpha", gamma < alpha, alpha - gamma)
    report.add("beta > 1 + alpha/2", beta > 1 + alpha / 2, beta - 1 - alpha / 2)
    return report


def kappa(params):
    '''
    The exponent κ = 2·min{(2·min{γ, β} − 2 − α)/(α + 2), γ} that measures how much the
    taxis and reaction differences can be absorbed by the degenerate diffusion.
    '''
    report = validate_balance(params.alpha, params.gamma, params.beta)
    if not report.passed:
        failed = ", ".join(c.name for c in report.failures())
        raise ModelError(f"kappa needs the balance conditions, failed: {failed}")

    a, g, b = params.alpha, params.gamma, params.beta
    return 2.0 * min((2.0 * min(g, b) - 2.0 - a) / (a + 2.0), g)


def sample_axis(count):
    '''
    0 followed by log-spaced points on [1e-3, 1e3].
    '''
    return np.concatenate(([0.0], np.logspace(-3.0, 3.0, count - 1)))


def _worst(name, margin, M, rho, report, tol=0.0):
    '''
    Adds a sampled check to report: passes when min(margin) ≥ −tol.
    '''
    i = np.unravel_index(np.argmin(margin), margin.shape)
    slack = float(margin[i])
    report.add(name, slack >= -tol, slack, {"M": float(M[i]), "rho": float(rho[i])})


def validate_assumptions(params, sample_count=400):
    '''
    Samples (M, ρ) on [0, 10³]², log-spaced with 0 included, and checks the structural
    assumptions on f and g:

        growth         |f(M,ρ)| ≤ F1·(1 + M^ξ)^½ with ξ ∈ [0, α − γ + 2)
        lower bound    f(M,ρ) ≥ F2·M − F3
        g split        g(M,ρ) = G1·ρ + g₂(ρ)·M with |g₂| ≤ G2
        zero M         f(0,ρ) = 0 and g₂(0) ≤ 0
        f split        f = F5·M + f̃(M^β,ρ) with F5 > 0, β > 1 + α/2

    :param sample_count: total number of (M, ρ) samples, at least 100
    '''
    if sample_count < 100:
        raise ModelError(f"need at least 100 samples, got {sample_count}")

    n = max(10, int(math.ceil(math.sqrt(sample_count))))
    M, rho = np.meshgrid(sample_axis(n), sample_axis(n), indexing="ij")

    p = params
    spec = p.spec
    f = np.asarray(eval_f(p, M, rho), dtype=np.float64)
    g = np.asarray(eval_g(p, M, rho), dtype=np.float64)

    report = ValidationReport(f"structural assumptions ({spec.label})")

    # Relative slack keeps margins at M = 10³ comparable to those near 0.
    scale = 1.0 + np.abs(M)

    bound = p.F1 * np.sqrt(1.0 + M ** p.xi)
    _worst("|f| <= F1 (1 + M^xi)^(1/2)", (bound - np.abs(f)) / scale, M, rho, report, tol=1e-12)
    xi_room = p.alpha - p.gamma + 2.0 - p.xi
    report.add("0 <= xi < alpha - gamma + 2", p.xi >= 0 and xi_room > 0, xi_room)

    _worst("f >= F2 M - F3", (f - (p.F2 * M - p.F3)) / scale, M, rho, report, tol=1e-12)

    g2 = np.asarray(spec.g2(rho), dtype=np.float64)
    split = np.abs(g - (spec.g_linear * p.G1 * rho + g2 * M)) / scale
    _worst("g = G1 rho + g2(rho) M", -split, M, rho, report, tol=1e-12)
    _worst("|g2(rho)| <= G2", p.G2 - np.abs(g2), M, rho, report, tol=1e-12)

    f0 = np.asarray(eval_f(p, np.zeros_like(rho[0]), rho[0]), dtype=np.float64)
    i = int(np.argmax(np.abs(f0)))
    report.add("f(0, rho) = 0", np.abs(f0[i]) == 0.0, -float(np.abs(f0[i])), {"M": 0.0, "rho": float(rho[0][i])})
    g2_zero = float(np.asarray(spec.g2(np.zeros(1)))[0])
    report.add("g2(0) <= 0", g2_zero <= 0.0, -g2_zero)

    residual = np.abs(f - (p.F5 * M + spec.f_tilde(M ** p.beta, rho))) / scale
    _worst("f = F5 M + f~(M^beta, rho)", -residual, M, rho, report, tol=1e-12)
    report.add("F5 > 0", p.F5 > 0, p.F5)
    report.add("beta > 1 + alpha/2", p.beta > 1 + p.alpha / 2, p.beta - 1 - p.alpha / 2)

    log.debug(f"validated {spec.label} on {M.size} samples: {'pass' if report.passed else 'FAIL'}")
    return report


def power_difference(M1, M2, p):
    '''
    M1^p − M2^p without cancellation when M1 ≈ M2, vectorized.
    '''
    M1 = np.asarray(M1, dtype=np.float64)
    M2 = np.asarray(M2, dtype=np.float64)
    hi = np.maximum(M1, M2)
    lo = np.minimum(M1, M2)
    sign = np.where(M1 >= M2, 1.0, -1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        # hi^p (1 − (lo/hi)^p) = −hi^p·expm1(p·log1p((lo − hi)/hi)), lo − hi is exact when M1 ≈ M2
        body = -np.expm1(p * np.log1p((lo - hi) / np.where(hi > 0, hi, 1.0)))
    return sign * hi ** p * np.where(hi > 0, body, 0.0)


def pairing_gap(M1, M2, alpha):
    '''
    (M1^{α+1} − M2^{α+1})(M1 − M2) − (α+1)/(1+α/2)²·(M1^{1+α/2} − M2^{1+α/2})²,
    nonnegative for all M1, M2 ≥ 0. Returns (gap, scale) so callers can judge it
    relative to the size of the terms.
    '''
    lhs = power_difference(M1, M2, alpha + 1.0) * (np.asarray(M1) - np.asarray(M2))
    rhs = (alpha + 1.0) / (1.0 + alpha / 2.0) ** 2 * power_difference(M1, M2, 1.0 + alpha / 2.0) ** 2
    return lhs - rhs, np.maximum(np.abs(lhs), np.abs(rhs))


def power_difference_gap(M1, M2, b, c):
    '''
    (c/b)·max{M1^b, M2^b}^{(c−b)/b}·|M1^b − M2^b| − |M1^c − M2^c|, nonnegative for
    c ≥ b > 0 by the mean value theorem applied to s ↦ s^{c/b}. Returns (gap, scale).
    '''
    if not c >= b > 0:
        raise ModelError(f"need c >= b > 0, got b={b}, c={c}")
    top = np.maximum(np.asarray(M1, dtype=np.float64), np.asarray(M2, dtype=np.float64))
    lhs = (c / b) * top ** (c - b) * np.abs(power_difference(M1, M2, b))
    rhs = np.abs(power_difference(M1, M2, c))
    return lhs - rhs, np.maximum(lhs, rhs)


def describe(params):
    return json.dumps(params_to_config(params), sort_keys=True)
