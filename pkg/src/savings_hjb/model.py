"""Economic primitives of the stochastic optimal-savings problem.

Capital K and population N evolve as

    dK = [A K^beta N^(1-beta) - N c] dt + eps K dW_K
    dN = f(N) dt + sigma N dW_N

and society maximises E[int N u1(c) dt + N(T) u2(K(T)/N(T))].  The utilities
are CRRA, u(x) = x^(1-gamma) / (1-gamma), so the inverse marginal utility is
j(x) = x^(-1/gamma).

This module also evaluates the explicit constants that pin the marginal
value lambda = dv/dK between two power laws in N/K, and the envelope
functions built from them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, asdict

import numpy as np
from scipy import optimize

REGIMES = ("beta_ge_gamma_low", "beta_ge_gamma_high", "beta_eq_gamma", "beta_lt_gamma")


class CRRAUtility:
    """u(x) = x^(1-gamma)/(1-gamma) with its derivatives and inverse marginal."""

    def __init__(self, gamma: float):
        if not 0.0 < gamma < 1.0:
            raise ValueError("gamma must lie in (0,1)")
        self.gamma = gamma

    def value(self, x):
        x = _positive(x, "utility argument")
        return x ** (1.0 - self.gamma) / (1.0 - self.gamma)

    def marginal(self, x):
        x = _positive(x, "utility argument")
        return x ** (-self.gamma)

    def inverse_marginal(self, y):
        y = _positive(y, "inverse marginal utility argument")
        return y ** (-1.0 / self.gamma)


def _positive(x, what):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0.0)):
        raise ValueError(f"{what} must be positive")
    return arr if arr.ndim else float(arr)


@dataclass(frozen=True)
class ModelParams:
    """All economic and stochastic parameters of the model.

    ``alpha_f``, ``M_f`` and ``Nbar`` parametrise the population drift
    f(x) = alpha x (Nbar - x) for x <= M, continued linearly beyond M.
    ``A = 0`` and ``alpha_f = 0`` are accepted; they freeze production or
    population growth and are used by closed-form checks.
    """

    A: float = 1.0
    beta: float = 0.5
    gamma: float = 0.5
    eps: float = 0.01
    sigma: float = 0.1
    T: float = 1.0
    alpha_f: float = 0.5
    M_f: float = 3.0
    Nbar: float = 2.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValueError(f"{f.name} must be a finite number")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0,1)")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0,1)")
        if self.A < 0.0:
            raise ValueError("A must be >= 0")
        if self.eps < 0.0:
            raise ValueError("eps must be >= 0")
        if self.sigma < 0.0:
            raise ValueError("sigma must be >= 0")
        if self.T < 0.0:
            raise ValueError("T must be >= 0")
        if self.alpha_f < 0.0:
            raise ValueError("alpha_f must be >= 0")
        if self.Nbar <= 0.0:
            raise ValueError("Nbar must be > 0")
        if self.M_f < self.Nbar:
            raise ValueError("M_f must be >= Nbar")

    # CRRA instantiation of the utility constants.
    a1 = property(lambda self: 1.0)
    a2 = property(lambda self: 1.0)
    a3 = property(lambda self: 1.0)
    a4 = property(lambda self: self.gamma * (1.0 + self.gamma))
    a5 = property(lambda self: self.gamma * (1.0 + self.gamma))
    # Only upper bounds would use this one; zero in the CRRA limit.
    aa1 = property(lambda self: 0.0)

    @property
    def atilde4(self) -> float:
        return self.a4 - 2.0 * max(self.beta, self.gamma)

    @property
    def atilde5(self) -> float:
        return self.a5 - 2.0 * min(self.beta, self.gamma)

    @property
    def Cf(self) -> float:
        return lipschitz_constant(self)

    @property
    def utility(self) -> CRRAUtility:
        return CRRAUtility(self.gamma)

    def replace(self, **changes) -> "ModelParams":
        d = asdict(self)
        d.update(changes)
        return ModelParams(**d)

    def as_dict(self) -> dict:
        return asdict(self)


def production(K, N, params: ModelParams):
    """Cobb-Douglas output A K^beta N^(1-beta)."""
    K = _positive(K, "K")
    N = _positive(N, "N")
    return params.A * K**params.beta * N ** (1.0 - params.beta)


def drift_f(x, params: ModelParams):
    """Piecewise logistic population drift; linear continuation past M."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0) or np.any(np.isnan(arr)):
        raise ValueError("population must be >= 0")
    a, M, Nb = params.alpha_f, params.M_f, params.Nbar
    out = np.where(arr <= M, a * arr * (Nb - arr), a * M * M + a * (Nb - 2.0 * M) * arr)
    return float(out) if np.ndim(x) == 0 else out


def drift_f_over_x(x, params: ModelParams):
    """f(x)/x, finite at x = 0; used by the log-coordinate schemes."""
    arr = np.asarray(x, dtype=float)
    a, M, Nb = params.alpha_f, params.M_f, params.Nbar
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(arr <= M, a * (Nb - arr), a * M * M / arr + a * (Nb - 2.0 * M))
    return float(out) if np.ndim(x) == 0 else out


def lipschitz_constant(params: ModelParams) -> float:
    """sup |f'| = alpha * max(Nbar, 2M - Nbar)."""
    return params.alpha_f * max(params.Nbar, 2.0 * params.M_f - params.Nbar)


def u1(c, params: ModelParams):
    return params.utility.value(c)


def u2(x, params: ModelParams):
    return params.utility.value(x)


def u1_prime(c, params: ModelParams):
    return params.utility.marginal(c)


def u2_prime(x, params: ModelParams):
    return params.utility.marginal(x)


def j(x, params: ModelParams):
    """Inverse marginal utility (u1')^{-1}; optimal consumption given lambda."""
    return params.utility.inverse_marginal(x)


def _expm1_over(b: float, T: float) -> float:
    """(e^{bT} - 1)/b with the b -> 0 limit T."""
    if abs(b) * max(T, 1.0) < 1e-12:
        return T
    return math.expm1(b * T) / b


def _sup_power_difference(c: float, a: float, B: float, e: float) -> float:
    """sup_{z>0} (c z^a - B z^e) for 0 < a < e, located on a log grid.

    The grid maximum is refined by a bounded scalar search in log z.
    """
    if c <= 0.0:
        return 0.0
    if B <= 0.0:
        return math.inf
    g = lambda lz: c * math.exp(a * lz) - B * math.exp(e * lz)
    lz = np.linspace(-60.0, 60.0, 4801)
    with np.errstate(over="ignore", invalid="ignore"):
        vals = c * np.exp(a * lz) - B * np.exp(e * lz)
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    k = int(np.argmax(vals))
    lo, hi = lz[max(k - 1, 0)], lz[min(k + 1, len(lz) - 1)]
    res = optimize.minimize_scalar(lambda s: -g(s), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    return max(float(vals[k]), -float(res.fun), 0.0)


def c_beta_gamma(beta: float, gamma: float) -> float:
    """Least C with 1 <= C x^(2beta-1-gamma) + x^(beta-1) for all x > 0, plus 1%.

    Only meaningful when gamma <= 2 beta - 1.  For x <= 1 the inequality holds
    for any C >= 0, so the search runs over x in (1, 1e6).
    """
    e = 2.0 * beta - 1.0 - gamma
    if e < 0.0:
        raise ValueError("C(beta, gamma) requires gamma <= 2 beta - 1")

    def ratio(lx):
        x = math.exp(lx)
        return (1.0 - x ** (beta - 1.0)) / x**e

    lx = np.linspace(0.0, math.log(1e6), 2001)
    vals = np.array([ratio(v) for v in lx])
    k = int(np.argmax(vals))
    lo, hi = lx[max(k - 1, 0)], lx[min(k + 1, len(lx) - 1)]
    res = optimize.minimize_scalar(lambda s: -ratio(s), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    best = max(float(vals[k]), -float(res.fun))
    if e == 0.0:
        best = 1.0  # supremum attained only as x -> infinity
    return 1.01 * best


NAN = math.nan


@dataclass(frozen=True)
class BoundConstants:
    """Explicit constants of the pointwise envelopes for lambda.

    Constants that do not apply to the active ``regime`` are NaN.
    ``p`` is the Hoelder exponent 2(1-beta)/(1+gamma-2beta) used when
    beta > gamma > 2beta-1; ``p_lower`` is the reverse-Hoelder exponent
    (1+gamma-2beta)/(1-beta) used when beta < gamma.
    """

    regime: str
    beta: float
    gamma: float
    T: float
    c0: float
    atilde: float
    a_const: float
    b: float
    C1: float = NAN
    C2: float = NAN
    C3: float = NAN
    C4: float = NAN
    C5: float = NAN
    C6: float = NAN
    b1: float = NAN
    b2: float = NAN
    b3: float = NAN
    b5: float = NAN
    b6: float = NAN
    b7: float = NAN
    p: float = NAN
    q: float = NAN
    p_lower: float = NAN
    a_p_beta_minus_gamma: float = NAN
    a_p_beta: float = NAN
    C_beta_gamma: float = NAN
    extras: dict = field(default_factory=dict, compare=False)

    def table(self) -> list[tuple[str, float]]:
        names = ["c0", "atilde", "a_const", "b", "C1", "C2", "C3", "C4", "C5", "C6",
                 "b1", "b2", "b3", "b5", "b6", "b7", "p", "q", "p_lower",
                 "a_p_beta_minus_gamma", "a_p_beta", "C_beta_gamma"]
        return [(n, getattr(self, n)) for n in names]


def regime_of(beta: float, gamma: float) -> str:
    if math.isclose(beta, gamma, rel_tol=0.0, abs_tol=1e-14):
        return "beta_eq_gamma"
    if beta < gamma:
        return "beta_lt_gamma"
    if gamma <= 2.0 * beta - 1.0:
        return "beta_ge_gamma_low"
    return "beta_ge_gamma_high"


def compute_bound_constants(params: ModelParams) -> BoundConstants:
    """Evaluate every envelope constant for ``params`` in its (beta, gamma) regime."""
    beta, gamma, T, A = params.beta, params.gamma, params.T, params.A
    Cf = params.Cf
    a1, a2, a3 = params.a1, params.a2, params.a3
    s2 = params.sigma**2 + params.eps**2
    regime = regime_of(beta, gamma)

    atilde = -Cf * beta + 0.5 * params.atilde4 * s2
    c0 = min(a2 ** (1.0 / gamma), a2 ** (1.0 / gamma) * math.exp(atilde * T / gamma))
    a = Cf * beta + 0.5 * params.atilde5 * s2 + a1 * beta / c0
    b = (beta - 1.0) * (-Cf + 0.5 * (beta - 2.0) * s2)
    growth = A * (1.0 - beta) * _expm1_over(b, T)  # A(1-beta)(e^{bT}-1)/b
    out = dict(regime=regime, beta=beta, gamma=gamma, T=T, c0=c0, atilde=atilde,
               a_const=a, b=b)

    if regime == "beta_eq_gamma":
        out.update(C1=a3 * math.exp(a * T), C2=0.0)
    elif regime == "beta_ge_gamma_low":
        cbg = c_beta_gamma(beta, gamma)
        b1 = (beta - gamma) * A * a3 / a2 + Cf * beta + a1 * beta / c0 + 0.5 * params.atilde5 * s2
        b2 = (beta - gamma) * A * a3 * cbg
        b3 = Cf * beta + a1 * beta / c0 + 0.5 * beta * (beta - 1.0) * s2
        g3 = _expm1_over(b3, T)
        out.update(C1=max(a3, a3 * math.exp(b1 * T)),
                   C2=max(b2 * math.exp(b1 * T) * g3, b2 * g3),
                   b1=b1, b2=b2, b3=b3, C_beta_gamma=cbg)
    elif regime == "beta_ge_gamma_high":
        p = 2.0 * (1.0 - beta) / (1.0 + gamma - 2.0 * beta)
        q = (beta - 1.0) / (gamma - beta)
        pbg = p * (beta - gamma)
        a_pbg = Cf * pbg + 0.5 * s2 * pbg * (pbg - 1.0) + a1 * pbg / c0
        a_pb = Cf * p * beta + 0.5 * s2 * (p * (p - 1.0) * beta**2 + p * params.atilde5) + a1 * p * beta / c0
        expo = (gamma - beta) / (beta - 1.0)
        tail = growth**expo
        out.update(
            C1=a3 * max(1.0, math.exp(a_pbg * T / p + a_pb * T / p + b * (gamma - beta) * T / (beta - 1.0))),
            C2=a3 * max(tail, math.exp(a_pbg * T / p + a_pb * T / p) * tail),
            p=p, q=q, a_p_beta_minus_gamma=a_pbg, a_p_beta=a_pb,
        )
    else:
        pl = (gamma + 1.0 - 2.0 * beta) / (1.0 - beta)
        bp = beta / pl
        b5 = -Cf * bp + 0.5 * bp * (bp - 1.0) * s2
        C3 = a2 * math.exp(b5 * pl * T)
        C4 = math.exp(b * T)
        C5 = growth
        theta = (gamma - beta) / (gamma * (1.0 - beta))
        pre = a1 * a2 ** (-1.0 / gamma) * math.exp(-b5 * pl * T / gamma)
        # z = X2/X1; the j(psi) term is bounded by k1 + k2 z^(1-beta/gamma)
        k1 = pre * math.exp(theta * b * T)
        k2 = pre * C5**theta
        lo, hi = 1.0 - beta / gamma, 1.0 - beta
        b6 = gamma * k1 + _sup_power_difference(gamma * k2, lo, A * (gamma - beta), hi)
        b7 = k1 + max(_sup_power_difference(k2, lo, 1.0, hi),
                      _sup_power_difference(k2, lo, 1.0, 2.0 * hi))
        C6 = a3 * math.exp((b6 + Cf * gamma + 0.5 * params.atilde5 * s2) * T)
        out.update(C3=C3, C4=C4, C5=C5, C6=C6, b5=b5, b6=b6, b7=b7, p_lower=pl,
                   extras={"k1": k1, "k2": k2, "theta": theta})
    return BoundConstants(**out)


def lower_envelope(K, N, constants: BoundConstants):
    """Lower power-law envelope of lambda; depends on (K, N) only through N/K."""
    r = np.asarray(N, dtype=float) / np.asarray(K, dtype=float)
    return _lower_from_ratio(r, constants)


def upper_envelope(K, N, constants: BoundConstants):
    r = np.asarray(N, dtype=float) / np.asarray(K, dtype=float)
    return _upper_from_ratio(r, constants)


def _lower_from_ratio(r, c: BoundConstants):
    if c.regime == "beta_lt_gamma":
        e = (c.gamma - c.beta) / (c.beta - 1.0)
        out = c.C3 * r**c.beta * (c.C4 * r ** (c.beta - 1.0) + c.C5) ** e
    else:
        out = c.c0**c.gamma * r**c.gamma
    return out if np.ndim(out) else float(out)


def _upper_from_ratio(r, c: BoundConstants):
    if c.regime == "beta_lt_gamma":
        out = c.C6 * r**c.gamma
    else:
        out = c.C1 * r**c.gamma + c.C2 * r**c.beta
    return out if np.ndim(out) else float(out)


def lower_envelope_log(z, constants: BoundConstants):
    """Lower envelope as a function of z = y - x = ln(N/K)."""
    return _lower_from_ratio(np.exp(z), constants)


def upper_envelope_log(z, constants: BoundConstants):
    return _upper_from_ratio(np.exp(z), constants)
