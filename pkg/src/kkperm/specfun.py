"""Log-gamma and the regularized incomplete beta function.

Both are implemented directly (no scipy) so the calibration layer has a
small, auditable numerical core.
"""

from dataclasses import dataclass
import math

from .errors import DomainError, NumericError

__all__ = ["BetaParams", "log_gamma", "log_beta", "reg_inc_beta"]

_EULER_GAMMA = 0.5772156649015329
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# zeta(k) - 1 for k = 2, 3, ...; used by the Taylor series of lgamma(1+z).
_ZETA_MINUS_ONE = (
    0.6449340668482264,
    0.2020569031595943,
    0.08232323371113819,
    0.03692775514336993,
    0.01734306198444914,
    0.008349277381922827,
    0.00407735619794434,
    0.0020083928260822143,
    0.0009945751278180853,
    0.0004941886041194645,
    0.0002460865533080483,
    0.00012271334757848915,
    6.124813505870483e-05,
    3.058823630702049e-05,
    1.528225940865187e-05,
    7.637197637899763e-06,
    3.81729326499984e-06,
    1.908212716553939e-06,
    9.539620338727962e-07,
    4.769329867878064e-07,
    2.38450502727733e-07,
    1.1921992596531106e-07,
    5.960818905125948e-08,
    2.980350351465228e-08,
    1.4901554828365043e-08,
    7.45071178983543e-09,
    3.725334024788457e-09,
    1.862659723513049e-09,
    9.313274324196682e-10,
    4.656629065033784e-10,
    2.3283118336765053e-10,
    1.164155017270052e-10,
    5.820772087902701e-11,
    2.9103850444971e-11,
    1.4551921891041985e-11,
    7.275959835057482e-12,
    3.637979547378651e-12,
    1.818989650307066e-12,
    9.094947840263888e-13,
    4.547473783042154e-13,
)

# Stirling series coefficients B_{2k} / (2k (2k-1)).
_STIRLING = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
)


@dataclass(frozen=True)
class BetaParams:
    """Shape parameters of a Beta distribution.

    ``c0`` is the optional leading coefficient of a scaled incomplete-beta
    bound ``c0 * I(u; alpha, beta)``.
    """

    alpha: float
    beta: float
    c0: float | None = None

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"Beta shape {name} must be finite and > 0, got {v!r}")
        if self.c0 is not None and not (math.isfinite(self.c0) and self.c0 > 0):
            raise DomainError(f"c0 must be finite and > 0, got {self.c0!r}")

    def to_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "c0": self.c0}


def _lgamma1p_series(z):
    """ln Gamma(1 + z) for |z| <= 0.5 by its Taylor series about z = 0."""
    acc = 0.0
    zk = -z
    for k, zm1 in enumerate(_ZETA_MINUS_ONE, start=2):
        zk *= -z
        term = zm1 * zk / k
        acc += term
        if abs(term) < 1e-18 * max(abs(acc), 1e-300):
            break
    return -math.log1p(z) + z * (1.0 - _EULER_GAMMA) + acc


def _lgamma_stirling(x):
    inv = 1.0 / x
    inv2 = inv * inv
    corr = 0.0
    p = inv
    for c in _STIRLING:
        corr += c * p
        p *= inv2
    return (x - 0.5) * math.log(x) - x + _HALF_LOG_2PI + corr


def log_gamma(x):
    """Natural log of the gamma function for real ``x > 0``.

    The roots of ln Gamma at 1 and 2 are handled with a Taylor series so the
    result keeps relative accuracy there; elsewhere the argument is shifted
    onto the series range or, above 12, evaluated by the Stirling series.
    """
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise DomainError(f"log_gamma requires a finite x > 0, got {x!r}")
    if x == 1.0 or x == 2.0:
        return 0.0
    if x < 0.5:
        return _lgamma1p_series(x) - math.log(x)
    if x <= 1.5:
        return _lgamma1p_series(x - 1.0)
    if x <= 2.5:
        z = x - 2.0
        return _lgamma1p_series(z) + math.log1p(z)
    if x <= 12.0:
        shift = math.ceil(x - 2.5)
        y = x - shift
        prod = 1.0
        for j in range(shift):
            prod *= y + j
        return _lgamma1p_series(y - 2.0) + math.log1p(y - 2.0) + math.log(prod)
    return _lgamma_stirling(x)


def log_beta(a, b):
    """ln B(a, b) = ln Gamma(a) + ln Gamma(b) - ln Gamma(a + b)."""
    return log_gamma(a) + log_gamma(b) - log_gamma(a + b)


def _betacf(a, b, x, max_iter=20000, tol=1e-16):
    # Modified Lentz evaluation of the incomplete-beta continued fraction.
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise NumericError(
        f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})"
    )


def reg_inc_beta(u, params):
    """Regularized incomplete beta function I(u; alpha, beta).

    Parameters
    ----------
    u : float
        Evaluation point in [0, 1].
    params : BetaParams
        Shape parameters; ``c0`` is ignored here.

    Returns
    -------
    float
        B(u; alpha, beta) / B(alpha, beta), clipped to [0, 1].
    """
    u = float(u)
    if not (0.0 <= u <= 1.0):
        raise DomainError(f"reg_inc_beta requires 0 <= u <= 1, got {u!r}")
    a, b = params.alpha, params.beta
    if u == 0.0:
        return 0.0
    if u == 1.0:
        return 1.0
    log_front = a * math.log(u) + b * math.log1p(-u) - log_beta(a, b)
    front = math.exp(log_front)
    if u < (a + 1.0) / (a + b + 2.0):
        val = front * _betacf(a, b, u) / a
    else:
        val = 1.0 - front * _betacf(b, a, 1.0 - u) / b
    return min(1.0, max(0.0, val))
