"""Sample-complexity bounds and rejection-tolerant confidence statements.

All logarithms are natural.  ``lambda2`` always denotes the second largest
eigenvalue of a strategy's verification operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

BISECTION_MAX_ITER = 200
EPS_TOL = 1e-12


class NoClaimError(ValueError):
    """The observed accept frequency supports no fidelity claim at this confidence."""


class FitError(ValueError):
    pass


def _check_unit_open(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {value!r}")


def _kl(x: float, y: float) -> float:
    # y may sit on the boundary here; the result is then +inf or a finite limit
    d = 0.0
    if x > 0:
        d += math.inf if y <= 0 else x * math.log(x / y)
    if x < 1:
        d += math.inf if y >= 1 else (1 - x) * math.log((1 - x) / (1 - y))
    return d


def kl_divergence(x: float, y: float) -> float:
    """Binary relative entropy D(x || y) in nats.

    ``x`` may be 0 or 1 (using 0 log 0 = 0); ``y`` must be strictly inside
    (0, 1).
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x!r}")
    _check_unit_open("y", y)
    return max(_kl(x, y), 0.0)


def accept_threshold(lambda2: float, epsilon: float) -> float:
    """Largest accept probability of a state with infidelity >= epsilon."""
    return 1 - (1 - lambda2) * epsilon


def confidence_bound(n: int, m: int, lambda2: float, epsilon: float) -> float:
    """Upper bound on delta after ``m`` accepts in ``n`` rounds.

    Raises :class:`NoClaimError` when ``m/n`` is below the accept threshold
    for ``epsilon`` (no statement is possible at any confidence).
    """
    _check_counts(n, m)
    _check_unit_open("epsilon", epsilon)
    if not 0.0 <= lambda2 < 1.0:
        raise ValueError(f"lambda2 must lie in [0, 1), got {lambda2!r}")
    p = m / n
    y = accept_threshold(lambda2, epsilon)
    if p < y:
        raise NoClaimError(
            f"accept frequency {p:.6g} is below the threshold {y:.6g} for epsilon={epsilon:.6g}"
        )
    return math.exp(-kl_divergence(p, y) * n)


def _check_counts(n: int, m: int) -> None:
    if n < 1 or m < 0 or m > n:
        raise ValueError(f"need 0 <= m <= n and n >= 1, got n={n}, m={m}")


def infidelity_at_confidence(n: int, m: int, delta: float, lambda2: float) -> float:
    """Smallest epsilon certified at confidence 1 - delta by m accepts out of n.

    Solves ``n * D(m/n || 1 - (1 - lambda2) eps) = ln(1/delta)`` by bisection
    on the increasing branch eps > (1 - m/n) / (1 - lambda2).  The returned
    value is the upper end of the final bracket, so plugging it back into
    :func:`confidence_bound` gives a delta no larger than requested.
    """
    _check_counts(n, m)
    _check_unit_open("delta", delta)
    if not 0.0 <= lambda2 < 1.0:
        raise ValueError(f"lambda2 must lie in [0, 1), got {lambda2!r}")
    return _solve(n, m, float(delta), float(lambda2))


@lru_cache(maxsize=65536)
def _solve(n: int, m: int, delta: float, lambda2: float) -> float:
    p = m / n
    target = math.log(1 / delta) / n
    gap = 1 - lambda2

    def excess(eps: float) -> float:
        return _kl(p, 1 - gap * eps) - target

    lo = (1 - p) / gap
    if lo >= 1 or excess(1.0) < 0:
        raise NoClaimError(
            f"{m}/{n} accepts cannot certify any infidelity below 1 at delta={delta:g}"
        )
    hi = 1.0
    for _ in range(BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if excess(mid) >= 0:
            hi = mid
        else:
            lo = mid
    if hi - lo > EPS_TOL:
        raise RuntimeError(f"bisection did not converge: bracket [{lo!r}, {hi!r}]")
    if hi >= 1.0:
        raise NoClaimError(f"{m}/{n} accepts only certify the vacuous epsilon=1")
    return hi


def all_accept_infidelity(n: int | np.ndarray, delta: float, lambda2: float):
    """Closed form of the certified epsilon when every round accepted."""
    return (1 - delta ** (1 / np.asarray(n, dtype=float))) / (1 - lambda2)


@dataclass(frozen=True)
class VerificationVerdict:
    """Outcome of a finished verification run.

    ``epsilon`` is None when no claim can be made.
    """

    n: int
    m: int
    delta: float
    lambda2: float
    epsilon: float | None

    @property
    def accept_frequency(self) -> float:
        return self.m / self.n

    @property
    def claim(self) -> bool:
        return self.epsilon is not None

    @property
    def fidelity_lower_bound(self) -> float | None:
        return None if self.epsilon is None else 1 - self.epsilon

    def describe(self) -> str:
        if self.epsilon is None:
            return (
                f"no claim: {self.m}/{self.n} accepted, insufficient for any fidelity "
                f"statement at confidence {1 - self.delta:.6g}"
            )
        return (
            f"fidelity >= {1 - self.epsilon:.9g} (epsilon = {self.epsilon:.9g}) "
            f"with confidence {1 - self.delta:.6g} from {self.m}/{self.n} accepted"
        )


def verdict(n: int, m: int, delta: float, lambda2: float) -> VerificationVerdict:
    try:
        eps = infidelity_at_confidence(n, m, delta, lambda2)
    except NoClaimError:
        eps = None
    return VerificationVerdict(n=n, m=m, delta=delta, lambda2=lambda2, epsilon=eps)


class MeasurementBound(NamedTuple):
    ceiling: int
    exact: float
    asymptotic: float


def measurement_bound(epsilon: float, delta: float, lambda2: float) -> MeasurementBound:
    """Number of all-accept rounds needed to certify ``epsilon`` at ``delta``.

    ``exact`` is ln(delta) / ln(1 - (1 - lambda2) eps); ``asymptotic`` is its
    small-epsilon form ln(1/delta) / ((1 - lambda2) eps).
    """
    _check_unit_open("epsilon", epsilon)
    _check_unit_open("delta", delta)
    if not 0.0 <= lambda2 < 1.0:
        raise ValueError(f"lambda2 must lie in [0, 1), got {lambda2!r}")
    gap = (1 - lambda2) * epsilon
    exact = math.log(delta) / math.log1p(-gap)
    return MeasurementBound(math.ceil(exact), exact, math.log(1 / delta) / gap)


def required_measurements(epsilon: float, delta: float, lambda2: float) -> int:
    return measurement_bound(epsilon, delta, lambda2).ceiling


def global_bound(epsilon: float, delta: float) -> int:
    """Measurement count for the entangled projective strategy (lambda2 = 0).

    Use ``measurement_bound(epsilon, delta, 0.0).asymptotic`` for the
    ln(1/delta)/epsilon form.
    """
    return required_measurements(epsilon, delta, 0.0)


def asymptotic_slope(lambda2: float, delta: float) -> float:
    """Slope of 1/epsilon against n for an all-accept run as n grows."""
    return (1 - lambda2) / math.log(1 / delta)


def ideal_curve(lambda2: float, delta: float, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Theoretical 1/epsilon for an ideal state, n = 1..n_max.

    This is the analytic line (1 - lambda2) / (1 - delta^(1/n)); early points
    where the implied epsilon exceeds 1 are kept so the line is continuous.
    """
    n = np.arange(1, n_max + 1)
    return n, 1 / all_accept_infidelity(n, delta, lambda2)


def record_curve(bits: Sequence[int], delta: float, lambda2: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-prefix 1/epsilon for an accept/reject record.

    Prefixes that support no claim are omitted rather than clamped.
    """
    m = np.cumsum(np.asarray(bits, dtype=int))
    ns, inv = [], []
    for n, mn in enumerate(m.tolist(), start=1):
        try:
            eps = infidelity_at_confidence(n, mn, delta, lambda2)
        except NoClaimError:
            continue
        ns.append(n)
        inv.append(1 / eps)
    return np.array(ns, dtype=int), np.array(inv, dtype=float)


def inverse_infidelity_curve(
    lambda2: float, delta: float, n_max: int, bits: Sequence[int] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """1/epsilon against n: the ideal line, or the verdict curve of ``bits``."""
    if bits is None:
        return ideal_curve(lambda2, delta, n_max)
    return record_curve(list(bits)[:n_max], delta, lambda2)


def fit_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Ordinary least-squares slope with a free intercept."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise FitError("need at least two paired points")
    dx = x - x.mean()
    sxx = float(dx @ dx)
    if sxx <= 0:
        raise FitError("abscissae are all identical")
    return float(dx @ (y - y.mean())) / sxx


def fit_proportional(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of the line through the origin."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sxx = float(x @ x)
    if x.size < 1 or sxx <= 0:
        raise FitError("need at least one non-zero abscissa")
    return float(x @ y) / sxx
