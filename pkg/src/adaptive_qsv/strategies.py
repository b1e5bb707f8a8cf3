"""Verification strategies for the two-qubit target family.

Four strategies are provided:

* ``lo``     -- optimal non-adaptive local strategy (spectral surrogate),
* ``uni``    -- one-way LOCC with Pauli X/Y/Z on the leading party and a
                conditional projector on the following party,
* ``bi``     -- two-way LOCC, represented by its effective operator,
* ``global`` -- the entangled projection onto the target.

Each :class:`Strategy` caches its verification operator ``omega`` and the
second largest eigenvalue ``lambda2`` at construction time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import quantum as q

UNI_RANGE = (45.0, 90.0)
KINDS = ("lo", "uni", "bi", "global")

SPECTRAL_TOL = 1e-10


class StrategyRangeError(q.DomainError):
    pass


class DegenerateStrategyError(ValueError):
    pass


class UnsupportedOperationError(RuntimeError):
    pass


@dataclass(frozen=True)
class MeasurementSetting:
    """One two-outcome local setting with classical feed-forward.

    The leader measures in the orthonormal basis ``leader_kets`` and the
    follower then tests ``follower_kets[a]`` chosen by the leader's outcome
    ``a``; passing it is an ACCEPT.  Both tuples are indexed by the leader's
    outcome bit, and outcome 1 is the +1 eigenvector of the Pauli operator.
    """

    label: str
    leader: str
    leader_kets: tuple[np.ndarray, np.ndarray]
    follower_kets: tuple[np.ndarray, np.ndarray]
    leader_names: tuple[str, str]
    follower_names: tuple[str, str]
    probability: float

    def leader_projector(self, outcome: int) -> np.ndarray:
        return q.projector(self.leader_kets[outcome])

    def follower_projector(self, outcome: int) -> np.ndarray:
        return q.projector(self.follower_kets[outcome])

    def embed(self, leader_op: np.ndarray, follower_op: np.ndarray) -> np.ndarray:
        """Place single-qubit operators on the correct tensor factors."""
        if self.leader == "A":
            return q.tensor(leader_op, follower_op)
        return q.tensor(follower_op, leader_op)

    def operator(self) -> np.ndarray:
        """The accept projector sum_a P_a (x) P_follow(a)."""
        return sum(
            self.embed(self.leader_projector(a), self.follower_projector(a)) for a in (0, 1)
        )


@dataclass(frozen=True)
class Strategy:
    kind: str
    theta: float
    omega: np.ndarray
    lambda2: float
    settings: tuple[MeasurementSetting, ...] = ()
    direction: str | None = None
    direction_policy: Mapping[str, float] = field(default_factory=dict)
    entangled: bool = False

    @property
    def name(self) -> str:
        if self.kind == "uni" and self.direction == "BA":
            return "uni_ba"
        return self.kind

    @property
    def probabilities(self) -> tuple[float, ...]:
        return tuple(s.probability for s in self.settings)

    @property
    def has_settings(self) -> bool:
        return bool(self.settings)

    def spectrum(self) -> np.ndarray:
        return q.eigh(self.omega)[0]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def _check_uni_range(theta: float) -> None:
    lo, hi = UNI_RANGE
    if not lo < float(theta) < hi:
        raise StrategyRangeError(
            f"LOCC strategies are defined for theta in ({lo:g}, {hi:g}) degrees; got {theta:g}"
        )


def uni_probabilities(theta: float) -> tuple[float, float, float]:
    s2 = math.sin(math.radians(theta)) ** 2
    p = 1 / (2 + 2 * s2)
    return (p, p, s2 / (1 + s2))


def uni_closed_form(theta: float) -> np.ndarray:
    """Spectral form of the one-way operator on {Psi, Psi_perp, VV, HH}."""
    s2 = math.sin(math.radians(theta)) ** 2
    c2 = 1 - s2
    return (
        q.projector(q.target_state(theta))
        + s2 / (1 + s2) * q.projector(q.orthogonal_state(theta))
        + c2 / (1 + s2) * q.projector(q.basis_state("VV"))
        + s2 / (1 + s2) * q.projector(q.basis_state("HH"))
    )


def _uni_settings_ab(theta: float) -> tuple[MeasurementSetting, ...]:
    px, py, pz = uni_probabilities(theta)
    return (
        MeasurementSetting(
            "X", "A", (q.MINUS, q.PLUS),
            (q.upsilon(theta, -1), q.upsilon(theta, +1)),
            ("-", "+"), ("u-", "u+"), px,
        ),
        # R (outcome 1) pairs with omega-, L with omega+
        MeasurementSetting(
            "Y", "A", (q.L, q.R),
            (q.omega(theta, +1), q.omega(theta, -1)),
            ("L", "R"), ("w+", "w-"), py,
        ),
        MeasurementSetting(
            "Z", "A", (q.V, q.H),
            (q.H, q.V),
            ("V", "H"), ("H", "V"), pz,
        ),
    )


def _mirror_ket(name: str, theta: float) -> np.ndarray:
    sign = +1 if name.endswith("+") else -1
    if name.startswith("~u"):
        return q.upsilon(90.0 - theta, sign)
    return q.omega(90.0 - theta, sign)


def _uni_settings_ba(theta: float) -> tuple[MeasurementSetting, ...]:
    # Bob measures the Pauli basis.  Alice's conditional ket must be the
    # normalized remainder <b|_B Psi; for this family that is the A->B ket
    # evaluated at 90 - theta (or H/V for the Z setting).
    psi = q.target_state(theta)
    out = []
    for ab in _uni_settings_ab(theta):
        names = tuple("~" + n if n[0] in "uw" else n for n in ab.follower_names)
        kets = tuple(
            (q.H if n == "H" else q.V) if n in ("H", "V") else _mirror_ket(n, theta) for n in names
        )
        for a in (0, 1):
            rem = q.partial_inner(ab.leader_kets[a], psi, leader="B")
            if abs(abs(np.vdot(kets[a], rem)) - np.linalg.norm(rem)) > 1e-9:
                raise AssertionError(f"conditional ket {names[a]} does not match <b|Psi")
        out.append(
            MeasurementSetting(
                ab.label, "B", ab.leader_kets, kets, ab.leader_names, names, ab.probability
            )
        )
    return tuple(out)


def _finish(kind: str, theta: float, omega: np.ndarray, lambda2: float | None = None, **kw) -> Strategy:
    omega = _frozen(omega)
    w, vecs = q.eigh(omega)
    psi = q.target_state(theta)
    if abs(w[0] - 1) > SPECTRAL_TOL or abs(q.expectation(q.projector(psi), omega) - 1) > SPECTRAL_TOL:
        raise q.ContractError(f"{kind} operator does not accept the target with certainty")
    if lambda2 is None:
        lambda2 = float(w[1])
    return Strategy(kind=kind, theta=float(theta), omega=omega, lambda2=float(lambda2), **kw)


def build_uni_locc(theta: float, direction: str = "AB") -> Strategy:
    """One-way LOCC strategy with Pauli settings on the leading party."""
    _check_uni_range(theta)
    if direction == "AB":
        settings = _uni_settings_ab(theta)
    elif direction == "BA":
        settings = _uni_settings_ba(theta)
    else:
        raise q.DomainError(f"direction must be 'AB' or 'BA', got {direction!r}")
    omega = sum(s.probability * s.operator() for s in settings)
    return _finish("uni", theta, omega, settings=settings, direction=direction)


def build_bi_locc(theta: float) -> Strategy:
    _check_uni_range(theta)
    psi = q.projector(q.target_state(theta))
    omega = psi + (q.I4 - psi) / 3
    return _finish(
        "bi", theta, omega, lambda2=1 / 3, direction_policy={"AB": 0.5, "BA": 0.5}
    )


def lo_lambda2(theta: float) -> float:
    s = math.sin(2 * math.radians(theta))
    return (2 + s) / (4 + s)


def build_lo_optimal(theta: float, omega: np.ndarray | None = None) -> Strategy:
    """Optimal non-adaptive local strategy.

    Without an explicit ``omega`` the operator is the spectral surrogate
    ``|Psi><Psi| + lambda2 (I - |Psi><Psi|)`` carrying the optimal
    ``lambda2``.  Only ``lambda2`` enters sample-complexity analytics; the
    surrogate's response to structured noise differs from a concrete
    measurement ensemble.  A caller-supplied ``omega`` is validated and its
    own second eigenvalue is used instead.
    """
    psi = q.projector(q.target_state(theta))
    if omega is not None:
        return _finish("lo", theta, omega)
    lam = lo_lambda2(theta)
    return _finish("lo", theta, psi + lam * (q.I4 - psi), lambda2=lam)


def build_global(theta: float) -> Strategy:
    return _finish(
        "global", theta, q.projector(q.target_state(theta)), lambda2=0.0, entangled=True
    )


def build(kind: str, theta: float) -> Strategy:
    """Construct a strategy by name: lo, uni, uni_ba, bi or global."""
    if kind == "lo":
        return build_lo_optimal(theta)
    if kind == "uni":
        return build_uni_locc(theta, "AB")
    if kind == "uni_ba":
        return build_uni_locc(theta, "BA")
    if kind == "bi":
        return build_bi_locc(theta)
    if kind == "global":
        return build_global(theta)
    raise q.DomainError(f"unknown strategy {kind!r}; expected one of lo, uni, uni_ba, bi, global")


def constant_factor(s: Strategy) -> float:
    """Overhead 1/(1 - lambda2) relative to the globally optimal bound."""
    if s.lambda2 >= 1:
        raise DegenerateStrategyError(f"lambda2 = {s.lambda2} >= 1: strategy cannot reject anything")
    return 1 / (1 - s.lambda2)


def sample_setting(s: Strategy, rng: np.random.Generator) -> int:
    """Draw a setting index with probability p_l (consumes one uniform)."""
    if not s.settings:
        raise UnsupportedOperationError(
            f"{s.name} strategy has no explicit settings; sample accept events from tr(omega sigma)"
        )
    return setting_index(s, rng.random())


def setting_index(s: Strategy, u: float) -> int:
    cdf = np.cumsum(s.probabilities)
    return int(min(np.searchsorted(cdf, u, side="right"), len(cdf) - 1))


def to_dict(s: Strategy) -> dict:
    """JSON-ready description of a strategy."""
    return {
        "kind": s.kind,
        "direction": s.direction,
        "theta": s.theta,
        "probabilities": list(s.probabilities),
        "settings": [st.label for st in s.settings],
        "omega": [[[float(z.real), float(z.imag)] for z in row] for row in s.omega],
        "spectrum": [float(x) for x in s.spectrum()],
        "lambda2": s.lambda2,
        "constant_factor": constant_factor(s),
        "entangled_measurement": s.entangled,
        "direction_policy": dict(s.direction_policy),
    }


def to_json(s: Strategy, **kw) -> str:
    return json.dumps(to_dict(s), **kw)
