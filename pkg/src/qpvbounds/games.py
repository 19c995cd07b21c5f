"""Lossy monogamy-of-entanglement games as parameterized moment problems.

A game couples a qubit measurement family (the referee's bases) to a
two-party answering scenario with outcomes {0, 1, no-photon}.  The moment
relaxation carries three kinds of game rows on top of the structural NPA
constraints:

  * the objective, the average probability that both parties give the same
    non-bot answer;
  * abort rows forcing (or, in the relaxed variant, nearly forcing) equal
    answers on equal inputs;
  * error-rate rows, linear inequalities whose right-hand side scales with
    the tolerated conditional error p_err.  These are kept symbolic
    (ErrorRateRow) so one compiled game can be materialized for a whole
    p_err sweep without rebuilding the Gram structure.

Variants:

  "qpv"          strict abort: <A_a^x B_b^x> = 0 for all a != b;
  "qpv-relaxed"  aborts bounded by xi, error rows padded accordingly;
  "qkd"          one-sided device-independent key-distribution game (party
                 0 is the eavesdropper, party 1 the untrusted measurement
                 device): no abort rows, a single error-row family, m = 2.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from qpvbounds.bloch import (
    MeasurementFamily,
    cross_norm_coeff,
    cross_norm_rhs_weights,
    family,
    pair_norm_coeff,
)
from qpvbounds.npa import LEVELS, LinRow, MomentProblem, Scenario, build_moment_problem

VARIANTS = ("qpv", "qpv-relaxed", "qkd")

ANSWERS = (0, 1)
NO_PHOTON = 2  # outcome index reserved for "no photon"
OUTCOMES = (0, 1, NO_PHOTON)


@dataclass(frozen=True)
class GameSpec:
    """Declarative description of one game instance.

    p_err stored here is the default operating point; sweeps materialize the
    compiled game at many p_err values without touching the spec.
    """

    variant: str = "qpv"
    m_theta: int = 2
    m_phi: int = 1
    p_err: float = 0.0
    xi: float = 0.005
    level: str = "1+ab"
    use_prop2: bool | None = None  # None: cross-norm rows on iff m >= 3

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.level not in LEVELS:
            raise ValueError(f"unknown level {self.level!r}; expected one of {LEVELS}")
        if not 0.0 <= self.p_err <= 1.0:
            raise ValueError(f"p_err must lie in [0, 1], got {self.p_err}")
        if self.xi < 0.0:
            raise ValueError(f"xi must be nonnegative, got {self.xi}")
        if self.variant == "qkd":
            if (self.m_theta, self.m_phi) != (2, 1):
                raise ValueError(
                    "the key-distribution game is defined for the "
                    "computational/Hadamard pair only: m_theta=2, m_phi=1"
                )
            if self.use_prop2:
                raise ValueError("cross-norm rows apply to the position-verification variants only")

    @property
    def m(self) -> int:
        return self.m_phi * (self.m_theta - 1) + 1

    @property
    def cross_norm_rows(self) -> bool:
        if self.use_prop2 is not None:
            return bool(self.use_prop2)
        return self.variant != "qkd" and self.m >= 3

    def measurement_family(self) -> MeasurementFamily:
        return family(self.m_theta, self.m_phi)


@dataclass
class ErrorRateRow:
    """Symbolic inequality  lhs . y  <=  p_err * (rhs . y + rhs_const)."""

    label: str
    lhs: dict[int, float]
    rhs: dict[int, float]
    rhs_const: float = 0.0

    def materialize(self, p_err: float) -> LinRow:
        coeffs = dict(self.lhs)
        for k, v in self.rhs.items():
            coeffs[k] = coeffs.get(k, 0.0) - p_err * v
        return LinRow(coeffs, p_err * self.rhs_const)


@dataclass
class CompiledGame:
    """Gram structure, static rows and objective of a game; p_err left free."""

    spec: GameSpec
    family: MeasurementFamily
    problem: MomentProblem  # holds NPA + abort rows and the objective
    error_rows: list[ErrorRateRow] = field(default_factory=list)


def _answer_var(problem: MomentProblem, a: int, x: int, b: int, xp: int) -> int:
    """Variable id of <P_a^x Q_b^x'> (party 0 then party 1)."""
    return problem.var(((0, x, a), (1, xp, b)))


def compile_game(spec: GameSpec) -> CompiledGame:
    fam = spec.measurement_family()
    m = fam.m
    scenario = Scenario(inputs=(m, m), outcomes=(3, 3))
    problem = build_moment_problem(scenario, spec.level)

    def var(a: int, x: int, b: int, xp: int) -> int:
        return _answer_var(problem, a, x, b, xp)

    objective: dict[int, float] = {}
    for x in range(m):
        for a in ANSWERS:
            v = var(a, x, a, x)
            objective[v] = objective.get(v, 0.0) + 1.0 / m
    problem.objective = objective

    if spec.variant in ("qpv", "qpv-relaxed"):
        for x in range(m):
            for a in OUTCOMES:
                for b in OUTCOMES:
                    if a == b:
                        continue
                    row = LinRow({var(a, x, b, x): 1.0}, spec.xi)
                    if spec.variant == "qpv":
                        problem.equalities.append(LinRow(row.coeffs, 0.0))
                    else:
                        problem.inequalities.append(row)

    rows: list[ErrorRateRow] = []
    for x in range(m):
        for xp in range(m):
            if x == xp:
                continue
            if spec.variant == "qkd":
                rows.append(_qkd_row(spec, fam, problem, x, xp))
            else:
                rows.append(_pair_norm_row(spec, fam, problem, x, xp))
                if spec.cross_norm_rows:
                    rows.append(_cross_norm_row(spec, fam, problem, x, xp))
    return CompiledGame(spec=spec, family=fam, problem=problem, error_rows=rows)


def _pair_norm_row(
    spec: GameSpec, fam: MeasurementFamily, problem: MomentProblem, x: int, xp: int
) -> ErrorRateRow:
    lhs: dict[int, float] = {}
    for a in ANSWERS:
        for b in ANSWERS:
            v = _answer_var(problem, a, x, b, xp)
            lhs[v] = lhs.get(v, 0.0) + pair_norm_coeff(fam, a, x, b, xp)
    rhs: dict[int, float] = {}
    for a in ANSWERS:
        for v in (_answer_var(problem, a, x, a, x), _answer_var(problem, a, xp, a, xp)):
            rhs[v] = rhs.get(v, 0.0) + 1.0
    # With aborts only bounded by xi, the four dropped same-input cross
    # moments reappear on the right as 4*xi per input.
    rhs_const = 8.0 * spec.xi if spec.variant == "qpv-relaxed" else 0.0
    return ErrorRateRow(f"pair_norm[{x},{xp}]", lhs, rhs, rhs_const)


def _cross_norm_row(
    spec: GameSpec, fam: MeasurementFamily, problem: MomentProblem, x: int, xp: int
) -> ErrorRateRow:
    lhs: dict[int, float] = {}
    for a in ANSWERS:
        for b in ANSWERS:
            v = _answer_var(problem, a, x, b, xp)
            lhs[v] = lhs.get(v, 0.0) + cross_norm_coeff(fam, a, x, b, xp)
    w_x, w_xp = cross_norm_rhs_weights(fam, x, xp)
    rhs: dict[int, float] = {}
    for a in ANSWERS:
        v = _answer_var(problem, a, x, a, x)
        rhs[v] = rhs.get(v, 0.0) + w_x
        v = _answer_var(problem, a, xp, a, xp)
        rhs[v] = rhs.get(v, 0.0) + w_xp
    rhs_const = 4.0 * spec.xi * (w_x + w_xp) if spec.variant == "qpv-relaxed" else 0.0
    return ErrorRateRow(f"cross_norm[{x},{xp}]", lhs, rhs, rhs_const)


def _qkd_row(
    spec: GameSpec, fam: MeasurementFamily, problem: MomentProblem, x: int, xp: int
) -> ErrorRateRow:
    lhs: dict[int, float] = {}
    for e in ANSWERS:
        for b in ANSWERS:
            v = _answer_var(problem, e, x, b, xp)
            lhs[v] = lhs.get(v, 0.0) + pair_norm_coeff(fam, e, x, b, xp)
    rhs: dict[int, float] = {}
    for e in ANSWERS:
        for b in ANSWERS:
            v = _answer_var(problem, e, xp, b, xp)
            rhs[v] = rhs.get(v, 0.0) + 1.0
    return ErrorRateRow(f"qkd[{x},{xp}]", lhs, rhs, 0.0)


def materialize(compiled: CompiledGame, p_err: float | None = None) -> MomentProblem:
    """Instantiate the compiled game's error rows at a concrete p_err."""
    if p_err is None:
        p_err = compiled.spec.p_err
    if not 0.0 <= p_err <= 1.0:
        raise ValueError(f"p_err must lie in [0, 1], got {p_err}")
    problem = compiled.problem
    extra = [row.materialize(p_err) for row in compiled.error_rows]
    return dataclasses.replace(
        problem,
        equalities=list(problem.equalities),
        inequalities=list(problem.inequalities) + extra,
        objective=dict(problem.objective),
    )
