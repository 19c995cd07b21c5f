"""Explicit attacker strategies, evaluated exactly by small dense algebra.

A strategy fixes a tripartite pure state on referee (V) x Alice (A) x Bob (B)
registers together with per-input three-outcome POVMs {0, 1, no-photon} for
both answering parties.  One round: the referee measures V in basis x drawn
uniformly, the parties measure their registers and answer.  The verifiers
output

  Correct    both answers equal the referee's outcome,
  Wrong      both answers equal but miss the referee's outcome,
  No photon  both answer "no photon",
  Abort      the answers differ.

Everything here is computed by direct trace formulas, so these strategies
serve as exact lower bounds and as feasibility oracles for moment problems:
every quantum strategy must satisfy every constraint the relaxation imposes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from qpvbounds.bloch import MeasurementFamily
from qpvbounds.npa import MomentProblem, Word

BOT = 2  # "no photon" outcome index


@dataclass
class RoundOutcomeProbs:
    p_correct: float
    p_wrong: float
    p_no_photon: float
    p_abort: float

    @property
    def p_ans(self) -> float:
        return self.p_correct + self.p_wrong

    @property
    def conditional_error(self) -> float | None:
        """P[Wrong | not No photon], None when the parties never answer."""
        denom = 1.0 - self.p_no_photon
        if denom <= 0.0:
            return None
        return self.p_wrong / denom

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.p_correct, self.p_wrong, self.p_no_photon, self.p_abort)


@dataclass
class ExplicitStrategy:
    """State + per-input POVMs on a V (dim 2) x A x B factorization."""

    name: str
    dims: tuple[int, int, int]
    state: np.ndarray  # flat vector of length prod(dims)
    alice: list[list[np.ndarray]]  # [input][outcome 0/1/bot], ops on A
    bob: list[list[np.ndarray]]  # likewise on B

    def validate(self) -> None:
        dv, da, db = self.dims
        assert dv == 2, "the referee register is a single qubit"
        assert self.state.shape == (dv * da * db,)
        assert abs(np.linalg.norm(self.state) - 1.0) < 1e-12, "state must be normalized"
        for ops, d in ((self.alice, da), (self.bob, db)):
            for per_input in ops:
                assert len(per_input) == 3
                total = np.zeros((d, d), dtype=complex)
                for e in per_input:
                    assert e.shape == (d, d)
                    assert np.allclose(e, e.conj().T, atol=1e-10)
                    assert np.linalg.eigvalsh(e).min() > -1e-10, "POVM element not PSD"
                    total += e
                assert np.allclose(total, np.eye(d), atol=1e-10), "POVM incomplete"

    @property
    def n_inputs(self) -> int:
        return len(self.alice)

    def expect(self, v_op: np.ndarray | None, a_op: np.ndarray, b_op: np.ndarray) -> float:
        """<state| V (x) A (x) B |state> (V omitted = identity on the qubit)."""
        dv, da, db = self.dims
        psi = self.state.reshape(dv, da, db)
        out = np.einsum("vab,bc->vac", psi, b_op.T)
        out = np.einsum("vac,ad->vdc", out, a_op.T)
        if v_op is not None:
            out = np.einsum("vdc,vw->wdc", out, v_op.T)
        return float(np.real(np.vdot(psi, out)))


def evaluate(strategy: ExplicitStrategy, fam: MeasurementFamily) -> RoundOutcomeProbs:
    """Exact outcome probabilities, averaged over the uniform basis choice."""
    m = fam.m
    if strategy.n_inputs != m or len(strategy.bob) != m:
        raise ValueError(
            f"strategy answers {strategy.n_inputs} inputs, measurement family has {m}"
        )
    strategy.validate()
    p_correct = p_wrong = p_no_photon = p_abort = 0.0
    for x in range(m):
        for a in (0, 1):
            pa = strategy.expect(fam.projector(a, x), strategy.alice[x][a], strategy.bob[x][a])
            pw = strategy.expect(
                fam.projector(1 - a, x), strategy.alice[x][a], strategy.bob[x][a]
            )
            p_correct += pa / m
            p_wrong += pw / m
        p_no_photon += strategy.expect(None, strategy.alice[x][BOT], strategy.bob[x][BOT]) / m
        for a in range(3):
            for b in range(3):
                if a != b:
                    p_abort += (
                        strategy.expect(None, strategy.alice[x][a], strategy.bob[x][b]) / m
                    )
    return RoundOutcomeProbs(p_correct, p_wrong, p_no_photon, p_abort)


def _deterministic_answer_povm(m: int, answers: list[int]) -> list[list[np.ndarray]]:
    """Trivial-register POVMs that deterministically output answers[x]."""
    one = np.ones((1, 1), dtype=complex)
    zero = np.zeros((1, 1), dtype=complex)
    return [
        [one if a == answers[x] else zero for a in range(3)]
        for x in range(m)
    ]


def always_answer_strategy(
    fam: MeasurementFamily, answers: list[int], name: str = "always_answer"
) -> ExplicitStrategy:
    """Both parties answer answers[x] on input x; V holds the best state.

    The best state for a fixed answer assignment maximizes
    (1/m) sum_x <psi| V_{answers[x]}^x |psi>, i.e. the top eigenvector of the
    averaged projector sum.
    """
    m = fam.m
    avg = np.zeros((2, 2), dtype=complex)
    for x in range(m):
        avg += fam.projector(answers[x], x) / m
    vals, vecs = np.linalg.eigh(avg)
    state = vecs[:, -1].astype(complex)
    povms = _deterministic_answer_povm(m, answers)
    return ExplicitStrategy(
        name=name, dims=(2, 1, 1), state=state, alice=povms, bob=[list(p) for p in povms]
    )


def optimal_bb84() -> ExplicitStrategy:
    """Always answer 0 holding cos(pi/8)|0> + sin(pi/8)|1>.

    This is the optimal attack on the two-basis game: correct with
    probability cos^2(pi/8), wrong with sin^2(pi/8), never aborts.
    """
    state = np.array([np.cos(np.pi / 8), np.sin(np.pi / 8)], dtype=complex)
    povms = _deterministic_answer_povm(2, [0, 0])
    return ExplicitStrategy(
        name="optimal_bb84",
        dims=(2, 1, 1),
        state=state,
        alice=povms,
        bob=[list(p) for p in povms],
    )


def uniform_guess(fam: MeasurementFamily) -> ExplicitStrategy:
    """Guess the basis, answer only when the guess was right.

    The parties share a uniformly random (basis guess, outcome) label pair
    and hand the referee the matching eigenstate; on input x they answer the
    shared outcome if x was the guess and "no photon" otherwise.  Shared
    randomness is embedded block-diagonally (orthonormal label states), so
    all probabilities are exact: answer rate 1/m, zero error, zero abort.
    """
    m = fam.m
    d = 2 * m  # labels (x_guess, outcome)
    state = np.zeros((2, d, d), dtype=complex)
    for xg in range(m):
        for a in (0, 1):
            label = 2 * xg + a
            state[:, label, label] = fam.ket(a, xg) / np.sqrt(2 * m)
    povms = []
    for x in range(m):
        per_input = []
        for a in (0, 1):
            e = np.zeros((d, d), dtype=complex)
            e[2 * x + a, 2 * x + a] = 1.0
            per_input.append(e)
        per_input.append(np.eye(d) - per_input[0] - per_input[1])
        povms.append(per_input)
    return ExplicitStrategy(
        name=f"uniform_guess(m={m})",
        dims=(2, d, d),
        state=state.reshape(-1),
        alice=povms,
        bob=[list(p) for p in povms],
    )


def best_always_answer(fam: MeasurementFamily, seed: int = 7) -> ExplicitStrategy:
    """Best deterministic always-answer strategy found by assignment search.

    For m <= 16 all 2^m answer assignments are enumerated (exact); beyond
    that a seeded single-flip local search with restarts is used and the
    result is a lower bound only.
    """
    m = fam.m

    def value(answers: list[int]) -> float:
        avg = np.zeros((2, 2), dtype=complex)
        for x in range(m):
            avg += fam.projector(answers[x], x) / m
        return float(np.linalg.eigvalsh(avg)[-1])

    if m <= 16:
        best = max(
            (list(map(int, np.binary_repr(k, m))) for k in range(2**m)),
            key=value,
        )
    else:
        rng = np.random.default_rng(seed)
        best, best_val = [0] * m, value([0] * m)
        for _ in range(8):
            answers = [int(v) for v in rng.integers(0, 2, m)]
            current = value(answers)
            improved = True
            while improved:
                improved = False
                for x in range(m):
                    answers[x] ^= 1
                    flipped = value(answers)
                    if flipped > current:
                        current = flipped
                        improved = True
                    else:
                        answers[x] ^= 1
            if current > best_val:
                best, best_val = list(answers), current
    return always_answer_strategy(fam, best, name=f"best_always_answer(m={m})")


def mixed_curve(
    fam: MeasurementFamily, grid: np.ndarray | list[float]
) -> list[tuple[float, float]]:
    """(conditional error, answer rate) of mixing always-answer with guessing.

    With probability p play the best always-answer strategy (answer rate 1,
    conditional error e*), otherwise the uniform guess (rate 1/m, no error):

        p_ans(p) = p + (1 - p)/m,
        p_err(p) = p e* / p_ans(p).
    """
    m = fam.m
    strat = optimal_bb84() if m == 2 else best_always_answer(fam)
    probs = evaluate(strat, fam)
    e_star = probs.conditional_error
    assert e_star is not None
    out = []
    for p in np.asarray(grid, dtype=float):
        p_ans = p + (1.0 - p) / m
        p_err = p * e_star / p_ans if p_ans > 0 else 0.0
        out.append((float(p_err), float(p_ans)))
    return out


def _word_operator(strategy: ExplicitStrategy, word: Word) -> tuple[np.ndarray, np.ndarray]:
    _, da, db = strategy.dims
    a_op = np.eye(da, dtype=complex)
    b_op = np.eye(db, dtype=complex)
    for party, x, outcome in word:
        if party == 0:
            a_op = a_op @ strategy.alice[x][outcome]
        else:
            b_op = b_op @ strategy.bob[x][outcome]
    return a_op, b_op


def moment_vector(strategy: ExplicitStrategy, problem: MomentProblem) -> np.ndarray:
    """Evaluate every moment of the problem on the strategy.

    Symbols act on the party registers in word order; the referee qubit is
    untouched.  The real part is taken, matching the real-Gram reduction.
    """
    y = np.zeros(problem.nvars)
    for word, var in problem.index.items():
        a_op, b_op = _word_operator(strategy, word)
        y[var] = strategy.expect(None, a_op, b_op)
    return y


def max_violation(problem: MomentProblem, y: np.ndarray) -> float:
    """Largest constraint violation of a moment vector (0 = feasible).

    Checks the linear rows and the smallest eigenvalue of the Gram matrix.
    """
    worst = 0.0
    for row in problem.equalities:
        worst = max(worst, abs(sum(c * y[k] for k, c in row.coeffs.items()) - row.const))
    for row in problem.inequalities:
        worst = max(worst, sum(c * y[k] for k, c in row.coeffs.items()) - row.const)
    g = np.zeros((problem.dim, problem.dim))
    for i, j, var in problem.gram:
        g[i, j] = y[var]
        g[j, i] = y[var]
    worst = max(worst, -float(np.linalg.eigvalsh(g)[0]))
    return worst
