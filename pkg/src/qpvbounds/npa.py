"""Moment-matrix relaxations for two-party projective-measurement algebras.

Words are products of symbols (party, input, outcome).  Each symbol stands
for a projector of a complete projective measurement; symbols of different
parties commute, symbols of one party and one input are mutually orthogonal
idempotents.  These relations are absorbed structurally:

  * commutation   -> every word is normalized to party-0 symbols first,
                     preserving the relative order within each party;
  * idempotence   -> adjacent equal symbols merge;
  * orthogonality -> adjacent same-party same-input symbols with different
                     outcomes annihilate the word (the zero operator).

A moment <W> is keyed by the lexicographic minimum of the normalized word
and its reversal: all generators are self-adjoint, so <W> and <W^dagger>
carry the same real part, and the relaxation uses a real symmetric Gram
matrix (a standard sound reduction of the complex hierarchy).

The remaining algebra — completeness sum_a P_a = 1 of each measurement —
cannot be absorbed into single words; it is emitted as linear equalities
    sum_a <S^dag P_a^x T> = <S^dag T>
for every basis pair (S, T) and every input whose inserted moments are all
representable in the chosen monomial basis.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

Symbol = tuple[int, int, int]  # (party, input, outcome)
Word = tuple[Symbol, ...]

LEVELS = ("1", "1+ab", "2")


@dataclass(frozen=True)
class Scenario:
    """Two parties with a number of inputs and outcomes each."""

    inputs: tuple[int, int]
    outcomes: tuple[int, int]

    def symbols(self, party: int) -> list[Symbol]:
        return [
            (party, x, a)
            for x in range(self.inputs[party])
            for a in range(self.outcomes[party])
        ]


def canonicalize(word) -> Word | None:
    """Normal form of a word, or None if it is the zero operator."""
    parts: tuple[list[Symbol], list[Symbol]] = ([], [])
    for sym in word:
        parts[sym[0]].append(sym)
    out: list[Symbol] = []
    for part in parts:
        stack: list[Symbol] = []
        for sym in part:
            if stack:
                top = stack[-1]
                if top == sym:
                    continue  # projector idempotence
                if top[1] == sym[1]:
                    return None  # same input, different outcome: orthogonal
            stack.append(sym)
        out.extend(stack)
    return tuple(out)


def moment_key(word) -> Word | None:
    """Canonical key of the moment <word> under the real-Gram reduction."""
    w = canonicalize(word)
    if w is None:
        return None
    r = canonicalize(tuple(reversed(w)))
    assert r is not None
    return w if w <= r else r


def adjoint(word: Word) -> Word:
    """Formal adjoint of a word of self-adjoint generators."""
    return tuple(reversed(word))


def monomial_basis(scenario: Scenario, level: str) -> list[Word]:
    """Monomial basis indexing the Gram matrix at the given level.

    "1"    : identity and all single symbols;
    "1+ab" : level 1 plus all products of one party-0 and one party-1 symbol;
    "2"    : all words of length <= 2 (adds same-party products).
    """
    if level not in LEVELS:
        raise ValueError(f"unknown level {level!r}; expected one of {LEVELS}")
    singles0 = scenario.symbols(0)
    singles1 = scenario.symbols(1)
    words: list[Word] = [()]
    words += [(s,) for s in singles0 + singles1]
    if level in ("1+ab", "2"):
        words += [(s0, s1) for s0 in singles0 for s1 in singles1]
    if level == "2":
        for singles in (singles0, singles1):
            seen: dict[Word, None] = {}
            for s, t in itertools.product(singles, singles):
                w = canonicalize((s, t))
                if w is not None and len(w) == 2:
                    seen.setdefault(w)
            words += list(seen)
    return words


@dataclass
class LinRow:
    """A sparse linear form sum_k coeffs[k] * y_k compared against const."""

    coeffs: dict[int, float]
    const: float = 0.0

    def normalized(self) -> tuple[tuple[tuple[int, float], ...], float]:
        items = tuple(sorted((k, v) for k, v in self.coeffs.items() if v != 0.0))
        return items, self.const


@dataclass
class MomentProblem:
    """A moment relaxation: one PSD Gram block plus linear rows.

    The scalar variables y_k are the distinct moment values; `index` maps a
    moment key to its variable id.  The empty word (the state normalization
    <1>) is variable 0, pinned to 1 by the first equality.  `gram` lists the
    upper-triangle Gram entries as (row, col, var); entries whose word is the
    zero operator are omitted and read as 0.
    """

    scenario: Scenario
    level: str
    basis: list[Word]
    index: dict[Word, int]
    gram: list[tuple[int, int, int]]
    equalities: list[LinRow] = field(default_factory=list)
    inequalities: list[LinRow] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def nvars(self) -> int:
        return len(self.index)

    def var(self, word) -> int:
        """Variable id of the moment <word>; KeyError if not representable."""
        key = moment_key(word)
        if key is None:
            raise KeyError(f"word {word!r} is the zero operator")
        return self.index[key]

    def term(self, word) -> int | None:
        """Variable id of <word>, or None if the word annihilates."""
        key = moment_key(word)
        if key is None:
            return None
        return self.index[key]


def build_moment_problem(
    scenario: Scenario, level: str, completeness: bool = True
) -> MomentProblem:
    basis = monomial_basis(scenario, level)
    index: dict[Word, int] = {(): 0}
    gram: list[tuple[int, int, int]] = []
    adjoints = [adjoint(w) for w in basis]
    for i, wi in enumerate(adjoints):
        for j in range(i, len(basis)):
            key = moment_key(wi + basis[j])
            if key is None:
                continue
            var = index.setdefault(key, len(index))
            gram.append((i, j, var))

    problem = MomentProblem(
        scenario=scenario, level=level, basis=basis, index=index, gram=gram
    )
    problem.equalities.append(LinRow({0: 1.0}, 1.0))  # <1> = 1
    if completeness:
        _append_completeness_rows(problem, adjoints)
    return problem


def _append_completeness_rows(problem: MomentProblem, adjoints: list[Word]) -> None:
    """Emit sum_a <S^dag P_a^x T> = <S^dag T> wherever representable."""
    scenario = problem.scenario
    index = problem.index
    basis = problem.basis
    seen: set[tuple[tuple[tuple[int, float], ...], float]] = set()
    for party in range(2):
        syms_by_input = [
            [(party, x, a) for a in range(scenario.outcomes[party])]
            for x in range(scenario.inputs[party])
        ]
        for i, sdag in enumerate(adjoints):
            for j in range(i, len(basis)):
                t = basis[j]
                rhs_key = moment_key(sdag + t)
                if rhs_key is not None and rhs_key not in index:
                    continue
                for syms in syms_by_input:
                    coeffs: dict[int, float] = {}
                    ok = True
                    for sym in syms:
                        key = moment_key(sdag + (sym,) + t)
                        if key is None:
                            continue
                        if key not in index:
                            ok = False
                            break
                        var = index[key]
                        coeffs[var] = coeffs.get(var, 0.0) + 1.0
                    if not ok:
                        continue
                    if rhs_key is not None:
                        var = index[rhs_key]
                        coeffs[var] = coeffs.get(var, 0.0) - 1.0
                    row = LinRow(coeffs, 0.0)
                    sig = row.normalized()
                    if not sig[0] and sig[1] == 0.0:
                        continue
                    if sig in seen:
                        continue
                    seen.add(sig)
                    problem.equalities.append(row)
