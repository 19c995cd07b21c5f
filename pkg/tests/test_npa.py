"""Word algebra and moment-problem assembly.

The load-bearing check here is the dense-operator oracle: a random explicit
representation of the projector algebra (random complete projective
measurements, parties on separate tensor factors) must agree with the purely
symbolic normal form on every word.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpvbounds.npa import (
    LEVELS,
    LinRow,
    Scenario,
    adjoint,
    build_moment_problem,
    canonicalize,
    moment_key,
    monomial_basis,
)

A0, A1 = (0, 0, 0), (0, 0, 1)  # party 0, input 0, outcomes 0/1
Ax0 = (0, 1, 0)                # party 0, input 1
B0 = (1, 0, 0)
Bx1 = (1, 1, 1)


def test_canonicalize_hand_cases():
    assert canonicalize(()) == ()
    assert canonicalize((A0,)) == (A0,)
    # idempotence
    assert canonicalize((A0, A0)) == (A0,)
    assert canonicalize((A0, A0, A0)) == (A0,)
    # orthogonality within one measurement
    assert canonicalize((A0, A1)) is None
    assert canonicalize((A0, Ax0, A0)) == (A0, Ax0, A0)
    # commutation: party 0 precedes party 1, relative order kept
    assert canonicalize((B0, A0)) == (A0, B0)
    assert canonicalize((B0, A0, Bx1, Ax0)) == (A0, Ax0, B0, Bx1)
    # commuting a sandwiched symbol out can trigger a merge ...
    assert canonicalize((A0, B0, A0)) == (A0, B0)
    # ... or an annihilation
    assert canonicalize((A0, B0, A1)) is None


def test_moment_key_picks_min_of_word_and_reversal():
    w = (Ax0, A0)
    assert canonicalize(w) == w
    assert moment_key(w) == (A0, Ax0)  # reversal is lexicographically smaller
    assert moment_key((A0, Ax0)) == (A0, Ax0)
    assert moment_key((A0, A1)) is None


def test_moment_key_invariant_under_adjoint():
    words = [(A0, Ax0), (A0, B0), (Ax0, A0, B0, Bx1), (A0, Ax0, A0)]
    for w in words:
        assert moment_key(w) == moment_key(adjoint(w))


SYMBOLS = st.tuples(
    st.integers(0, 1), st.integers(0, 2), st.integers(0, 2)
)
WORDS = st.lists(SYMBOLS, max_size=6).map(tuple)


@settings(max_examples=300, deadline=None)
@given(WORDS)
def test_canonicalize_idempotent(w):
    c = canonicalize(w)
    if c is None:
        return
    assert canonicalize(c) == c


@settings(max_examples=300, deadline=None)
@given(WORDS)
def test_moment_key_reversal_symmetric(w):
    assert moment_key(w) == moment_key(tuple(reversed(w)))


@settings(max_examples=200, deadline=None)
@given(WORDS, st.integers(0, 5))
def test_canonicalize_absorbs_duplicated_symbol(w, pos):
    if not w:
        return
    pos = pos % len(w)
    doubled = w[: pos + 1] + (w[pos],) + w[pos + 1 :]
    assert canonicalize(doubled) == canonicalize(w)


def _random_representation(scenario: Scenario, dim: int, rng) -> dict:
    """Random complete projective measurements, one per (party, input).

    Party 0 acts on the left tensor factor, party 1 on the right.  Returns
    symbol -> dense (dim*dim, dim*dim) matrix.
    """
    eye = np.eye(dim)
    ops = {}
    for party in range(2):
        n_out = scenario.outcomes[party]
        assert dim >= n_out
        for x in range(scenario.inputs[party]):
            raw = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            u, _ = np.linalg.qr(raw)
            # split the columns into n_out nonempty groups
            cuts = sorted(rng.choice(np.arange(1, dim), size=n_out - 1, replace=False))
            groups = np.split(np.arange(dim), cuts)
            for a, grp in enumerate(groups):
                block = u[:, grp]
                p = block @ block.conj().T
                if party == 0:
                    ops[(party, x, a)] = np.kron(p, eye)
                else:
                    ops[(party, x, a)] = np.kron(eye, p)
    return ops


def _evaluate(word, ops, total_dim: int) -> np.ndarray:
    out = np.eye(total_dim, dtype=complex)
    for sym in word:
        out = out @ ops[sym]
    return out


def test_canonicalize_matches_dense_operator_oracle():
    rng = np.random.default_rng(2024)
    scenario = Scenario(inputs=(2, 2), outcomes=(3, 3))
    dim = 4
    ops = _random_representation(scenario, dim, rng)
    symbols = scenario.symbols(0) + scenario.symbols(1)
    n_zero = 0
    for _ in range(400):
        length = int(rng.integers(0, 7))
        word = tuple(symbols[k] for k in rng.integers(0, len(symbols), size=length))
        mat = _evaluate(word, ops, dim * dim)
        canon = canonicalize(word)
        if canon is None:
            n_zero += 1
            assert np.max(np.abs(mat)) < 1e-10
        else:
            assert np.max(np.abs(mat - _evaluate(canon, ops, dim * dim))) < 1e-10
            assert np.max(np.abs(mat)) > 1e-8  # generic nonzero
    assert n_zero > 20  # the sample actually exercised annihilation


def _game_scenario(m: int) -> Scenario:
    # both parties receive the basis index and answer in {0, 1, abort}
    return Scenario(inputs=(m, m), outcomes=(3, 3))


@pytest.mark.parametrize(
    "m,level,expected",
    [
        (2, "1", 13),
        (2, "1+ab", 49),
        (2, "2", 85),
        (3, "2", 208),
        (5, "1+ab", 256),
    ],
)
def test_monomial_basis_counts(m, level, expected):
    # oracle: 1 + 6m singles; (3m)^2 mixed pairs; 9m(m-1) same-party pairs
    # per party (same-input pairs either merge or annihilate).
    n = 1 + 6 * m
    if level in ("1+ab", "2"):
        n += 9 * m * m
    if level == "2":
        n += 2 * 9 * m * (m - 1)
    assert n == expected
    basis = monomial_basis(_game_scenario(m), level)
    assert len(basis) == expected
    assert len(set(basis)) == expected  # no duplicates
    assert basis[0] == ()


def test_monomial_basis_rejects_unknown_level():
    with pytest.raises(ValueError):
        monomial_basis(_game_scenario(2), "3")
    assert LEVELS == ("1", "1+ab", "2")


def test_basis_words_are_canonical():
    for level in LEVELS:
        for w in monomial_basis(_game_scenario(3), level):
            assert canonicalize(w) == w


def test_build_moment_problem_pins_identity():
    prob = build_moment_problem(_game_scenario(2), "1")
    assert prob.index[()] == 0
    row = prob.equalities[0]
    assert row.coeffs == {0: 1.0}
    assert row.const == 1.0


def test_gram_diagonal_of_projector_equals_its_first_row_entry():
    # <P^dag P> = <P> for a projector, so the Gram diagonal at a single-symbol
    # word reuses the variable of the (identity, word) entry.
    prob = build_moment_problem(_game_scenario(2), "1")
    entries = {(i, j): v for i, j, v in prob.gram}
    assert entries[(0, 0)] == 0
    for i, w in enumerate(prob.basis):
        if len(w) == 1:
            assert entries[(i, i)] == entries[(0, i)]


def test_gram_covers_upper_triangle_except_zero_words():
    prob = build_moment_problem(_game_scenario(2), "1+ab")
    seen = set()
    for i, j, v in prob.gram:
        assert 0 <= i <= j < prob.dim
        assert 0 <= v < prob.nvars
        assert (i, j) not in seen
        seen.add((i, j))
    # missing entries must correspond to annihilating products
    for i in range(prob.dim):
        for j in range(i, prob.dim):
            if (i, j) not in seen:
                assert moment_key(adjoint(prob.basis[i]) + prob.basis[j]) is None


def test_var_and_term_agree():
    prob = build_moment_problem(_game_scenario(2), "1")
    w = ((0, 0, 0), (1, 1, 2))
    assert prob.var(w) == prob.term(w)
    assert prob.term((A0, A1)) is None
    with pytest.raises(KeyError):
        prob.var((A0, A1))


def test_completeness_rows_include_single_measurement_sum():
    # sum_a <A_a^x> = 1 must appear: coeffs {var(A_a^x): 1} + {0: -1}.
    prob = build_moment_problem(_game_scenario(2), "1")
    want = []
    for x in range(2):
        coeffs = {prob.var(((0, x, a),)): 1.0 for a in range(3)}
        coeffs[0] = -1.0
        want.append(LinRow(coeffs, 0.0).normalized())
    sigs = {row.normalized() for row in prob.equalities}
    for sig in want:
        assert sig in sigs


def test_completeness_rows_deduplicated_and_nontrivial():
    prob = build_moment_problem(_game_scenario(2), "1+ab")
    sigs = [row.normalized() for row in prob.equalities]
    assert len(sigs) == len(set(sigs))
    for items, const in sigs[1:]:
        assert items  # no empty rows
        assert const == 0.0


def test_completeness_flag_off_leaves_only_pin():
    prob = build_moment_problem(_game_scenario(2), "1", completeness=False)
    assert len(prob.equalities) == 1


@pytest.mark.parametrize("m,level,nvars,neqs", [(2, "2", 1003, 1037)])
def test_problem_size_snapshot(m, level, nvars, neqs):
    prob = build_moment_problem(_game_scenario(m), level)
    assert prob.nvars == nvars
    assert len(prob.equalities) == neqs
