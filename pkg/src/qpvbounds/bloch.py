"""Qubit measurement bases from a polar grid on the Bloch sphere.

The verifier owns m projective qubit bases indexed by x in {0, ..., m-1}.
They come from a two-parameter discretization: polar angles

    theta(x) = arccos( (2/m_theta) * (floor(x / m_phi) + 1) - 1 )

and azimuths

    phi(x) = pi * (x mod m_phi) / m_phi,

with m = m_phi * (m_theta - 1) + 1.  Azimuths live in [0, pi) because a basis
and its antipode are the same measurement up to outcome relabeling.  The
grid hits the pole theta = 0 (computational basis) exactly once, at the last
input x = m - 1; theta = pi never occurs.

Special cases used throughout:
  (m_theta, m_phi) = (2, 1) -> m = 2: {Hadamard, computational}   (BB84 pair)
  (m_theta, m_phi) = (2, 2) -> m = 3: {Hadamard, Y eigenbasis, computational}

This module also computes the operator-norm coefficients that weight the
cross-input moments in the error-rate inequalities of the game relaxations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def polar_grid(m_theta: int, m_phi: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (theta, phi) arrays of length m = m_phi*(m_theta-1) + 1."""
    if m_theta < 2:
        raise ValueError(f"m_theta must be >= 2, got {m_theta}")
    if m_phi < 1:
        raise ValueError(f"m_phi must be >= 1, got {m_phi}")
    m = m_phi * (m_theta - 1) + 1
    x = np.arange(m)
    theta = np.arccos(2.0 / m_theta * (x // m_phi + 1) - 1.0)
    phi = np.pi * (x % m_phi) / m_phi
    return theta, phi


def basis_kets(theta: float, phi: float) -> np.ndarray:
    """Kets of the basis at Bloch angles (theta, phi), shape (2, 2).

    Row 0 is the outcome-0 ket cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>,
    row 1 the orthogonal ket sin(theta/2)|0> - e^{i phi} cos(theta/2)|1>.
    """
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    e = complex(math.cos(phi), math.sin(phi))
    return np.array([[c, e * s], [s, -e * c]], dtype=complex)


@dataclass
class MeasurementFamily:
    """The verifier's m qubit bases plus cached overlaps.

    kets[x, a] is the ket of outcome a in basis x (a in {0, 1}).
    """

    m_theta: int
    m_phi: int
    theta: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    kets: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return self.m_phi * (self.m_theta - 1) + 1

    def ket(self, a: int, x: int) -> np.ndarray:
        return self.kets[x, a]

    def projector(self, a: int, x: int) -> np.ndarray:
        """Rank-one projector V_a^x = |a_x><a_x|."""
        k = self.kets[x, a]
        return np.outer(k, k.conj())

    def overlap(self, a: int, x: int, b: int, xp: int) -> complex:
        """<a_x | b_xp>."""
        return complex(np.vdot(self.kets[x, a], self.kets[xp, b]))


def family(m_theta: int, m_phi: int) -> MeasurementFamily:
    theta, phi = polar_grid(m_theta, m_phi)
    kets = np.stack([basis_kets(t, p) for t, p in zip(theta, phi)])
    return MeasurementFamily(m_theta=m_theta, m_phi=m_phi, theta=theta, phi=phi, kets=kets)


def hermitian2_norm(mat: np.ndarray) -> float:
    """Operator norm of a 2x2 Hermitian matrix, in closed form.

    Eigenvalues are tr/2 +- sqrt((tr/2)^2 - det); the norm is the largest
    absolute one.
    """
    tr = mat[0, 0].real + mat[1, 1].real
    det = (mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]).real
    disc = max((tr / 2.0) ** 2 - det, 0.0)
    root = math.sqrt(disc)
    return max(abs(tr / 2.0 + root), abs(tr / 2.0 - root))


def pair_norm_coeff(fam: MeasurementFamily, a: int, x: int, b: int, xp: int) -> float:
    """Weight 2 - ||V_a^x + V_b^xp|| of <A_a^x B_b^xp> in the pair-norm
    error-rate inequality.

    For rank-one projectors ||P + Q|| = 1 + |<p|q>|, so the weight equals
    1 - |<a_x | b_xp>|.
    """
    s = fam.projector(a, x) + fam.projector(b, xp)
    return 2.0 - hermitian2_norm(s)


def _expansion(fam: MeasurementFamily, frm: int, to: int) -> np.ndarray:
    """c[i, a] = <i_to | a_frm>, the basis-change coefficients."""
    out = np.empty((2, 2), dtype=complex)
    for i in range(2):
        for a in range(2):
            out[i, a] = fam.overlap(i, to, a, frm)
    return out


def cross_norm_matrix(fam: MeasurementFamily, a: int, x: int, b: int, xp: int) -> np.ndarray:
    """The 2x2 Hermitian matrix whose norm defines the cross-norm coefficient.

    With alpha_i^a = <i_xp | a_x> and beta_j^b = <j_x | b_xp>:

        M = (1 + |beta_a^b|^2) V_a^x + (1 + |alpha_b^a|^2) V_b^xp
            + beta_0^b beta_1^b* |0_x><1_x|  + h.c.
            + alpha_0^a alpha_1^a* |0_xp><1_xp| + h.c.
    """
    alpha = _expansion(fam, frm=x, to=xp)  # alpha[i, a]
    beta = _expansion(fam, frm=xp, to=x)   # beta[j, b]
    mat = (1.0 + abs(beta[a, b]) ** 2) * fam.projector(a, x)
    mat = mat + (1.0 + abs(alpha[b, a]) ** 2) * fam.projector(b, xp)
    cross_x = beta[0, b] * beta[1, b].conjugate() * np.outer(fam.ket(0, x), fam.ket(1, x).conj())
    cross_xp = alpha[0, a] * alpha[1, a].conjugate() * np.outer(fam.ket(0, xp), fam.ket(1, xp).conj())
    mat = mat + cross_x + cross_x.conj().T
    mat = mat + cross_xp + cross_xp.conj().T
    return mat


def cross_norm_coeff(fam: MeasurementFamily, a: int, x: int, b: int, xp: int) -> float:
    """Weight 4 - ||M(a,x,b,xp)|| of <A_a^x B_b^xp> in the cross-norm
    error-rate inequality."""
    return 4.0 - hermitian2_norm(cross_norm_matrix(fam, a, x, b, xp))


def cross_norm_rhs_weights(fam: MeasurementFamily, x: int, xp: int) -> tuple[float, float]:
    """RHS weights of the cross-norm inequality for the input pair (x, xp).

    Returns (w_x, w_xp): the answer sum at x enters as w_x = 2 + max |beta|^2,
    the one at xp as w_xp = 2 + max |alpha|^2.
    """
    alpha = _expansion(fam, frm=x, to=xp)
    beta = _expansion(fam, frm=xp, to=x)
    return 2.0 + float(np.max(np.abs(beta) ** 2)), 2.0 + float(np.max(np.abs(alpha) ** 2))


def max_cross_overlap(fam: MeasurementFamily) -> float:
    """max over x != x' and outcomes a, b of |<a_x | b_x'>|."""
    best = 0.0
    for x in range(fam.m):
        for xp in range(fam.m):
            if x == xp:
                continue
            for a in range(2):
                for b in range(2):
                    best = max(best, abs(fam.overlap(a, x, b, xp)))
    return best
