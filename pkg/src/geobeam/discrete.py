"""Hyperbolic toral automorphisms (cat maps) as an exactly linear Anosov testbed."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


class DiscreteSystemError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteHyperbolicSystem:
    """x -> M x mod 1 on the unit 2-torus, M integer with |det M| = 1."""

    matrix: tuple = ((2, 1), (1, 1))

    def __post_init__(self):
        M = np.array(self.matrix, dtype=np.int64)
        if M.shape != (2, 2) or not np.array_equal(M, np.array(self.matrix)):
            raise DiscreteSystemError("matrix must be a 2x2 integer matrix")
        det = int(round(np.linalg.det(M)))
        if abs(det) != 1:
            raise DiscreteSystemError("matrix must have |det| = 1")
        ev = np.linalg.eigvals(M.astype(float))
        if np.any(np.abs(ev.imag) > 1e-12) or np.any(np.abs(np.abs(ev) - 1.0) < 1e-9):
            raise DiscreteSystemError("eigenvalues must be real and off the unit circle")

    @property
    def M(self) -> np.ndarray:
        return np.array(self.matrix, dtype=np.int64)

    def eigen(self):
        """(lambda_u, e_u, lambda_s, e_s) with |lambda_u| > 1 > |lambda_s|, unit eigenvectors."""
        ev, V = np.linalg.eig(self.M.astype(float))
        ev = ev.real
        V = V.real
        iu = int(np.argmax(np.abs(ev)))
        is_ = 1 - iu
        eu = V[:, iu] / np.linalg.norm(V[:, iu])
        es = V[:, is_] / np.linalg.norm(V[:, is_])
        return ev[iu], eu, ev[is_], es

    @property
    def lambda_minus(self) -> float:
        return float(abs(self.eigen()[2]))

    @property
    def lambda_plus(self) -> float:
        return float(abs(self.eigen()[0]))


def discrete_step(system: DiscreteHyperbolicSystem, point, k: int):
    """k-fold action of the matrix mod 1.

    Points given as ``Fraction`` pairs are advanced exactly; float points are
    advanced one step at a time (negative k uses the integer inverse).
    """
    if int(k) != k:
        raise DiscreteSystemError("k must be an integer")
    k = int(k)
    M = system.M
    if k < 0:
        a, b = M[0]
        c, d = M[1]
        det = a * d - b * c
        M = det * np.array([[d, -b], [-c, a]], dtype=np.int64)
        k = -k
    if all(isinstance(p, Fraction) for p in point):
        x = [p % 1 for p in point]
        Mi = [[int(v) for v in row] for row in M]
        for _ in range(k):
            x = [(Mi[0][0] * x[0] + Mi[0][1] * x[1]) % 1, (Mi[1][0] * x[0] + Mi[1][1] * x[1]) % 1]
        return tuple(x)
    x = np.mod(np.asarray(point, float), 1.0)
    Mf = M.astype(float)
    for _ in range(k):
        x = np.mod(x @ Mf.T, 1.0)
    return x


def rational_orbit(system: DiscreteHyperbolicSystem, num, q: int, steps: int) -> np.ndarray:
    """Exact orbit of the point num/q (integer numerators) for ``steps`` steps.

    Returns integer numerators of shape (steps + 1, 2).
    """
    M = [[int(v) for v in row] for row in system.M]
    out = np.empty((steps + 1, 2), dtype=np.int64)
    a, b = int(num[0]) % q, int(num[1]) % q
    out[0] = (a, b)
    for k in range(1, steps + 1):
        a, b = (M[0][0] * a + M[0][1] * b) % q, (M[1][0] * a + M[1][1] * b) % q
        out[k] = (a, b)
    return out


def quotient_jacobian(system: DiscreteHyperbolicSystem, direction, k: int) -> float:
    """|det| of d(M^k) restricted to a line and read in the quotient by its image.

    For a segment with unit direction u this is 1 / |M^k u|, which decays
    like lambda_minus^k for generic u.
    """
    u = np.asarray(direction, float)
    u = u / np.linalg.norm(u)
    Mk = np.linalg.matrix_power(system.M.astype(float), int(k))
    return float(1.0 / np.linalg.norm(Mk @ u))


def contraction_along(system: DiscreteHyperbolicSystem, direction, k: int) -> float:
    """Length factor |M^k u| of a unit segment direction u (exactly lambda_s^k on the stable leaf)."""
    u = np.asarray(direction, float)
    u = u / np.linalg.norm(u)
    Mk = np.linalg.matrix_power(system.M.astype(float), int(k))
    return float(np.linalg.norm(Mk @ u))


def splitting(system: DiscreteHyperbolicSystem, point=None):
    """Stable/unstable directions; for a linear map they are the eigenvectors everywhere."""
    from .flow import SplittingEstimate

    lu, eu, ls, es = system.eigen()
    M = system.M.astype(float)
    res = max(np.linalg.norm(M @ es - ls * es), np.linalg.norm(M @ eu - lu * eu))
    B_hat = 1.0 / np.log(1.0 / abs(ls))
    return SplittingEstimate(
        rho=point,
        E_plus=es[None, :],
        E_minus=eu[None, :],
        residual=float(res),
        B_hat=float(max(1.0, B_hat)),
        usable=True,
    )
