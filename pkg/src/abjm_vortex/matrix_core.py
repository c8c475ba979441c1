"""
Coupling-matrix machinery for the reduced vortex system.

R(a, m) is the m x m tridiagonal matrix with diagonal 2a^2 + 2i - 1 and
off-diagonal -(a^2 + i). Everything here is built from the closed forms of its
Cholesky factor, never from a general-purpose factorization; the numeric
routines at the bottom of the module exist only as cross-check oracles.

All closed forms are written in terms of the minor ratios R_i / R_{i-1}, so
nothing overflows even though the minors grow like i! at a = 0.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .exceptions import ConfigError, InvalidDimensionError, NotPositiveDefiniteError

logger = logging.getLogger(__name__)


# ==============================================================================
# 1. MODEL PARAMETERS
# ==============================================================================
@dataclass(frozen=True)
class ModelParams:
    """Physical and algebraic parameters (m = N - 1, lam = 4 mu^2)."""
    m: int
    a: float
    lam: float
    k: float = 1.0
    s: int = -1
    nu: Optional[float] = None  # None means "tune automatically"

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise InvalidDimensionError(f"m must be an integer >= 2, got {self.m}")
        if not self.lam > 0:
            raise ConfigError("model.lambda", f"must be positive, got {self.lam}")
        if not self.a >= 0:
            raise ConfigError("model.a", f"must be nonnegative, got {self.a}")
        if not self.k > 0:
            raise ConfigError("model.k", f"must be positive, got {self.k}")
        if self.s not in (1, -1):
            raise ConfigError("model.s", f"must be +1 or -1, got {self.s}")
        if self.nu is not None and not self.nu > 0:
            raise ConfigError("solver.nu", f"must be positive, got {self.nu}")

    @property
    def N(self):
        return self.m + 1

    @property
    def mu(self):
        return math.sqrt(self.lam) / 2.0

    def with_nu(self, nu):
        return ModelParams(self.m, self.a, self.lam, self.k, self.s, nu)

    def with_lambda(self, lam):
        return ModelParams(self.m, self.a, lam, self.k, self.s, self.nu)


@dataclass(frozen=True)
class CouplingMatrix:
    """R together with its closed-form factors and derived quantities."""
    a: float
    m: int
    R: np.ndarray
    L: np.ndarray
    Linv: np.ndarray
    Rinv: np.ndarray
    r: np.ndarray
    minors: np.ndarray
    ratios: np.ndarray
    lambda0: float


# ==============================================================================
# 2. THE MATRIX AND ITS MINORS
# ==============================================================================
def _check_dimension(a, m):
    if int(m) != m or m < 2:
        raise InvalidDimensionError(f"m must be an integer >= 2, got {m}")
    if a < 0:
        raise ConfigError("model.a", f"must be nonnegative, got {a}")


def tridiagonal_bands(a, m):
    """Diagonal and off-diagonal of R(a, m) as 1-D arrays."""
    _check_dimension(a, m)
    i = np.arange(1, m + 1, dtype=float)
    diag = 2.0 * a * a + 2.0 * i - 1.0
    off = -(a * a + i[:-1])
    return diag, off


def build_R(a, m):
    """Dense symmetric tridiagonal coupling matrix R(a, m)."""
    diag, off = tridiagonal_bands(a, m)
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


def leading_minors(a, m):
    """Leading principal minors R_1..R_m by the three-term determinant recursion."""
    diag, off = tridiagonal_bands(a, m)
    minors = np.empty(m)
    prev2, prev = 1.0, 1.0  # R_{-1} is never used; R_0 = 1
    for i in range(m):
        if i == 0:
            cur = diag[0]
        else:
            cur = diag[i] * prev - off[i - 1] ** 2 * prev2
        minors[i] = cur
        prev2, prev = prev, cur
    return minors


def minor_ratios(a, m):
    """rho_i = R_i / R_{i-1} (R_0 = 1), computed without forming any minor."""
    diag, off = tridiagonal_bands(a, m)
    rho = np.empty(m)
    rho[0] = diag[0]
    for i in range(1, m):
        rho[i] = diag[i] - off[i - 1] ** 2 / rho[i - 1]
    return rho


# ==============================================================================
# 3. CLOSED-FORM CHOLESKY FACTOR AND INVERSES
# ==============================================================================
def _a_and_m_from_R(R):
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise InvalidDimensionError(f"expected a square matrix, got shape {R.shape}")
    m = R.shape[0]
    if m < 2:
        raise InvalidDimensionError(f"m must be >= 2, got {m}")
    a2 = (R[0, 0] - 1.0) / 2.0
    return math.sqrt(max(a2, 0.0)), m


def cholesky_factor(R):
    """
    Lower-triangular L with L L^T = R from the closed forms:
    L_ii = sqrt(R_i/R_{i-1}), L_{i,i-1} = -(a^2+i-1) sqrt(R_{i-2}/R_{i-1}).
    """
    R = np.asarray(R, dtype=float)
    a, m = _a_and_m_from_R(R)
    diag = np.diag(R)
    off = np.diag(R, 1)
    rho = np.empty(m)
    rho[0] = diag[0]
    for i in range(1, m):
        rho[i] = diag[i] - off[i - 1] ** 2 / rho[i - 1]
    if np.any(rho <= 0.0):
        bad = int(np.argmax(rho <= 0.0)) + 1
        raise NotPositiveDefiniteError(f"pivot {bad} is {rho[bad - 1]!r}")
    L = np.zeros((m, m))
    L[np.arange(m), np.arange(m)] = np.sqrt(rho)
    # off[i-1] = -(a^2 + i) in 1-based terms; sqrt(R_{i-2}/R_{i-1}) = 1/sqrt(rho_{i-1})
    L[np.arange(1, m), np.arange(m - 1)] = off / np.sqrt(rho[:-1])
    return L


def invert_L(L):
    """
    Closed-form inverse of the bidiagonal Cholesky factor.

    (L^-1)_ii = 1/sqrt(rho_i) and, for j < i,
    (L^-1)_ij = prod_{l=j}^{i-1} (a^2 + l)/rho_l / sqrt(rho_i),
    which is the product formula (a^2+j)...(a^2+i-1) R_{j-1}/sqrt(R_{i-1} R_i)
    rewritten in ratios.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise InvalidDimensionError(f"expected a square matrix, got shape {L.shape}")
    m = L.shape[0]
    rho = np.diag(L) ** 2
    # -L_{i,i-1} * sqrt(rho_{i-1}) recovers a^2 + i - 1
    coupling = -np.diag(L, -1) * np.sqrt(rho[:-1])
    Linv = np.zeros((m, m))
    for i in range(m):
        Linv[i, i] = 1.0 / math.sqrt(rho[i])
        acc = 1.0
        for j in range(i - 1, -1, -1):
            acc *= coupling[j] / rho[j]
            Linv[i, j] = acc / math.sqrt(rho[i])
    return Linv


def invert_R(L_inv):
    """R^-1 = (L^-1)^T L^-1."""
    L_inv = np.asarray(L_inv, dtype=float)
    Rinv = L_inv.T @ L_inv
    return 0.5 * (Rinv + Rinv.T)


def r_vector(R_inv):
    """Row sums r_i of R^-1; these are the asymptotic values of e^{u_i}."""
    r = np.asarray(R_inv, dtype=float).sum(axis=1)
    if np.any(r <= 0.0):
        raise NotPositiveDefiniteError(f"r-vector has a non-positive entry: {r}")
    return r


def lambda_zero(R):
    """Twice the smallest eigenvalue of R, by Sturm-sequence bisection."""
    R = np.asarray(R, dtype=float)
    lowest = linalg.eigh_tridiagonal(
        np.diag(R).copy(), np.diag(R, 1).copy(),
        eigvals_only=True, select="i", select_range=(0, 0), lapack_driver="stebz",
    )
    value = 2.0 * float(lowest[0])
    if value <= 0.0:
        raise NotPositiveDefiniteError(f"smallest eigenvalue is {lowest[0]!r}")
    return value


def coupling_matrix(a, m):
    """Assemble the full CouplingMatrix for (a, m)."""
    R = build_R(a, m)
    L = cholesky_factor(R)
    Linv = invert_L(L)
    Rinv = invert_R(Linv)
    cm = CouplingMatrix(
        a=float(a), m=int(m), R=R, L=L, Linv=Linv, Rinv=Rinv,
        r=r_vector(Rinv), minors=leading_minors(a, m), ratios=minor_ratios(a, m),
        lambda0=lambda_zero(R),
    )
    logger.debug("coupling matrix a=%g m=%d lambda0=%.12g", a, m, cm.lambda0)
    return cm


# ==============================================================================
# 4. CLOSED FORMS AT a = 0 AND DECAY RATES
# ==============================================================================
def a0_inverse(m):
    """(R^-1)_ij = sum_{l=max(i,j)}^m 1/l, the a = 0 closed form."""
    tails = np.cumsum(1.0 / np.arange(m, 0, -1))[::-1]  # tails[k] = sum_{l=k+1}^m 1/l
    idx = np.arange(m)
    return tails[np.maximum.outer(idx, idx)]


def linearized_decay_rate(cm, lam):
    """Decay rate of sum_i (u_i - ln r_i)^2 predicted by linearizing at u = ln r."""
    sqrt_r = np.sqrt(cm.r)
    sym = sqrt_r[:, None] * cm.R * sqrt_r[None, :]
    return 2.0 * math.sqrt(lam * float(np.linalg.eigvalsh(sym)[0]))


# ==============================================================================
# 5. SHARP EXISTENCE CONDITIONS ON THE TORUS
# ==============================================================================
@dataclass(frozen=True)
class ExistenceCheck:
    """Per-index lhs < rhs test; K_i > 0 is the same statement divided by lambda."""
    lhs: np.ndarray
    rhs: np.ndarray
    holds: np.ndarray
    K: np.ndarray

    @property
    def exists(self):
        return bool(np.all(self.holds))

    @property
    def failed_indices(self):
        """1-based indices of the violated conditions."""
        return [int(i) + 1 for i in np.flatnonzero(~self.holds)]


def _counts_vector(n, m):
    n = np.asarray(n, dtype=float)
    if n.shape != (m,):
        raise ConfigError("vortices", f"expected {m} vortex counts, got {n.shape[0] if n.ndim else 0}")
    return n


def check_torus_existence(params, n, area, cm=None):
    """
    Evaluate 4 pi sum_j (R^-1)_ij n_j < lam |Omega| sum_j (R^-1)_ij for every i.
    Equality counts as failure.
    """
    cm = cm or coupling_matrix(params.a, params.m)
    n = _counts_vector(n, params.m)
    if not area > 0:
        raise ConfigError("domain.area", f"must be positive, got {area}")
    weighted = cm.Rinv @ n
    lhs = 4.0 * math.pi * weighted
    rhs = params.lam * area * cm.r
    K = area * cm.r - (4.0 * math.pi / params.lam) * weighted
    return ExistenceCheck(lhs=lhs, rhs=rhs, holds=lhs < rhs, K=K)


def torus_threshold(params, n, area, cm=None):
    """Smallest lambda at which every condition holds strictly beyond it."""
    cm = cm or coupling_matrix(params.a, params.m)
    n = _counts_vector(n, params.m)
    return 4.0 * math.pi * float(np.max((cm.Rinv @ n) / cm.r)) / area


# ==============================================================================
# 6. NUMERIC ORACLES (cross-checks only)
# ==============================================================================
def numeric_cholesky(R):
    return linalg.cholesky(np.asarray(R, dtype=float), lower=True)


def numeric_inverse_L(L):
    L = np.asarray(L, dtype=float)
    return linalg.solve_triangular(L, np.eye(L.shape[0]), lower=True)
