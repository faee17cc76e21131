"""Dense kernels for small (n <= 20) matrices.

Everything the certification pipeline needs from linear algebra lives here:
logarithmic norms in the plain and P-weighted 2-norm, the matrix
exponential, weighted operator norms, and the continuous Lyapunov equation.
Eigen/Cholesky factorizations are delegated to numpy; the matrix exponential
is computed in-package by Pade-13 scaling and squaring.
"""

from __future__ import annotations

import numpy as np

from .errors import DefinitenessError, DimensionError, NotHurwitzError, NumericError

SYMMETRY_TOL = 1e-12


def _as_square(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise NumericError(f"{name} has non-finite entries")
    return a


def sym_eig_extremes(s):
    """(lambda_min, lambda_max) of a symmetric matrix."""
    w = np.linalg.eigvalsh(s)
    return float(w[0]), float(w[-1])


class QuadraticForm:
    """Symmetric positive-definite P defining V(x) = x'Px and ||x||_P.

    The Cholesky factor L (P = L L') is computed once and reused; T = L'
    satisfies P = T'T and induces the same vector norm as the symmetric
    square root, so weighted log/operator norms may be evaluated through T.
    """

    def __init__(self, p):
        p = _as_square(p, "P")
        if np.abs(p - p.T).max() > SYMMETRY_TOL:
            raise DefinitenessError(
                f"P is not symmetric to {SYMMETRY_TOL:g} (max asymmetry "
                f"{np.abs(p - p.T).max():.3e})"
            )
        p = 0.5 * (p + p.T)
        try:
            self.chol = np.linalg.cholesky(p)
        except np.linalg.LinAlgError as exc:
            raise DefinitenessError("P is not positive definite") from exc
        self.p = p
        self.n = p.shape[0]

    @classmethod
    def identity(cls, n, scale=1.0):
        return cls(scale * np.eye(n))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(x @ self.p @ x)

    def value_batch(self, xs):
        xs = np.asarray(xs, dtype=float)
        return np.einsum("ij,jk,ik->i", xs, self.p, xs)

    def norm(self, x):
        return float(np.sqrt(max(self.value(x), 0.0)))

    def similarity(self, m):
        """T M T^-1 with T = L' (the P-weighted coordinates of M)."""
        m = _as_square(m, "M")
        if m.shape[0] != self.n:
            raise DimensionError(f"M is {m.shape[0]}x{m.shape[0]}, P is {self.n}x{self.n}")
        t = self.chol.T
        # M T^-1 solved column-wise: Y T = M  <=>  T' Y' = M'
        y = np.linalg.solve(self.chol, m.T).T
        return t @ y

    def scale(self, c):
        if c <= 0:
            raise DefinitenessError("scale factor must be positive")
        return QuadraticForm(c * self.p)

    def __repr__(self):
        return f"QuadraticForm(n={self.n})"


def lognorm2(a):
    """Logarithmic norm induced by the 2-norm: lambda_max((A + A')/2)."""
    a = _as_square(a, "A")
    return sym_eig_extremes(0.5 * (a + a.T))[1]


def lognorm2_weighted(a, p):
    """Logarithmic norm in the P-weighted 2-norm.

    Equals lambda_max of the symmetric part of T A T^-1 where P = T'T;
    reduces to lognorm2 when P is the identity.
    """
    a = _as_square(a, "A")
    m = p.similarity(a)
    return sym_eig_extremes(0.5 * (m + m.T))[1]


def operator_norm2_weighted(m, p):
    """Largest singular value of M in the P-weighted 2-norm."""
    m = _as_square(m, "M")
    return float(np.linalg.svd(p.similarity(m), compute_uv=False)[0])


# Pade-13 numerator coefficients (descending powers handled explicitly below).
_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
    33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0,
)
_PADE13_THETA = 5.371920351148152


def expm(a):
    """Matrix exponential by scaling-and-squaring with a Pade-13 core."""
    a = _as_square(a, "A")
    n = a.shape[0]
    nrm = float(np.abs(a).sum(axis=0).max())  # 1-norm
    s = 0
    if nrm > _PADE13_THETA:
        s = int(np.ceil(np.log2(nrm / _PADE13_THETA)))
        if s > 64:
            raise NumericError(f"matrix norm {nrm:.3e} too large for expm")
        a = a / (2.0 ** s)

    b = _PADE13
    ident = np.eye(n)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    try:
        r = np.linalg.solve(v - u, v + u)
    except np.linalg.LinAlgError as exc:
        raise NumericError("singular Pade denominator in expm") from exc
    for _ in range(s):
        r = r @ r
    if not np.isfinite(r).all():
        raise NumericError("overflow in expm")
    return r


def is_hurwitz(a):
    a = _as_square(a, "A")
    return bool(np.linalg.eigvals(a).real.max() < 0.0)


def lyapunov_solve(a, q):
    """Solve A'P + PA = -Q for symmetric positive-definite P.

    Kronecker vectorization, adequate for n <= 20. The residual
    ||A'P + PA + Q||_max is checked against 1e-9 and P is verified SPD.
    """
    a = _as_square(a, "A")
    q = _as_square(q, "Q")
    if a.shape != q.shape:
        raise DimensionError(f"A is {a.shape}, Q is {q.shape}")
    if not is_hurwitz(a):
        raise NotHurwitzError("A is not Hurwitz: no SPD solution exists")

    n = a.shape[0]
    ident = np.eye(n)
    k = np.kron(ident, a.T) + np.kron(a.T, ident)
    try:
        vec_p = np.linalg.solve(k, -q.reshape(n * n))
    except np.linalg.LinAlgError as exc:
        raise NumericError("singular Kronecker system in lyapunov_solve") from exc
    p = vec_p.reshape(n, n)
    p = 0.5 * (p + p.T)

    resid = np.abs(a.T @ p + p @ a + q).max()
    if resid > 1e-9 * max(1.0, np.abs(q).max(), np.abs(p).max()):
        raise NumericError(f"Lyapunov residual {resid:.3e} exceeds tolerance")
    try:
        return QuadraticForm(p)
    except DefinitenessError as exc:
        raise NotHurwitzError("Lyapunov solution is not SPD") from exc
