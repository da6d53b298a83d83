"""Geodesic Monte Carlo for the orthonormal factor matrix on the Stiefel manifold.

The conditional target of Psi (T x H, Psi^T Psi = I) is

    log pi(Psi) = -(tau / 2) * ||R - Phi Psi^T||_F^2,   R = Y - Xi,

with respect to the uniform (Haar) measure on the manifold. Position updates
follow exact geodesics of the embedded metric, so the constraint holds up to
floating point drift, which is removed by a sign-fixed QR step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

ORTHO_TOL = 1e-8


@dataclass(frozen=True)
class GmcConfig:
    step: float = 0.01
    n_step: int = 5
    target_accept: float = 0.6
    varsigma: float = 0.6
    # "varsigma": gain i^-varsigma, step grows when acceptance is above target.
    # "reciprocal": gain i^(-1/varsigma) with the correction a* - a_i.
    decay: str = "varsigma"
    sign_flip: bool = True

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.n_step < 1:
            raise ValueError("n_step must be >= 1")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if not 0.5 < self.varsigma < 1:
            raise ValueError("varsigma must lie in (0.5, 1)")
        if self.decay not in ("varsigma", "reciprocal"):
            raise ValueError("decay must be 'varsigma' or 'printed'")


def sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def ortho_drift(psi: np.ndarray) -> float:
    H = psi.shape[1]
    return float(np.max(np.abs(psi.T @ psi - np.eye(H))))


def orthonormalize(psi: np.ndarray) -> np.ndarray:
    """Thin QR with the diagonal of R forced nonnegative."""
    q, r = np.linalg.qr(psi)
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    return q * signs


def project_tangent(psi: np.ndarray, v: np.ndarray) -> np.ndarray:
    return v - psi @ sym(psi.T @ v)


def log_grad_psi(Y_complete, Xi, Phi, Psi, tau) -> np.ndarray:
    """Ambient gradient tau (Y - Xi)^T Phi - tau Psi Phi^T Phi."""
    Y_complete, Xi, Phi, Psi = map(np.asarray, (Y_complete, Xi, Phi, Psi))
    J, T = Y_complete.shape
    if Xi.shape != (J, T) or Phi.shape[0] != J or Psi.shape != (T, Phi.shape[1]):
        raise ValueError(
            f"dimension mismatch: Y {Y_complete.shape}, Xi {Xi.shape}, "
            f"Phi {Phi.shape}, Psi {Psi.shape}"
        )
    return tau * (Y_complete - Xi).T @ Phi - tau * Psi @ (Phi.T @ Phi)


def geodesic_flow(psi: np.ndarray, v: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Follow the embedded-metric geodesic through (psi, v) for time eps."""
    if eps == 0:
        return psi.copy(), v.copy()
    H = psi.shape[1]
    A = psi.T @ v
    S = v.T @ v
    block = np.empty((2 * H, 2 * H))
    block[:H, :H] = A
    block[:H, H:] = -S
    block[H:, :H] = np.eye(H)
    block[H:, H:] = A
    xv = np.hstack([psi, v]) @ expm(eps * block)
    rot = expm(-eps * A)
    return xv[:, :H] @ rot, xv[:, H:] @ rot


class PsiTarget:
    """Conditional log-density of Psi and its gradient for fixed R, Phi, tau."""

    def __init__(self, resid: np.ndarray, phi: np.ndarray, tau: float):
        self.tau = float(tau)
        self.rt_phi = resid.T @ phi
        self.phi_gram = phi.T @ phi
        self.const = float(np.sum(resid**2))

    def log_density(self, psi: np.ndarray) -> float:
        cross = np.sum(psi * self.rt_phi)
        quad = np.sum((psi.T @ psi) * self.phi_gram)
        return -0.5 * self.tau * (self.const - 2.0 * cross + quad)

    def grad(self, psi: np.ndarray) -> np.ndarray:
        return self.tau * (self.rt_phi - psi @ self.phi_gram)


def sample_psi(
    target: PsiTarget,
    psi: np.ndarray,
    eps: float,
    n_step: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, bool, int]:
    """One geodesic Monte Carlo transition.

    Returns the new point, the acceptance flag and the number of
    re-orthonormalizations applied to the proposal.
    """
    x = psi
    v = project_tangent(x, rng.standard_normal(psi.shape))
    h0 = -target.log_density(x) + 0.5 * np.sum(v * v)
    n_fix = 0
    with np.errstate(all="ignore"):
        for _ in range(n_step):
            v = project_tangent(x, v + 0.5 * eps * target.grad(x))
            x, v = geodesic_flow(x, v, eps)
            if ortho_drift(x) > ORTHO_TOL:
                x = orthonormalize(x)
                n_fix += 1
            v = project_tangent(x, v + 0.5 * eps * target.grad(x))
        h1 = -target.log_density(x) + 0.5 * np.sum(v * v)
    if not (np.isfinite(h1) and np.all(np.isfinite(x))):
        return psi, False, n_fix
    if np.log(rng.random()) < h0 - h1:
        return x, True, n_fix
    return psi, False, n_fix


def flip_column(target: PsiTarget, psi: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, bool]:
    """Metropolis move flipping the sign of one uniformly chosen column.

    The flip is a Haar-preserving involution, so the proposal is symmetric.
    It connects the two components of the manifold when H == T and breaks the
    sign symmetry that slows geodesic moves between reflected modes.
    """
    h = rng.integers(psi.shape[1])
    prop = psi.copy()
    prop[:, h] = -prop[:, h]
    log_ratio = target.log_density(prop) - target.log_density(psi)
    if np.log(rng.random()) < log_ratio:
        return prop, True
    return psi, False


def adapt_step(eps: float, i: int, avg_accept: float, cfg: GmcConfig) -> float:
    """Robbins-Monro update of the log step size.

    Default: log eps += i^-varsigma * (a_i - a*), so the step grows while
    acceptance runs above target, and the non-summable gains let it travel
    as far as the target requires. ``decay="reciprocal"`` applies
    log eps += i^(-1/varsigma) * (a* - a_i) instead.
    """
    if i < 1:
        raise ValueError("iteration index starts at 1")
    if cfg.decay == "reciprocal":
        delta = i ** (-1.0 / cfg.varsigma) * (cfg.target_accept - avg_accept)
    else:
        delta = i ** (-cfg.varsigma) * (avg_accept - cfg.target_accept)
    return float(np.exp(np.log(eps) + delta))


# -- Phi-integrated column updates ---------------------------------------------


def sample_bingham(B: np.ndarray, rng: np.random.Generator, max_tries: int = 10_000) -> np.ndarray:
    """One draw from the Bingham density exp(x^T B x) on the unit sphere.

    Rejection from an angular central Gaussian envelope. With
    A = mu_max I - B, the envelope is ACG(Omega) with Omega = I + 2A/b, where
    b (approximately) solves sum_i 1 / (b + 2 a_i) = 1, and the acceptance probability is
    exp(g(x^T A x) - g((q - b) / 2)) with g(u) = -u + (q / 2) log(1 + 2u / b).
    Raises RuntimeError after ``max_tries`` rejections.
    """
    B = np.asarray(B, dtype=float)
    q = B.shape[0]
    if q == 1:
        return np.array([1.0 if rng.random() < 0.5 else -1.0])
    mu, V = np.linalg.eigh(0.5 * (B + B.T))
    a = mu[-1] - mu  # a >= 0 with a[-1] == 0
    b = _envelope_b(a)
    sd = np.sqrt(b / (b + 2.0 * a))  # Omega^(-1/2)
    g_max = -(q - b) / 2 + (q / 2) * np.log(q / b)
    batch = 8  # proposals per round; the first accepted one is returned
    for _ in range(0, max_tries, batch):
        y = rng.standard_normal((batch, q)) * sd
        y2 = y * y
        u = (y2 @ a) / y2.sum(axis=1)  # x^T A x for x = y / |y|
        ok = np.log(rng.random(batch)) < -u + (q / 2) * np.log1p(2.0 * u / b) - g_max
        if ok.any():
            k = np.argmax(ok)
            return V @ (y[k] / np.sqrt(y2[k].sum()))
    raise RuntimeError(f"Bingham sampler exceeded {max_tries} proposals")


def _envelope_b(a: np.ndarray) -> float:
    """Root of sum_i 1 / (b + 2 a_i) = 1 for a >= 0 with min(a) == 0.

    Newton steps on 1 / sum_i 1 / (b + 2 a_i), a harmonic mean of affine
    functions and hence concave and increasing in b. Started from b = 1,
    where it is at most 1, the steps climb to the root without overshooting.
    The root lies in [1, q]. Any b in (0, q] gives a valid envelope, so the
    tolerance only affects the acceptance rate, which is flat near the root:
    stopping at a relative step of 1e-3 loses nothing measurable.
    """
    b = 1.0
    for _ in range(100):
        r = 1.0 / (b + 2.0 * a)
        phi = r.sum()
        step = phi * (phi - 1.0) / (r @ r)
        b += step
        if step <= 1e-3 * b:
            break
    return b


def _complement_of(x: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Columns of ``basis`` rotated to span the complement of ``basis @ x`` within its range.

    Uses the Householder reflection sending e_1 to -s x (s = sign x_0): its
    columns other than the first are orthonormal and orthogonal to x.
    """
    s = 1.0 if x[0] >= 0 else -1.0
    u = x.copy()
    u[0] += s
    return basis[:, 1:] - np.outer(basis @ u, u[1:] / (s * u[0]))


def gibbs_columns(psi: np.ndarray, A: np.ndarray, weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Column-by-column Gibbs scan of the matrix Bingham exp(sum_h w_h/2 psi_h^T A psi_h).

    Given the other columns, psi_h lies on the unit sphere of their
    complement, which is spanned by psi_h itself plus the complement C of all
    of psi. In that basis the conditional is an exact Bingham draw. C is
    carried from column to column by one Householder step. When H == T, C is
    empty and only the sign moves.
    """
    T, H = psi.shape
    psi = psi.copy()
    basis = np.linalg.qr(psi, mode="complete")[0][:, H - 1:]
    for h in range(H):
        basis[:, 0] = psi[:, h]
        x = sample_bingham(0.5 * weights[h] * (basis.T @ A @ basis), rng)
        psi[:, h] = basis @ x
        if basis.shape[1] > 1:
            basis[:, 1:] = _complement_of(x, basis)
    return psi
