"""Cumulative shrinkage process prior on the column variances of the loadings.

Indices are 0-based: ``z[h] = l`` selects stick ``l`` and column ``h`` takes
the spike whenever ``z[h] <= h``. ``lam[h]`` is the *variance* of every
loading in column ``h``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp


@dataclass(frozen=True)
class CspHyper:
    eta: float = 5.0
    kappa1: float = 2.0
    kappa2: float = 2.0
    delta_inf: float = 0.01

    def __post_init__(self):
        for name in ("eta", "kappa1", "kappa2", "delta_inf"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class CspState:
    zeta: np.ndarray
    z: np.ndarray
    lam: np.ndarray


def compute_weights(zeta) -> tuple[np.ndarray, np.ndarray]:
    """Stick-breaking weights ``omega`` and their cumulative sums ``pi``."""
    zeta = np.asarray(zeta, dtype=float)
    if zeta.ndim != 1 or zeta.size == 0:
        raise ValueError("zeta must be a non-empty vector")
    if np.any(~(zeta > 0)) or np.any(zeta > 1):
        raise ValueError("zeta entries must lie in (0, 1]")
    if zeta[-1] != 1.0:
        raise ValueError("last stick must equal 1")
    left = np.cumprod(1.0 - zeta)
    omega = zeta * np.concatenate(([1.0], left[:-1]))
    # 1 - (stick left over) rather than a running sum: monotone in floating
    # point, and exactly 1 at the end because the last stick is 1
    pi = 1.0 - left
    return omega, pi


def spike_logpdf(phi_cols: np.ndarray, delta_inf: float) -> np.ndarray:
    """log N(phi_h | 0, delta_inf I_J) for every column of a J x H array."""
    J = phi_cols.shape[0]
    ss = np.sum(phi_cols**2, axis=0)
    return -0.5 * J * np.log(2 * np.pi * delta_inf) - 0.5 * ss / delta_inf


def slab_logpdf(phi_cols: np.ndarray, kappa1: float, kappa2: float) -> np.ndarray:
    """Multivariate t, 2*kappa1 dof, scale (kappa2/kappa1) I_J: the inverse-gamma slab integrated out."""
    J = phi_cols.shape[0]
    nu = 2.0 * kappa1
    scale = kappa2 / kappa1
    ss = np.sum(phi_cols**2, axis=0)
    return (
        gammaln(0.5 * (nu + J))
        - gammaln(0.5 * nu)
        - 0.5 * J * np.log(nu * np.pi * scale)
        - 0.5 * (nu + J) * np.log1p(ss / (nu * scale))
    )


def z_log_probs(phi_cols: np.ndarray, omega: np.ndarray, hyper: CspHyper) -> np.ndarray:
    """H x H matrix of normalized log P(z_h = l | phi_h, omega); row h, column l."""
    H = omega.size
    with np.errstate(divide="ignore"):
        log_omega = np.log(omega)
    spike = spike_logpdf(phi_cols, hyper.delta_inf)
    slab = slab_logpdf(phi_cols, hyper.kappa1, hyper.kappa2)
    is_spike = np.arange(H)[None, :] <= np.arange(H)[:, None]
    logp = log_omega[None, :] + np.where(is_spike, spike[:, None], slab[:, None])
    norm = logsumexp(logp, axis=1, keepdims=True)
    if not np.all(np.isfinite(norm)):
        raise FloatingPointError("no category has finite density; corrupted state")
    return logp - norm


def sample_z(phi_cols, omega, hyper: CspHyper, rng: np.random.Generator) -> np.ndarray:
    logp = z_log_probs(np.asarray(phi_cols, dtype=float), np.asarray(omega, dtype=float), hyper)
    cdf = np.cumsum(np.exp(logp), axis=1)
    u = rng.random(cdf.shape[0]) * cdf[:, -1]
    z = (cdf < u[:, None]).sum(axis=1)
    return np.minimum(z, cdf.shape[1] - 1)


def sample_zeta(z, eta: float, rng: np.random.Generator) -> np.ndarray:
    z = np.asarray(z)
    H = z.size
    counts = np.bincount(z, minlength=H)
    above = H - np.cumsum(counts)  # #{l : z_l > h}
    zeta = np.ones(H)
    if H > 1:
        zeta[:-1] = rng.beta(1.0 + counts[:-1], eta + above[:-1])
    return zeta


def sample_lambda(z, phi_cols, hyper: CspHyper, rng: np.random.Generator) -> np.ndarray:
    z = np.asarray(z)
    phi_cols = np.asarray(phi_cols, dtype=float)
    J, H = phi_cols.shape
    shape = hyper.kappa1 + 0.5 * J
    rate = hyper.kappa2 + 0.5 * np.sum(phi_cols**2, axis=0)
    slab = rate / rng.gamma(shape, 1.0, size=H)
    return np.where(z <= np.arange(H), hyper.delta_inf, slab)


def sample_prior(H: int, hyper: CspHyper, rng: np.random.Generator) -> CspState:
    """Draw (zeta, z, lambda) jointly from the prior."""
    zeta = np.ones(H)
    zeta[:-1] = rng.beta(1.0, hyper.eta, size=H - 1)
    omega, _ = compute_weights(zeta)
    z = rng.choice(H, size=H, p=omega)
    slab = hyper.kappa2 / rng.gamma(hyper.kappa1, 1.0, size=H)
    lam = np.where(z <= np.arange(H), hyper.delta_inf, slab)
    return CspState(zeta=zeta, z=z, lam=lam)


def update(state: CspState, phi: np.ndarray, hyper: CspHyper, rng: np.random.Generator) -> CspState:
    """One Gibbs pass over (z, zeta, lambda) given the J x H loadings."""
    omega, _ = compute_weights(state.zeta)
    z = sample_z(phi, omega, hyper, rng)
    zeta = sample_zeta(z, hyper.eta, rng)
    lam = sample_lambda(z, phi, hyper, rng)
    return CspState(zeta=zeta, z=z, lam=lam)


def switch_columns(proj: np.ndarray, tau: float, state: CspState, phi: np.ndarray,
                   hyper: CspHyper, rng: np.random.Generator) -> tuple[CspState, np.ndarray, int]:
    """Metropolis move between spike and slab with the loadings integrated out.

    With orthonormal Psi the likelihood factorizes over the columns of Phi:
    given ``proj = (Y - Xi) Psi`` column h enters only through
    y_h ~ N(phi_h, I / tau), so phi_h ~ N(0, lam_h I) integrates to
    y_h ~ N(0, (lam_h + 1 / tau) I). For each column the move picks spike or
    slab (each with probability 1/2 when both are possible), draws z_h from
    the stick weights of that type and, for a slab, lam_h from its prior
    IG(kappa1, kappa2). The proposal is accepted with the ratio of the
    collapsed densities and phi_h is then redrawn from its exact conditional.
    The Gibbs blocks for z and lambda condition on phi_h and so cannot move
    a column that currently fits the data between the two states; this
    kernel can. Returns the new state, loadings and the number of switches.
    """
    J, H = phi.shape
    omega, _ = compute_weights(state.zeta)
    w_spike = np.cumsum(omega)  # total weight of the categories l <= h
    w_slab = np.append(np.cumsum(omega[::-1])[::-1][1:], 0.0)  # categories l > h
    z, lam, phi = state.z.copy(), state.lam.copy(), phi.copy()
    ss = np.sum(proj**2, axis=0)

    def log_marg(v, h):
        s = v + 1.0 / tau
        return -0.5 * J * np.log(s) - 0.5 * ss[h] / s

    n_switch = 0
    for h in range(H):
        both = w_spike[h] > 0 and w_slab[h] > 0
        q = 0.5 if both else 1.0
        cur_spike = z[h] <= h
        new_spike = (rng.random() < 0.5) if both else w_slab[h] <= 0
        if new_spike:
            p = omega[: h + 1] / w_spike[h]
            z_new = int(rng.choice(h + 1, p=p))
            lam_new = hyper.delta_inf
        else:
            p = omega[h + 1:] / w_slab[h]
            z_new = h + 1 + int(rng.choice(H - h - 1, p=p))
            lam_new = hyper.kappa2 / rng.gamma(hyper.kappa1)
        w_cur = w_spike[h] if cur_spike else w_slab[h]
        w_new = w_spike[h] if new_spike else w_slab[h]
        with np.errstate(divide="ignore"):
            log_ratio = (np.log(w_new / q) + log_marg(lam_new, h)) - (np.log(w_cur / q) + log_marg(lam[h], h))
        if np.log(rng.random()) < log_ratio:
            z[h], lam[h] = z_new, lam_new
            n_switch += new_spike != cur_spike
            prec = 1.0 / lam[h] + tau
            phi[:, h] = tau * proj[:, h] / prec + rng.standard_normal(J) / np.sqrt(prec)
    return CspState(zeta=state.zeta, z=z, lam=lam), phi, n_switch
