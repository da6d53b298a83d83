"""Gibbs engine: conditional blocks, full sweeps and retained-draw storage.

Model: Y = Phi Psi^T + Xi + U with Xi[j, t] = x[j, t] . beta and
U[j, t] ~ N(0, 1 / tau). Treated cells of Y are latent and imputed.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from . import shrinkage, stiefel
from .panel import PanelData, validate
from .shrinkage import CspHyper, CspState
from .stiefel import GmcConfig

log = logging.getLogger(__name__)

LAMBDA_FLOOR = 1e-300
PHI_MODES = ("conjugate", "appendix-literal")


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    """Hyperparameters, chain controls and geodesic MC tuning.

    ``rank=None`` means H = min(J, T). ``alpha`` is the prior precision of beta.
    """

    rank: int | None = None
    csp: CspHyper = field(default_factory=CspHyper)
    nu1: float = 0.001
    nu2: float = 0.001
    alpha: float = 0.001
    n_iter: int = 3000
    n_burn: int = 1000
    thin: int = 1
    seed: int = 0
    gmc: GmcConfig = field(default_factory=GmcConfig)
    phi_mode: str = "conjugate"
    keep_phi: bool = False
    # rounds of Phi-integrated (Psi, tau, lambda) moves per sweep; 0 also drops the
    # spike/slab switch. Conjugate mode only.
    collapsed_steps: int = 2

    def __post_init__(self):
        if self.rank is not None and self.rank < 1:
            raise ValueError("rank must be >= 1")
        for name in ("nu1", "nu2", "alpha"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_iter < 1 or self.thin < 1 or self.n_burn < 0:
            raise ValueError("n_iter and thin must be >= 1, n_burn >= 0")
        if self.n_burn >= self.n_iter:
            raise ValueError(f"n_burn ({self.n_burn}) must be < n_iter ({self.n_iter})")
        if self.phi_mode not in PHI_MODES:
            raise ValueError(f"phi_mode must be one of {PHI_MODES}")
        if self.collapsed_steps < 0:
            raise ValueError("collapsed_steps must be >= 0")

    def resolve_rank(self, J: int, T: int) -> int:
        H = min(J, T) if self.rank is None else self.rank
        if H > min(J, T):
            raise ValueError(f"rank {H} exceeds min(J, T) = {min(J, T)}")
        return H

    @property
    def n_post(self) -> int:
        return (self.n_iter - self.n_burn) // self.thin


@dataclass
class ParamState:
    phi: np.ndarray
    psi: np.ndarray
    beta: np.ndarray
    tau: float
    csp: CspState
    y_complete: np.ndarray

    def xi(self, covariates: np.ndarray) -> np.ndarray:
        if covariates.shape[2] == 0:
            return np.zeros(self.y_complete.shape)
        return covariates @ self.beta

    def gamma(self) -> np.ndarray:
        return self.phi @ self.psi.T


@dataclass
class PosteriorDraws:
    y_miss_draws: np.ndarray  # N_post x |I1|, row-major order of the treated cells
    beta_draws: np.ndarray  # N_post x L
    tau_draws: np.ndarray  # N_post
    gamma_eig_draws: np.ndarray  # N_post x min(J, T), descending
    log_post: np.ndarray  # N_post
    phi_row_draws: np.ndarray | None = None  # N_post x J x H
    accept_rate: float = float("nan")
    eps_final: float = float("nan")
    n_reorth: int = 0

    @property
    def n_post(self) -> int:
        return self.tau_draws.size


# -- conditional blocks ------------------------------------------------------


def phi_conditional(resid: np.ndarray, psi, lam, tau, mode="conjugate"):
    """Shared precision P and the J x H matrix of row means for Phi | rest.

    ``resid`` is Y - Xi. In ``appendix-literal`` mode tau is left out of
    both P and the mean (a tau-free variant kept for comparison).
    """
    w = tau if mode == "conjugate" else 1.0
    lam = np.maximum(lam, LAMBDA_FLOOR)
    P = np.diag(1.0 / lam) + w * (psi.T @ psi)
    chol = np.linalg.cholesky(P)
    means = w * cho_solve((chol, True), psi.T @ resid.T).T
    return P, chol, means


def sample_phi(resid, psi, lam, tau, rng, mode="conjugate") -> np.ndarray:
    """Draw every row of Phi; rows are conditionally independent and share P."""
    _, chol, means = phi_conditional(resid, psi, lam, tau, mode)
    z = rng.standard_normal(means.shape)
    return means + solve_triangular(chol, z.T, lower=True, trans="T").T


def sample_phi_row(j: int, state: ParamState, data: PanelData, rng, mode="conjugate") -> np.ndarray:
    resid = state.y_complete[j:j + 1] - state.xi(data.covariates)[j:j + 1]
    return sample_phi(resid, state.psi, state.csp.lam, state.tau, rng, mode)[0]


def beta_conditional(resid_no_xi: np.ndarray, covariates: np.ndarray, tau, alpha):
    """Precision and mean of beta | rest; rows of X are stacked unit-major."""
    L = covariates.shape[2]
    X = covariates.reshape(-1, L)
    P = alpha * np.eye(L) + tau * X.T @ X
    chol = np.linalg.cholesky(P)
    mean = tau * cho_solve((chol, True), X.T @ resid_no_xi.reshape(-1))
    return P, chol, mean


def sample_beta(state: ParamState, data: PanelData, alpha: float, rng) -> np.ndarray:
    if data.L == 0:
        return np.zeros(0)
    resid = state.y_complete - state.gamma()
    _, chol, mean = beta_conditional(resid, data.covariates, state.tau, alpha)
    return mean + solve_triangular(chol, rng.standard_normal(mean.size), lower=True, trans="T")


def tau_conditional(U: np.ndarray, nu1: float, nu2: float) -> tuple[float, float]:
    """Shape and rate of tau | rest."""
    return nu1 + 0.5 * U.size, nu2 + 0.5 * float(np.sum(U * U))


def sample_tau(state: ParamState, data: PanelData, nu1, nu2, rng) -> float:
    U = state.y_complete - state.gamma() - state.xi(data.covariates)
    shape, rate = tau_conditional(U, nu1, nu2)
    return float(rng.gamma(shape, 1.0 / rate))


def sample_y_miss(state: ParamState, data: PanelData, rng) -> np.ndarray:
    """Replace the treated cells of y_complete with draws from N(gamma + xi, 1/tau)."""
    y = state.y_complete.copy()
    rows, cols = data.treated_cells
    if rows.size == 0:
        return y
    fit = np.einsum("kh,kh->k", state.phi[rows], state.psi[cols])
    if data.L:
        fit = fit + data.covariates[rows, cols] @ state.beta
    y[rows, cols] = fit + rng.standard_normal(rows.size) / np.sqrt(state.tau)
    return y


def update_psi(state: ParamState, data: PanelData, eps: float, gmc: GmcConfig, rng):
    resid = state.y_complete - state.xi(data.covariates)
    target = stiefel.PsiTarget(resid, state.phi, state.tau)
    psi, accepted, n_fix = stiefel.sample_psi(target, state.psi, eps, gmc.n_step, rng)
    if gmc.sign_flip:
        psi, _ = stiefel.flip_column(target, psi, rng)
    return psi, accepted, n_fix


def log_posterior(state: ParamState, data: PanelData, cfg: SamplerConfig) -> float:
    """Log joint density of the augmented state, up to an additive constant."""
    hyper = cfg.csp
    J, T = state.y_complete.shape
    U = state.y_complete - state.gamma() - state.xi(data.covariates)
    lp = (0.5 * J * T + cfg.nu1 - 1.0) * np.log(state.tau)
    lp -= state.tau * (cfg.nu2 + 0.5 * np.sum(U * U))
    lp -= 0.5 * cfg.alpha * float(state.beta @ state.beta)
    lam = np.maximum(state.csp.lam, LAMBDA_FLOOR)
    lp -= 0.5 * np.sum(J * np.log(lam) + np.sum(state.phi**2, axis=0) / lam)
    omega, _ = shrinkage.compute_weights(state.csp.zeta)
    with np.errstate(divide="ignore"):
        lp += np.sum(np.log(omega[state.csp.z]))
    H = lam.size
    slab = state.csp.z > np.arange(H)
    lp += np.sum(
        hyper.kappa1 * np.log(hyper.kappa2)
        - (hyper.kappa1 + 1.0) * np.log(lam[slab])
        - hyper.kappa2 / lam[slab]
    )
    lp += (hyper.eta - 1.0) * np.sum(np.log1p(-np.minimum(state.csp.zeta[:-1], 1 - 1e-16)))
    return float(lp)


# -- chain -------------------------------------------------------------------


def initial_state(data: PanelData, H: int, cfg: SamplerConfig, rng) -> ParamState:
    """Data-scaled start from the truncated SVD of a row-mean-imputed panel.

    Psi takes the top right singular vectors, Phi the scaled left ones plus
    N(0, 0.1) jitter, lambda the column mean squares of Phi and tau the
    inverse residual variance of a rank floor(H/2) fit. A start at unit scale
    lets the Phi/lambda/tau recursion collapse into an all-noise mode when
    outcomes are far from unit scale.
    """
    J, T = data.J, data.T
    treated = data.treated
    y = np.array(data.outcomes, dtype=float)
    observed = y[~treated]
    grand = float(observed.mean())
    for j in range(J):
        row_obs = y[j, ~treated[j]]
        y[j, treated[j]] = row_obs.mean() if row_obs.size else grand
    U, s, Vt = np.linalg.svd(y, full_matrices=False)
    psi = Vt[:H].T.copy()
    phi = U[:, :H] * s[:H] + rng.normal(0.0, np.sqrt(0.1), size=(J, H))
    h0 = H // 2
    resid = (y - (U[:, :h0] * s[:h0]) @ Vt[:h0])[~treated]
    var = float(np.mean(resid**2))
    if not var > 0:
        var = float(observed.var()) or 1.0
    tau = 1.0 / var
    hyper = cfg.csp
    zeta = np.ones(H)
    zeta[:-1] = rng.beta(1.0, hyper.eta, size=H - 1)
    z = np.full(H, H - 1)
    lam = np.maximum(np.mean(phi**2, axis=0), hyper.delta_inf)
    lam[-1] = hyper.delta_inf
    return ParamState(
        phi=phi,
        psi=psi,
        beta=np.zeros(data.L),
        tau=tau,
        csp=CspState(zeta=zeta, z=z, lam=lam),
        y_complete=y,
    )


def prior_state(data: PanelData, H: int, cfg: SamplerConfig, rng) -> ParamState:
    """Draw every parameter from the prior and the treated cells from the likelihood."""
    J, T = data.J, data.T
    csp = shrinkage.sample_prior(H, cfg.csp, rng)
    phi = rng.standard_normal((J, H)) * np.sqrt(csp.lam)
    psi = stiefel.orthonormalize(rng.standard_normal((T, H)))
    beta = rng.standard_normal(data.L) / np.sqrt(cfg.alpha)
    tau = float(rng.gamma(cfg.nu1, 1.0 / cfg.nu2))
    state = ParamState(phi=phi, psi=psi, beta=beta, tau=tau, csp=csp,
                       y_complete=np.array(data.outcomes, dtype=float))
    state.y_complete = sample_y_miss(state, data, rng)
    return state


def simulate_outcomes(state: ParamState, data: PanelData, rng) -> np.ndarray:
    """A fresh J x T outcome matrix from the likelihood at the current parameters."""
    mean = state.gamma() + state.xi(data.covariates)
    return mean + rng.standard_normal(mean.shape) / np.sqrt(state.tau)


def slice_sample(logf, x0: float, rng, width: float = 0.5, max_steps: int = 50) -> float:
    """Univariate slice sampler with stepping out and shrinkage."""
    log_y = logf(x0) + math.log1p(-rng.random())  # 1 - U avoids log(0)
    left = x0 - width * rng.random()
    right = left + width
    j = int(max_steps * rng.random())
    k = max_steps - 1 - j
    while j > 0 and logf(left) > log_y:
        left -= width
        j -= 1
    while k > 0 and logf(right) > log_y:
        right += width
        k -= 1
    while True:
        x1 = left + rng.random() * (right - left)
        if logf(x1) > log_y:
            return x1
        if x1 < x0:
            left = x1
        else:
            right = x1


def shrink_factors(lam: np.ndarray, tau: float) -> np.ndarray:
    """c_h = lam_h tau / (1 + lam_h tau): share of y_h = R psi_h kept in E[phi_h]."""
    lt = np.maximum(lam, LAMBDA_FLOOR) * tau
    return lt / (1.0 + lt)


def log_tau_collapsed(resid: np.ndarray, proj: np.ndarray, lam: np.ndarray, nu1: float, nu2: float):
    """Log density of log(tau) given R, Psi and lambda with Phi integrated out.

    Rows of R are N(0, Psi Lambda Psi^T + I / tau); for orthonormal Psi the
    inverse is tau (I - Psi diag(c) Psi^T) and the determinant
    tau^-T prod_h (1 + lam_h tau). ``proj`` is R Psi. Returns a function of
    log(tau), with the sums of squares computed once.
    """
    J = resid.shape[0]
    shape = nu1 + 0.5 * resid.size
    ss_total = float(np.sum(resid * resid))
    ss_cols = np.sum(proj * proj, axis=0)
    lam = np.maximum(lam, LAMBDA_FLOOR)

    def logf(log_tau: float) -> float:
        tau = np.exp(log_tau)
        lt = lam * tau
        ss = ss_total - ss_cols @ (lt / (1.0 + lt))
        return float(shape * log_tau - nu2 * tau - 0.5 * tau * ss - 0.5 * J * np.log1p(lt).sum())

    return logf


def log_lambda_collapsed(ss: float, J: int, tau: float, kappa1: float, kappa2: float):
    """Log density of log(lambda_h) for a slab column with phi_h integrated out.

    y_h = R psi_h is N(0, (lambda_h + 1 / tau) I_J) given lambda_h, whose
    slab prior is IG(kappa1, kappa2); ``ss`` is ||y_h||^2.
    """
    inv_tau = 1.0 / tau

    def logf(log_lam: float) -> float:
        lam = math.exp(log_lam)
        v = lam + inv_tau
        return -kappa1 * log_lam - kappa2 / lam - 0.5 * J * math.log(v) - 0.5 * ss / v

    return logf


def collapsed_round(state: ParamState, resid: np.ndarray, cfg: SamplerConfig, rng) -> None:
    """Psi, tau and the slab variances in turn, each with Phi integrated out.

    Psi by a Bingham column scan, then log tau and log lambda_h (slab columns
    only) by slicing. Phi must be redrawn from its conditional before any
    block that uses it.
    """
    lam = state.csp.lam.copy()
    w = state.tau * shrink_factors(lam, state.tau)
    state.psi = stiefel.gibbs_columns(state.psi, resid.T @ resid, w, rng)
    proj = resid @ state.psi
    logf = log_tau_collapsed(resid, proj, lam, cfg.nu1, cfg.nu2)
    state.tau = float(np.exp(slice_sample(logf, np.log(state.tau), rng)))
    ss = np.sum(proj * proj, axis=0)
    J, H = proj.shape
    for h in np.flatnonzero(state.csp.z > np.arange(H)):
        logf = log_lambda_collapsed(ss[h], J, state.tau, cfg.csp.kappa1, cfg.csp.kappa2)
        lam[h] = np.exp(slice_sample(logf, np.log(lam[h]), rng, width=1.0))
    state.csp = CspState(zeta=state.csp.zeta, z=state.csp.z, lam=lam)


def sweep(state: ParamState, data: PanelData, cfg: SamplerConfig, eps: float, rng):
    """One full scan: Y_miss, Phi, (z, zeta, lambda), Psi, beta, tau.

    With ``cfg.collapsed_steps > 0`` (conjugate mode) extra moves run with
    Phi integrated out: rounds of a Bingham scan of Psi plus slice updates
    of tau and the slab variances before Phi is drawn, and a spike/slab switch per column after the
    shrinkage block. Each leaves the posterior invariant, so the standard
    blocks keep their role and the extra moves only speed up mixing.

    Mutates and returns ``state`` together with the GMC acceptance flag and
    the number of re-orthonormalizations.
    """
    collapsed = cfg.collapsed_steps > 0 and cfg.phi_mode == "conjugate"
    state.y_complete = sample_y_miss(state, data, rng)
    xi = state.xi(data.covariates)
    for _ in range(cfg.collapsed_steps if collapsed else 0):
        collapsed_round(state, state.y_complete - xi, cfg, rng)
    state.phi = sample_phi(
        state.y_complete - xi, state.psi, state.csp.lam, state.tau, rng, cfg.phi_mode
    )
    state.csp = shrinkage.update(state.csp, state.phi, cfg.csp, rng)
    if collapsed:
        proj = (state.y_complete - xi) @ state.psi
        state.csp, state.phi, _ = shrinkage.switch_columns(proj, state.tau, state.csp, state.phi, cfg.csp, rng)
    state.psi, accepted, n_fix = update_psi(state, data, eps, cfg.gmc, rng)
    if data.L:
        state.beta = sample_beta(state, data, cfg.alpha, rng)
    state.tau = sample_tau(state, data, cfg.nu1, cfg.nu2, rng)
    return state, accepted, n_fix


def run_mcmc(data: PanelData, cfg: SamplerConfig, rng: np.random.Generator | None = None) -> PosteriorDraws:
    """Run one chain and keep every ``thin``-th post-burn-in state."""
    problems = validate(data)
    if problems:
        raise ValueError("invalid panel: " + "; ".join(problems))
    H = cfg.resolve_rank(data.J, data.T)
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    state = initial_state(data, H, cfg, rng)
    rows, cols = data.treated_cells
    observed = ~data.treated
    y_obs = data.outcomes[observed]

    n_post = cfg.n_post
    n_eig = min(data.J, data.T)
    y_miss = np.empty((n_post, rows.size))
    betas = np.empty((n_post, data.L))
    taus = np.empty(n_post)
    eigs = np.zeros((n_post, n_eig))
    logp = np.empty(n_post)
    phis = np.empty((n_post, data.J, H)) if cfg.keep_phi else None

    eps = cfg.gmc.step
    n_acc = n_fix_total = 0
    k = 0
    for i in range(1, cfg.n_iter + 1):
        state, accepted, n_fix = sweep(state, data, cfg, eps, rng)
        n_fix_total += n_fix
        if i <= cfg.n_burn:
            eps = stiefel.adapt_step(eps, i, float(accepted), cfg.gmc)
            continue
        n_acc += accepted
        if (i - cfg.n_burn) % cfg.thin:
            continue
        if k >= n_post:
            break
        sv = np.linalg.svd(state.phi, compute_uv=False)
        y_miss[k] = state.y_complete[rows, cols]
        betas[k] = state.beta
        taus[k] = state.tau
        eigs[k, : sv.size] = sv
        logp[k] = log_posterior(state, data, cfg)
        if phis is not None:
            phis[k] = state.phi
        if not (
            np.all(np.isfinite(y_miss[k]))
            and np.all(np.isfinite(betas[k]))
            and np.isfinite(taus[k])
            and np.all(np.isfinite(sv))
        ):
            raise SamplerError(f"non-finite draw at iteration {i}")
        k += 1
    if not np.array_equal(state.y_complete[observed], y_obs):
        raise SamplerError("observed cells were modified")
    n_after = cfg.n_iter - cfg.n_burn
    log.debug("chain done: accept %.3f, eps %.4g, reorth %d", n_acc / n_after, eps, n_fix_total)
    return PosteriorDraws(
        y_miss_draws=y_miss,
        beta_draws=betas,
        tau_draws=taus,
        gamma_eig_draws=eigs,
        log_post=logp,
        phi_row_draws=phis,
        accept_rate=n_acc / n_after,
        eps_final=eps,
        n_reorth=n_fix_total,
    )


def posterior_mean_untreated(draws: PosteriorDraws, data: PanelData) -> np.ndarray:
    """J x T matrix: observed untreated outcomes, posterior means at treated cells."""
    y = np.array(data.outcomes, dtype=float)
    rows, cols = data.treated_cells
    y[rows, cols] = draws.y_miss_draws.mean(axis=0)
    return y


def _run_one(args):
    data, cfg = args
    return run_mcmc(data, cfg)


def run_chains(jobs: list[tuple[PanelData, SamplerConfig]], n_jobs: int = 1) -> list[PosteriorDraws]:
    """Run independent chains; results come back in job order."""
    if n_jobs <= 1 or len(jobs) <= 1:
        return [_run_one(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_run_one, jobs))


def with_seed(cfg: SamplerConfig, seed: int) -> SamplerConfig:
    return replace(cfg, seed=seed)
