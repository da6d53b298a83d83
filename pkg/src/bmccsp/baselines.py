"""Non-Bayesian comparators: simplex synthetic control and nuclear-norm soft-impute."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .panel import PanelData


@dataclass
class ScmFit:
    weights: np.ndarray
    pretreat_rmse: float
    treated_unit: int
    controls: np.ndarray
    n_iter: int = 0
    gap: float = 0.0
    objective_path: list[float] = field(default_factory=list)


def simplex_least_squares(A: np.ndarray, b: np.ndarray, tol: float = 1e-8, max_iter: int = 10_000,
                          track: bool = False):
    """Minimize ||b - A w||^2 over the probability simplex by away-step Frank-Wolfe.

    Starts at the best single vertex. Ties in vertex selection go to the
    lowest index. Returns (w, duality gap, iterations, objective path).
    """
    n = A.shape[1]
    G = A.T @ A
    Ab = A.T @ b
    bb = float(b @ b)
    # f(w) = w'Gw - 2 Ab'w + bb, grad = 2 (G w - Ab)
    vertex_obj = np.diag(G) - 2 * Ab + bb
    w = np.zeros(n)
    w[int(np.argmin(vertex_obj))] = 1.0
    Gw = G @ w
    path = []
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        grad = 2.0 * (Gw - Ab)
        if track:
            path.append(float(w @ Gw - 2 * Ab @ w + bb))
        s = int(np.argmin(grad))
        gap = float(grad @ w - grad[s])
        if gap <= tol:
            break
        active = np.flatnonzero(w > 0)
        a = int(active[np.argmax(grad[active])])
        away_gap = float(grad[a] - grad @ w)
        if gap >= away_gap:
            d = -w.copy()
            d[s] += 1.0
            gmax = 1.0
        else:
            d = w.copy()
            d[a] -= 1.0
            gmax = w[a] / (1.0 - w[a]) if w[a] < 1 else np.inf
        Gd = G @ d
        curv = float(d @ Gd)
        slope = float(grad @ d)
        step = gmax if curv <= 0 else min(gmax, -slope / (2.0 * curv))
        if step <= 0:
            break
        w = w + step * d
        # keep the iterate exactly feasible
        w = np.maximum(w, 0.0)
        w /= w.sum()
        Gw = G @ w
    if track:
        path.append(float(w @ Gw - 2 * Ab @ w + bb))
    return w, gap, it, path


def single_treated_block(panel: PanelData) -> tuple[int, int]:
    """(treated unit, T0) for a panel with one unit treated from T0 onward."""
    units = np.flatnonzero(panel.treated.any(axis=1))
    if units.size != 1:
        raise ValueError(f"synthetic control needs exactly one treated unit, found {units.size}")
    j = int(units[0])
    T0 = int(np.argmax(panel.treated[j]))
    if not panel.treated[j, T0:].all():
        raise ValueError("treated periods of the treated unit are not a trailing block")
    return j, T0


def scm_fit(panel: PanelData, treated_unit: int, T0: int, tol: float = 1e-8,
            max_iter: int = 10_000) -> ScmFit:
    if T0 < 2:
        raise ValueError(f"need at least 2 pretreatment periods, got T0={T0}")
    if panel.treated[:, :T0].any():
        raise ValueError("pretreatment periods must be untreated for all units")
    controls = np.array([j for j in range(panel.J) if j != treated_unit])
    A = panel.outcomes[controls, :T0].T
    b = panel.outcomes[treated_unit, :T0]
    w, gap, it, path = simplex_least_squares(A, b, tol=tol, max_iter=max_iter, track=True)
    rmse = float(np.sqrt(np.mean((b - A @ w) ** 2)))
    return ScmFit(weights=w, pretreat_rmse=rmse, treated_unit=treated_unit, controls=controls,
                  n_iter=it, gap=gap, objective_path=path)


def scm_predict(panel: PanelData, fit: ScmFit) -> np.ndarray:
    """Synthetic series for the treated unit over all T periods."""
    return fit.weights @ panel.outcomes[fit.controls]


def svt(Z: np.ndarray, reg: float) -> tuple[np.ndarray, float]:
    """Singular value soft-thresholding; also returns the nuclear norm of the result."""
    U, s, Vt = np.linalg.svd(Z, full_matrices=False)
    s = np.maximum(s - reg, 0.0)
    k = int(np.count_nonzero(s))
    return (U[:, :k] * s[:k]) @ Vt[:k], float(s.sum())


def soft_impute_matrix(Y: np.ndarray, observed: np.ndarray, reg: float, max_iter: int = 500,
                       tol: float = 1e-6, init: np.ndarray | None = None, track: bool = False):
    """Iterate M <- SVT_reg(P_obs(Y) + P_miss(M)) until the relative change drops below tol.

    Returns (M, objective path). The objective is
    0.5 ||P_obs(Y - M)||_F^2 + reg ||M||_*, nonincreasing along the iterates.
    """
    if reg < 0:
        raise ValueError("reg must be nonnegative")
    Yo = np.where(observed, Y, 0.0)
    M = np.zeros_like(Yo) if init is None else np.array(init, dtype=float)
    path = []
    for _ in range(max_iter):
        Z = np.where(observed, Yo, M)
        M_new, nuc = svt(Z, reg)
        if track:
            r = np.where(observed, Yo - M_new, 0.0)
            path.append(0.5 * float(np.sum(r * r)) + reg * nuc)
        denom = max(float(np.sum(M * M)), 1e-300)
        change = float(np.sum((M_new - M) ** 2)) / denom
        M = M_new
        if change < tol**2:
            break
    return M, path


def soft_impute(panel: PanelData, reg: float, max_iter: int = 500, tol: float = 1e-6,
                init: np.ndarray | None = None) -> np.ndarray:
    M, _ = soft_impute_matrix(panel.outcomes, ~panel.treated, reg, max_iter, tol, init)
    return M


def default_grid(Y: np.ndarray, observed: np.ndarray, n: int = 20) -> np.ndarray:
    """n log-spaced penalties from 1e-3 * sigma_1 to sigma_1, descending."""
    s1 = np.linalg.norm(np.where(observed, Y, 0.0), 2)
    return np.geomspace(s1, 1e-3 * s1, n)


def soft_impute_path(Y, observed, grid, max_iter=500, tol=1e-6):
    """Fits along a descending penalty grid with warm starts; yields (reg, M)."""
    M = None
    for reg in sorted(grid, reverse=True):
        M, _ = soft_impute_matrix(Y, observed, reg, max_iter, tol, init=M)
        yield reg, M


@dataclass
class SoftImputeFit:
    completed: np.ndarray
    reg: float
    cv_curve: dict[float, float]


def mc_nnm_cv(panel: PanelData, grid=None, folds: int = 5, rng: np.random.Generator | None = None,
              max_iter: int = 500, tol: float = 1e-6) -> SoftImputeFit:
    """Choose the penalty by k-fold CV over the observed untreated cells, then refit."""
    rng = np.random.default_rng(0) if rng is None else rng
    Y = panel.outcomes
    observed = ~panel.treated
    obs_idx = np.flatnonzero(observed.ravel())
    if obs_idx.size < 25:
        raise ValueError(f"need at least 25 observed cells for CV, found {obs_idx.size}")
    grid = default_grid(Y, observed) if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty penalty grid")
    grid = np.sort(grid)[::-1]
    perm = rng.permutation(obs_idx)
    fold_of = np.array_split(perm, folds)
    errors = np.zeros((folds, grid.size))
    for f, held in enumerate(fold_of):
        train = observed.copy().ravel()
        train[held] = False
        train = train.reshape(observed.shape)
        for g, (_, M) in enumerate(soft_impute_path(Y, train, grid, max_iter, tol)):
            errors[f, g] = np.mean((M.ravel()[held] - Y.ravel()[held]) ** 2)
    mean_err = errors.mean(axis=0)
    # ties go to the larger penalty: grid is descending and argmin returns the first hit
    best = int(np.argmin(mean_err))
    reg = float(grid[best])
    M = None
    for _, M in soft_impute_path(Y, observed, grid[: best + 1], max_iter, tol):
        pass
    curve = {float(r): float(e) for r, e in zip(grid, mean_err)}
    return SoftImputeFit(completed=M, reg=reg, cv_curve=curve)
