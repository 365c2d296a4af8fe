"""Penalized estimators for linear and logistic models.

Individual penalties (lasso/scad/mcp) run cyclic coordinate descent with
exact scalar thresholding; group penalties (grlasso/grscad/grmcp) run block
coordinate descent where each block subproblem is minimized exactly in the
eigenbasis of the block's Gram matrix; the sparse-group penalty uses a
per-block proximal step (soft threshold, then group shrink).  Nonconvex
penalties are linearized around the current block norm, so every update is a
majorize-minimize step and the penalized objective never increases.  Logistic
loss is majorized by the curvature-1/4 quadratic around the current linear
predictor.  Sweeps cycle over the full block list, then over the active set
until it stabilizes.

Losses are scaled per observation (1/(2n) residual sum of squares; 1/n
negative log-likelihood), so lambda values are comparable across sample
sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Coefficients, Partition
from .errors import (
    DimensionMismatch,
    EmptyGroup,
    InvalidSpec,
    NonBinaryResponse,
    TooFewObservations,
)
from .penalties import LASSO, MCP, SCAD, PenaltySpec, penalty_rate, penalty_value, scalar_threshold

SQUARED_ERROR = "squared_error"
LOGISTIC = "logistic"

GRLASSO = "grlasso"
GRSCAD = "grscad"
GRMCP = "grmcp"
SGL = "sgl"

GROUP_FAMILIES = (GRLASSO, GRSCAD, GRMCP, SGL)
INDIVIDUAL_FAMILIES = (LASSO, SCAD, MCP)

_SCALAR_OF = {GRSCAD: SCAD, GRMCP: MCP}

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 10000
DEFAULT_N_LAMBDA = 100

_ETA_CLIP = 30.0
# relative slack guarding the knife edge at lambda_max, where the gradient
# norm equals the threshold exactly up to float rounding
_ZERO_SLACK = 1e-12


@dataclass(frozen=True)
class GroupPenaltySpec:
    """Family plus tuning parameters for a group penalty.

    ``alpha`` is the sparse-group mixing weight (group share of the penalty);
    ``group_weights`` defaults to sqrt(group size) for grlasso/grscad/grmcp
    and to 1 for the sparse-group family.
    """

    family: str
    lam: float
    gamma: float | None = None
    alpha: float | None = None
    group_weights: np.ndarray | None = None

    def __post_init__(self):
        if self.family not in GROUP_FAMILIES:
            raise InvalidSpec(f"unknown group penalty family {self.family!r}")
        if self.lam < 0:
            raise InvalidSpec(f"lambda must be nonnegative, got {self.lam}")
        if self.family == SGL:
            if self.gamma is not None:
                raise InvalidSpec("gamma applies only to grscad/grmcp")
            alpha = 0.5 if self.alpha is None else float(self.alpha)
            if not 0.0 <= alpha <= 1.0:
                raise InvalidSpec(f"alpha must be in [0, 1], got {alpha}")
            object.__setattr__(self, "alpha", alpha)
        else:
            if self.alpha is not None:
                raise InvalidSpec("alpha applies only to the sgl family")
            if self.family in (GRSCAD, GRMCP):
                scalar = PenaltySpec(_SCALAR_OF[self.family], 0.0, self.gamma)
                object.__setattr__(self, "gamma", scalar.gamma)
            elif self.gamma is not None:
                raise InvalidSpec("gamma applies only to grscad/grmcp")

    def with_lambda(self, lam: float) -> "GroupPenaltySpec":
        return GroupPenaltySpec(self.family, lam, self.gamma, self.alpha, self.group_weights)


@dataclass(frozen=True)
class FitResult:
    """Coefficient path over a descending lambda grid with diagnostics."""

    lambdas: np.ndarray
    path: tuple[Coefficients, ...]
    loss_path: np.ndarray
    df_path: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    objective_traces: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        lambdas = np.asarray(self.lambdas, dtype=float)
        if lambdas.ndim != 1 or np.any(np.diff(lambdas) >= 0):
            raise InvalidSpec("lambda grid must be strictly decreasing")
        object.__setattr__(self, "lambdas", lambdas)

    def index_of(self, lam: float) -> int:
        return int(np.argmin(np.abs(self.lambdas - lam)))

    def coefficients_at(self, lam: float) -> Coefficients:
        return self.path[self.index_of(lam)]


@dataclass
class CvResult:
    best_lambda: float
    cv_curve: np.ndarray  # mean validation loss per lambda
    fold_curves: np.ndarray  # folds x lambdas
    fold_ids: np.ndarray
    oof_prediction: np.ndarray  # out-of-fold prediction at best_lambda


def _check_loss(loss: str, y: np.ndarray) -> None:
    if loss not in (SQUARED_ERROR, LOGISTIC):
        raise InvalidSpec(f"unknown loss {loss!r}")
    if loss == LOGISTIC and not np.all(np.isin(y, (0.0, 1.0))):
        raise NonBinaryResponse("logistic loss requires a 0/1 response")


def _as_matrix(z) -> np.ndarray:
    m = z.z if hasattr(z, "z") else np.asarray(z, dtype=float)
    if m.ndim != 2:
        raise DimensionMismatch("design must be a 2-d matrix")
    return m


def _loss_value(loss: str, y: np.ndarray, eta: np.ndarray) -> float:
    if loss == SQUARED_ERROR:
        r = y - eta
        return float(r @ r) / (2 * len(y))
    return float(np.mean(np.logaddexp(0.0, eta) - y * eta))


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(eta, -_ETA_CLIP, _ETA_CLIP)))


def predict(z, coef: Coefficients, loss: str = SQUARED_ERROR) -> np.ndarray:
    """Linear prediction; probabilities for the logistic loss."""
    eta = coef.intercept + _as_matrix(z) @ coef.beta
    return _sigmoid(eta) if loss == LOGISTIC else eta


def _group_penalty_value(spec: GroupPenaltySpec, beta: np.ndarray, blocks, weights) -> float:
    total = 0.0
    for k, cols in enumerate(blocks):
        norm = float(np.linalg.norm(beta[cols]))
        if spec.family == GRLASSO:
            total += spec.lam * weights[k] * norm
        elif spec.family == SGL:
            total += spec.alpha * spec.lam * weights[k] * norm
        else:
            total += penalty_value(
                PenaltySpec(_SCALAR_OF[spec.family], spec.lam * weights[k], spec.gamma), norm
            )
    if spec.family == SGL:
        total += (1 - spec.alpha) * spec.lam * float(np.abs(beta).sum())
    return total


def _null_intercept(loss: str, y: np.ndarray) -> float:
    """Optimal intercept of the empty model (the path's starting point)."""
    if loss == SQUARED_ERROR:
        return float(np.mean(y))
    pbar = float(np.clip(np.mean(y), 1e-12, 1 - 1e-12))
    return float(np.log(pbar / (1 - pbar)))


class _Problem:
    """Shared state for one path fit: design blocks, Grams, curvatures.

    For the gr families each block is rotated once into the eigenbasis of its
    Gram matrix (the group penalty only sees the block norm, which rotation
    preserves), so every block update works with a diagonal quadratic.
    Coefficients are mapped back to the original basis when a path point is
    saved.
    """

    def __init__(self, z, y, loss, blocks, rotate: bool):
        self.z = _as_matrix(z)
        self.y = np.asarray(y, dtype=float)
        if self.y.shape[0] != self.z.shape[0]:
            raise DimensionMismatch(
                f"{self.y.shape[0]} responses for {self.z.shape[0]} design rows"
            )
        _check_loss(loss, self.y)
        self.loss = loss
        self.n = self.z.shape[0]
        self.weight = 1.0 if loss == SQUARED_ERROR else 0.25
        self.blocks = [np.asarray(b, dtype=int) for b in blocks]
        for cols in self.blocks:
            if cols.size == 0:
                raise EmptyGroup("every group must contain at least one column")
        self.rotations = None
        zk, grams = [], []
        for cols in self.blocks:
            mat = np.ascontiguousarray(self.z[:, cols])
            zk.append(mat)
            grams.append(mat.T @ mat / self.n)
        if rotate:
            self.rotations = []
            self.eigvals = []
            for k, g in enumerate(grams):
                if g.shape[0] == 1:
                    d, q = g[0, 0].reshape(1), np.ones((1, 1))
                else:
                    d, q = np.linalg.eigh(g)
                    d = np.maximum(d, 0.0)
                self.rotations.append(q)
                self.eigvals.append(d)
                zk[k] = np.ascontiguousarray(zk[k] @ q)
            self.base_curv = [float(d[-1]) for d in self.eigvals]
        else:
            self.base_curv = [
                float(np.linalg.eigvalsh(g)[-1]) if g.shape[0] > 1 else float(g[0, 0])
                for g in grams
            ]
        self.zk = zk

    def to_original(self, beta: np.ndarray) -> np.ndarray:
        """Rotate fit-basis coefficients back to the design's column basis."""
        if self.rotations is None:
            return beta.copy()
        out = np.empty_like(beta)
        for k, cols in enumerate(self.blocks):
            out[cols] = self.rotations[k] @ beta[cols]
        return out

    def working_response(self, eta: np.ndarray) -> np.ndarray:
        if self.loss == SQUARED_ERROR:
            return self.y
        return eta + 4.0 * (self.y - _sigmoid(eta))

    def intercept_step(self, eta: np.ndarray) -> float:
        """Damped Newton step on the intercept; never increases the loss."""
        if self.loss == SQUARED_ERROR:
            return float(np.mean(self.y - eta))
        pi = _sigmoid(eta)
        g = float(np.mean(pi - self.y))
        if g == 0.0:
            return 0.0
        h = max(float(np.mean(pi * (1 - pi))), 1e-10)
        step = -g / h
        base = _loss_value(self.loss, self.y, eta)
        for _ in range(40):
            if _loss_value(self.loss, self.y, eta + step) <= base + 1e-15:
                return step
            step /= 2.0
        return 0.0


def _exact_group_solve(d: np.ndarray, c: np.ndarray, tau: float, s_start: float) -> tuple:
    """argmin over b of  0.5 b' diag(d) b - c'b + tau*||b||.

    Returns (solution, its norm).  The solution is b_i = c_i / (d_i + tau/s)
    with s = ||b|| the root of f(s) = sum(c_i^2/(s d_i + tau)^2) - 1, which is
    decreasing and convex, so Newton converges monotonically after one step
    from any starting point.
    """
    cnorm = math.sqrt(float(c @ c))
    if cnorm <= tau * (1.0 + _ZERO_SLACK):
        return np.zeros_like(c), 0.0
    dmax = float(d[-1])
    if tau == 0.0:
        safe = d > 1e-12 * max(dmax, 1.0)
        b = np.where(safe, c / np.where(safe, d, 1.0), 0.0)
        return b, math.sqrt(float(b @ b))
    if dmax <= 0.0:  # zero quadratic term: plain group soft threshold
        return (1.0 - tau / cnorm) * c, cnorm - tau
    c2 = c * c
    s = s_start if s_start > 0.0 else 0.0
    for _ in range(100):
        t = s * d + tau
        u = c2 / (t * t)
        f = float(u.sum()) - 1.0
        if abs(f) < 1e-13:
            break
        fp = -2.0 * float((u * d / t).sum())
        if fp >= 0.0:
            break
        s_new = s - f / fp
        if s_new <= 0.0:
            s_new = 1e-12
        if s_new == s:
            break
        s = s_new
    return c / (d + tau / s), s


def _soft_vec(u: np.ndarray, t: float) -> np.ndarray:
    return np.sign(u) * np.maximum(np.abs(u) - t, 0.0)


class _GroupUpdater:
    """Exact block minimization for grlasso/grscad/grmcp (rotated basis)."""

    def __init__(self, prob: _Problem, family: str, weights, gamma):
        self.prob = prob
        self.family = family
        self.weights = weights
        self.gamma = gamma
        self.norms = np.zeros(len(prob.blocks))  # current block norms / Newton warm starts

    def reset_norms(self, beta: np.ndarray) -> None:
        for k, cols in enumerate(self.prob.blocks):
            self.norms[k] = math.sqrt(float(beta[cols] @ beta[cols]))

    def rate(self, lam: float, k: int, old_norm: float) -> float:
        if self.family == GRLASSO:
            return lam * self.weights[k]
        return penalty_rate(
            PenaltySpec(_SCALAR_OF[self.family], lam * self.weights[k], self.gamma), old_norm
        )

    def update(self, lam: float, k: int, grad_part: np.ndarray, old: np.ndarray) -> np.ndarray:
        w = self.prob.weight
        d = self.prob.eigvals[k]
        old_norm = self.norms[k]
        if old_norm > 0.0:
            c = w * (grad_part + d * old)
        else:
            c = w * grad_part
        tau = self.rate(lam, k, old_norm)
        new, s = _exact_group_solve(w * d, c, tau, old_norm)
        self.norms[k] = s
        return new


class _SglUpdater:
    """Proximal step (soft threshold then group shrink) for the sgl family."""

    def __init__(self, prob: _Problem, weights, lambda1: float, lambda2: float):
        self.prob = prob
        self.weights = weights
        self.lambda1 = lambda1
        self.lambda2 = lambda2

    def reset_norms(self, beta: np.ndarray) -> None:
        pass

    def update(self, scale: float, k: int, grad_part: np.ndarray, old: np.ndarray) -> np.ndarray:
        vk = self.prob.weight * self.prob.base_curv[k]
        u = old + self.prob.weight * grad_part / vk
        vec = _soft_vec(u, scale * self.lambda2 / vk)
        thr = scale * self.lambda1 * self.weights[k] / vk
        norm = float(np.linalg.norm(vec))
        if norm <= thr * (1.0 + _ZERO_SLACK) or norm == 0.0:
            return np.zeros_like(u)
        return (1.0 - thr / norm) * vec


class _ScalarUpdater:
    """Exact scalar threshold per coordinate for lasso/scad/mcp."""

    def __init__(self, prob: _Problem, family: str, gamma):
        self.prob = prob
        self.family = family
        self.gamma = gamma

    def reset_norms(self, beta: np.ndarray) -> None:
        pass

    def update(self, lam: float, k: int, grad_part: np.ndarray, old: np.ndarray) -> np.ndarray:
        vj = self.prob.weight * self.prob.base_curv[k]
        u = float(old[0]) + self.prob.weight * float(grad_part[0]) / vj
        spec = PenaltySpec(self.family, lam, self.gamma)
        if self.family == LASSO:
            val = scalar_threshold(spec, u, vj)
        else:
            well_posed = (vj * self.gamma > 1.0 if self.family == MCP
                          else vj * (self.gamma - 1) > 1.0)
            if well_posed:
                val = scalar_threshold(spec, u, vj)
            else:
                # curvature too weak for the exact threshold: linearize locally
                t = penalty_rate(spec, abs(float(old[0]))) / vj
                val = u - t if u > t else (u + t if u < -t else 0.0)
        if abs(val) <= _ZERO_SLACK * max(abs(u), 1.0):
            val = 0.0
        return np.array([val])


def _fit_basis_eta(prob: _Problem, beta: np.ndarray) -> np.ndarray:
    """Linear predictor (sans intercept) for fit-basis coefficients."""
    eta = np.zeros(prob.n)
    for k, cols in enumerate(prob.blocks):
        bk = beta[cols]
        if bk.any():
            eta += prob.zk[k] @ bk
    return eta


def _solve_at_lambda(
    prob: _Problem,
    lam: float,
    updater,
    penalty_fn,
    beta: np.ndarray,
    intercept: float,
    tol: float,
    max_iter: int,
    track_objective: bool,
    loss_floor: float = 0.0,
):
    """Full sweeps alternating with active-set sweeps until nothing moves.

    The tail of the active-set phase is accelerated by extrapolating along the
    last sweep's displacement; an extrapolated point is accepted only when it
    strictly lowers the penalized objective, so every iterate remains a
    descent step.  A positive ``loss_floor`` aborts the solve once the
    training loss falls below it (logistic saturation: the data are separated
    and the unpenalized optimum sits at infinity).
    """
    updater.reset_norms(beta)
    eta = intercept + _fit_basis_eta(prob, beta)
    trace = []
    if track_objective:
        trace.append(_loss_value(prob.loss, prob.y, eta) + penalty_fn(beta))
    all_blocks = range(len(prob.blocks))

    def sweep(block_ids):
        nonlocal intercept, eta
        max_change = 0.0
        max_eta_change = 0.0
        step = prob.intercept_step(eta)
        if step != 0.0:
            intercept += step
            eta = eta + step
            max_change = abs(step)
            max_eta_change = abs(step)
        t = prob.working_response(eta)
        r = t - eta
        for k in block_ids:
            cols = prob.blocks[k]
            old = beta[cols]
            grad_part = prob.zk[k].T @ r / prob.n
            new = updater.update(lam, k, grad_part, old)
            delta = new - old
            if delta.any():
                change = prob.zk[k] @ delta
                r -= change
                eta = eta + change
                beta[cols] = new
                max_change = max(max_change, float(np.max(np.abs(delta))))
                max_eta_change = max(max_eta_change, float(np.max(np.abs(change))))
        if track_objective:
            trace.append(_loss_value(prob.loss, prob.y, eta) + penalty_fn(beta))
        return max_change, max_eta_change

    def objective():
        return _loss_value(prob.loss, prob.y, eta) + penalty_fn(beta)

    def is_saturated():
        # fitted probabilities pinned beyond 1e-10, or 99.9% of the null
        # deviance explained: the logistic optimum has run off to infinity
        if loss_floor <= 0.0:
            return False
        if float(np.max(np.abs(eta))) > 23.0:
            return True
        return _loss_value(prob.loss, prob.y, eta) < loss_floor

    converged = False
    saturated = False
    iterations = 0
    stagnant = 0
    flat = 0
    prev_obj = math.inf
    eta_floor = tol * (1.0 + float(np.max(np.abs(prob.y))))
    while iterations < max_iter:
        iterations += 1
        coef_change, eta_change = sweep(all_blocks)
        if coef_change < tol:
            converged = True
            break
        if is_saturated():
            saturated = True
            break
        if eta_change < eta_floor:
            flat += 1
            if flat >= 3:
                break  # predictions stable; coefficients wander a flat manifold
        else:
            flat = 0
        active = [k for k in all_blocks if beta[prob.blocks[k]].any()]
        theta = 1.0
        stop = False
        while iterations < max_iter and active:
            pre_beta, pre_b0, pre_eta = beta.copy(), intercept, eta
            iterations += 1
            coef_change, eta_change = sweep(active)
            if coef_change < tol:
                break
            if is_saturated():
                saturated = True
                stop = True
                break
            if eta_change < eta_floor:
                flat += 1
                if flat >= 3:
                    stop = True
                    break
            else:
                flat = 0
            obj_cur = objective()
            # a cycling iterate leaves the objective pinned at machine accuracy
            if prev_obj - obj_cur < 1e-14 * max(1.0, abs(obj_cur)):
                stagnant += 1
                if stagnant >= 5:
                    stop = True
                    break
            else:
                stagnant = 0
            prev_obj = obj_cur
            if np.array_equal(beta != 0.0, pre_beta != 0.0):
                beta_e = beta + theta * (beta - pre_beta)
                b0_e = intercept + theta * (intercept - pre_b0)
                eta_e = eta + theta * (eta - pre_eta)
                if _loss_value(prob.loss, prob.y, eta_e) + penalty_fn(beta_e) < obj_cur:
                    beta, intercept, eta = beta_e, b0_e, eta_e
                    updater.reset_norms(beta)
                    prev_obj = math.inf
                    theta = min(theta * 2.0, 16.0)
                else:
                    theta = 1.0
        if stop:
            break
    return beta, intercept, eta, converged, iterations, trace, saturated


def _fit_path(
    prob: _Problem,
    lambda_grid,
    updater,
    penalty_for,
    part_expanded: Partition,
    convex_updater=None,
    convex_penalty_for=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    track_objective: bool = False,
) -> FitResult:
    lambdas = np.asarray(lambda_grid, dtype=float)
    p = prob.z.shape[1]
    beta_cvx = np.zeros(p)
    b0_null = _null_intercept(prob.loss, prob.y)
    b0_cvx = b0_null
    # logistic fits on separable data have no finite optimum; the path stops
    # once 99.9% of the null deviance is explained (remaining grid points
    # repeat the last solved model, flagged unconverged)
    loss_floor = 0.0
    if prob.loss == LOGISTIC:
        loss_floor = 1e-3 * _loss_value(LOGISTIC, prob.y, np.full(prob.n, b0_null))
    path, losses, dfs, conv, iters, traces = [], [], [], [], [], []
    saturated = False
    for lam in lambdas:
        if saturated:
            path.append(path[-1])
            losses.append(losses[-1])
            dfs.append(dfs[-1])
            conv.append(False)
            iters.append(0)
            traces.append(())
            continue
        if convex_updater is not None:
            beta_cvx, b0_cvx, _, _, _, _, sat_cvx = _solve_at_lambda(
                prob, lam, convex_updater, convex_penalty_for(lam), beta_cvx, b0_cvx,
                tol, max_iter, False, loss_floor,
            )
            beta, b0 = beta_cvx.copy(), b0_cvx
        else:
            sat_cvx = False
            beta, b0 = beta_cvx, b0_cvx
        beta, b0, eta, ok, used, trace, sat = _solve_at_lambda(
            prob, lam, updater, penalty_for(lam), beta, b0, tol, max_iter,
            track_objective, loss_floor,
        )
        if convex_updater is None:
            beta_cvx, b0_cvx = beta, b0
        beta_orig = prob.to_original(beta)
        path.append(Coefficients.from_beta(b0, beta_orig, part_expanded))
        losses.append(_loss_value(prob.loss, prob.y, eta))
        dfs.append(int(np.count_nonzero(beta_orig)))
        conv.append(ok)
        iters.append(used)
        traces.append(tuple(trace))
        saturated = sat or sat_cvx
    return FitResult(
        lambdas=lambdas,
        path=tuple(path),
        loss_path=np.asarray(losses),
        df_path=np.asarray(dfs, dtype=int),
        converged=np.asarray(conv, dtype=bool),
        iterations=np.asarray(iters, dtype=int),
        objective_traces=tuple(traces) if track_objective else None,
    )


def _singleton_partition(p: int) -> Partition:
    return Partition(np.arange(1, p + 1), p)


def group_weight_vector(spec_family: str, part: Partition, group_weights=None) -> np.ndarray:
    """Per-group penalty weights: sqrt(size) for gr families, 1 for sgl."""
    if group_weights is not None:
        gw = np.asarray(group_weights, dtype=float)
        if gw.shape != (part.k,) or np.any(gw <= 0):
            raise InvalidSpec("group_weights must be K positive scalars")
        return gw
    if spec_family == SGL:
        return np.ones(part.k)
    return np.sqrt(part.group_sizes().astype(float))


def fit_individual(
    z, y, loss: str, spec: PenaltySpec, lambda_grid,
    tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
    track_objective: bool = False,
) -> FitResult:
    """Coordinate-descent path for lasso/scad/mcp with warm starts."""
    m = _as_matrix(z)
    p = m.shape[1]
    prob = _Problem(z, y, loss, [np.array([j]) for j in range(p)], rotate=False)
    part = _singleton_partition(p)
    updater = _ScalarUpdater(prob, spec.family, spec.gamma)

    def penalty_for(lam):
        at = spec.with_lambda(lam)
        return lambda beta: float(sum(penalty_value(at, b) for b in beta))

    convex_updater = convex_penalty_for = None
    if spec.family in (SCAD, MCP):
        convex_updater = _ScalarUpdater(prob, LASSO, None)

        def convex_penalty_for(lam):
            return lambda beta: lam * float(np.abs(beta).sum())

    return _fit_path(
        prob, lambda_grid, updater, penalty_for, part,
        convex_updater=convex_updater, convex_penalty_for=convex_penalty_for,
        tol=tol, max_iter=max_iter, track_objective=track_objective,
    )


def _group_blocks(part: Partition):
    return [part.members(label) for label in range(1, part.k + 1)]


def fit_group(
    z, y, loss: str, part: Partition, spec: GroupPenaltySpec, lambda_grid,
    tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
    track_objective: bool = False,
) -> FitResult:
    """Block-coordinate-descent path for grlasso/grscad/grmcp."""
    if spec.family == SGL:
        return fit_sparse_group(
            z, y, loss, part, spec.alpha, 1 - spec.alpha, lambda_grid,
            group_weights=spec.group_weights, tol=tol, max_iter=max_iter,
            track_objective=track_objective,
        )
    m = _as_matrix(z)
    if part.size != m.shape[1]:
        raise DimensionMismatch("partition must be expanded to the design columns")
    weights = group_weight_vector(spec.family, part, spec.group_weights)
    blocks = _group_blocks(part)
    prob = _Problem(z, y, loss, blocks, rotate=True)
    updater = _GroupUpdater(prob, spec.family, weights, spec.gamma)

    def penalty_for(lam):
        at = spec.with_lambda(lam)
        return lambda beta: _group_penalty_value(at, beta, blocks, weights)

    convex_updater = convex_penalty_for = None
    if spec.family in (GRSCAD, GRMCP):
        convex_updater = _GroupUpdater(prob, GRLASSO, weights, None)

        def convex_penalty_for(lam):
            at = GroupPenaltySpec(GRLASSO, lam, group_weights=weights)
            return lambda beta: _group_penalty_value(at, beta, blocks, weights)

    return _fit_path(
        prob, lambda_grid, updater, penalty_for, part,
        convex_updater=convex_updater, convex_penalty_for=convex_penalty_for,
        tol=tol, max_iter=max_iter, track_objective=track_objective,
    )


def fit_sparse_group(
    z, y, loss: str, part: Partition, lambda1: float, lambda2: float, lambda_grid_over_scale,
    group_weights=None,
    tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
    track_objective: bool = False,
) -> FitResult:
    """Sparse-group path: scale s applies penalties (s*lambda1, s*lambda2).

    Each block subproblem is solved by elementwise soft-thresholding followed
    by a groupwise shrink.
    """
    if lambda1 < 0 or lambda2 < 0:
        raise InvalidSpec("lambda1 and lambda2 must be nonnegative")
    m = _as_matrix(z)
    if part.size != m.shape[1]:
        raise DimensionMismatch("partition must be expanded to the design columns")
    weights = group_weight_vector(SGL, part, group_weights)
    blocks = _group_blocks(part)
    prob = _Problem(z, y, loss, blocks, rotate=False)
    updater = _SglUpdater(prob, weights, lambda1, lambda2)

    def penalty_for(scale):
        def value(beta):
            total = scale * lambda2 * float(np.abs(beta).sum())
            for k, cols in enumerate(blocks):
                total += scale * lambda1 * weights[k] * float(np.linalg.norm(beta[cols]))
            return total

        return value

    return _fit_path(
        prob, lambda_grid_over_scale, updater, penalty_for, part,
        tol=tol, max_iter=max_iter, track_objective=track_objective,
    )


def _null_gradient(z, y, loss: str) -> np.ndarray:
    """Per-column loss gradient at the intercept-only model."""
    m = _as_matrix(z)
    y = np.asarray(y, dtype=float)
    _check_loss(loss, y)
    return -(m.T @ (y - y.mean())) / m.shape[0]


def lambda_max(z, y, loss: str, part: Partition | None = None, family: str = LASSO,
               group_weights=None, alpha: float | None = None) -> float:
    """Smallest penalty level whose fit is the all-zero (null) model."""
    g = _null_gradient(z, y, loss)
    if family in INDIVIDUAL_FAMILIES:
        return float(np.max(np.abs(g)))
    if part is None:
        raise InvalidSpec("group families need a partition")
    weights = group_weight_vector(family, part, group_weights)
    blocks = _group_blocks(part)
    if family != SGL:
        return float(max(np.linalg.norm(g[cols]) / weights[k] for k, cols in enumerate(blocks)))
    alpha = 0.5 if alpha is None else float(alpha)
    lam1, lam2 = alpha, 1.0 - alpha
    if lam1 == 0.0 and lam2 == 0.0:
        raise InvalidSpec("sgl needs a nonzero penalty direction")
    if lam1 == 0.0:
        return float(np.max(np.abs(g)) / lam2)
    best = 0.0
    for k, cols in enumerate(blocks):
        gk = np.abs(g[cols])
        if lam2 == 0.0:
            s = float(np.linalg.norm(gk)) / (lam1 * weights[k])
        else:
            # smallest s with ||soft(g_k, s*lam2)||_2 <= s*lam1*w_k (bisection)
            lo, hi = 0.0, float(np.max(gk)) / lam2 + 1e-12
            for _ in range(100):
                mid = (lo + hi) / 2
                soft = np.maximum(gk - mid * lam2, 0.0)
                if np.linalg.norm(soft) <= mid * lam1 * weights[k]:
                    hi = mid
                else:
                    lo = mid
            s = hi
        best = max(best, s)
    return best


def default_lambda_grid(lmax: float, n_points: int = DEFAULT_N_LAMBDA,
                        min_ratio: float | None = None, p_over_n: bool = False) -> np.ndarray:
    """Log-spaced grid from lmax down to min_ratio * lmax (descending)."""
    if min_ratio is None:
        min_ratio = 0.05 if p_over_n else 0.001
    if lmax <= 0:
        raise InvalidSpec("lambda_max must be positive to build a grid")
    return np.geomspace(lmax, lmax * min_ratio, n_points)


def _dispatch_fit(z, y, loss, part, spec, grid, **kw) -> FitResult:
    if isinstance(spec, PenaltySpec):
        return fit_individual(z, y, loss, spec, grid, **kw)
    if spec.family == SGL:
        return fit_sparse_group(
            z, y, loss, part, spec.alpha, 1 - spec.alpha, grid,
            group_weights=spec.group_weights, **kw,
        )
    return fit_group(z, y, loss, part, spec, grid, **kw)


def _fold_validation_loss(loss: str, y_val: np.ndarray, pred: np.ndarray) -> float:
    if loss == SQUARED_ERROR:
        return float(np.sqrt(np.mean((y_val - pred) ** 2)))
    p = np.clip(pred, 1e-12, 1 - 1e-12)
    return float(np.mean(-2 * (y_val * np.log(p) + (1 - y_val) * np.log(1 - p))))


def cross_validate(
    z, y, loss: str, part: Partition | None, spec, grid,
    folds: int = 10, seed: int = 0, n_jobs: int = 1,
) -> CvResult:
    """K-fold cross-validation over a shared lambda grid.

    Validation loss is root mean squared error for the squared-error loss and
    mean deviance for the logistic loss; the winning lambda minimizes the
    fold-mean curve, ties broken toward the larger (sparser) value.
    """
    m = _as_matrix(z)
    y = np.asarray(y, dtype=float)
    n = m.shape[0]
    if n < folds:
        raise TooFewObservations(f"{n} observations cannot fill {folds} folds")
    if folds < 2:
        raise InvalidSpec("folds must be >= 2")
    grid = np.asarray(grid, dtype=float)
    rng = np.random.default_rng(seed)
    fold_ids = np.empty(n, dtype=int)
    fold_ids[rng.permutation(n)] = np.arange(n) % folds

    def one_fold(f):
        train = fold_ids != f
        val = ~train
        fit = _dispatch_fit(m[train], y[train], loss, part, spec, grid)
        curve = np.empty(len(grid))
        preds = np.empty((len(grid), int(val.sum())))
        for i, coef in enumerate(fit.path):
            pred = predict(m[val], coef, loss)
            preds[i] = pred
            curve[i] = _fold_validation_loss(loss, y[val], pred)
        return curve, preds

    if n_jobs == 1:
        results = [one_fold(f) for f in range(folds)]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(one_fold)(f) for f in range(folds))

    fold_curves = np.stack([r[0] for r in results])
    cv_curve = fold_curves.mean(axis=0)
    best_idx = int(np.argmin(cv_curve))  # first minimum = largest lambda on ties
    oof = np.empty(n)
    for f, (_, preds) in enumerate(results):
        oof[fold_ids == f] = preds[best_idx]
    return CvResult(
        best_lambda=float(grid[best_idx]),
        cv_curve=cv_curve,
        fold_curves=fold_curves,
        fold_ids=fold_ids,
        oof_prediction=oof,
    )


def kkt_residual(z, y, loss: str, coef: Coefficients, spec, part: Partition | None = None) -> float:
    """Largest first-order optimality violation of a fitted solution.

    Zero groups/coordinates must have gradient within the penalty's rate at
    zero; active ones must cancel the penalty's (sub)gradient exactly.
    """
    m = _as_matrix(z)
    y = np.asarray(y, dtype=float)
    beta = coef.beta
    eta = coef.intercept + m @ beta
    if loss == SQUARED_ERROR:
        resid_like = eta - y
    else:
        resid_like = _sigmoid(eta) - y
    g = (m.T @ resid_like) / m.shape[0]
    worst = abs(float(np.mean(resid_like)))  # unpenalized intercept

    if isinstance(spec, PenaltySpec):
        for j in range(beta.size):
            rate = penalty_rate(spec, abs(beta[j]))
            if beta[j] == 0.0:
                worst = max(worst, abs(g[j]) - spec.lam)
            else:
                worst = max(worst, abs(g[j] + np.sign(beta[j]) * rate))
        return float(worst)

    weights = group_weight_vector(spec.family, part, spec.group_weights)
    for k, cols in enumerate(_group_blocks(part)):
        gk = g[cols]
        bk = beta[cols]
        norm = float(np.linalg.norm(bk))
        if spec.family == SGL:
            lam1 = spec.alpha * spec.lam * weights[k]
            lam2 = (1 - spec.alpha) * spec.lam
            if norm == 0.0:
                soft = np.maximum(np.abs(gk) - lam2, 0.0)
                worst = max(worst, float(np.linalg.norm(soft)) - lam1)
            else:
                for j in range(len(cols)):
                    if bk[j] == 0.0:
                        worst = max(worst, abs(gk[j]) - lam2)
                    else:
                        worst = max(
                            worst,
                            abs(gk[j] + lam1 * bk[j] / norm + lam2 * np.sign(bk[j])),
                        )
            continue
        if spec.family == GRLASSO:
            rate = spec.lam * weights[k]
        else:
            rate = penalty_rate(
                PenaltySpec(_SCALAR_OF[spec.family], spec.lam * weights[k], spec.gamma), norm
            )
        if norm == 0.0:
            worst = max(worst, float(np.linalg.norm(gk)) - spec.lam * weights[k])
        else:
            worst = max(worst, float(np.max(np.abs(gk + rate * bk / norm))))
    return float(worst)
