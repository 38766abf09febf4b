"""Limited-memory BFGS with a strong Wolfe line search.

Textbook two-loop recursion; the line search brackets by doubling and then
zooms with safeguarded quadratic interpolation, enforcing the strong Wolfe
conditions with c1 = 1e-4 and c2 = 0.9.  The whole procedure is
deterministic given the objective and starting point, accepted iterates
never increase the objective beyond the 1e-12 * (1 + |f|) evaluation-noise
allowance of the approximate-Wolfe rescue, and the best point seen across
all evaluations is returned.
"""

import numpy as np

WOLFE_C1 = 1e-4
WOLFE_C2 = 0.9
GRAD_TOL = 1e-9
CURVATURE_GUARD = 1e-10
MAX_BRACKET = 20
MAX_ZOOM = 30


class NumericAbort(RuntimeError):
    """Objective or gradient went non-finite; carries (iteration, step)."""

    def __init__(self, iteration, step):
        super().__init__(f"non-finite objective at iteration {iteration}, step {step:g}")
        self.iteration = iteration
        self.step = step


class _Tracker:
    """Wraps the objective, validating outputs and remembering the best point.

    Objective values within the evaluation-noise allowance of each other are
    treated as ties and broken by gradient norm, so the returned point is
    the most converged one among the lowest seen.
    """

    def __init__(self, objective):
        self.objective = objective
        self.best_f = np.inf
        self.best_gnorm = np.inf
        self.best_x = None
        self.iteration = 0

    def __call__(self, x, step=np.nan):
        f, g = self.objective(x)
        f = float(f)
        g = np.asarray(g, dtype=np.float64)
        if not np.isfinite(f) or not np.isfinite(g).all():
            raise NumericAbort(self.iteration, step)
        gnorm = float(np.linalg.norm(g))
        noise = 1e-12 * (1.0 + abs(f))
        if f < self.best_f - noise or (f <= self.best_f + noise and gnorm < self.best_gnorm):
            self.best_f = min(f, self.best_f)
            self.best_gnorm = gnorm
            self.best_x = x.copy()
        return f, g


def _interp(alo, flo, dlo, ahi, fhi):
    """Quadratic-fit minimizer inside (alo, ahi), safeguarded to its middle 60%."""
    denom = 2.0 * (fhi - flo - dlo * (ahi - alo))
    mid = 0.5 * (alo + ahi)
    if denom == 0.0 or not np.isfinite(denom):
        return mid
    trial = alo - dlo * (ahi - alo) ** 2 / denom
    span = abs(ahi - alo)
    lo, hi = min(alo, ahi), max(alo, ahi)
    if not np.isfinite(trial) or trial < lo + 0.2 * span or trial > hi - 0.2 * span:
        return mid
    return trial


def _line_search(evaluate, x, f0, g0, direction):
    """Strong Wolfe step along ``direction``; returns (alpha, f, g) or None.

    Near the optimum the objective value saturates at double-precision
    roundoff while the gradient is still accurate, so a step whose value
    sits within the evaluation-noise allowance of f0 is also accepted when
    it meets the curvature condition (approximate-Wolfe rescue).  ``None``
    means no acceptable step was found within the evaluation budget.
    """
    dphi0 = float(np.dot(g0, direction))
    if dphi0 >= 0:
        return None
    noise = 1e-12 * (1.0 + abs(f0))

    def phi(alpha):
        f, g = evaluate(x + alpha * direction, step=alpha)
        return f, g, float(np.dot(g, direction))

    def curvature_ok(dphi):
        return abs(dphi) <= -WOLFE_C2 * dphi0

    def zoom(alo, flo, dlo, ahi, fhi):
        for _ in range(MAX_ZOOM):
            alpha = _interp(alo, flo, dlo, ahi, fhi)
            f, g, dphi = phi(alpha)
            if f > f0 + WOLFE_C1 * alpha * dphi0 or f >= flo:
                if f <= f0 + noise and curvature_ok(dphi):
                    return alpha, f, g
                ahi, fhi = alpha, f
            else:
                if curvature_ok(dphi):
                    return alpha, f, g
                if dphi * (ahi - alo) >= 0:
                    ahi, fhi = alo, flo
                alo, flo, dlo = alpha, f, dphi
            if abs(ahi - alo) < 1e-16 * max(1.0, abs(alo)):
                break
        return None

    alpha_prev, f_prev, d_prev = 0.0, f0, dphi0
    alpha = 1.0
    for i in range(MAX_BRACKET):
        f, g, dphi = phi(alpha)
        if f > f0 + WOLFE_C1 * alpha * dphi0 or (i > 0 and f >= f_prev):
            if f <= f0 + noise and curvature_ok(dphi):
                return alpha, f, g
            return zoom(alpha_prev, f_prev, d_prev, alpha, f)
        if curvature_ok(dphi):
            return alpha, f, g
        if dphi >= 0:
            return zoom(alpha, f, dphi, alpha_prev, f_prev)
        alpha_prev, f_prev, d_prev = alpha, f, dphi
        alpha *= 2.0
    return None


def lbfgs_minimize(objective, x0, iters, history=10, callback=None):
    """Minimize ``objective`` (returning (value, gradient)) from ``x0``.

    Runs at most ``iters`` iterations, stopping early when the gradient
    norm falls below 1e-9.  ``callback(iteration, value, grad_norm, step)``
    fires after each accepted iterate.  Returns the best-seen point.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    evaluate = _Tracker(objective)
    if iters <= 0:
        return x
    f, g = evaluate(x, step=0.0)
    s_hist, y_hist, rho_hist = [], [], []

    for iteration in range(1, iters + 1):
        evaluate.iteration = iteration
        gnorm = float(np.linalg.norm(g))
        if gnorm < GRAD_TOL:
            break

        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * np.dot(s, q)
            q -= a * y
            alphas.append(a)
        if s_hist:
            q *= np.dot(s_hist[-1], y_hist[-1]) / np.dot(y_hist[-1], y_hist[-1])
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            q += s * (a - rho * np.dot(y, q))
        direction = -q
        if np.dot(g, direction) >= 0:
            direction = -g  # fall back to steepest descent

        result = _line_search(evaluate, x, f, g, direction)
        if result is None:
            break
        alpha, f_new, g_new = result
        s = alpha * direction
        y = g_new - g
        ys = float(np.dot(y, s))
        # relative curvature guard: an absolute one starves the memory of
        # updates near convergence where s and y are tiny
        if ys > CURVATURE_GUARD * np.linalg.norm(s) * np.linalg.norm(y):
            if len(s_hist) == history:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / ys)
        x = x + s
        f, g = f_new, g_new
        if callback is not None:
            callback(iteration, f, float(np.linalg.norm(g)), float(alpha))

    return evaluate.best_x if evaluate.best_x is not None else x
