"""Independent reference implementations used by the tests.

Everything here is deliberately dumb and slow: dense grid scans, exhaustive
enumeration, plain python set arithmetic, and finite differences. None of it
imports the package under test, so a passing comparison means two unrelated
code paths agree.
"""

import itertools
import math

import numpy as np


def logistic_objective(Z, y, loss_weight, w, c, l1=True, ridge=0.0):
    """Direct evaluation of the penalized logistic objective."""
    margins = y * (Z @ w + c)
    loss = loss_weight * float(np.logaddexp(0.0, -margins).sum())
    pen = float(np.abs(w).sum()) if l1 else 0.5 * ridge * float(w @ w)
    return pen + loss


def _scan_coordinate(f, x0, span, resolution, include_zero):
    """Minimize f over one coordinate by a zooming 41-point grid scan.

    The bracket doubles outward while the minimum sits on an edge, then
    shrinks around the best point until it is narrower than `resolution`.
    """
    lo, hi = x0 - span, x0 + span
    best_x, best_f = x0, f(x0)
    for _ in range(200):
        xs = list(np.linspace(lo, hi, 41))
        if include_zero and lo < 0.0 < hi:
            xs.append(0.0)
        for x in xs:
            fx = f(x)
            if fx < best_f:
                best_x, best_f = x, fx
        width = hi - lo
        if best_x <= lo + 1e-12 * max(1.0, abs(lo)):
            lo, hi = lo - 2.0 * width, lo + 0.25 * width
        elif best_x >= hi - 1e-12 * max(1.0, abs(hi)):
            lo, hi = hi - 0.25 * width, hi + 2.0 * width
        else:
            step = width / 40.0
            lo, hi = best_x - step, best_x + step
            if width <= resolution:
                break
    return best_x, best_f


def l1_grid_minimize(Z, y, loss_weight, span=20.0, resolution=1e-7, max_cycles=400):
    """Global minimum of ||w||_1 + loss_weight * logistic loss by coordinate scans.

    Cyclic exact-ish coordinate minimization converges on this convex
    objective because the non-smooth part is separable. Each coordinate is
    minimized by a dense zooming grid; w coordinates always test 0 exactly.
    Returns (w, c, objective).
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    m = Z.shape[1]
    w = np.zeros(m)
    c = 0.0
    f_prev = logistic_objective(Z, y, loss_weight, w, c)
    stall = 0
    for _ in range(max_cycles):
        def fc(x):
            return logistic_objective(Z, y, loss_weight, w, x)

        c, _ = _scan_coordinate(fc, c, span, resolution, include_zero=False)
        for j in range(m):
            def fj(x, j=j):
                old = w[j]
                w[j] = x
                val = logistic_objective(Z, y, loss_weight, w, c)
                w[j] = old
                return val

            w[j], _ = _scan_coordinate(fj, w[j], span, resolution, include_zero=True)
        f_now = logistic_objective(Z, y, loss_weight, w, c)
        if f_prev - f_now <= 1e-14 * max(1.0, abs(f_now)):
            stall += 1
            if stall >= 2:
                break
        else:
            stall = 0
        f_prev = f_now
    return w, c, f_now


def l1_dense_grid_1d(x_col, y, loss_weight, span=20.0, resolution=1e-5):
    """Literal dense 1-D grid search for |w| + loss_weight * loss, c fixed at 0."""
    n_pts = int(round(2 * span / resolution)) + 1
    grid = np.linspace(-span, span, n_pts)
    total = np.abs(grid)
    for xi, yi in zip(np.asarray(x_col, dtype=float), np.asarray(y, dtype=float)):
        total = total + loss_weight * np.logaddexp(0.0, -yi * xi * grid)
    return float(grid[np.argmin(total)])


def central_difference_gradient(f, x, h=1e-6):
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def l2_gd_minimize(Z, y, lambda_ridge, max_iters=200000, tol=1e-10):
    """Plain gradient descent on the smooth ridge logistic objective.

    The analytic gradient is checked against central differences at a random
    point before the descent starts, so a bug here cannot silently agree
    with the same bug in the solver under test.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, m = Z.shape

    def value(theta):
        w, c = theta[:m], theta[m]
        return logistic_objective(Z, y, 1.0, w, c, l1=False, ridge=lambda_ridge)

    def grad(theta):
        w, c = theta[:m], theta[m]
        margins = y * (Z @ w + c)
        s = -y / (1.0 + np.exp(margins))
        return np.concatenate([Z.T @ s + lambda_ridge * w, [s.sum()]])

    rng = np.random.default_rng(0)
    probe = rng.normal(size=m + 1)
    fd = central_difference_gradient(value, probe)
    an = grad(probe)
    assert np.allclose(an, fd, rtol=1e-5, atol=1e-7), "oracle gradient is wrong"

    theta = np.zeros(m + 1)
    step = 1.0 / (0.25 * n * (1.0 + float((Z ** 2).sum(axis=1).max())) + lambda_ridge)
    f = value(theta)
    for _ in range(max_iters):
        g = grad(theta)
        if np.abs(g).max() <= tol:
            break
        t = step * 4.0
        while True:
            cand = theta - t * g
            fc = value(cand)
            if fc <= f - 0.5 * t * float(g @ g) or t < 1e-18:
                break
            t *= 0.5
        theta, f = cand, fc
    return theta[:m], float(theta[m])


def l2_bfgs_minimize(Z, y, lambda_ridge):
    """Independent ridge logistic minimizer via scipy's BFGS.

    Faster than the tiny-step descent above on ill-conditioned instances;
    the analytic gradient is still finite-difference checked first.
    """
    from scipy.optimize import minimize

    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    m = Z.shape[1]

    def value(theta):
        return logistic_objective(Z, y, 1.0, theta[:m], theta[m],
                                  l1=False, ridge=lambda_ridge)

    def grad(theta):
        w, c = theta[:m], theta[m]
        margins = y * (Z @ w + c)
        s = -y / (1.0 + np.exp(margins))
        return np.concatenate([Z.T @ s + lambda_ridge * w, [s.sum()]])

    probe = np.random.default_rng(1).normal(size=m + 1)
    fd = central_difference_gradient(value, probe)
    assert np.allclose(grad(probe), fd, rtol=1e-5, atol=1e-7), "oracle gradient is wrong"

    res = minimize(value, np.zeros(m + 1), jac=grad, method="BFGS",
                   options={"gtol": 1e-10, "maxiter": 10000})
    return res.x[:m], float(res.x[m])


def pr_points_bruteforce(scores, truth):
    """PR points by explicit set arithmetic, one per distinct score, descending."""
    scores = list(map(float, scores))
    truth = set(int(t) for t in truth)
    points = []
    for t in sorted(set(scores), reverse=True):
        selected = {i for i, s in enumerate(scores) if s >= t}
        tp = len(selected & truth)
        precision = tp / len(selected) if selected else 1.0
        recall = tp / len(truth)
        points.append((t, precision, recall))
    return points


def pr_auc_bruteforce(points):
    """Trapezoid over recall with the (recall 0, precision 1) anchor."""
    rp = [(0.0, 1.0)] + [(r, p) for _, p, r in points]
    auc = 0.0
    for (r0, p0), (r1, p1) in zip(rp, rp[1:]):
        auc += (r1 - r0) * (p1 + p0) / 2.0
    return auc


def top_t_bruteforce(scores, T):
    order = sorted(range(len(scores)), key=lambda i: (-float(scores[i]), i))
    return set(order[:T])


def best_two_partition(points):
    """Exhaustive minimum within-cluster sum of squares over all 2-partitions.

    Point 0 is fixed to side A so each unordered partition is visited once.
    Returns (cost, frozenset of two frozensets). Only sane for <= ~15 points.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]

    def wcss(idx):
        if not idx:
            return 0.0
        sub = points[list(idx)]
        return float(((sub - sub.mean(axis=0)) ** 2).sum())

    best_cost, best_parts = math.inf, None
    for bits in itertools.product([0, 1], repeat=n - 1):
        a = [0] + [i + 1 for i, b in enumerate(bits) if b == 0]
        b = [i + 1 for i, b in enumerate(bits) if b == 1]
        if not b:
            continue
        cost = wcss(a) + wcss(b)
        if cost < best_cost:
            best_cost = cost
            best_parts = frozenset([frozenset(a), frozenset(b)])
    return best_cost, best_parts


def welch_t_bruteforce(a, b):
    """Welch statistic straight from the textbook formula."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    if va + vb == 0.0:
        return 0.0
    return float((a.mean() - b.mean()) / math.sqrt(va + vb))
