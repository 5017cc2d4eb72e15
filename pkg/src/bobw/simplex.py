"""FTRL machinery on the probability simplex.

Everything downstream (base learners, the two-arm wrapper) reduces to
solving

    argmin_{p in simplex, p >= floor}  <p, cum> + (1/scale) * psi(p)

for one of four regularizers.  The solver works on the dual: the KKT
conditions give each coordinate as a monotone function of the simplex
multiplier lambda, and we root-find sum_i p_i(lambda) = 1 with a
safeguarded Newton iteration (bisection fallback, iteration cap 200,
residual tolerance well below 1e-10).

Regularizer conventions (natural log everywhere):

- ``NegEntropy``      psi(p) =  sum_i p_i ln p_i
- ``Tsallis(a)``      psi(p) = -sum_i p_i^a / (a (1 - a))
- ``LogBarrier``      psi(p) =  sum_i ln(1 / p_i)
- ``Hybrid(a,w,b)``   psi(p) = -w/(1-a) * sum_i p_i^a + b * sum_i ln(1/p_i)

``Hybrid`` carries its two scale weights inside the regularizer (the
wrapper's time-varying 1/eta_t and 1/beta), so callers pass scale=1.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "NegEntropy",
    "Tsallis",
    "LogBarrier",
    "Hybrid",
    "SolverError",
    "ftrl_argmin",
    "kkt_residual",
    "bregman",
    "stability_bound",
    "sample",
]

_MAX_ITER = 200
_SUM_TOL = 1e-13


class SolverError(RuntimeError):
    """Dual iteration failed to converge; carries the last residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class NegEntropy:
    """psi(p) = sum p ln p.  Defined for all real multipliers."""

    bounded_dual = False  # lambda ranges over all of R

    def value(self, p):
        p = np.asarray(p, dtype=float)
        return float(np.sum(p * np.log(p)))

    def grad(self, p):
        return 1.0 + np.log(np.asarray(p, dtype=float))

    # Coordinate solve of psi'(p) = -scale * c, i.e. 1 + ln p = -scale*c,
    # where c = cum_i - lambda.  Returns (p, dp/dlambda).
    def _coord(self, c, scale):
        e = -scale * c - 1.0
        p = math.exp(e if e < 700.0 else 700.0)
        return p, scale * p

    def _c_of_p(self, p, scale):
        return -(1.0 + math.log(p)) / scale

    def __repr__(self):
        return "NegEntropy()"


class Tsallis:
    """psi(p) = -sum p^a / (a(1-a)) with exponent a strictly in (0, 1)."""

    bounded_dual = True

    def __init__(self, alpha: float):
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"Tsallis exponent must lie in (0,1), got {alpha}")
        self.alpha = float(alpha)

    def value(self, p):
        p = np.asarray(p, dtype=float)
        a = self.alpha
        return float(-np.sum(p**a) / (a * (1.0 - a)))

    def grad(self, p):
        a = self.alpha
        return -np.asarray(p, dtype=float) ** (a - 1.0) / (1.0 - a)

    def _coord(self, c, scale):
        # p^(a-1) = scale*(1-a)*c, requires c > 0.
        a = self.alpha
        p = (scale * (1.0 - a) * c) ** (-1.0 / (1.0 - a))
        return p, scale * p ** (2.0 - a)

    def _c_of_p(self, p, scale):
        a = self.alpha
        return p ** (a - 1.0) / (scale * (1.0 - a))

    def __repr__(self):
        return f"Tsallis(alpha={self.alpha})"


class LogBarrier:
    """psi(p) = sum ln(1/p)."""

    bounded_dual = True

    def value(self, p):
        return float(-np.sum(np.log(np.asarray(p, dtype=float))))

    def grad(self, p):
        return -1.0 / np.asarray(p, dtype=float)

    def _coord(self, c, scale):
        p = 1.0 / (scale * c)
        return p, scale * p * p

    def _c_of_p(self, p, scale):
        return 1.0 / (scale * p)

    def __repr__(self):
        return "LogBarrier()"


class Hybrid:
    """Tsallis-plus-log-barrier regularizer used by the two-arm wrapper.

    psi(p) = -ts_scale/(1-a) * sum p^a  +  lb_scale * sum ln(1/p).

    ``ts_scale`` plays the role of 1/eta_t and ``lb_scale`` of 1/beta.
    ``lb_scale=0`` drops the barrier part (used when a base learner has
    c2 = 0).
    """

    bounded_dual = True

    def __init__(self, alpha: float, ts_scale: float, lb_scale: float):
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"Hybrid exponent must lie in (0,1), got {alpha}")
        if ts_scale < 0 or lb_scale < 0 or (ts_scale == 0 and lb_scale == 0):
            raise ValueError("Hybrid needs nonnegative scales, not both zero")
        self.alpha = float(alpha)
        self.ts_scale = float(ts_scale)
        self.lb_scale = float(lb_scale)
        self._k = self.alpha / (1.0 - self.alpha)

    def value(self, p):
        p = np.asarray(p, dtype=float)
        a = self.alpha
        v = -self.ts_scale / (1.0 - a) * np.sum(p**a)
        if self.lb_scale:
            v -= self.lb_scale * np.sum(np.log(p))
        return float(v)

    def grad(self, p):
        p = np.asarray(p, dtype=float)
        g = -self.ts_scale * self._k * p ** (self.alpha - 1.0)
        if self.lb_scale:
            g = g - self.lb_scale / p
        return g

    def _coord(self, c, scale):
        # Solve ts*k*p^(a-1) + lb/p = scale*c for p, c > 0.
        ts = self.ts_scale * self._k
        lb = self.lb_scale
        rhs = scale * c
        a = self.alpha
        if lb == 0.0:
            p = (rhs / ts) ** (-1.0 / (1.0 - a))
        elif ts == 0.0:
            p = lb / rhs
        elif a == 0.5:
            # quadratic in u = p^(-1/2)
            u = (-ts + math.sqrt(ts * ts + 4.0 * lb * rhs)) / (2.0 * lb)
            p = 1.0 / (u * u)
        else:
            # Newton on u = 1/p for g(u) = ts*k... expressed via u:
            #   ts * u^(1-a) + lb * u = rhs
            u = min(rhs / lb, (rhs / ts) ** (1.0 / (1.0 - a)))
            for _ in range(60):
                f = ts * u ** (1.0 - a) + lb * u - rhs
                df = ts * (1.0 - a) * u ** (-a) + lb
                step = f / df
                u -= step
                if u <= 0.0:
                    u = (u + step) * 0.5
                if abs(step) <= 1e-15 * u:
                    break
            p = 1.0 / u
        # implicit derivative: dp/dlambda = scale / (ts*k*(1-a)*p^(a-2) + lb*p^-2)
        dp = scale / (ts * (1.0 - a) * p ** (a - 2.0) + lb / (p * p))
        return p, dp

    def _c_of_p(self, p, scale):
        return (self.ts_scale * self._k * p ** (self.alpha - 1.0) + self.lb_scale / p) / scale

    def __repr__(self):
        return (
            f"Hybrid(alpha={self.alpha}, ts_scale={self.ts_scale}, "
            f"lb_scale={self.lb_scale})"
        )


def _coord_sum(cum, reg, scale, floor, lam):
    """sum_i max(floor, p_i(lam)) and its lambda-derivative."""
    s = 0.0
    ds = 0.0
    coord = reg._coord
    for ci in cum:
        p, dp = coord(ci - lam, scale)
        if p < floor:
            s += floor
        else:
            s += p
            ds += dp
    return s, ds


def ftrl_argmin(cum, reg, scale=1.0, floor=0.0, warm=None, return_dual=False):
    """Minimise <p, cum> + (1/scale) psi(p) over {p in simplex, p >= floor}.

    Returns the minimiser as an ndarray (or ``(p, dual)`` when
    ``return_dual`` is set; feed the dual back through ``warm`` to speed
    up repeated solves).  Raises ``ValueError`` on malformed input and
    ``SolverError`` if the dual iteration fails to converge.
    """
    arr = np.asarray(cum, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("cumulative loss vector must be 1-D and non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("cumulative loss vector contains non-finite entries")
    if scale <= 0 or not math.isfinite(scale):
        raise ValueError(f"scale must be positive and finite, got {scale}")
    k = arr.size
    if floor < 0 or floor * k > 1.0 + 1e-12:
        raise ValueError(f"floor {floor} infeasible for {k} coordinates")
    if k == 1:
        out = np.ones(1)
        return (out, 0.0) if return_dual else out
    if floor * k >= 1.0 - 1e-12:
        # the floor constraints pin down a single feasible point
        out = np.full(k, 1.0 / k)
        return (out, 0.0) if return_dual else out

    # Translation invariance: shift so min(cum) = 0; lambda lives below 0
    # for the barrier-type regularizers.
    base = float(arr.min())
    shifted = tuple(float(v) - base for v in arr)

    lam = None
    if warm is not None and math.isfinite(warm):
        lam = warm - base
        if reg.bounded_dual and lam >= 0.0:
            lam = None
    if lam is None:
        lam = -reg._c_of_p(1.0 / k, scale)
    if reg.bounded_dual and lam >= 0.0:
        lam = -reg._c_of_p(1.0 / k, scale)

    s, _ = _coord_sum(shifted, reg, scale, floor, lam)

    # Bracket the root: lo with S<1, hi with S>1.
    iters = 0
    if s >= 1.0:
        hi = lam
        step = max(1.0, abs(lam))
        lo = lam - step
        sl, _ = _coord_sum(shifted, reg, scale, floor, lo)
        while sl >= 1.0:
            iters += 1
            if iters > _MAX_ITER:
                raise SolverError("failed to bracket dual from below", sl - 1.0)
            step *= 4.0
            lo -= step
            sl, _ = _coord_sum(shifted, reg, scale, floor, lo)
    else:
        lo = lam
        if reg.bounded_dual:
            hi = lam * 0.25  # lambda < 0; shrink toward 0
            sh, _ = _coord_sum(shifted, reg, scale, floor, hi)
            while sh <= 1.0:
                iters += 1
                if iters > _MAX_ITER:
                    raise SolverError("failed to bracket dual from above", 1.0 - sh)
                hi *= 0.25
                sh, _ = _coord_sum(shifted, reg, scale, floor, hi)
        else:
            step = max(1.0, abs(lam))
            hi = lam + step
            sh, _ = _coord_sum(shifted, reg, scale, floor, hi)
            while sh <= 1.0:
                iters += 1
                if iters > _MAX_ITER:
                    raise SolverError("failed to bracket dual from above", 1.0 - sh)
                step *= 4.0
                hi += step
                sh, _ = _coord_sum(shifted, reg, scale, floor, hi)

    # Safeguarded Newton within [lo, hi].
    lam = 0.5 * (lo + hi)
    resid = _coord_sum(shifted, reg, scale, floor, lam)[0] - 1.0
    for _ in range(_MAX_ITER):
        s, ds = _coord_sum(shifted, reg, scale, floor, lam)
        resid = s - 1.0
        if abs(resid) <= _SUM_TOL:
            break
        if resid > 0.0:
            hi = lam
        else:
            lo = lam
        if ds > 0.0:
            nxt = lam - resid / ds
            if not (lo < nxt < hi):
                nxt = 0.5 * (lo + hi)
        else:
            nxt = 0.5 * (lo + hi)
        if nxt == lam:
            break
        lam = nxt
    else:
        raise SolverError("dual Newton did not converge", abs(resid))

    coord = reg._coord
    out = np.empty(k)
    for i, ci in enumerate(shifted):
        p, _ = coord(ci - lam, scale)
        out[i] = floor if p < floor else p
    out /= out.sum()
    if return_dual:
        return out, lam + base
    return out


def kkt_residual(p, cum, reg, scale=1.0, floor=0.0):
    """Max KKT violation of ``p`` for the ftrl_argmin problem (0 = optimal)."""
    p = np.asarray(p, dtype=float)
    cum = np.asarray(cum, dtype=float)
    g = cum + reg.grad(p) / scale
    free = p > floor * (1.0 + 1e-9) + 1e-300
    res = abs(float(p.sum()) - 1.0)
    if np.any(free):
        lam = float(np.mean(g[free]))
        res = max(res, float(np.max(np.abs(g[free] - lam))) )
        if np.any(~free):
            # clamped coordinates must not want to grow: gradient >= lam
            res = max(res, float(max(0.0, np.max(lam - g[~free]))))
    return res


def bregman(reg, p, q):
    """Bregman divergence D_psi(p, q) of the (unscaled) regularizer."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(reg.value(p) - reg.value(q) - np.dot(reg.grad(q), p - q))


def stability_bound(reg, p, loss, scale):
    """Closed-form (lhs, rhs) of the per-step FTRL stability inequality.

    lhs = max_{u >= 0} <p - u, loss> - (1/scale) D_psi(u, p), evaluated at
    the positive-orthant maximiser; rhs is the matching certified upper
    bound.  Preconditions (loss-sign restrictions) are enforced.
    """
    p = np.asarray(p, dtype=float)
    loss = np.asarray(loss, dtype=float)
    if p.shape != loss.shape:
        raise ValueError("p and loss must have matching shapes")
    if np.any(p <= 0):
        raise ValueError("p must be strictly positive")
    if scale <= 0:
        raise ValueError("scale must be positive")

    if isinstance(reg, NegEntropy):
        lo = float(loss.min())
        if lo <= -1.0 / scale:
            raise ValueError("negentropy stability needs loss > -1/scale")
        u = p * np.exp(-scale * loss)
        div = np.sum(u * np.log(u / p) - u + p)
        lhs = float(np.dot(p - u, loss) - div / scale)
        if lo >= 0.0:
            rhs = 0.5 * scale * float(np.sum(p * loss**2))
        else:
            rhs = scale * float(np.sum(p * loss**2))
        return lhs, rhs

    if isinstance(reg, Tsallis):
        if float(loss.min()) < 0.0:
            raise ValueError("tsallis stability needs nonnegative losses")
        a = reg.alpha
        u = (p ** (a - 1.0) + scale * (1.0 - a) * loss) ** (1.0 / (a - 1.0))
        lhs = float(np.dot(p - u, loss) - bregman(reg, u, p) / scale)
        rhs = 0.5 * scale * float(np.sum(p ** (2.0 - a) * loss**2))
        return lhs, rhs

    if isinstance(reg, LogBarrier):
        if float((scale * p * loss).min()) < -0.5:
            raise ValueError("log-barrier stability needs scale*p*loss >= -1/2")
        u = 1.0 / (1.0 / p + scale * loss)
        lhs = float(np.dot(p - u, loss) - bregman(reg, u, p) / scale)
        rhs = scale * float(np.sum(p**2 * loss**2))
        return lhs, rhs

    raise TypeError(f"no stability lemma for regularizer {reg!r}")


def sample(p, rng):
    """Draw an index from a probability vector using one uniform."""
    u = float(rng.random())
    acc = 0.0
    last = len(p) - 1
    for i, pi in enumerate(p):
        acc += pi
        if u < acc:
            return i
    return last
