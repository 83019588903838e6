"""Monte Carlo estimation of first-return probabilities and densities.

The free process starts at level zero in an up phase, moves linearly at
the phase rate between jumps of the phase chain, and is stopped at the
first passage below zero; the hitting phase is tallied.  The reflected
process clamps the level at zero instead and accumulates occupation time
into level bins for a density histogram.

Each replication draws from its own generator keyed by (seed, replication
counter), so estimates are reproducible bit for bit and independent of
execution order.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass

import numpy as np

from .core import FluidModel
from .errors import NotRecurrent
from . import core

_CHUNK = 64


@dataclass(frozen=True)
class SimConfig:
    replications: int
    seed: int
    max_time: float = 1e4
    burn_in: float = 0.0

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.max_time <= 0:
            raise ValueError("max_time must be positive")
        if not 0.0 <= self.burn_in < self.max_time:
            raise ValueError("burn_in must lie in [0, max_time)")


@dataclass(frozen=True)
class PsiEstimate:
    """Hit frequencies per (start up phase, first down phase) pair."""

    estimate: np.ndarray
    stderr: np.ndarray
    censored_fraction: float


@dataclass(frozen=True)
class DensityEstimate:
    """Time-average occupation of (level bin, phase) cells.

    ``pdf`` integrates to the moving mass; ``atom`` is the mass at level
    zero and ``overflow`` the mass above the last bin edge.  Columns are
    in the caller's original phase order.
    """

    edges: np.ndarray
    pdf: np.ndarray
    atom: np.ndarray
    overflow: np.ndarray
    total_time: float


def _walk_tables(model: FluidModel):
    """Python-native jump tables for the tight per-step loop."""
    A = model.A
    n = model.n
    rates = [-float(A[k, k]) for k in range(n)]
    cum_rows = []
    targets = []
    for k in range(n):
        row = [(float(A[k, j]), j) for j in range(n) if j != k and A[k, j] > 0]
        total = sum(w for w, _ in row)
        acc = 0.0
        cums, tgts = [], []
        for w, j in row:
            acc += w / total
            cums.append(acc)
            tgts.append(j)
        cums[-1] = 1.0  # guard against round-off at the top
        cum_rows.append(cums)
        targets.append(tgts)
    return rates, cum_rows, targets, [float(x) for x in model.c]


def _rng_for(seed: int, counter: int) -> np.random.Generator:
    key = np.array([np.uint64(seed % (1 << 64)), np.uint64(counter)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class _Draws:
    """Chunked deterministic stream of exponentials and uniforms."""

    __slots__ = ("rng", "exps", "unis", "i")

    def __init__(self, rng):
        self.rng = rng
        self._refill()

    def _refill(self):
        self.exps = self.rng.standard_exponential(_CHUNK).tolist()
        self.unis = self.rng.random(_CHUNK).tolist()
        self.i = 0

    def next(self):
        if self.i >= _CHUNK:
            self._refill()
        e, u = self.exps[self.i], self.unis[self.i]
        self.i += 1
        return e, u


def estimate_psi(model: FluidModel, cfg: SimConfig) -> PsiEstimate:
    """Estimate the first-return matrix by simulating the free process.

    Runs ``cfg.replications`` paths per starting up phase; paths that have
    not crossed below zero by ``cfg.max_time`` count toward
    ``censored_fraction``.
    """
    rates, cum_rows, targets, c = _walk_tables(model)
    n_plus, n_minus = model.n_plus, model.n_minus
    minus_col = {int(k): j for j, k in enumerate(model.im)}
    counts = np.zeros((n_plus, n_minus), dtype=np.int64)
    censored = 0
    max_time = cfg.max_time
    reps = cfg.replications
    for row, start in enumerate(model.ip):
        start = int(start)
        for r in range(reps):
            draws = _Draws(_rng_for(cfg.seed, row * reps + r))
            y = 0.0
            t = 0.0
            ph = start
            while True:
                e, u = draws.next()
                tau = e / rates[ph]
                ck = c[ph]
                if ck < 0.0 and y + ck * tau < 0.0:
                    if t + y / (-ck) > max_time:
                        censored += 1
                    else:
                        counts[row, minus_col[ph]] += 1
                    break
                y += ck * tau
                t += tau
                if t > max_time:
                    censored += 1
                    break
                cums = cum_rows[ph]
                ph = targets[ph][bisect_left(cums, u)]
    est = counts / reps
    stderr = np.sqrt(est * (1.0 - est) / reps)
    return PsiEstimate(estimate=est, stderr=stderr,
                       censored_fraction=censored / (n_plus * reps))


def estimate_density(model: FluidModel, cfg: SimConfig, x_max: float = 20.0,
                     n_bins: int = 100) -> DensityEstimate:
    """Histogram of the reflected process by time averaging.

    Each replication runs the reflected process to ``cfg.max_time`` and
    accumulates occupation time after ``cfg.burn_in``; sojourns split
    exactly across bin boundaries.  Level-zero time (negative or zero
    rates at the boundary) goes into the per-phase atom.
    """
    if core.mean_drift(model) >= 0:
        raise NotRecurrent("density estimation requires negative drift")
    rates, cum_rows, targets, c = _walk_tables(model)
    n = model.n
    edges = np.linspace(0.0, x_max, n_bins + 1)
    occupancy = np.zeros((n_bins, n))
    atom = np.zeros(n)
    overflow = np.zeros(n)
    burn_in, max_time = cfg.burn_in, cfg.max_time

    def moving(ph, t0, t1, y0, ck):
        """Accumulate a linear segment y(t) = y0 + ck (t - t0) on [t0, t1)."""
        lo = max(t0, burn_in)
        if lo >= t1:
            return
        y_lo = y0 + ck * (lo - t0)
        y_hi = y0 + ck * (t1 - t0)
        a, b = min(y_lo, y_hi), max(y_lo, y_hi)
        if ck == 0.0:
            dur = t1 - lo
            if a >= x_max:
                overflow[ph] += dur
            else:
                occupancy[min(int(a / x_max * n_bins), n_bins - 1), ph] += dur
            return
        speed = abs(ck)
        if b > x_max:
            overflow[ph] += (b - max(a, x_max)) / speed
        seg = np.clip(np.minimum(b, edges[1:]) - np.maximum(a, edges[:-1]),
                      0.0, None)
        occupancy[:, ph] += seg / speed

    for r in range(cfg.replications):
        draws = _Draws(_rng_for(cfg.seed, r))
        y = 0.0
        t = 0.0
        ph = int(model.ip[0]) if model.n_plus else 0
        while t < max_time:
            e, u = draws.next()
            tau = min(e / rates[ph], max_time - t)
            ck = c[ph]
            if y == 0.0 and ck <= 0.0:
                lo = max(t, burn_in)
                if t + tau > lo:
                    atom[ph] += t + tau - lo
            elif ck < 0.0 and y + ck * tau < 0.0:
                t_hit = t + y / (-ck)
                moving(ph, t, t_hit, y, ck)
                lo = max(t_hit, burn_in)
                if t + tau > lo:
                    atom[ph] += t + tau - lo
                y = 0.0
            else:
                moving(ph, t, t + tau, y, ck)
                y += ck * tau
            t += tau
            cums = cum_rows[ph]
            ph = targets[ph][bisect_left(cums, u)]
    total = cfg.replications * max(max_time - burn_in, 0.0)
    widths = np.diff(edges)[:, None]
    inv = np.argsort(model.perm)
    return DensityEstimate(edges=edges,
                           pdf=(occupancy / total / widths)[:, inv],
                           atom=(atom / total)[inv],
                           overflow=(overflow / total)[inv],
                           total_time=total)
