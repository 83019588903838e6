"""Fluid model definition, validation and censoring.

A model is a finite irreducible Markov phase process with generator ``A``
together with a net fluid rate ``c_i`` per phase.  Phases are kept
internally in the canonical order (positive rates, zero rates, negative
rates); the permutation back to the caller's ordering is stored on the
model so user-facing output can be restored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (DimensionMismatch, InvalidPerturbation, NotAGenerator,
                     Reducible, SingularBlock, Singular)
from .numerics import as_matrix, as_vector, null_row_vector, solve_linear

ROWSUM_RTOL = 1e-12


@dataclass(frozen=True)
class FluidModel:
    """Validated fluid model in canonical phase order.

    ``A`` and ``c`` are stored canonically ordered; ``perm`` maps canonical
    position -> original phase index, so ``A == A_orig[perm][:, perm]``.
    """

    A: np.ndarray
    c: np.ndarray
    n_plus: int
    n_zero: int
    n_minus: int
    perm: np.ndarray
    labels: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.A.shape[0]

    # canonical index ranges of the three rate classes
    @property
    def ip(self) -> np.ndarray:
        return np.arange(0, self.n_plus)

    @property
    def i0(self) -> np.ndarray:
        return np.arange(self.n_plus, self.n_plus + self.n_zero)

    @property
    def im(self) -> np.ndarray:
        return np.arange(self.n_plus + self.n_zero, self.n)

    @property
    def c_plus(self) -> np.ndarray:
        return self.c[self.ip]

    @property
    def c_minus_abs(self) -> np.ndarray:
        return np.abs(self.c[self.im])

    def block(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        if len(rows) == 0 or len(cols) == 0:
            return np.zeros((len(rows), len(cols)))
        return self.A[np.ix_(rows, cols)]

    def canonical_labels(self) -> tuple[str, ...]:
        return tuple(self.labels[i] for i in self.perm)

    def unpermute(self, values: np.ndarray) -> np.ndarray:
        """Scatter a canonical-order vector back to the original order."""
        out = np.empty_like(np.asarray(values, dtype=float))
        out[self.perm] = values
        return out


@dataclass(frozen=True)
class CensoredBlocks:
    """Generator blocks on the non-zero-rate phases after censoring."""

    Q_pp: np.ndarray
    Q_pm: np.ndarray
    Q_mp: np.ndarray
    Q_mm: np.ndarray


@dataclass(frozen=True)
class PerturbationSpec:
    """A validated perturbation direction in canonical phase order.

    ``kind`` is ``"generator"`` or ``"rate"``.  For rate perturbations the
    zero-rate phases that acquire a positive (negative) rate are listed in
    ``oplus`` (``ominus``) as canonical positions, and ``regime`` is one of
    ``"unaffected"``, ``"to_plus"``, ``"to_minus"``, ``"general"``.
    """

    kind: str
    direction: np.ndarray
    regime: str
    oplus: np.ndarray = field(default_factory=lambda: np.arange(0))
    ominus: np.ndarray = field(default_factory=lambda: np.arange(0))


def _strongly_connected(adj: np.ndarray) -> bool:
    """Strong connectivity of the directed graph given by a boolean matrix."""
    n = adj.shape[0]
    if n <= 1:
        return True

    def reach(mat):
        seen = np.zeros(n, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            i = stack.pop()
            for j in np.nonzero(mat[i])[0]:
                if not seen[j]:
                    seen[j] = True
                    stack.append(j)
        return seen.all()

    return reach(adj) and reach(adj.T)


def validate_model(A, c, labels=None) -> FluidModel:
    """Validate a generator / rate-vector pair and build a FluidModel.

    Checks generator structure (nonnegative off-diagonals, zero row sums
    relative to ``norm(A, inf)``), irreducibility of the transition graph,
    and derives the canonical three-way partition from the signs of ``c``.
    """
    A = as_matrix(A, "A")
    c = as_vector(c, "c")
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    if c.shape[0] != n:
        raise DimensionMismatch(f"c has length {c.shape[0]}, expected {n}")
    if labels is None:
        labels = tuple(str(i) for i in range(n))
    else:
        labels = tuple(str(x) for x in labels)
        if len(labels) != n:
            raise DimensionMismatch(f"{len(labels)} labels for {n} phases")

    scale = max(np.linalg.norm(A, np.inf), 0.0)
    tol = ROWSUM_RTOL * scale
    off = A.copy()
    np.fill_diagonal(off, 0.0)
    if off.min(initial=0.0) < -tol:
        raise NotAGenerator("negative off-diagonal entry")
    rowsum = np.abs(A.sum(axis=1)).max(initial=0.0)
    if rowsum > tol:
        raise NotAGenerator(f"row sums deviate from zero by {rowsum:.3e}")
    if not _strongly_connected(off > 0.0):
        raise Reducible("transition graph is not strongly connected")

    rank = np.where(c > 0, 0, np.where(c == 0, 1, 2))
    perm = np.argsort(rank, kind="stable")
    A_can = A[np.ix_(perm, perm)]
    c_can = c[perm]
    for arr in (A_can, c_can, perm):
        arr.flags.writeable = False
    return FluidModel(
        A=A_can, c=c_can,
        n_plus=int((c > 0).sum()), n_zero=int((c == 0).sum()),
        n_minus=int((c < 0).sum()),
        perm=perm, labels=labels)


def stationary_phase_dist(model: FluidModel) -> np.ndarray:
    """Stationary probability vector of the phase process (canonical order)."""
    xi = null_row_vector(model.A)
    if xi.min() < -1e-10:
        raise Singular(f"negative stationary mass {xi.min():.3e}")
    return np.clip(xi, 0.0, None) / np.clip(xi, 0.0, None).sum()


def mean_drift(model: FluidModel) -> float:
    """Mean stationary drift; negative drift means positive recurrence."""
    return float(stationary_phase_dist(model) @ model.c)


def censor_zero_phases(model: FluidModel) -> CensoredBlocks:
    """Censor the zero-rate phases out of the generator.

    The censored generator on the remaining phases is the restriction of
    ``A`` plus the first-passage correction through the zero-rate block.
    """
    ip, i0, im = model.ip, model.i0, model.im
    A_pp = model.block(ip, ip)
    A_pm = model.block(ip, im)
    A_mp = model.block(im, ip)
    A_mm = model.block(im, im)
    if model.n_zero == 0:
        return CensoredBlocks(A_pp, A_pm, A_mp, A_mm)
    A_00 = model.block(i0, i0)
    try:
        # N = (-A_00)^{-1} applied to the outgoing rows
        N_rows = solve_linear(-A_00, np.hstack([model.block(i0, ip),
                                                model.block(i0, im)]))
    except Singular as exc:
        raise SingularBlock("zero-rate block is singular") from exc
    N_p = N_rows[:, :model.n_plus]
    N_m = N_rows[:, model.n_plus:]
    A_p0 = model.block(ip, i0)
    A_m0 = model.block(im, i0)
    return CensoredBlocks(
        Q_pp=A_pp + A_p0 @ N_p,
        Q_pm=A_pm + A_p0 @ N_m,
        Q_mp=A_mp + A_m0 @ N_p,
        Q_mm=A_mm + A_m0 @ N_m)


def validate_perturbation(model: FluidModel, kind: str, direction) -> PerturbationSpec:
    """Validate a perturbation direction against a model.

    ``direction`` is given in the caller's original phase order (the same
    order `validate_model` consumed) and is stored canonically ordered.

    Generator directions must have zero row sums and nonnegative entries
    wherever ``A`` has a zero off-diagonal entry, so that ``A + eps*dir``
    stays a generator for small positive ``eps``.  Rate directions must be
    uniformly zero, positive or negative on the zero-rate phases
    (or sign-split, which is the general regime); mixing zero and nonzero
    entries there is rejected.
    """
    if kind == "generator":
        D = as_matrix(direction, "direction")
        if D.shape != model.A.shape:
            raise DimensionMismatch(f"direction shape {D.shape}, expected {model.A.shape}")
        D = D[np.ix_(model.perm, model.perm)]
        tol = ROWSUM_RTOL * max(np.linalg.norm(D, np.inf), 1.0)
        if np.abs(D.sum(axis=1)).max(initial=0.0) > tol:
            raise InvalidPerturbation("generator direction rows do not sum to zero")
        off_zero = (model.A <= 0.0) & ~np.eye(model.n, dtype=bool)
        if D[off_zero].min(initial=0.0) < -tol:
            raise InvalidPerturbation(
                "direction decreases a rate that is already zero")
        D.flags.writeable = False
        return PerturbationSpec(kind="generator", direction=D, regime="generator")

    if kind == "rate":
        d = as_vector(direction, "direction")
        if d.shape[0] != model.n:
            raise DimensionMismatch(f"direction length {d.shape[0]}, expected {model.n}")
        d = d[model.perm]
        on_zero = d[model.i0]
        if on_zero.size and np.any(on_zero == 0.0) and np.any(on_zero != 0.0):
            raise InvalidPerturbation(
                "mixed zero and nonzero rate perturbation on zero-rate phases")
        oplus = model.i0[on_zero > 0]
        ominus = model.i0[on_zero < 0]
        if oplus.size == 0 and ominus.size == 0:
            regime = "unaffected"
        elif ominus.size == 0:
            regime = "to_plus"
        elif oplus.size == 0:
            regime = "to_minus"
        else:
            regime = "general"
        d.flags.writeable = False
        return PerturbationSpec(kind="rate", direction=d, regime=regime,
                                oplus=oplus, ominus=ominus)

    raise InvalidPerturbation(f"unknown perturbation kind {kind!r}")


def load_model(path) -> FluidModel:
    """Load and validate a model from a JSON file {"A": ..., "c": ..., "labels": ...}."""
    with open(path) as fh:
        doc = json.load(fh)
    if "A" not in doc or "c" not in doc:
        raise DimensionMismatch('model file must contain "A" and "c"')
    return validate_model(doc["A"], doc["c"], labels=doc.get("labels"))


def model_to_dict(model: FluidModel) -> dict:
    """Serialize back to the on-disk layout, in the original phase order."""
    inv = np.argsort(model.perm)
    A = model.A[np.ix_(inv, inv)]
    c = model.c[inv]
    return {"A": A.tolist(), "c": c.tolist(), "labels": list(model.labels)}
