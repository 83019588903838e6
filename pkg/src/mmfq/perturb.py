"""First-order expansions of the first-return matrix.

Five expansion routes are implemented:

* generator direction ``A + eps*At`` (:func:`psi1_generator`),
* rate direction with unaffected zero-rate phases (:func:`psi1_rate_unaffected`),
* all zero-rate phases migrating to the up class (:func:`expand_to_plus`),
* all migrating to the down class (:func:`expand_to_minus`),
* a sign split of the zero-rate phases (:func:`expand_general`).

For the migration regimes the perturbed first-return matrix has rows
(up phases, migrated-up phases) and columns (migrated-down phases, down
phases); the zeroth-order matrix in that layout is the comparison object
for the perturbed solve, and the first-order matrix is exact up to
O(eps^2), which the test suite checks by finite differences.

Throughout, block subscripts use p / op / om / m for the up, migrating-up,
migrating-down and down phase classes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import FluidModel, PerturbationSpec, validate_perturbation
from .errors import InnerRiccatiDiverged, NoConvergence, WrongRegime
from .numerics import solve_linear, solve_sylvester
from .riccati import PsiSolution, newton_riccati


@dataclass(frozen=True)
class PsiExpansion:
    """Zeroth- and first-order matrices in the perturbed block layout.

    ``row_phases`` / ``col_phases`` give the original phase index of every
    row and column, so the expansion can be aligned with a direct solve of
    the perturbed model.  ``aux`` holds the named intermediate blocks that
    the expansion route produced.
    """

    regime: str
    psi_bar: np.ndarray
    psi1: np.ndarray
    row_phases: np.ndarray
    col_phases: np.ndarray
    n_up_rows: int        # leading rows belonging to the original up class
    n_migrating_cols: int  # leading columns belonging to migrated-down phases
    aux: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SeriesBlocks:
    """Laurent-series coefficient blocks of U(eps) and K(eps).

    Suffix ``m1`` marks the eps^{-1} coefficient and ``0`` the eps^0
    coefficient; the block subscripts follow the module convention.
    """

    u_m1_om_om: np.ndarray
    u_m1_om_m: np.ndarray
    u_0_m_m: np.ndarray
    u_0_m_om: np.ndarray
    u_0_om_om: np.ndarray
    k_m1_op_op: np.ndarray
    k_m1_op_p: np.ndarray


def _inv(M: np.ndarray) -> np.ndarray:
    return solve_linear(M, np.eye(M.shape[0]))


def qtilde_blocks(model: FluidModel, a_tilde: np.ndarray):
    """First-order coefficient of the censored generator blocks.

    Differentiating the censoring formula Q = A_rc + A_r0 (-A_00)^{-1} A_0c
    along the direction ``a_tilde`` (canonical order) gives

        Qt_rc = At_rc + At_r0 N A_0c + A_r0 N At_00 N A_0c + A_r0 N At_0c

    with N = (-A_00)^{-1}.
    """
    ip, i0, im = model.ip, model.i0, model.im
    At = np.asarray(a_tilde, dtype=float)
    out = {}
    if model.n_zero == 0:
        for r, ir in (("p", ip), ("m", im)):
            for c, ic in (("p", ip), ("m", im)):
                out[r + c] = At[np.ix_(ir, ic)]
        return out["pp"], out["pm"], out["mp"], out["mm"]
    N = _inv(-model.block(i0, i0))
    At00 = At[np.ix_(i0, i0)]
    for r, ir in (("p", ip), ("m", im)):
        A_r0 = model.block(ir, i0)
        At_r0 = At[np.ix_(ir, i0)]
        for c, ic in (("p", ip), ("m", im)):
            A_0c = model.block(i0, ic)
            At_0c = At[np.ix_(i0, ic)]
            out[r + c] = (At[np.ix_(ir, ic)] + At_r0 @ N @ A_0c
                          + A_r0 @ N @ At00 @ N @ A_0c + A_r0 @ N @ At_0c)
    return out["pp"], out["pm"], out["mp"], out["mm"]


def psi1_generator(model: FluidModel, psi_sol: PsiSolution,
                   a_tilde: np.ndarray) -> np.ndarray:
    """Derivative of psi along a generator direction (canonical order).

    Solves K X + X U = -C+^{-1} Qt_{+-} - C+^{-1} Qt_{++} psi
                       - psi |C-^{-1}| Qt_{--} - psi |C-^{-1}| Qt_{-+} psi.
    """
    Qt_pp, Qt_pm, Qt_mp, Qt_mm = qtilde_blocks(model, a_tilde)
    psi = psi_sol.psi
    cp = model.c_plus[:, None]
    psi_cm = psi / model.c_minus_abs[None, :]
    rhs = -(Qt_pm / cp) - (Qt_pp / cp) @ psi - psi_cm @ Qt_mm - psi_cm @ Qt_mp @ psi
    return solve_sylvester(psi_sol.K, psi_sol.U, rhs)


def psi1_rate_unaffected(model: FluidModel, psi_sol: PsiSolution,
                         c_tilde: np.ndarray) -> np.ndarray:
    """Derivative of psi for a rate direction vanishing on zero-rate phases.

    Solves K X + X U = -psi |C-^{-1}| Ct_- U - C+^{-1} Ct_+ psi U.
    """
    ct = np.asarray(c_tilde, dtype=float)
    if model.n_zero and np.any(ct[model.i0] != 0.0):
        raise WrongRegime("rate direction touches zero-rate phases")
    psi, U = psi_sol.psi, psi_sol.U
    ct_p = ct[model.ip]
    ct_m = ct[model.im]
    psi_cm = psi / model.c_minus_abs[None, :]
    rhs = -(psi_cm * ct_m[None, :]) @ U \
        - ((ct_p / model.c_plus)[:, None] * psi) @ U
    return solve_sylvester(psi_sol.K, psi_sol.U, rhs)


def expand_to_plus(model: FluidModel, psi_sol: PsiSolution,
                   spec: PerturbationSpec) -> PsiExpansion:
    """Expansion when every zero-rate phase acquires a positive rate."""
    if spec.kind != "rate" or spec.regime != "to_plus":
        raise WrongRegime(f"expected to_plus regime, got {spec.kind}/{spec.regime}")
    ip, io, im = model.ip, model.i0, model.im
    psi, U, K = psi_sol.psi, psi_sol.U, psi_sol.K
    cp = model.c_plus[:, None]
    cm = model.c_minus_abs[None, :]
    ct_op = spec.direction[io]
    ct_p = spec.direction[ip]
    ct_m = spec.direction[im]

    N = _inv(-model.block(io, io))
    psi_op_m = N @ (model.block(io, im) + model.block(io, ip) @ psi)
    K_p_op = model.block(ip, io) / cp + (psi / cm) @ model.block(im, io)
    P_op = K_p_op @ (N * ct_op[None, :]) @ psi_op_m

    rhs = -((psi / cm) * ct_m[None, :]) @ U \
        - ((ct_p[:, None] / cp) * psi) @ U - P_op @ U
    psi1_p_m = solve_sylvester(K, U, rhs)
    psi1_op_m = (N * ct_op[None, :]) @ psi_op_m @ U \
        + N @ model.block(io, ip) @ psi1_p_m

    return PsiExpansion(
        regime="to_plus",
        psi_bar=np.vstack([psi, psi_op_m]),
        psi1=np.vstack([psi1_p_m, psi1_op_m]),
        row_phases=np.concatenate([model.perm[ip], model.perm[io]]),
        col_phases=model.perm[im],
        n_up_rows=model.n_plus,
        n_migrating_cols=0,
        aux={"psi_op_m": psi_op_m, "P_op": P_op, "K_p_op": K_p_op,
             "psi1_op_m": psi1_op_m})


def expand_to_minus(model: FluidModel, psi_sol: PsiSolution,
                    spec: PerturbationSpec) -> PsiExpansion:
    """Expansion when every zero-rate phase acquires a negative rate.

    The zeroth order is [0  psi]: in the limit the fluid can only return
    to its initial level through an original down phase.
    """
    if spec.kind != "rate" or spec.regime != "to_minus":
        raise WrongRegime(f"expected to_minus regime, got {spec.kind}/{spec.regime}")
    ip, io, im = model.ip, model.i0, model.im
    psi, U, K = psi_sol.psi, psi_sol.U, psi_sol.K
    cp = model.c_plus[:, None]
    cm = model.c_minus_abs[None, :]
    ct_om_abs = np.abs(spec.direction[io])
    ct_p = spec.direction[ip]
    ct_m = spec.direction[im]

    N = _inv(-model.block(io, io))
    psi1_p_om = (model.block(ip, io) / cp + (psi / cm) @ model.block(im, io)) \
        @ (N * ct_om_abs[None, :])
    P_om = psi1_p_om @ N @ (model.block(io, im) + model.block(io, ip) @ psi)

    rhs = -((psi / cm) * ct_m[None, :]) @ U \
        - ((ct_p[:, None] / cp) * psi) @ U - K @ P_om
    psi1_p_m = solve_sylvester(K, U, rhs)

    zero = np.zeros((model.n_plus, model.n_zero))
    return PsiExpansion(
        regime="to_minus",
        psi_bar=np.hstack([zero, psi]),
        psi1=np.hstack([psi1_p_om, psi1_p_m]),
        row_phases=model.perm[ip],
        col_phases=np.concatenate([model.perm[io], model.perm[im]]),
        n_up_rows=model.n_plus,
        n_migrating_cols=model.n_zero,
        aux={"psi1_p_om": psi1_p_om, "P_om": P_om})


def _series_m1(model, spec, psi, psi_op_om, psi_op_m):
    """eps^{-1} coefficient blocks of U(eps) and K(eps).

    In the perturbed partition, U(eps) = |C-(eps)^{-1}| (A_{--} + A_{-+} Psi(eps))
    with rows (om, m); the om rows carry 1/(eps |Ct_om|), so their leading
    coefficient is the eps^{-1} block.  Same mechanism for the op rows of
    K(eps).
    """
    ip, im = model.ip, model.im
    io_p, io_m = spec.oplus, spec.ominus
    ct_op = spec.direction[io_p][:, None]
    ct_om = np.abs(spec.direction[io_m])[:, None]
    u_m1_om_om = (model.block(io_m, io_m) + model.block(io_m, io_p) @ psi_op_om) / ct_om
    u_m1_om_m = (model.block(io_m, im) + model.block(io_m, ip) @ psi
                 + model.block(io_m, io_p) @ psi_op_m) / ct_om
    k_m1_op_op = model.block(io_p, io_p) / ct_op \
        + (psi_op_om / np.abs(spec.direction[io_m])[None, :]) @ model.block(io_m, io_p)
    k_m1_op_p = model.block(io_p, ip) / ct_op \
        + (psi_op_om / np.abs(spec.direction[io_m])[None, :]) @ model.block(io_m, ip)
    return u_m1_om_om, u_m1_om_m, k_m1_op_op, k_m1_op_p


def series_blocks(model: FluidModel, spec: PerturbationSpec,
                  psi_sol: PsiSolution, psi_op_om: np.ndarray,
                  psi_op_m: np.ndarray, psi1_p_om: np.ndarray,
                  psi1_op_om: np.ndarray) -> SeriesBlocks:
    """Materialize the series blocks the general-regime expansion needs.

    The eps^0 blocks follow from collecting coefficients in
    U(eps) = |C-(eps)^{-1}| (A-block + A_{-.} Psi(eps)) with
    Psi(eps) = Psi_bar + eps Psi1 + O(eps^2):

        u_0_m_m   = |C-^{-1}| (A_mm + A_mp psi + A_m,op psi_op_m)
        u_0_m_om  = |C-^{-1}| (A_m,om + A_m,op psi_op_om)
        u_0_om_om = |Ct_om^{-1}| (A_om,p psi1_p_om + A_om,op psi1_op_om)
    """
    ip, im = model.ip, model.im
    io_p, io_m = spec.oplus, spec.ominus
    psi = psi_sol.psi
    cm = model.c_minus_abs[:, None]
    ct_om = np.abs(spec.direction[io_m])[:, None]
    u_m1_om_om, u_m1_om_m, k_m1_op_op, k_m1_op_p = _series_m1(
        model, spec, psi, psi_op_om, psi_op_m)
    u_0_m_m = (model.block(im, im) + model.block(im, ip) @ psi
               + model.block(im, io_p) @ psi_op_m) / cm
    u_0_m_om = (model.block(im, io_m) + model.block(im, io_p) @ psi_op_om) / cm
    u_0_om_om = (model.block(io_m, ip) @ psi1_p_om
                 + model.block(io_m, io_p) @ psi1_op_om) / ct_om
    return SeriesBlocks(u_m1_om_om=u_m1_om_om, u_m1_om_m=u_m1_om_m,
                        u_0_m_m=u_0_m_m, u_0_m_om=u_0_m_om,
                        u_0_om_om=u_0_om_om, k_m1_op_op=k_m1_op_op,
                        k_m1_op_p=k_m1_op_p)


def expand_general(model: FluidModel, psi_sol: PsiSolution,
                   spec: PerturbationSpec) -> PsiExpansion:
    """Expansion when the zero-rate phases split between the two classes.

    The elimination order, each step obtained by collecting powers of eps
    in the four block components of the perturbed Riccati equation:

    1. eps^{-1} of the (op, om) block: inner Riccati equation for psi_op_om
       with the perturbation rates as fluid rates.
    2. eps^{-1} of the (op, m) block: linear equation for psi_op_m.
    3. eps^0 of the (p, om) block: closed form for psi1_p_om.
    4. eps^0 of the (op, om) block: Sylvester equation for psi1_op_om.
    5. eps^0 of the (op, m) block and eps^1 of the (p, om) and (p, m)
       blocks: a coupled linear system in psi1_op_m, psi2_p_om and
       psi1_p_m; substituting the first two into the third leaves one
       Sylvester equation for psi1_p_m, then back-substitution.
    """
    if spec.kind != "rate" or spec.regime != "general":
        raise WrongRegime(f"expected general regime, got {spec.kind}/{spec.regime}")
    ip, im = model.ip, model.im
    io_p, io_m = spec.oplus, spec.ominus
    psi = psi_sol.psi
    cp = model.c_plus[:, None]
    cm_row = model.c_minus_abs[:, None]
    cm_col = model.c_minus_abs[None, :]
    ct_p = spec.direction[ip]
    ct_m = spec.direction[im]
    ct_op = spec.direction[io_p][:, None]
    ct_om_row = np.abs(spec.direction[io_m])[:, None]
    ct_om_col = np.abs(spec.direction[io_m])[None, :]

    # 1. inner Riccati: Ct_op^{-1} A_op,om + Ct_op^{-1} A_op,op X
    #    + X |Ct_om^{-1}| A_om,om + X |Ct_om^{-1}| A_om,op X = 0
    try:
        psi_op_om, _, _, _ = newton_riccati(
            model.block(io_p, io_m) / ct_op,
            model.block(io_p, io_p) / ct_op,
            model.block(io_m, io_m) / ct_om_row,
            model.block(io_m, io_p) / ct_om_row,
            row_scale=spec.direction[io_p])
    except NoConvergence as exc:
        raise InnerRiccatiDiverged(str(exc)) from exc

    # the K-blocks of the eps^{-1} coefficients do not involve psi_op_m
    _, _, k_m1_op_op, k_m1_op_p = _series_m1(
        model, spec, psi, psi_op_om, np.zeros((len(io_p), model.n_minus)))
    neg_k_inv = _inv(-k_m1_op_op)

    # 2. psi_op_m = (-K_m1_op_op)^{-1} (Ct_op^{-1}(A_op,m + A_op,p psi)
    #               + psi_op_om |Ct_om^{-1}| (A_om,m + A_om,p psi))
    psi_op_m = neg_k_inv @ (
        (model.block(io_p, im) + model.block(io_p, ip) @ psi) / ct_op
        + (psi_op_om / ct_om_col) @ (model.block(io_m, im)
                                     + model.block(io_m, ip) @ psi))

    # finalize the eps^{-1} blocks with the true psi_op_m
    u_m1_om_om, u_m1_om_m, _, _ = _series_m1(model, spec, psi, psi_op_om, psi_op_m)
    neg_u_inv = _inv(-u_m1_om_om)

    # 3. psi1_p_om = (C+^{-1}(A_p,om + A_p,op psi_op_om)
    #               + psi |C-^{-1}| (A_m,om + A_m,op psi_op_om)) (-U_m1_om_om)^{-1}
    psi1_p_om = ((model.block(ip, io_m) + model.block(ip, io_p) @ psi_op_om) / cp
                 + (psi / cm_col) @ (model.block(im, io_m)
                                     + model.block(im, io_p) @ psi_op_om)) @ neg_u_inv

    # 4. Sylvester for psi1_op_om:
    #    K_m1_op_op X + X U_m1_om_om = -K_m1_op_p psi1_p_om
    #                                  - psi_op_m |C-^{-1}| (A_m,om + A_m,op psi_op_om)
    u_0_m_om = (model.block(im, io_m) + model.block(im, io_p) @ psi_op_om) / cm_row
    psi1_op_om = solve_sylvester(
        k_m1_op_op, u_m1_om_om,
        -k_m1_op_p @ psi1_p_om - psi_op_m @ u_0_m_om)

    sb = series_blocks(model, spec, psi_sol, psi_op_om, psi_op_m,
                       psi1_p_om, psi1_op_om)

    # eps^0 blocks of K(eps), including the contribution of psi1_p_om
    # through the om rows of |C-(eps)^{-1}|
    k_0_p_p = model.block(ip, ip) / cp + (psi / cm_col) @ model.block(im, ip) \
        + (psi1_p_om / ct_om_col) @ model.block(io_m, ip)
    k_0_p_op = model.block(ip, io_p) / cp + (psi / cm_col) @ model.block(im, io_p) \
        + (psi1_p_om / ct_om_col) @ model.block(io_m, io_p)

    # eps^1 coefficient of U_m,om(eps)
    u_1_m_om = (model.block(im, ip) @ psi1_p_om
                + model.block(im, io_p) @ psi1_op_om) / cm_row \
        + (ct_m[:, None] / cm_row) * sb.u_0_m_om

    # 5. eps^1 of the (p, om) block fixes psi2_p_om = (G + X u_0_m_om) (-U_m1)^{-1}
    #    as an affine function of X = psi1_p_m, with the constant part
    #    G = -C+^{-1} Ct_+ C+^{-1} (A_p,om + A_p,op psi_op_om)
    #        + C+^{-1} (A_pp psi1_p_om + A_p,op psi1_op_om)
    #        + psi1_p_om u_0_om_om + psi u_1_m_om
    ct_p_scale = (ct_p / model.c_plus)[:, None]
    G = -ct_p_scale * ((model.block(ip, io_m) + model.block(ip, io_p) @ psi_op_om) / cp) \
        + (model.block(ip, ip) @ psi1_p_om + model.block(ip, io_p) @ psi1_op_om) / cp \
        + psi1_p_om @ sb.u_0_om_om + psi @ u_1_m_om

    # substitute steps 2' and 5 into the eps^1 coefficient of the (p, m)
    # block; the Sylvester operator pair collapses to the censored (K, U)
    # of the base model, which the tests verify numerically
    k_hat = k_0_p_p + k_0_p_op @ neg_k_inv @ k_m1_op_p
    u_hat = sb.u_0_m_m + sb.u_0_m_om @ neg_u_inv @ u_m1_om_m
    r1 = ct_p_scale * ((model.block(ip, im) + model.block(ip, ip) @ psi
                        + model.block(ip, io_p) @ psi_op_m) / cp) \
        - ((psi / cm_col) * ct_m[None, :]) @ sb.u_0_m_m
    w0 = psi1_op_om @ u_m1_om_m + psi_op_m @ sb.u_0_m_m
    rhs = r1 - k_0_p_op @ neg_k_inv @ w0 - G @ neg_u_inv @ u_m1_om_m
    psi1_p_m = solve_sylvester(k_hat, u_hat, rhs)

    psi1_op_m = neg_k_inv @ (k_m1_op_p @ psi1_p_m + w0)
    psi2_p_om = (G + psi1_p_m @ sb.u_0_m_om) @ neg_u_inv

    n_op, n_om = len(io_p), len(io_m)
    psi_bar = np.block([
        [np.zeros((model.n_plus, n_om)), psi],
        [psi_op_om, psi_op_m]])
    psi1 = np.block([
        [psi1_p_om, psi1_p_m],
        [psi1_op_om, psi1_op_m]])
    return PsiExpansion(
        regime="general", psi_bar=psi_bar, psi1=psi1,
        row_phases=np.concatenate([model.perm[ip], model.perm[io_p]]),
        col_phases=np.concatenate([model.perm[io_m], model.perm[im]]),
        n_up_rows=model.n_plus, n_migrating_cols=n_om,
        aux={"psi_op_om": psi_op_om, "psi_op_m": psi_op_m,
             "psi1_p_om": psi1_p_om, "psi1_op_om": psi1_op_om,
             "psi1_op_m": psi1_op_m, "psi2_p_om": psi2_p_om,
             "series": sb, "k_hat": k_hat, "u_hat": u_hat})


def expand(model: FluidModel, psi_sol: PsiSolution,
           spec: PerturbationSpec) -> PsiExpansion:
    """Dispatch to the expansion route matching the perturbation regime."""
    if spec.kind == "generator":
        psi1 = psi1_generator(model, psi_sol, spec.direction)
        return PsiExpansion(
            regime="generator", psi_bar=psi_sol.psi.copy(), psi1=psi1,
            row_phases=model.perm[model.ip], col_phases=model.perm[model.im],
            n_up_rows=model.n_plus, n_migrating_cols=0)
    if spec.regime == "unaffected":
        psi1 = psi1_rate_unaffected(model, psi_sol, spec.direction)
        return PsiExpansion(
            regime="unaffected", psi_bar=psi_sol.psi.copy(), psi1=psi1,
            row_phases=model.perm[model.ip], col_phases=model.perm[model.im],
            n_up_rows=model.n_plus, n_migrating_cols=0)
    if spec.regime == "to_plus":
        return expand_to_plus(model, psi_sol, spec)
    if spec.regime == "to_minus":
        return expand_to_minus(model, psi_sol, spec)
    return expand_general(model, psi_sol, spec)


def load_perturbation(path, model: FluidModel) -> PerturbationSpec:
    """Load a perturbation file {"kind": ..., "direction": ...}.

    The direction is given in the model file's phase order: a full matrix
    for generator kind, the diagonal as a flat list for rate kind.
    """
    with open(path) as fh:
        doc = json.load(fh)
    kind = doc.get("kind")
    if kind not in ("generator", "rate"):
        raise WrongRegime(f"unknown perturbation kind {kind!r}")
    return validate_perturbation(model, kind, doc["direction"])
