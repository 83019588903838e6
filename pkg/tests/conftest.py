import numpy as np
import pytest

from mmfq import mean_drift, validate_model


def random_generator(n, rng, density=1.0):
    """Random irreducible generator with O(1) rates."""
    A = rng.uniform(0.1, 1.0, (n, n))
    if density < 1.0:
        mask = rng.random((n, n)) < density
        # keep a cycle so the graph stays strongly connected
        for i in range(n):
            mask[i, (i + 1) % n] = True
        A = A * mask
    np.fill_diagonal(A, 0.0)
    np.fill_diagonal(A, -A.sum(axis=1))
    return A


def random_recurrent_model(n, rng, signs=None, max_drift=-0.05):
    """Random validated model with comfortably negative drift."""
    while True:
        A = random_generator(n, rng)
        if signs is None:
            s = np.concatenate([[1, -1], rng.choice([1, 0, -1], size=n - 2)])
            rng.shuffle(s)
        else:
            s = np.asarray(signs)
        c = s * rng.uniform(0.5, 2.0, n)
        model = validate_model(A, c)
        if model.n_plus and model.n_minus and mean_drift(model) < max_drift:
            return model


def random_generator_direction(model, rng, scale=0.3):
    """Zero-row-sum direction (original phase order) with nonnegative
    off-diagonals, so A + eps*dir stays a generator for small eps > 0."""
    n = model.n
    D = rng.uniform(0.0, scale, (n, n))
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def bd_identity_gap(model, spec, expansion):
    """Gap between the migration-block identities of the general regime.

    The four blocks built from the inner first-return matrix and the
    leading series coefficients must reassemble the inverse of the
    (negated) zero-phase block of the generator.  Returns the largest
    entrywise deviation.
    """
    from mmfq.numerics import solve_linear

    sb = expansion.aux["series"]
    io_p, io_m = spec.oplus, spec.ominus
    ct_op = spec.direction[io_p]
    ct_om = np.abs(spec.direction[io_m])
    psi_op_om = expansion.aux["psi_op_om"]
    n_op, n_om = len(io_p), len(io_m)
    neg_k_inv = solve_linear(-sb.k_m1_op_op, np.eye(n_op))
    neg_u_inv = solve_linear(-sb.u_m1_om_om, np.eye(n_om))
    A_om_op = model.A[np.ix_(io_m, io_p)]

    D_om_op = neg_u_inv @ (A_om_op / ct_om[:, None]) @ neg_k_inv / ct_op[None, :]
    D_op_op = neg_k_inv / ct_op[None, :] + psi_op_om @ D_om_op
    D_om_om = neg_u_inv @ (
        (np.eye(n_om) + A_om_op @ neg_k_inv @ (psi_op_om / ct_om[None, :]))
        / ct_om[:, None])
    D_op_om = neg_k_inv @ (psi_op_om / ct_om[None, :]) + psi_op_om @ D_om_om

    i0_split = np.concatenate([io_p, io_m])
    B = solve_linear(-model.A[np.ix_(i0_split, i0_split)],
                     np.eye(n_op + n_om))
    D = np.block([[D_op_op, D_op_om], [D_om_op, D_om_om]])
    return float(np.abs(D - B).max())


@pytest.fixture
def two_phase():
    return validate_model([[-1.0, 1.0], [1.0, -1.0]], [1.0, -2.0])


@pytest.fixture(scope="session")
def case_1a():
    from mmfq.bench import case_model
    return case_model("1a")
