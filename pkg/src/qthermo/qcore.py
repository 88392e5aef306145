"""Dense complex operator algebra and superoperator machinery.

Everything here works on plain numpy arrays: operators are ``(d, d)``
complex matrices, superoperators are ``(d*d, d*d)`` matrices acting on
column-stacked operators. Intended for small Hilbert spaces (d <= ~64);
no sparse or tensor-network representations.

Conventions
-----------
- hbar = 1, energies in units of a reference rate; k_B is carried
  explicitly as :data:`KB`.
- Vectorization is column-stacking: ``vec(A)[i + d*j] = A[i, j]``, so
  ``vec(A @ X @ B) = kron(B.T, A) @ vec(X)``.
"""

import math

import numpy as np
import scipy.linalg

# Boltzmann constant. Temperatures are k_B*T in energy units, so the
# numerical value is 1, but it is written out wherever it belongs.
KB = 1.0

# Centralized numerical tolerances.
TOL_TRACE = 1e-10
TOL_HERM = 1e-10
TOL_PSD = 1e-9
TOL_EIG_RESIDUAL = 1e-8


class EigenvalueError(RuntimeError):
    """Eigen-decomposition failed or did not meet its residual contract."""


def dagger(m):
    """Conjugate transpose."""
    return np.asarray(m).conj().T


def is_hermitian(m, tol=TOL_HERM):
    """max|M - M†| <= tol."""
    m = np.asarray(m)
    return float(np.max(np.abs(m - dagger(m)))) <= tol


def hermitize(m):
    """(M + M†)/2, cleaning numerical asymmetry."""
    return (m + dagger(m)) / 2


def check_density_matrix(rho, tol_trace=TOL_TRACE, tol_herm=TOL_HERM,
                         tol_psd=TOL_PSD):
    """Validate the density-matrix invariants, raising ValueError on failure.

    Checks unit trace, Hermiticity, and positive semi-definiteness up to
    numerical dust (eigenvalues >= -tol_psd).
    """
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > tol_trace:
        raise ValueError(f"trace {tr} deviates from 1 by more than {tol_trace}")
    if not is_hermitian(rho, tol_herm):
        raise ValueError("density matrix is not Hermitian within tolerance")
    evals = np.linalg.eigvalsh(hermitize(rho))
    if evals.min() < -tol_psd:
        raise ValueError(f"density matrix has eigenvalue {evals.min()} < -{tol_psd}")
    return rho


def random_density_matrix(dim, rng, rank=None):
    """Random full-rank density matrix from a Ginibre ensemble."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ dagger(g)
    return rho / np.trace(rho).real


def random_hermitian(dim, rng, scale=1.0):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * hermitize(g)


def kron(a, b):
    """Kronecker product of two operators."""
    return np.kron(np.asarray(a), np.asarray(b))


def partial_trace(c, dim_a, dim_b, keep="A"):
    """Trace out one factor of a bipartite operator on H_A (x) H_B.

    Parameters
    ----------
    c : (dim_a*dim_b, dim_a*dim_b) array
        Operator on the composite space, with the A factor most
        significant (numpy kron convention).
    keep : {"A", "B"}
        Which subsystem survives.

    The result has the trace of ``c``; dimension mismatches are rejected.
    """
    c = np.asarray(c)
    d = dim_a * dim_b
    if c.shape != (d, d):
        raise ValueError(f"operator shape {c.shape} incompatible with dims "
                         f"({dim_a}, {dim_b})")
    r = c.reshape(dim_a, dim_b, dim_a, dim_b)
    if keep == "A":
        return np.einsum("abcb->ac", r)
    if keep == "B":
        return np.einsum("abac->bc", r)
    raise ValueError(f"keep must be 'A' or 'B', got {keep!r}")


def vectorize(m):
    """Column-stack an operator into a vector."""
    m = np.asarray(m)
    return m.reshape(-1, order="F")


def unvectorize(v):
    """Inverse of :func:`vectorize`; rejects lengths that are not squares."""
    v = np.asarray(v)
    d = math.isqrt(v.size)
    if d * d != v.size:
        raise ValueError(f"vector length {v.size} is not a perfect square")
    return v.reshape((d, d), order="F")


def spre(a):
    """Superoperator for left multiplication, X -> A X."""
    a = np.asarray(a)
    return np.kron(np.eye(a.shape[0]), a)


def spost(b):
    """Superoperator for right multiplication, X -> X B."""
    b = np.asarray(b)
    return np.kron(b.T, np.eye(b.shape[0]))


def commutator_superop(h):
    """Superoperator for rho -> -i[H, rho]."""
    return -1j * (spre(h) - spost(h))


def dissipator_superop(op):
    """Superoperator for rho -> L rho L† - {L†L, rho}/2."""
    ld_l = dagger(op) @ op
    return (np.kron(op.conj(), op)
            - 0.5 * spre(ld_l)
            - 0.5 * spost(ld_l))


def trace_vector(dim):
    """Left vector implementing Tr: trace_vector(d) @ vec(rho) = Tr(rho)."""
    return vectorize(np.eye(dim)).conj()


def eig_general(m, tol_residual=TOL_EIG_RESIDUAL):
    """Eigenvalues and right eigenvectors of a general complex matrix.

    Returns ``(values, vectors)`` sorted by descending real part of the
    eigenvalue; ``vectors[:, j]`` belongs to ``values[j]``. The residual
    ``max_j |M v_j - v_j nu_j|`` is checked against
    ``tol_residual * ||M||`` and an :class:`EigenvalueError` is raised if
    the solver fails to converge or the residual contract is violated.
    """
    m = np.asarray(m, dtype=complex)
    try:
        values, vectors = np.linalg.eig(m)
    except np.linalg.LinAlgError as exc:
        raise EigenvalueError(f"eigensolver did not converge: {exc}") from exc
    order = np.argsort(-values.real, kind="stable")
    values = values[order]
    vectors = vectors[:, order]
    norm = np.linalg.norm(m, 2)
    residual = np.max(np.abs(m @ vectors - vectors * values[None, :]))
    if norm > 0 and residual > tol_residual * norm:
        raise EigenvalueError(
            f"eigenpair residual {residual:.3e} exceeds {tol_residual:.1e}*||M||")
    return values, vectors


def spectral_projectors(m, cluster_tol=1e-9):
    """Spectral decomposition M = sum_j nu_j P_j with degeneracy-safe projectors.

    Eigenvalues within ``cluster_tol`` of each other (relative to ||M||)
    are grouped and represented by a single projector onto their joint
    invariant subspace, so degenerate spectra (routine for Liouvillians
    at symmetry points) do not produce ill-conditioned rank-1 pieces.

    Returns a list of ``(eigenvalue, projector)`` pairs.
    """
    m = np.asarray(m, dtype=complex)
    values, vectors = eig_general(m)
    # defective matrices yield (nearly) parallel eigenvectors; inverting
    # them would silently produce garbage projectors
    if np.linalg.cond(vectors) > 1e10:
        raise EigenvalueError("matrix is not diagonalizable within working "
                              "precision (eigenvector basis is singular)")
    v_inv = np.linalg.inv(vectors)
    scale = max(np.linalg.norm(m, 2), 1.0)
    groups = []
    used = np.zeros(values.size, dtype=bool)
    for j in range(values.size):
        if used[j]:
            continue
        members = np.where(np.abs(values - values[j]) <= cluster_tol * scale)[0]
        members = members[~used[members]]
        used[members] = True
        groups.append(members)
    out = []
    for members in groups:
        proj = vectors[:, members] @ v_inv[members, :]
        out.append((complex(values[members].mean()), proj))
    return out


def expm_apply(m, v, t):
    """Propagate dv/dt = M v for time t >= 0, returning e^{M t} v.

    Realized with scipy's scaling-and-squaring matrix exponential; the
    semigroup property e^{M(t1+t2)} = e^{M t1} e^{M t2} is part of the
    contract and exercised by the test suite.
    """
    if t < 0:
        raise ValueError(f"propagation time must be >= 0, got {t}")
    m = np.asarray(m, dtype=complex)
    if t == 0:
        return np.array(v, dtype=complex, copy=True)
    prop = scipy.linalg.expm(m * t)
    if not np.all(np.isfinite(prop)):
        raise FloatingPointError("matrix exponential overflowed/underflowed")
    return prop @ np.asarray(v, dtype=complex)


def expm_dense(m, t):
    """Dense propagator e^{M t}."""
    if t < 0:
        raise ValueError(f"propagation time must be >= 0, got {t}")
    return scipy.linalg.expm(np.asarray(m, dtype=complex) * t)
