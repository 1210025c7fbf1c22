"""Matrix polynomials with Hermitian coefficients.

Quadratic pencils P(z) = z^2 I - (2 M_n) z + [M^2]_n are the object of the
second-order projection method. Their spectra come from a block-companion
linearization; the spectral function sigma_P(z) (smallest singular value of
P(z)) and the weighted pseudospectra are defined for any degree.
"""

import logging
import warnings
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal, NamedTuple, Protocol

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, svds

from second_order_projection.config import get_settings
from second_order_projection.errors import EigensolverError, StructureError

logger = logging.getLogger(__name__)

ResidualMode = Literal["auto", "svd", "eigenvector", "none"]

# Relative distance within which split real roots and conjugate partners are merged
SPLIT_ROOT_RTOL = 1e-6


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _as_square(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=complex if np.iscomplexobj(a) else float, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError(f"{name} must have dimension >= 1")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class HermitianMatrix:
    """Dense Hermitian matrix, symmetrized on construction."""

    entries: np.ndarray
    defect: float = 0.0

    @classmethod
    def from_array(cls, a, rtol: float | None = None) -> "HermitianMatrix":
        """Symmetrize ``a`` as (A + A*)/2 and record the defect ||A - A*||.

        Raises:
            StructureError: if the defect exceeds ``rtol`` times the matrix scale

        """
        if rtol is None:
            rtol = get_settings().hermitian_rtol
        arr = _as_square(a, "HermitianMatrix")
        defect = float(np.linalg.norm(arr - arr.conj().T, ord=np.inf))
        scale = max(1.0, float(np.linalg.norm(arr, ord=np.inf)))
        if defect > rtol * scale:
            raise StructureError(
                f"Matrix is not Hermitian: defect {defect:.3e} exceeds {rtol:.1e} x scale {scale:.3e}"
            )
        sym = (arr + arr.conj().T) / 2
        if np.iscomplexobj(sym) and not np.any(sym.imag):
            sym = sym.real.copy()
        return cls(_readonly(sym), defect)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


class MatrixPolynomial(Protocol):
    """Anything that can be evaluated as a square matrix at a complex point."""

    @property
    def dim(self) -> int: ...

    @property
    def degree(self) -> int: ...

    @property
    def scale(self) -> float: ...

    @property
    def hermitian(self) -> bool: ...

    def evaluate(self, z: complex) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class GeneralPencil:
    """P(z) = sum_k A_k z^k with an invertible leading coefficient."""

    coeffs: tuple[np.ndarray, ...]
    hermitian: bool = False

    def __post_init__(self):
        if not self.coeffs:
            raise ValueError("GeneralPencil needs at least one coefficient")
        mats = tuple(_readonly(_as_square(a, f"A_{k}")) for k, a in enumerate(self.coeffs))
        dims = {a.shape[0] for a in mats}
        if len(dims) != 1:
            raise ValueError(f"All coefficients must share one dimension, got {sorted(dims)}")
        smin = scipy.linalg.svdvals(mats[-1])[-1]
        if smin <= 1e-12:
            raise ValueError(f"Leading coefficient is singular (smallest singular value {smin:.3e})")
        object.__setattr__(self, "coeffs", mats)

    @property
    def dim(self) -> int:
        return self.coeffs[0].shape[0]

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def scale(self) -> float:
        norms = [np.linalg.norm(a, ord=np.inf) for a in self.coeffs[:-1]]
        return max([1.0, *norms])

    def evaluate(self, z: complex) -> np.ndarray:
        # Horner
        out = np.array(self.coeffs[-1], dtype=complex)
        for a in reversed(self.coeffs[:-1]):
            out = out * z + a
        return out


@dataclass(frozen=True, eq=False)
class QuadraticPencil:
    """Monic Hermitian quadratic P_n(z) = z^2 - (2 M_n) z + [M^2]_n.

    ``factor``, when known, is a matrix A with P_n(z) = (z - A)(z - A*).
    """

    linear_coeff: HermitianMatrix
    constant_coeff: HermitianMatrix
    factor: np.ndarray | None = None
    n_index: int | None = None

    def __post_init__(self):
        if self.linear_coeff.dim != self.constant_coeff.dim:
            raise ValueError(
                f"Coefficient dimensions differ: {self.linear_coeff.dim} vs {self.constant_coeff.dim}"
            )
        c = self.constant_coeff.entries
        c_scale = max(1.0, float(np.linalg.norm(c, ord=np.inf)))
        lowest = float(scipy.linalg.eigvalsh(c, subset_by_index=[0, 0])[0])
        if lowest < -1e-10 * c_scale:
            raise StructureError(
                f"Constant coefficient is not positive semidefinite (smallest eigenvalue {lowest:.3e})"
            )
        if self.factor is not None:
            a = _readonly(_as_square(self.factor, "factor"))
            if a.shape[0] != self.dim:
                raise ValueError("factor dimension does not match the pencil")
            object.__setattr__(self, "factor", a)
            defect = factorization_defect(self, a)
            if defect > get_settings().hermitian_rtol * self.scale:
                raise StructureError(f"P(z) != (z-A)(z-A*): factorization defect {defect:.3e}")

    @classmethod
    def from_truncation(
        cls,
        m_n,
        m2_n,
        factor=None,
        n_index: int | None = None,
    ) -> "QuadraticPencil":
        """Build the pencil from the truncation pair (M_n, [M^2]_n)."""
        m = HermitianMatrix.from_array(m_n)
        m2 = HermitianMatrix.from_array(m2_n)
        linear = HermitianMatrix(_readonly(2 * m.entries), 2 * m.defect)
        return cls(linear, m2, factor=factor, n_index=n_index)

    @property
    def dim(self) -> int:
        return self.linear_coeff.dim

    @property
    def degree(self) -> int:
        return 2

    @property
    def hermitian(self) -> bool:
        return True

    @property
    def m_n(self) -> np.ndarray:
        return self.linear_coeff.entries / 2

    @property
    def scale(self) -> float:
        return max(
            1.0,
            float(np.linalg.norm(self.linear_coeff.entries, ord=np.inf)),
            float(np.linalg.norm(self.constant_coeff.entries, ord=np.inf)),
        )

    def evaluate(self, z: complex) -> np.ndarray:
        out = -z * self.linear_coeff.entries + self.constant_coeff.entries
        out = out.astype(complex, copy=False)
        out[np.diag_indices(self.dim)] += z * z
        return out

    def coefficients(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Coefficients A_0, A_1, A_2 in ascending order."""
        return (
            self.constant_coeff.entries,
            -self.linear_coeff.entries,
            np.eye(self.dim),
        )

    def as_general(self) -> GeneralPencil:
        return GeneralPencil(self.coefficients(), hermitian=True)


class PseudospectraWeights(NamedTuple):
    """Weights (w_0, ..., w_m) measuring perturbations of each coefficient."""

    w: tuple[float, ...]

    @classmethod
    def of(cls, *w: float) -> "PseudospectraWeights":
        if not w or any(x < 0 for x in w):
            raise ValueError("Weights must be a nonempty list of nonnegative numbers")
        return cls(tuple(float(x) for x in w))

    def radius(self, z: complex, eps: float) -> float:
        """eps * (w_0 + w_1 |z| + ... + w_m |z|^m)."""
        r = abs(z)
        return eps * sum(wk * r**k for k, wk in enumerate(self.w))


class Rect(NamedTuple):
    re_min: float
    re_max: float
    im_min: float
    im_max: float


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    """Eigenvalues of a pencil with multiplicity, sorted by (real, imag)."""

    eigenvalues: np.ndarray
    residuals: np.ndarray
    residual_kind: str
    conjugate_defect: float | None
    scale: float
    dim: int
    degree: int

    def __len__(self) -> int:
        return len(self.eigenvalues)

    @property
    def max_residual(self) -> float:
        if self.residual_kind == "none" or not len(self.residuals):
            return float("nan")
        return float(np.max(self.residuals))


def evaluate(pencil: MatrixPolynomial, z: complex) -> np.ndarray:
    """Return P(z) as a dense complex matrix."""
    return pencil.evaluate(z)


def companion_pair(pencil: QuadraticPencil | GeneralPencil) -> tuple[np.ndarray, np.ndarray | None]:
    """Block-companion pair (C, D) with Spec P = {z : det(C - z D) = 0}.

    ``D`` is None when the leading coefficient is the identity.
    """
    if isinstance(pencil, QuadraticPencil):
        return companion_linearize(pencil), None
    n = pencil.dim
    if pencil.degree == 1:
        a0, a1 = pencil.coeffs
        return -a0, a1
    if pencil.degree != 2:
        raise ValueError(f"Eigenvalues are only available for degree 1 or 2, got {pencil.degree}")
    a0, a1, a2 = pencil.coeffs
    dtype = np.result_type(a0, a1, a2)
    c = np.block([
        [np.zeros((n, n), dtype=dtype), np.eye(n, dtype=dtype)],
        [-a0, -a1],
    ])
    if np.array_equal(a2, np.eye(n)):
        return c, None
    d = np.block([
        [np.eye(n, dtype=dtype), np.zeros((n, n), dtype=dtype)],
        [np.zeros((n, n), dtype=dtype), a2],
    ])
    return c, d


def companion_linearize(pencil: QuadraticPencil) -> np.ndarray:
    """Block-companion matrix [[0, I], [-[M^2]_n, 2 M_n]] of dimension 2 dim."""
    n = pencil.dim
    lin = pencil.linear_coeff.entries
    const = pencil.constant_coeff.entries
    dtype = np.result_type(lin, const)
    return np.block([
        [np.zeros((n, n), dtype=dtype), np.eye(n, dtype=dtype)],
        [-const, lin],
    ])


def _eigenvector_residuals(
    pencil: QuadraticPencil | GeneralPencil,
    eigs: np.ndarray,
    vectors: np.ndarray,
) -> np.ndarray:
    n = pencil.dim
    x = vectors[:n, :]
    if isinstance(pencil, QuadraticPencil):
        coeffs = pencil.coefficients()
    else:
        coeffs = pencil.coeffs
    px = np.zeros_like(x, dtype=complex)
    for k, a in enumerate(coeffs):
        px += (a @ x) * eigs[np.newaxis, :] ** k
    norms = np.linalg.norm(x, axis=0)
    norms[norms == 0] = 1.0
    return np.linalg.norm(px, axis=0) / norms


def eigenvalues(
    pencil: QuadraticPencil | GeneralPencil,
    residuals: ResidualMode = "auto",
) -> SpectrumResult:
    """All m * dim eigenvalues of a degree-1 or degree-2 pencil.

    Residuals are sigma_P at each eigenvalue ("svd"), or the eigenvector
    residual ||P(z) x|| / ||x|| which bounds sigma_P(z) from above
    ("eigenvector"). "auto" picks "svd" up to EXACT_RESIDUAL_MAX_DIM.
    Spectra of Hermitian pencils are passed through symmetrize_spectrum.

    Raises:
        EigensolverError: if the dense eigensolver does not converge

    """
    settings = get_settings()
    n_index = getattr(pencil, "n_index", None)
    if residuals == "auto":
        residuals = "svd" if pencil.dim <= settings.exact_residual_max_dim else "eigenvector"

    vectors = None
    known_factor = isinstance(pencil, QuadraticPencil) and pencil.factor is not None
    if known_factor:
        if residuals == "eigenvector":
            residuals = "svd"
    else:
        c, d = companion_pair(pencil)
    try:
        if known_factor:
            w = scipy.linalg.eigvals(pencil.factor)
            eigs = np.concatenate([w, w.conj()])
        elif residuals == "eigenvector":
            eigs, vectors = scipy.linalg.eig(c, d, right=True)
        else:
            eigs = scipy.linalg.eigvals(c, d)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise EigensolverError(pencil.dim, n_index, str(e)) from e

    eigs = np.asarray(eigs, dtype=complex)
    if not np.all(np.isfinite(eigs)):
        raise EigensolverError(pencil.dim, n_index, "non-finite eigenvalues")

    order = np.lexsort((eigs.imag, eigs.real))
    eigs = eigs[order]
    raw_defect = None
    if pencil.hermitian and not known_factor:
        raw_defect = conjugate_pairing_defect(eigs)
        eigs, moved = symmetrize_spectrum(eigs, SPLIT_ROOT_RTOL)
        order = order[moved]
    if residuals == "svd":
        res = np.array([spectral_function(pencil, z) for z in eigs])
    elif residuals == "eigenvector":
        res = _eigenvector_residuals(pencil, eigs, vectors[:, order])
    else:
        res = np.full(len(eigs), np.nan)

    defect = conjugate_pairing_defect(eigs) if pencil.hermitian else None
    scale = pencil.scale
    if raw_defect is not None:
        logger.debug(f"Raw conjugate defect {raw_defect:.3e} for dim={pencil.dim}")
    if defect is not None and defect > settings.residual_rtol:
        logger.warning(f"Spectrum of dim={pencil.dim} pencil breaks conjugate symmetry by {defect:.3e}")
    if residuals != "none" and np.max(res) > settings.residual_rtol * scale:
        logger.warning(
            f"Largest eigenvalue residual {np.max(res):.3e} exceeds tolerance for dim={pencil.dim}"
        )
    logger.debug(f"Solved pencil dim={pencil.dim} n={n_index}: {len(eigs)} eigenvalues")
    return SpectrumResult(
        eigenvalues=_readonly(eigs),
        residuals=_readonly(res),
        residual_kind=residuals,
        conjugate_defect=defect,
        scale=scale,
        dim=pencil.dim,
        degree=pencil.degree,
    )


def _smallest_singular_value_iterative(p: np.ndarray) -> float:
    """sigma_min(P) = 1 / ||P^{-1}||, the norm found by ARPACK on an LU-backed operator."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(p, check_finite=False)
    if np.any(np.diag(lu) == 0):
        return 0.0
    factors = (lu, piv)
    op = LinearOperator(
        p.shape,
        matvec=lambda x: scipy.linalg.lu_solve(factors, x),
        rmatvec=lambda x: scipy.linalg.lu_solve(factors, x, trans=2),
        dtype=p.dtype,
    )
    try:
        largest = svds(op, k=1, which="LM", return_singular_vectors=False, random_state=0)
    except ArpackNoConvergence:
        logger.warning(f"ARPACK did not converge for dim={p.shape[0]}, falling back to dense SVD")
        return float(scipy.linalg.svdvals(p)[-1])
    inv_norm = float(np.max(largest))
    return 0.0 if not np.isfinite(inv_norm) else 1.0 / inv_norm


def spectral_function(pencil: MatrixPolynomial, z: complex) -> float:
    """Smallest singular value of P(z); zero exactly on Spec P."""
    p = pencil.evaluate(z)
    if pencil.dim <= get_settings().svd_dense_max_dim:
        return float(scipy.linalg.svdvals(p, check_finite=False)[-1])
    return _smallest_singular_value_iterative(p)


def pseudospectrum_member(
    pencil: MatrixPolynomial,
    z: complex,
    eps: float,
    weights: PseudospectraWeights | Sequence[float],
) -> bool:
    """Whether z lies in the weighted eps-pseudospectrum.

    Membership is sigma_P(z) <= eps * sum_k w_k |z|^k. At eps = 0 the eigenvalue
    residual tolerance stands in for zero so that Spec P is recovered numerically.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if not isinstance(weights, PseudospectraWeights):
        weights = PseudospectraWeights.of(*weights)
    if len(weights.w) != pencil.degree + 1:
        raise ValueError(f"Expected {pencil.degree + 1} weights, got {len(weights.w)}")
    if eps > 0 and not any(weights.w):
        raise ValueError("Weights must not all vanish when eps > 0")
    return spectral_function(pencil, z) <= pseudospectrum_radius(pencil, z, eps, weights)


def pseudospectrum_radius(
    pencil: MatrixPolynomial,
    z: complex,
    eps: float,
    weights: PseudospectraWeights,
) -> float:
    """Membership threshold eps * sum_k w_k |z|^k, or the residual tolerance at eps = 0."""
    if eps == 0:
        return get_settings().residual_rtol * pencil.scale
    return weights.radius(z, eps)


def grid_centres(rect: Rect, resolution: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Cell-centre coordinates (re of length nx, im of length ny)."""
    rect = Rect(*rect)
    nx, ny = resolution
    if nx < 2 or ny < 2:
        raise ValueError("Grid resolution must be at least 2 x 2")
    if not (rect.re_max > rect.re_min and rect.im_max > rect.im_min):
        raise ValueError(f"Degenerate rectangle {tuple(rect)}")
    re = rect.re_min + (2 * np.arange(nx) + 1) * (rect.re_max - rect.re_min) / (2 * nx)
    im = rect.im_min + (2 * np.arange(ny) + 1) * (rect.im_max - rect.im_min) / (2 * ny)
    return re, im


def grid_sample(
    pencil: MatrixPolynomial,
    rect: Rect,
    resolution: tuple[int, int],
    workers: int = 1,
) -> np.ndarray:
    """Sample sigma_P at the cell centres; shape (ny, nx), row j is im[j]."""
    re, im = grid_centres(rect, resolution)

    def row(y: float) -> np.ndarray:
        return np.array([spectral_function(pencil, complex(x, y)) for x in re])

    if workers <= 1:
        rows = [row(y) for y in im]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, im))
    return np.vstack(rows)


def rank_one_distance_witness(pencil: MatrixPolynomial, z: complex) -> np.ndarray:
    """Rank-one E with ||E|| = sigma_P(z) and P(z) + E singular.

    Built from the singular pair of the smallest singular value:
    E = -sigma u v*, so that (P(z) + E) v = 0.

    Raises:
        ValueError: if z is (numerically) in Spec P

    """
    p = pencil.evaluate(z)
    u, s, vh = scipy.linalg.svd(p)
    sigma = s[-1]
    if sigma <= get_settings().residual_rtol * pencil.scale:
        raise ValueError(f"z={z} lies in the spectrum; the witness is the zero perturbation")
    return -sigma * np.outer(u[:, -1], vh[-1, :])


def factorization_defect(pencil: QuadraticPencil, factor: np.ndarray) -> float:
    """Distance of P(z) from (z - A)(z - A*), measured on both coefficients."""
    a = np.asarray(factor)
    lin = np.linalg.norm(a + a.conj().T - pencil.linear_coeff.entries, ord=2)
    const = np.linalg.norm(a @ a.conj().T - pencil.constant_coeff.entries, ord=2)
    return float(max(lin, const))


def conjugate_pairing_defect(eigs: Sequence[complex] | np.ndarray) -> float:
    """Greedy match of every eigenvalue with the conjugate of an unmatched one.

    Values are visited by ascending real part; returns max |z - conj(w)| / (1 + |z|).
    """
    values = np.asarray(eigs, dtype=complex)
    order = np.lexsort((values.imag, values.real))
    values = values[order]
    unmatched = np.ones(len(values), dtype=bool)
    worst = 0.0
    for i, z in enumerate(values):
        if not unmatched[i]:
            continue
        unmatched[i] = False
        target = np.conj(z)
        if abs(z.imag) == 0.0:
            continue
        candidates = np.flatnonzero(unmatched)
        if len(candidates) == 0:
            worst = max(worst, abs(z - target) / (1 + abs(z)))
            continue
        dist = np.abs(values[candidates] - target)
        j = candidates[np.argmin(dist)]
        # a self-pair is cheaper when z is nearly real
        self_dist = abs(z - target)
        if self_dist <= dist.min():
            worst = max(worst, self_dist / (1 + abs(z)))
            continue
        unmatched[j] = False
        worst = max(worst, dist.min() / (1 + abs(z)))
    return float(worst)


def symmetrize_spectrum(eigs: Sequence[complex] | np.ndarray, rtol: float) -> tuple[np.ndarray, np.ndarray]:
    """Restore exact conjugate symmetry of a Hermitian pencil's spectrum.

    Conjugate partners z, w are replaced by m, conj(m) with m = (z + conj(w)) / 2.
    On the real axis P(x) is positive semidefinite, so real roots have even
    multiplicity and the eigensolver returns them split by about sqrt(eps).
    Values within ``rtol * (1 + |z|)`` of their own conjugate are made real,
    and runs of such values closer than that collapse to their mean.

    Returns the symmetrized values sorted by (real, imag) and the permutation
    taking the input order to the output order.
    """
    values = np.asarray(eigs, dtype=complex)
    order = np.lexsort((values.imag, values.real))
    values = values[order]
    out = values.copy()
    unmatched = np.ones(len(values), dtype=bool)
    on_axis: list[int] = []
    for i, z in enumerate(values):
        if not unmatched[i]:
            continue
        unmatched[i] = False
        tol = rtol * (1 + abs(z))
        self_dist = 2 * abs(z.imag)
        candidates = np.flatnonzero(unmatched)
        if len(candidates):
            dist = np.abs(values[candidates] - np.conj(z))
            k = int(np.argmin(dist))
            if dist[k] < self_dist and dist[k] <= tol:
                j = candidates[k]
                unmatched[j] = False
                m = (z + np.conj(values[j])) / 2
                out[i], out[j] = m, np.conj(m)
                continue
        if self_dist <= tol:
            out[i] = z.real
            on_axis.append(i)

    on_axis.sort(key=lambda i: out[i].real)
    run = on_axis[:1]
    for i in [*on_axis[1:], None]:
        if i is not None and out[i].real - out[run[-1]].real <= rtol * (1 + abs(out[i])):
            run.append(i)
            continue
        if len(run) > 1:
            out[run] = np.mean(out[run].real)
        run = [i]

    resort = np.lexsort((out.imag, out.real))
    return out[resort], order[resort]


def schur_complement_min(pencil: QuadraticPencil) -> float:
    """Smallest eigenvalue of [M^2]_n - M_n^2, nonnegative for true truncations."""
    m = pencil.m_n
    diff = pencil.constant_coeff.entries - m @ m
    diff = (diff + diff.conj().T) / 2
    return float(scipy.linalg.eigvalsh(diff, subset_by_index=[0, 0])[0])
