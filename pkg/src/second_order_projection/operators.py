"""Truncation matrices M_n and [M^2]_n for the model operators.

Every builder is a pure function of (model, n). Matrices are expressed in a
fixed orthonormal basis:

* ``fourier_b1``: e^{ijx}, j = -n..n, normalized inner product (1/2pi) int f conj(g).
* ``direct_sum_b2``: interleaved e_{-n}, h_{-n}, ..., e_n, h_n of L^2 + L^2.
* ``schrodinger_hermite`` and ``harmonic_sanity``: Hermite functions phi_0..phi_n.
"""

import functools
import logging
import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11: same str()/format() behavior as enum.StrEnum
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__

        @staticmethod
        def _generate_next_value_(name, start, count, last_values):
            return name.lower()
from types import MappingProxyType
from typing import Any

import numpy as np
import scipy.linalg
import scipy.special

from second_order_projection.config import get_settings
from second_order_projection.errors import QuadratureError, StructureError
from second_order_projection.matpoly import HermitianMatrix, QuadraticPencil

logger = logging.getLogger(__name__)

Potential = Callable[[np.ndarray], np.ndarray]

# Number of Mathieu bands listed for a periodic potential; the last one is open above.
MATHIEU_BANDS = 6

# Largest change of any M_n entry accepted when the Gauss-Hermite node count doubles
HERMITE_GATE_ATOL = 1e-8


class ModelKind(StrEnum):
    FOURIER_B1 = "fourier_b1"
    DIRECT_SUM_B2 = "direct_sum_b2"
    SCHRODINGER_HERMITE = "schrodinger_hermite"
    SHIFT_FIXTURE = "shift_fixture"
    HARMONIC_SANITY = "harmonic_sanity"


@dataclass(frozen=True)
class SpectrumInfo:
    """Known spectral data of a model operator.

    ``discrete_eigenvalues`` is None when the values are deferred to the oracle.
    """

    essential_bands: tuple[tuple[float, float], ...] = ()
    discrete_eigenvalues: tuple[float, ...] | None = None

    def __post_init__(self):
        bands = tuple(sorted((float(a), float(b)) for a, b in self.essential_bands))
        for a, b in bands:
            if a > b:
                raise ValueError(f"Band [{a}, {b}] is reversed")
        for (_, b0), (a1, _) in zip(bands, bands[1:]):
            if a1 <= b0:
                raise ValueError(f"Essential bands overlap near {a1}")
        object.__setattr__(self, "essential_bands", bands)
        if self.discrete_eigenvalues is not None:
            object.__setattr__(
                self, "discrete_eigenvalues", tuple(sorted(float(x) for x in self.discrete_eigenvalues))
            )

    def with_discrete(self, values) -> "SpectrumInfo":
        return SpectrumInfo(self.essential_bands, tuple(values))


@dataclass(frozen=True, eq=False)
class OperatorModel:
    kind: ModelKind
    parameters: Mapping[str, Any] = field(default_factory=dict)
    spectrum_info: SpectrumInfo = field(default_factory=SpectrumInfo)
    potential: Potential | None = None

    def basis_dim(self, n: int) -> int:
        match self.kind:
            case ModelKind.FOURIER_B1:
                return 2 * n + 1
            case ModelKind.DIRECT_SUM_B2:
                return 2 * (2 * n + 1)
            case ModelKind.SHIFT_FIXTURE:
                return n
            case _:
                return n + 1


@dataclass(frozen=True, eq=False)
class TruncationPair:
    """Compressions M_n and [M^2]_n of a model operator to its n-th basis block."""

    n_index: int
    m_n: HermitianMatrix
    m2_n: HermitianMatrix
    factor: np.ndarray | None = None

    def __post_init__(self):
        if self.m_n.dim != self.m2_n.dim:
            raise ValueError("M_n and [M^2]_n have different dimensions")
        m = self.m_n.entries
        diff = self.m2_n.entries - m @ m
        lowest = float(scipy.linalg.eigvalsh((diff + diff.conj().T) / 2, subset_by_index=[0, 0])[0])
        if lowest < -1e-9 * self.scale:
            raise StructureError(f"[M^2]_n - M_n^2 is not positive semidefinite (smallest eigenvalue {lowest:.3e})")

    @property
    def dim(self) -> int:
        return self.m_n.dim

    @property
    def scale(self) -> float:
        return max(
            1.0,
            2 * float(np.linalg.norm(self.m_n.entries, ord=np.inf)),
            float(np.linalg.norm(self.m2_n.entries, ord=np.inf)),
        )

    def pencil(self) -> QuadraticPencil:
        return QuadraticPencil.from_truncation(
            self.m_n.entries, self.m2_n.entries, factor=self.factor, n_index=self.n_index
        )


# Fourier data of s(x) = -2 + sin 2x on (-pi, 0], 2 + sin 2x on (0, pi]


def fourier_coeff_s(j: int) -> complex:
    """Normalized Fourier coefficient of the piecewise symbol s."""
    return complex(_s_hat(np.array([j]))[0])


def fourier_coeff_s_squared(j: int) -> complex:
    """Fourier coefficient of s^2 = 4.5 + 4 sign(x) sin 2x - cos(4x)/2."""
    return complex(_s2_hat(np.array([j]))[0])


def _s_hat(j: np.ndarray) -> np.ndarray:
    j = np.asarray(j, dtype=int)
    out = np.zeros(j.shape, dtype=complex)
    odd = j % 2 != 0
    out[odd] = 4 / (1j * np.pi * j[odd])
    out[j == 2] = 1 / 2j
    out[j == -2] = -1 / 2j
    return out


def _s2_hat(j: np.ndarray) -> np.ndarray:
    j = np.asarray(j, dtype=int)
    out = np.zeros(j.shape, dtype=complex)
    odd = j % 2 != 0
    out[odd] = 16 / (np.pi * (4 - j[odd].astype(float) ** 2))
    out[j == 0] = 4.5
    out[np.abs(j) == 4] = -0.25
    return out


@dataclass(frozen=True, eq=False)
class FourierCoeffTable:
    """s_hat(j) and s2_hat(j) for j = -J..J."""

    half_width: int
    s_hat: np.ndarray
    s2_hat: np.ndarray

    @classmethod
    def build(cls, half_width: int) -> "FourierCoeffTable":
        j = np.arange(-half_width, half_width + 1)
        table = cls(half_width, _s_hat(j), _s2_hat(j))
        for values in (table.s_hat, table.s2_hat):
            if np.max(np.abs(values - values[::-1].conj()), initial=0.0) > 1e-12:
                raise ValueError("Fourier table is not conjugate symmetric")
        return table

    def at(self, j: int) -> tuple[complex, complex]:
        if abs(j) > self.half_width:
            raise IndexError(f"j={j} outside table of half width {self.half_width}")
        i = j + self.half_width
        return complex(self.s_hat[i]), complex(self.s2_hat[i])


def _toeplitz_from(coeff: Callable[[np.ndarray], np.ndarray], n: int) -> np.ndarray:
    """T_{jk} = coeff(j - k) for j, k = -n..n."""
    lags = np.arange(0, 2 * n + 1)
    return scipy.linalg.toeplitz(coeff(lags), coeff(-lags))


def _trig(coeffs: Mapping[int, complex]) -> Callable[[np.ndarray], np.ndarray]:
    def lookup(j: np.ndarray) -> np.ndarray:
        return np.array([coeffs.get(int(k), 0.0) for k in np.ravel(j)], dtype=complex).reshape(np.shape(j))

    return lookup


def _trig_square(coeffs: Mapping[int, complex]) -> dict[int, complex]:
    out: dict[int, complex] = {}
    for a, ca in coeffs.items():
        for b, cb in coeffs.items():
            out[a + b] = out.get(a + b, 0.0) + ca * cb
    return out


def _with_rank_one(
    s: np.ndarray,
    s2: np.ndarray,
    g: np.ndarray,
    v: np.ndarray,
    c: float,
    g_norm2: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Add K = c <., G> G to a multiplication operator S.

    ``g`` holds the coordinates of G in the truncated basis and ``v`` those of SG.
    (S+K)^2 = S^2 + SK + KS + K^2 maps onto S^2 + c(v g* + g v*) + c^2 |G|^2 g g*.
    """
    gg = np.outer(g, g.conj())
    m = s + c * gg
    m2 = s2 + c * (np.outer(v, g.conj()) + np.outer(g, v.conj())) + c * c * g_norm2 * gg
    return m, m2


def build_b1(model: OperatorModel | None, n: int) -> TruncationPair:
    """Fourier-basis truncation of M = S + K with K f = 2 f_hat(0)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    s = _toeplitz_from(_s_hat, n)
    s2 = _toeplitz_from(_s2_hat, n)
    g = np.zeros(2 * n + 1)
    g[n] = 1.0
    v = _s_hat(np.arange(-n, n + 1))
    m, m2 = _with_rank_one(s, s2, g, v, c=2.0, g_norm2=1.0)
    return TruncationPair(n, HermitianMatrix.from_array(m), HermitianMatrix.from_array(m2))


# s_1 = -2 + sin x and s_2 = 2 + sin x, sin x = (e^{ix} - e^{-ix}) / 2i
B2_SYMBOLS: tuple[dict[int, complex], dict[int, complex]] = (
    {0: -2.0, 1: -0.5j, -1: 0.5j},
    {0: 2.0, 1: -0.5j, -1: 0.5j},
)


def _interleave(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    d = first.shape[0]
    out = np.zeros((2 * d, 2 * d), dtype=np.result_type(first, second))
    out[0::2, 0::2] = first
    out[1::2, 1::2] = second
    return out


def build_b2(model: OperatorModel | None, n: int) -> TruncationPair:
    """Direct-sum truncation over the interleaved basis e_{-n}, h_{-n}, ..., e_n, h_n.

    The operator is diag(s_1, s_2) + <., G> G with G = (1, 1), inner products
    being the sum of the two normalized component products.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    symbols = [_trig(c) for c in B2_SYMBOLS]
    squares = [_trig(_trig_square(c)) for c in B2_SYMBOLS]
    s = _interleave(*(_toeplitz_from(f, n) for f in symbols))
    s2 = _interleave(*(_toeplitz_from(f, n) for f in squares))

    idx = np.arange(-n, n + 1)
    g = np.zeros(2 * (2 * n + 1))
    g[2 * n] = g[2 * n + 1] = 1.0
    v = np.empty(2 * (2 * n + 1), dtype=complex)
    v[0::2] = symbols[0](idx)
    v[1::2] = symbols[1](idx)
    m, m2 = _with_rank_one(s, s2, g, v, c=1.0, g_norm2=2.0)
    return TruncationPair(n, HermitianMatrix.from_array(m), HermitianMatrix.from_array(m2))


# Hermite functions


def gaussian_well_potential(
    depth: float = 8.0,
    width: float = 1.0,
    amplitude: float = 1.0,
    harmonic: float = 0.0,
) -> Potential:
    """V(x) = -depth exp(-x^2/width^2) + amplitude cos x + harmonic x^2."""

    def potential(x):
        x = np.asarray(x, dtype=float)
        return -depth * np.exp(-((x / width) ** 2)) + amplitude * np.cos(x) + harmonic * x**2

    return potential


@functools.lru_cache(maxsize=32)
def gauss_hermite(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite nodes and weights for weight e^{-x^2}, zero weights dropped."""
    x, w = scipy.special.roots_hermite(order)
    keep = w > 0
    x, w = x[keep], w[keep]
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def weighted_hermite_functions(x: np.ndarray, w: np.ndarray, n: int) -> np.ndarray:
    """u[i, k] = sqrt(w_i) c_k h_k(x_i), so that sum_i u[i, j] u[i, k] f(x_i) ~ <f phi_k, phi_j>."""
    u = np.empty((len(x), n + 1))
    u[:, 0] = np.pi**-0.25 * np.sqrt(w)
    if n >= 1:
        u[:, 1] = np.sqrt(2.0) * x * u[:, 0]
    for k in range(1, n):
        u[:, k + 1] = np.sqrt(2.0 / (k + 1)) * x * u[:, k] - np.sqrt(k / (k + 1)) * u[:, k - 1]
    return u


def hermite_x2_matrix(n: int) -> np.ndarray:
    """<x^2 phi_k, phi_j> from the ladder relations x = (a + a^dagger)/sqrt 2."""
    k = np.arange(n + 1)
    x2 = np.diag((2 * k + 1) / 2.0)
    off = np.sqrt((k[:-2] + 1) * (k[:-2] + 2)) / 2.0
    x2 += np.diag(off, 2) + np.diag(off, -2)
    return x2


def _assemble_hermite(potential: Potential, n: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_hermite(order)
    u = weighted_hermite_functions(x, w, n)
    vx = potential(x)
    energies = 2 * np.arange(n + 1) + 1.0
    m = np.diag(energies) - hermite_x2_matrix(n) + u.T @ (vx[:, np.newaxis] * u)
    # M phi_k = (2k + 1 - x^2 + V) phi_k
    mphi = (energies[np.newaxis, :] + (vx - x**2)[:, np.newaxis]) * u
    m2 = mphi.T @ mphi
    return m, m2


def build_schrodinger(model: OperatorModel, n: int) -> TruncationPair:
    """Hermite-basis truncation of -d^2/dx^2 + V.

    Raises:
        QuadratureError: if doubling the node count keeps changing entries

    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if model.potential is None:
        raise ValueError("Schrodinger model has no potential")
    settings = get_settings()
    order = model.parameters.get("quadrature_order") or 4 * (n + 1) + 64
    m, m2 = _assemble_hermite(model.potential, n, order)
    change = change2 = math.inf
    for _ in range(settings.quadrature_max_doublings):
        order *= 2
        m_fine, m2_fine = _assemble_hermite(model.potential, n, order)
        # absolute on M_n, relative to the entry size on [M^2]_n
        change = float(np.max(np.abs(m_fine - m)))
        change2 = float(np.max(np.abs(m2_fine - m2)))
        scale = max(1.0, float(np.max(np.abs(m2_fine))))
        m, m2 = m_fine, m2_fine
        if change <= HERMITE_GATE_ATOL and change2 <= HERMITE_GATE_ATOL * scale:
            logger.debug(
                f"Hermite assembly n={n} converged at {order} nodes (changes {change:.2e}, {change2:.2e})"
            )
            return TruncationPair(n, HermitianMatrix.from_array(m), HermitianMatrix.from_array(m2))
    raise QuadratureError(
        f"Gauss-Hermite assembly for n={n} did not converge after "
        f"{settings.quadrature_max_doublings} doublings (last changes {change:.3e} in M_n, {change2:.3e} in [M^2]_n)"
    )


def build_harmonic_sanity(n: int) -> TruncationPair:
    """-d^2/dx^2 + x^2 in its own eigenbasis: M_n = diag(2k+1)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    energies = 2 * np.arange(n + 1) + 1.0
    return TruncationPair(
        n,
        HermitianMatrix.from_array(np.diag(energies)),
        HermitianMatrix.from_array(np.diag(energies**2)),
        factor=np.diag(energies),
    )


def shift_matrix(n: int) -> np.ndarray:
    """n x n matrix with ones on the subdiagonal."""
    return np.eye(n, k=-1)


def build_shift_fixture(n: int) -> QuadraticPencil:
    """R_n(z) = (z - S_n)(z - S_n*), a pencil whose whole spectrum is {0}."""
    if n < 1:
        raise ValueError("n must be at least 1")
    s = shift_matrix(n)
    return QuadraticPencil(
        HermitianMatrix.from_array(s + s.T),
        HermitianMatrix.from_array(s @ s.T),
        factor=s,
        n_index=n,
    )


# Model construction


def mathieu_bands(amplitude: float, count: int = MATHIEU_BANDS) -> tuple[tuple[float, float], ...]:
    """Spectral bands of -d^2/dx^2 + amplitude cos x.

    With x = 2t the eigen-equation becomes Mathieu's with q = 2|amplitude|
    and a = 4E; the bands are [a_r(q)/4, b_{r+1}(q)/4]. The last listed band
    is extended to infinity.
    """
    q = 2 * abs(amplitude)
    bands = []
    for r in range(count):
        lo = float(scipy.special.mathieu_a(r, q)) / 4
        hi = float(scipy.special.mathieu_b(r + 1, q)) / 4
        bands.append((lo, hi))
    bands[-1] = (bands[-1][0], math.inf)
    # contiguous bands (q = 0) merge into one half line
    merged = [bands[0]]
    for lo, hi in bands[1:]:
        if lo <= merged[-1][1] + 1e-12:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return tuple(merged)


GAP_MODEL_BANDS = ((-3.0, -1.0), (1.0, 3.0))


def make_model(kind: ModelKind | str, **params) -> OperatorModel:
    """Build an OperatorModel with its spectral metadata.

    Schrodinger models accept ``depth``, ``width``, ``amplitude``, ``harmonic``
    and ``quadrature_order``, or a custom ``potential`` callable together with
    ``essential_bands``.
    """
    kind = ModelKind(kind)
    match kind:
        case ModelKind.FOURIER_B1 | ModelKind.DIRECT_SUM_B2:
            if params:
                raise ValueError(f"{kind} takes no parameters, got {sorted(params)}")
            return OperatorModel(kind, MappingProxyType({}), SpectrumInfo(GAP_MODEL_BANDS, None))
        case ModelKind.SHIFT_FIXTURE:
            return OperatorModel(kind, MappingProxyType({}), SpectrumInfo((), (0.0,)))
        case ModelKind.HARMONIC_SANITY:
            levels = tuple(2.0 * k + 1 for k in range(64))
            return OperatorModel(
                kind,
                MappingProxyType({}),
                SpectrumInfo((), levels),
                potential=gaussian_well_potential(0.0, 1.0, 0.0, 1.0),
            )
        case ModelKind.SCHRODINGER_HERMITE:
            potential = params.pop("potential", None)
            bands = params.pop("essential_bands", None)
            order = params.pop("quadrature_order", None)
            if potential is None:
                shape = {"depth": 8.0, "width": 1.0, "amplitude": 1.0, "harmonic": 0.0}
                unknown = set(params) - set(shape)
                if unknown:
                    raise ValueError(f"Unknown Schrodinger parameters {sorted(unknown)}")
                shape.update({k: float(v) for k, v in params.items()})
                potential = gaussian_well_potential(**shape)
                if bands is None:
                    if shape["harmonic"] > 0:
                        bands = ()
                    else:
                        bands = mathieu_bands(shape["amplitude"])
                params = shape
            parameters = dict(params)
            if order is not None:
                parameters["quadrature_order"] = int(order)
            return OperatorModel(
                kind,
                MappingProxyType(parameters),
                SpectrumInfo(tuple(bands or ()), None),
                potential=potential,
            )


def build(model: OperatorModel, n: int) -> TruncationPair:
    """Dispatch to the builder of ``model.kind``."""
    match model.kind:
        case ModelKind.FOURIER_B1:
            return build_b1(model, n)
        case ModelKind.DIRECT_SUM_B2:
            return build_b2(model, n)
        case ModelKind.SCHRODINGER_HERMITE:
            return build_schrodinger(model, n)
        case ModelKind.HARMONIC_SANITY:
            return build_harmonic_sanity(n)
        case ModelKind.SHIFT_FIXTURE:
            raise ValueError("The shift fixture is a pencil, not a truncation of an operator")


def build_pencil(model: OperatorModel, n: int) -> QuadraticPencil:
    if model.kind == ModelKind.SHIFT_FIXTURE:
        return build_shift_fixture(n)
    pair = build(model, n)
    logger.debug(f"Built {model.kind} truncation n={n} (dim={pair.dim})")
    return pair.pencil()


def gap_distance(info: SpectrumInfo, lam: float) -> float:
    """mu = dist(lam, Spec M minus {lam})."""
    if info.discrete_eigenvalues is None:
        raise ValueError("Discrete eigenvalues are not resolved; ask the oracle first")
    dists = []
    for a, b in info.essential_bands:
        dists.append(0.0 if a <= lam <= b else min(abs(lam - a), abs(lam - b)))
    tol = 1e-9 * max(1.0, abs(lam))
    dists.extend(abs(lam - d) for d in info.discrete_eigenvalues if abs(lam - d) > tol)
    if not dists:
        return math.inf
    return float(min(dists))


def distance_to_spectrum(info: SpectrumInfo, t: float) -> float:
    """dist(t, Spec M) over the bands and the resolved discrete eigenvalues."""
    dists = [0.0 if a <= t <= b else min(abs(t - a), abs(t - b)) for a, b in info.essential_bands]
    dists.extend(abs(t - d) for d in info.discrete_eigenvalues or ())
    return float(min(dists)) if dists else math.inf
