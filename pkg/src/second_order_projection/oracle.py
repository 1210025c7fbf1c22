"""Reference spectra computed without the projection method.

The gap model has a closed-form secular equation; matrix entries can be
recomputed by brute-force quadrature; Schrodinger operators get a
finite-difference reference. Results can be cached as JSON sidecars.
"""

import hashlib
import logging
import math
import warnings
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Literal

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.optimize
import scipy.special

from second_order_projection.config import get_settings
from second_order_projection.errors import OracleError, QuadratureError
from second_order_projection.helpers import canonical_json, read_json, write_json_atomic
from second_order_projection.models import FDResult, SecularSolution
from second_order_projection.operators import (
    ModelKind,
    OperatorModel,
    SpectrumInfo,
    _s_hat,
)

logger = logging.getLogger(__name__)

ENTRY_ORACLE_MAX_N = 16

# Default finite-difference reference for Schrodinger models
FD_HALFWIDTH = 20.0
FD_GRID_POINTS = 4000
FD_GATE_TOL = 1e-6
# Extra room above the ceiling for the gate run, so levels near it keep their partner
FD_GATE_MARGIN = 0.1
# Box for resolving every level below a band ceiling, at the default spacing
RESOLVE_HALFWIDTH = 2 * FD_HALFWIDTH
RESOLVE_GRID_POINTS = 2 * FD_GRID_POINTS


# Secular equation of the gap model


def _in_bands(lam: float) -> bool:
    return -3 <= lam <= -1 or 1 <= lam <= 3


def _secular_closed(lam: float) -> float:
    a, b = lam + 2, lam - 2
    return math.pi * (
        math.copysign(1.0, a) / math.sqrt(a * a - 1) + math.copysign(1.0, b) / math.sqrt(b * b - 1) - 1
    )


def _secular_quad(lam: float) -> float:
    opts = {"epsabs": 1e-13, "epsrel": 1e-13, "limit": 400}
    left, _ = scipy.integrate.quad(lambda x: 1.0 / ((lam + 2) - math.sin(2 * x)), -math.pi, 0.0, **opts)
    right, _ = scipy.integrate.quad(lambda x: 1.0 / ((lam - 2) - math.sin(2 * x)), 0.0, math.pi, **opts)
    return left + right - math.pi


def secular_function(lam: float, method: Literal["closed", "quad", "both"] = "closed") -> float:
    """Left side minus right side of the eigenvalue condition of the gap model.

    The integral of dx / (a - sin 2x) over a half period is pi sign(a) / sqrt(a^2 - 1),
    which gives the closed form; ``method="both"`` evaluates both and checks them.

    Raises:
        ValueError: if lam lies in [-3, -1] or [1, 3]
        OracleError: if closed form and quadrature disagree

    """
    if _in_bands(lam):
        raise ValueError(f"lambda={lam} lies in the essential spectrum")
    if method == "closed":
        return _secular_closed(lam)
    if method == "quad":
        return _secular_quad(lam)
    closed, quad = _secular_closed(lam), _secular_quad(lam)
    if abs(closed - quad) > 1e-10 * max(1.0, abs(closed)):
        raise OracleError(f"Secular function disagreement at {lam}: closed {closed!r} vs quad {quad!r}")
    return closed


def secular_roots(eta: float = 1e-6) -> SecularSolution:
    """Discrete eigenvalues of the gap model by Brent's method.

    Brackets are (-1 + eta, 1 - eta) for lambda_minus and (3 + eta, 20) for lambda_plus.

    Raises:
        OracleError: if a bracket has no sign change

    """
    brackets = {"minus": (-1 + eta, 1 - eta), "plus": (3 + eta, 20.0)}
    roots: dict[str, Any] = {}
    for name, (a, b) in brackets.items():
        fa, fb = _secular_closed(a), _secular_closed(b)
        if fa * fb >= 0:
            raise OracleError(f"No sign change of the secular function on [{a}, {b}]")
        root = scipy.optimize.brentq(_secular_closed, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        roots[name] = (root, abs(_secular_closed(root)), (a, b), (fa, fb))
        logger.debug(f"lambda_{name} = {root!r} (residual {roots[name][1]:.2e})")
    return SecularSolution(
        lambda_minus=roots["minus"][0],
        lambda_plus=roots["plus"][0],
        residual_minus=roots["minus"][1],
        residual_plus=roots["plus"][1],
        bracket_minus=roots["minus"][2],
        bracket_plus=roots["plus"][2],
        signs_minus=roots["minus"][3],
        signs_plus=roots["plus"][3],
    )


def s_squared_by_convolution(j: int, half_width: int) -> complex:
    """sum_{|m| <= M} s_hat(m) s_hat(j - m), the slowly converging cross-check for s2_hat."""
    m = np.arange(-half_width, half_width + 1)
    return complex(np.sum(_s_hat(m) * _s_hat(j - m)))


# Brute-force matrix entries


def _quad_complex(f: Callable[[float], complex], a: float, b: float, points=None) -> complex:
    opts: dict[str, Any] = {"epsabs": 1e-12, "epsrel": 1e-12, "limit": 500}
    if points is not None:
        opts["points"] = points
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.integrate.IntegrationWarning)
        re, err_re = scipy.integrate.quad(lambda x: f(x).real, a, b, **opts)
        im, err_im = scipy.integrate.quad(lambda x: f(x).imag, a, b, **opts)
    if max(err_re, err_im) > 1e-9 * max(1.0, abs(complex(re, im))):
        raise QuadratureError(f"Entry quadrature error estimate {max(err_re, err_im):.2e} on [{a}, {b}]")
    return complex(re, im)


def _symbol_b1(x: float) -> float:
    return (-2.0 if x <= 0 else 2.0) + math.sin(2 * x)


# s_1 = -2 + sin x and s_2 = 2 + sin x
_B2_SYMBOLS = (lambda x: -2.0 + math.sin(x), lambda x: 2.0 + math.sin(x))


def _mean(f: Callable[[float], complex]) -> complex:
    return _quad_complex(f, -math.pi, math.pi, points=[0.0]) / (2 * math.pi)


def _periodic_entries(model: OperatorModel, n: int, j: int, k: int) -> tuple[complex, complex]:
    """Entries for the two bases of the gap model, straight from M = S + K."""
    if model.kind == ModelKind.FOURIER_B1:

        def phi(p: int) -> tuple[Callable[[float], complex], ...]:
            freq = p - n
            return (lambda x: complex(math.cos(freq * x), math.sin(freq * x)),)

        symbols = (_symbol_b1,)
        coupling = 2.0

        def rank_one(fs):
            c = coupling * _mean(fs[0])
            return (c,)

    else:

        def phi(p: int) -> tuple[Callable[[float], complex], ...]:
            freq, comp = p // 2 - n, p % 2

            def wave(x: float) -> complex:
                return complex(math.cos(freq * x), math.sin(freq * x))

            def zero(x: float) -> complex:
                return 0j

            return (wave, zero) if comp == 0 else (zero, wave)

        symbols = _B2_SYMBOLS

        def rank_one(fs):
            c = sum(_mean(f) for f in fs)
            return (c, c)

    def apply(fs):
        shift = rank_one(fs)
        return tuple(
            (lambda x, f=f, s=s, c=c: s(x) * f(x) + c) for f, s, c in zip(fs, symbols, shift)
        )

    phi_j, phi_k = phi(j), phi(k)
    m_phi_j, m_phi_k = apply(phi_j), apply(phi_k)
    m_entry = sum(_mean(lambda x, a=a, b=b: a(x) * b(x).conjugate()) for a, b in zip(m_phi_k, phi_j))
    m2_entry = sum(_mean(lambda x, a=a, b=b: a(x) * b(x).conjugate()) for a, b in zip(m_phi_k, m_phi_j))
    return complex(m_entry), complex(m2_entry)


def _hermite_function(k: int, deriv: int = 0) -> Callable[[float], float]:
    """phi_k or its second derivative, from scipy's physicists' Hermite polynomials."""
    c = 1.0 / math.sqrt(2.0**k * math.factorial(k) * math.sqrt(math.pi))

    def h(m: int, x: float) -> float:
        return float(scipy.special.eval_hermite(m, x)) if m >= 0 else 0.0

    if deriv == 0:
        return lambda x: c * h(k, x) * math.exp(-x * x / 2)

    # phi'' = c (H'' - 2x H' + (x^2 - 1) H) e^{-x^2/2}, H_k' = 2k H_{k-1}
    def second(x: float) -> float:
        h2 = 4 * k * (k - 1) * h(k - 2, x)
        h1 = 2 * k * h(k - 1, x)
        return c * (h2 - 2 * x * h1 + (x * x - 1) * h(k, x)) * math.exp(-x * x / 2)

    return second


def _hermite_entries(model: OperatorModel, n: int, j: int, k: int) -> tuple[complex, complex]:
    potential = model.potential

    def apply(p: int) -> Callable[[float], float]:
        f, f2 = _hermite_function(p), _hermite_function(p, 2)
        return lambda x: -f2(x) + float(potential(x)) * f(x)

    radius = 10.0 + math.sqrt(4 * n + 8)
    m_k, m_j, phi_j = apply(k), apply(j), _hermite_function(j)
    m_entry = _quad_complex(lambda x: complex(m_k(x) * phi_j(x)), -radius, radius, points=[0.0])
    m2_entry = _quad_complex(lambda x: complex(m_k(x) * m_j(x)), -radius, radius, points=[0.0])
    return m_entry, m2_entry


def entry_quadrature_oracle(model: OperatorModel, n: int, j: int, k: int) -> tuple[complex, complex]:
    """(<M phi_k, phi_j>, <M phi_k, M phi_j>) by adaptive quadrature of the operator's definition.

    ``j`` and ``k`` are positions in the basis ordering used by the builders.
    """
    if n > ENTRY_ORACLE_MAX_N:
        raise ValueError(f"Entry oracle is limited to n <= {ENTRY_ORACLE_MAX_N}")
    dim = model.basis_dim(n)
    if not (0 <= j < dim and 0 <= k < dim):
        raise IndexError(f"Entry ({j}, {k}) outside basis of dimension {dim}")
    match model.kind:
        case ModelKind.FOURIER_B1 | ModelKind.DIRECT_SUM_B2:
            return _periodic_entries(model, n, j, k)
        case ModelKind.SCHRODINGER_HERMITE | ModelKind.HARMONIC_SANITY:
            return _hermite_entries(model, n, j, k)
        case _:
            raise ValueError(f"No entry oracle for {model.kind}")


def entry_quadrature_matrices(model: OperatorModel, n: int, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """All entries of M_n and [M^2]_n from the entry oracle."""
    dim = model.basis_dim(n)
    pairs = [(j, k) for j in range(dim) for k in range(dim)]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        values = list(pool.map(lambda jk: entry_quadrature_oracle(model, n, *jk), pairs))
    m = np.array([v[0] for v in values]).reshape(dim, dim)
    m2 = np.array([v[1] for v in values]).reshape(dim, dim)
    return m, m2


# Finite differences


def _fd_operator(potential: Callable, halfwidth: float, grid_points: int) -> tuple[np.ndarray, np.ndarray]:
    h = 2 * halfwidth / (grid_points + 1)
    x = -halfwidth + h * np.arange(1, grid_points + 1)
    diagonal = 2.0 / h**2 + np.asarray(potential(x), dtype=float)
    off = np.full(grid_points - 1, -1.0 / h**2)
    return diagonal, off


def _fd_levels(potential: Callable, halfwidth: float, grid_points: int, count: int) -> np.ndarray:
    diagonal, off = _fd_operator(potential, halfwidth, grid_points)
    return scipy.linalg.eigh_tridiagonal(
        diagonal, off, eigvals_only=True, select="i", select_range=(0, count - 1)
    )


def _fd_count_below(potential: Callable, halfwidth: float, grid_points: int, ceiling: float) -> int:
    diagonal, off = _fd_operator(potential, halfwidth, grid_points)
    # Gershgorin lower bound for the spectrum
    floor = float(np.min(diagonal)) - 2 * abs(off[0]) - 1.0
    if ceiling <= floor:
        return 0
    values = scipy.linalg.eigh_tridiagonal(
        diagonal, off, eigvals_only=True, select="v", select_range=(floor, ceiling)
    )
    return len(values)


def _fd_estimate(potential, halfwidth, grid_points, count, extrapolate) -> tuple[np.ndarray, np.ndarray]:
    if count == 0:
        return np.empty(0), np.empty(0)
    coarse = _fd_levels(potential, halfwidth, grid_points, count)
    if not extrapolate:
        return coarse, coarse
    fine = _fd_levels(potential, halfwidth, 2 * grid_points, count)
    h1 = (2 * halfwidth / (grid_points + 1)) ** 2
    h2 = (2 * halfwidth / (2 * grid_points + 1)) ** 2
    return (h1 * fine - h2 * coarse) / (h1 - h2), coarse


def schrodinger_fd(
    potential: Callable,
    halfwidth: float = FD_HALFWIDTH,
    grid_points: int = FD_GRID_POINTS,
    count: int = 3,
    extrapolate: bool = True,
    ceiling: float | None = None,
) -> FDResult:
    """Lowest eigenvalues of -d^2/dx^2 + V on [-L, L] with Dirichlet ends.

    The 3-point scheme has O(h^2) error; with ``extrapolate`` the N and 2N
    values are combined by Richardson extrapolation in h^2. With ``ceiling``
    every level below it is returned instead of the lowest ``count``.

    The gate reruns at 2N points on [-1.5L, 1.5L] and matches each level with
    the nearest gate level. ``stable`` flags the levels that moved by less
    than FD_GATE_TOL; box states of a periodic background move and are not
    flagged. ``converged`` means every level is stable; nothing is raised.
    """
    if halfwidth <= 0:
        raise ValueError("halfwidth must be positive")
    if grid_points < 100:
        raise ValueError("grid_points must be at least 100")
    if ceiling is None and count < 1:
        raise ValueError("count must be at least 1")
    gate_count = count
    if ceiling is not None:
        count = _fd_count_below(potential, halfwidth, grid_points, ceiling)
        gate_count = _fd_count_below(potential, 1.5 * halfwidth, 2 * grid_points, ceiling + FD_GATE_MARGIN)
    values, raw = _fd_estimate(potential, halfwidth, grid_points, count, extrapolate)
    gate, _ = _fd_estimate(potential, 1.5 * halfwidth, 2 * grid_points, gate_count, extrapolate)
    if len(gate):
        moves = np.array([float(np.min(np.abs(gate - v))) for v in values])
    else:
        moves = np.full(len(values), math.inf)
    change = float(np.max(moves, initial=0.0))
    converged = change < FD_GATE_TOL
    if not converged:
        # box states inside bands always move when every level below a ceiling is asked for
        log = logger.warning if ceiling is None else logger.debug
        log(f"Finite-difference levels not converged: gate change {change:.3e} (L={halfwidth}, N={grid_points})")
    return FDResult(
        eigenvalues=[float(v) for v in values],
        raw_eigenvalues=[float(v) for v in raw],
        halfwidth=halfwidth,
        grid_points=grid_points,
        extrapolated=extrapolate,
        gate_change=change,
        converged=converged,
        stable=[bool(m < FD_GATE_TOL) for m in moves],
    )


def band_bottom(model: OperatorModel) -> float:
    """Lowest point of the essential spectrum (inf if there is none)."""
    bands = model.spectrum_info.essential_bands
    return bands[0][0] if bands else math.inf


def reference_eigenvalue(model: OperatorModel, name: str | float) -> float:
    """Resolve a numeric or named reference eigenvalue for a model."""
    if not isinstance(name, str):
        return float(name)
    match model.kind, name:
        case (ModelKind.FOURIER_B1 | ModelKind.DIRECT_SUM_B2), "lambda_minus":
            return secular_roots().lambda_minus
        case (ModelKind.FOURIER_B1 | ModelKind.DIRECT_SUM_B2), "lambda_plus":
            return secular_roots().lambda_plus
        case ModelKind.HARMONIC_SANITY, "ground_state":
            return 1.0
        case ModelKind.SHIFT_FIXTURE, "ground_state":
            return 0.0
        case ModelKind.SCHRODINGER_HERMITE, "ground_state":
            fd = schrodinger_fd(model.potential, count=1)
            if not fd.converged:
                raise OracleError(f"Finite-difference ground state did not converge (change {fd.gate_change:.2e})")
            return fd.eigenvalues[0]
    raise ValueError(f"Target {name!r} is not defined for {model.kind}")


def resolve_spectrum(model: OperatorModel) -> SpectrumInfo:
    """Fill in oracle-deferred discrete eigenvalues.

    Schrodinger levels come from the finite-difference reference up to the
    start of the highest listed band. Levels inside a band are dropped. Gap
    levels that move under the gate are boundary states of the box and are
    dropped too.

    Raises:
        OracleError: if a level below the essential spectrum moves under the gate

    """
    info = model.spectrum_info
    if info.discrete_eigenvalues is not None:
        return info
    if model.kind in (ModelKind.FOURIER_B1, ModelKind.DIRECT_SUM_B2):
        roots = secular_roots()
        return info.with_discrete((roots.lambda_minus, roots.lambda_plus))
    bands = info.essential_bands
    if bands:
        fd = schrodinger_fd(
            model.potential, RESOLVE_HALFWIDTH, RESOLVE_GRID_POINTS, extrapolate=True, ceiling=bands[-1][0]
        )
    else:
        fd = schrodinger_fd(model.potential, RESOLVE_HALFWIDTH, RESOLVE_GRID_POINTS, count=8)
    bottom = band_bottom(model)
    kept, boundary = [], []
    for value, stable in zip(fd.eigenvalues, fd.stable, strict=True):
        if any(lo <= value <= hi for lo, hi in bands):
            continue
        if stable:
            kept.append(value)
        elif value < bottom:
            raise OracleError(
                f"Finite-difference level {value:.8g} below the essential spectrum is not converged "
                f"(gate change {fd.gate_change:.2e})"
            )
        else:
            boundary.append(value)
    if boundary:
        logger.warning(f"Dropped {len(boundary)} gap levels that move with the box: {[round(v, 6) for v in boundary]}")
    logger.debug(f"Resolved discrete levels {kept}")
    return info.with_discrete(kept)


class OracleCache:
    """JSON sidecar files named by the SHA-256 of the canonical request."""

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory if directory is not None else get_settings().cache_dir)

    @staticmethod
    def key(request: dict[str, Any]) -> str:
        return hashlib.sha256(canonical_json(request).encode("utf-8")).hexdigest()

    def path(self, request: dict[str, Any]) -> Path:
        return self.directory / f"{self.key(request)}.json"

    def load(self, request: dict[str, Any]) -> dict[str, Any] | None:
        path = self.path(request)
        if not path.exists():
            return None
        logger.debug(f"Oracle cache hit {path.name}")
        return read_json(path)

    def store(self, request: dict[str, Any], payload: dict[str, Any]) -> Path:
        path = self.path(request)
        write_json_atomic(path, payload)
        return path

    def get_or_compute(self, request: dict[str, Any], compute: Callable[[], dict[str, Any]]) -> dict[str, Any]:
        cached = self.load(request)
        if cached is not None:
            return cached
        payload = compute()
        self.store(request, payload)
        return payload
