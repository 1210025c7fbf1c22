"""Second-order projection end to end.

Build pencils across n, pick the eigenvalues nearest to reference points,
turn eigenvalues into real enclosures, tabulate convergence and measure the
stability of the pencil spectrum under coefficient perturbations.
"""

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from second_order_projection.matpoly import (
    GeneralPencil,
    QuadraticPencil,
    SpectrumResult,
    eigenvalues,
)
from second_order_projection.models import ConvergenceRecord, Enclosure, PerturbationReport
from second_order_projection.operators import (
    OperatorModel,
    SpectrumInfo,
    build_pencil,
    gap_distance,
)
from second_order_projection.oracle import resolve_spectrum

logger = logging.getLogger(__name__)


def _values(spec: SpectrumResult | Sequence[complex] | np.ndarray) -> np.ndarray:
    if isinstance(spec, SpectrumResult):
        return spec.eigenvalues
    return np.asarray(spec, dtype=complex)


def nearest_eigenvalue(spec: SpectrumResult | Sequence[complex], target: float) -> complex:
    """Eigenvalue closest to ``target``; ties prefer Im z >= 0, then smaller Re z."""
    values = _values(spec)
    if len(values) == 0:
        raise ValueError("Spectrum is empty")
    dist = np.abs(values - target)
    tied = values[dist == dist.min()]
    return complex(min(tied, key=lambda z: (z.imag < 0, z.real, z.imag)))


def enclosures(spec: SpectrumResult | Sequence[complex], imag_cut: float = math.inf) -> list[Enclosure]:
    """Intervals [Re z - |Im z|, Re z + |Im z|] for eigenvalues with |Im z| <= imag_cut, sorted by lo."""
    if imag_cut < 0:
        raise ValueError("imag_cut must be nonnegative")
    values = _values(spec)
    kept = [complex(z) for z in values if abs(z.imag) <= imag_cut]
    out = [Enclosure.from_eigenvalue(z) for z in kept]
    return sorted(out, key=lambda e: (e.lo, e.hi, e.witness_re, e.witness_im))


def enclosure_soundness(encs: Sequence[Enclosure], info: SpectrumInfo, fatten: float = 1e-8) -> list[bool]:
    """For each enclosure, whether it meets the known spectrum of the operator."""
    if info.discrete_eigenvalues is None:
        raise ValueError("Discrete eigenvalues are not resolved")
    bands = list(info.essential_bands)
    points = list(info.discrete_eigenvalues)
    return [e.intersects(bands, points, fatten) for e in encs]


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def _records(ns: Sequence[int], zs: Sequence[complex], lambda_ref: float) -> list[ConvergenceRecord]:
    errs = [abs(z - lambda_ref) for z in zs]
    log_errs = [_log(e) for e in errs]
    log_ns = [_log(n) for n in ns]
    records = []
    for i, (n, z) in enumerate(zip(ns, zs)):
        slope = None
        if i + 1 < len(ns):
            with np.errstate(invalid="ignore"):
                slope = float(np.float64(log_errs[i + 1] - log_errs[i]) / (log_ns[i + 1] - log_ns[i]))
        records.append(
            ConvergenceRecord(
                n=n, z_re=z.real, z_im=z.imag, err=errs[i], log_err=log_errs[i], log_n=log_ns[i], slope=slope
            )
        )
    return records


def convergence_study(
    model: OperatorModel,
    lambda_ref: float,
    ns: Sequence[int],
    workers: int = 1,
) -> list[ConvergenceRecord]:
    """One record per n: nearest pencil eigenvalue to lambda_ref, its error and the forward slope."""
    ns = list(ns)
    if not ns:
        raise ValueError("ns must not be empty")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("ns must be strictly increasing")

    def solve(n: int) -> complex:
        spec = eigenvalues(build_pencil(model, n), residuals="none")
        z = nearest_eigenvalue(spec, lambda_ref)
        logger.debug(f"{model.kind} n={n}: |z - lambda| = {abs(z - lambda_ref):.6e}")
        return z

    if workers <= 1:
        zs = [solve(n) for n in ns]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            zs = list(pool.map(solve, ns))
    logger.info(f"Convergence study of {model.kind} over {len(ns)} truncations done")
    return _records(ns, zs, lambda_ref)


def fit_exponent(records: Sequence[ConvergenceRecord]) -> float:
    """Least-squares slope of log err against log n over the finite rows."""
    pts = [(r.log_n, r.log_err) for r in records if math.isfinite(r.log_n) and math.isfinite(r.log_err)]
    if len(pts) < 2:
        raise ValueError("Need at least two finite rows to fit an exponent")
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def tolerance_bound(delta: float, mu: float, lam: float, w0: float, w1: float) -> float:
    """Largest admissible perturbation size eps for a target radius delta.

    delta^2 mu^2 / (2 (2 delta^2 + 3 mu^2) [w0 + w1 (mu/4 + |lam|)])
    """
    if not 0 < delta < mu / 4:
        raise ValueError(f"delta={delta} must satisfy 0 < delta < mu/4 = {mu / 4}")
    if w0 < 0 or w1 < 0 or (w0 == 0 and w1 == 0):
        raise ValueError("w0 and w1 must be nonnegative and not both zero")
    return delta**2 * mu**2 / (2 * (2 * delta**2 + 3 * mu**2) * (w0 + w1 * (mu / 4 + abs(lam))))


def relative_weights(delta: float, mu: float, lam: float) -> tuple[float, float]:
    """Weights that measure the two coefficient perturbations relative to each other."""
    w0 = mu**2 / (4 * (2 * delta**2 + 3 * mu**2))
    return w0, w0 / (mu / 4 + abs(lam))


def count_in_disc(values: SpectrumResult | Sequence[complex], centre: float, radius: float) -> int:
    return int(np.count_nonzero(np.abs(_values(values) - centre) < radius))


def annulus_clear(values: SpectrumResult | Sequence[complex], centre: float, inner: float, outer: float) -> bool:
    d = np.abs(_values(values) - centre)
    return not bool(np.any((d >= inner) & (d <= outer)))


def _random_with_norm(rng: np.random.Generator, dim: int, norm: float) -> np.ndarray:
    """Standard complex Gaussian matrix rescaled to spectral norm ``norm``."""
    if norm == 0:
        return np.zeros((dim, dim), dtype=complex)
    x = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return x * (norm / np.linalg.norm(x, 2))


def perturbed_pencil(pencil: QuadraticPencil, f: np.ndarray, g: np.ndarray) -> GeneralPencil:
    """P(z) + F z - G = z^2 - (2 M_n - F) z + ([M^2]_n - G)."""
    const, lin, lead = pencil.coefficients()
    return GeneralPencil((const - g, lin + f, lead))


def perturbation_experiment(
    model: OperatorModel,
    n: int,
    lambda_ref: float,
    delta: float,
    w0: float,
    w1: float,
    trials: int,
    rng_seed: int,
    eps_fraction: float = 0.9,
    workers: int = 1,
) -> PerturbationReport:
    """Random perturbations Q(z) = F z - G with |F| = w1 eps, |G| = w0 eps.

    eps is ``eps_fraction`` times the tolerance bound. Each trial records
    whether the eigenvalue count in |z - lam| < delta is unchanged and whether
    the annulus delta <= |z - lam| <= mu/4 stays empty. Both are guaranteed
    only beyond an unknown truncation index, so failures are reported, not raised.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if not 0 <= eps_fraction < 1:
        raise ValueError("eps_fraction must lie in [0, 1)")
    mu = gap_distance(resolve_spectrum(model), lambda_ref)
    bound = tolerance_bound(delta, mu, lambda_ref, w0, w1)
    eps = eps_fraction * bound
    outer = mu / 4

    pencil = build_pencil(model, n)
    base = eigenvalues(pencil, residuals="none")
    baseline_count = count_in_disc(base, lambda_ref, delta)
    baseline_clear = annulus_clear(base, lambda_ref, delta, outer)
    logger.info(
        f"Perturbation experiment n={n}: mu={mu:.6g}, eps bound={bound:.6e}, eps={eps:.6e}, "
        f"{baseline_count} unperturbed eigenvalues within delta"
    )

    def trial(seed: np.random.SeedSequence) -> tuple[int, bool]:
        rng = np.random.default_rng(seed)
        f = _random_with_norm(rng, pencil.dim, w1 * eps)
        g = _random_with_norm(rng, pencil.dim, w0 * eps)
        if not f.any() and not g.any():
            values = base.eigenvalues
        else:
            values = eigenvalues(perturbed_pencil(pencil, f, g), residuals="none").eigenvalues
        return count_in_disc(values, lambda_ref, delta), annulus_clear(values, lambda_ref, delta, outer)

    seeds = np.random.SeedSequence(rng_seed).spawn(trials)
    if workers <= 1:
        outcomes = [trial(s) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(trial, seeds))

    counts = [c for c, _ in outcomes]
    report = PerturbationReport(
        n=n,
        lam=lambda_ref,
        delta=delta,
        mu=mu,
        w0=w0,
        w1=w1,
        eps_bound=bound,
        eps=eps,
        trials=trials,
        seed=rng_seed,
        baseline_count=baseline_count,
        baseline_annulus_clear=baseline_clear,
        counts=counts,
        counts_match=[c == baseline_count for c in counts],
        annulus_clear=[clear for _, clear in outcomes],
    )
    if not report.all_pass:
        logger.warning(
            f"Perturbation experiment n={n}: {report.counts_match.count(False)} count mismatches, "
            f"{report.annulus_clear.count(False)} occupied annuli"
        )
    return report


@dataclass(frozen=True, eq=False)
class PipelineResult:
    n: int
    spectrum: SpectrumResult
    enclosures: list[Enclosure]
    nearest: dict[float, complex] = field(default_factory=dict)


def method_pipeline(
    model: OperatorModel,
    n: int,
    targets: Sequence[float] = (),
    imag_cut: float = math.inf,
) -> PipelineResult:
    """Build the pencil, solve it, enclose the eigenvalues and report the nearest to each target."""
    pencil = build_pencil(model, n)
    logger.info(f"Built {model.kind} pencil n={n} of dimension {pencil.dim}")
    spec = eigenvalues(pencil)
    logger.info(f"Solved pencil n={n}: {len(spec)} eigenvalues, max residual {spec.max_residual:.3e}")
    encs = enclosures(spec, imag_cut)
    nearest = {float(t): nearest_eigenvalue(spec, t) for t in targets}
    return PipelineResult(n=n, spectrum=spec, enclosures=encs, nearest=nearest)
