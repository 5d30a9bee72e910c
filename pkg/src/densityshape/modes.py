"""Mode counting for density estimates and bootstrap mode-count distributions.

Modes are located as downcrossings of zero by the analytic first derivative:
a grid scan brackets every sign change and bisection sharpens each location.
The grid is doubled until the raw count is unchanged for two consecutive
refinements, which certifies that no sign change fell between grid nodes.
Small bumps in sparse tails can be excluded by a mass floor: a mode whose
bump (integral of the estimate between its flanking antimodes) carries less
mass than the floor is dropped from the count and reported separately.
"""

from dataclasses import dataclass

import numpy as np

from .density import DensityEstimate
from .errors import DensityShapeError, UnresolvedModeStructureError
from .rng import STAGE_MODE_BOOT, stream
from .sample import Sample

_GRID_CAP = 2**20
_EVAL_CHUNK = 4096


@dataclass(frozen=True)
class ModeReport:
    """Retained modes/antimodes of a density estimate on a search interval."""

    count: int
    modes: np.ndarray
    antimodes: np.ndarray
    interval: tuple
    excluded_tail_modes: int
    tail_mass_floor: float
    grid_points: int


@dataclass(frozen=True)
class ModeCountDistribution:
    """Empirical distribution of the mode count over bootstrap resamples."""

    probs: dict
    replicates: int
    resample_size: int
    h: float
    seed: int
    failures: int

    def prob(self, k):
        return self.probs.get(int(k), 0.0)

    def modal_count(self):
        """Most likely mode count; ties broken toward the smaller count."""
        best = max(self.probs.items(), key=lambda kv: (kv[1], -kv[0]))
        return int(best[0])


@dataclass(frozen=True)
class ModeLikelihoodReport:
    """CLI-facing table of P(k modes) plus the observed count."""

    rows: tuple  # (k, probability), ascending in k
    observed_count: int
    distribution: ModeCountDistribution


def _derivative_on_grid(est, grid):
    out = np.empty(grid.size)
    for lo in range(0, grid.size, _EVAL_CHUNK):
        out[lo : lo + _EVAL_CHUNK] = est.derivative(grid[lo : lo + _EVAL_CHUNK], 1)
    return out


def _fill_zero_signs(sign):
    """Carry the previous nonzero sign forward (backfill at the start)."""
    if np.all(sign != 0):
        return sign
    out = sign.copy()
    nz = np.nonzero(out)[0]
    if nz.size == 0:
        return out
    out[: nz[0]] = out[nz[0]]
    idx = np.maximum.accumulate(np.where(out != 0, np.arange(out.size), 0))
    return out[idx]


def _scan_sign_changes(est, lo, hi, n_grid):
    grid = np.linspace(lo, hi, n_grid)
    sign = _fill_zero_signs(np.sign(_derivative_on_grid(est, grid)))
    down = np.nonzero((sign[:-1] > 0) & (sign[1:] < 0))[0]
    up = np.nonzero((sign[:-1] < 0) & (sign[1:] > 0))[0]
    return grid, down, up


def _bisect_root(est, a, b, tol):
    fa = est.derivative(a, 1)
    for _ in range(200):
        if b - a <= tol:
            break
        mid = 0.5 * (a + b)
        fm = est.derivative(mid, 1)
        if fm == 0.0:
            return mid
        if (fa > 0) == (fm > 0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def count_modes(est, interval=None, tail_mass_floor=None):
    """Count local maxima of a density estimate.

    interval : (lo, hi) search window, default (min - 3h, max + 3h)
    tail_mass_floor : bump-mass threshold below which a mode is excluded;
        default 1/n.  Pass 0 to retain every sign change.

    Raises :class:`UnresolvedModeStructureError` if the count never
    stabilises under grid doubling (cap 2**20 points).
    """
    s = est.sample
    if interval is None:
        lo, hi = s.min - 3.0 * est.h, s.max + 3.0 * est.h
    else:
        lo, hi = float(interval[0]), float(interval[1])
        if not lo < hi:
            raise ValueError("interval must satisfy lo < hi")
    floor = 1.0 / s.n if tail_mass_floor is None else float(tail_mass_floor)
    if floor < 0:
        raise ValueError("tail_mass_floor must be nonnegative")

    n_grid = int(max(512, np.ceil(20.0 * (hi - lo) / est.h)))
    counts = []
    while True:
        grid, down, up = _scan_sign_changes(est, lo, hi, n_grid)
        counts.append(down.size)
        if len(counts) >= 3 and counts[-1] == counts[-2] == counts[-3]:
            break
        if n_grid >= _GRID_CAP:
            raise UnresolvedModeStructureError(
                f"unresolved mode structure: count did not stabilise at {n_grid} grid points"
            )
        n_grid = min(2 * n_grid, _GRID_CAP)

    tol = 1e-8 * (hi - lo)
    modes = np.array([_bisect_root(est, grid[i], grid[i + 1], tol) for i in down])
    antis = np.array([_bisect_root(est, grid[i], grid[i + 1], tol) for i in up])

    if modes.size == 0:
        return ModeReport(
            count=0, modes=modes, antimodes=antis, interval=(lo, hi),
            excluded_tail_modes=0, tail_mass_floor=floor, grid_points=n_grid,
        )

    # flanks of mode j: nearest antimode on each side; outermost bumps keep
    # their full tails so a lone mode carries mass 1
    left = np.empty_like(modes)
    right = np.empty_like(modes)
    for j, mode in enumerate(modes):
        before = antis[antis < mode]
        after = antis[antis > mode]
        left[j] = before[-1] if before.size else -np.inf
        right[j] = after[0] if after.size else np.inf
    masses = np.array([est.mass(a, b) for a, b in zip(left, right)])
    keep = masses >= floor
    retained = modes[keep]
    excluded = int(modes.size - retained.size)

    # rebuild antimodes: between consecutive retained modes keep the deepest
    # original antimode, preserving strict interleaving
    new_antis = []
    for a, b in zip(retained[:-1], retained[1:]):
        between = antis[(antis > a) & (antis < b)]
        if between.size:
            new_antis.append(float(between[np.argmin(est.pdf(between))]))
    return ModeReport(
        count=int(retained.size),
        modes=retained,
        antimodes=np.array(new_antis),
        interval=(lo, hi),
        excluded_tail_modes=excluded,
        tail_mass_floor=floor,
        grid_points=n_grid,
    )


def bootstrap_mode_distribution(sample, h, n_boot, m_sub=None, tail_mass_floor=None, seed=0):
    """Mode-count distribution over bootstrap resamples at a fixed bandwidth.

    Draws ``n_boot`` resamples of size ``m_sub`` (default n) with replacement,
    recounts modes of each resample's estimate with the same h, and returns
    the empirical distribution.  Deterministic given the seed; replicates
    that fail to resolve are excluded and counted in ``failures``.
    """
    m_sub = sample.n if m_sub is None else int(m_sub)
    if not 1 <= m_sub <= sample.n:
        raise ValueError("resample size must satisfy 1 <= m_sub <= n")
    if n_boot < 1:
        raise ValueError("need at least one replicate")
    counts = {}
    failures = 0
    for b in range(n_boot):
        rng = stream(seed, STAGE_MODE_BOOT, b)
        rs = Sample.from_values(rng.choice(sample.values, size=m_sub, replace=True))
        try:
            report = count_modes(DensityEstimate(rs, h), tail_mass_floor=tail_mass_floor)
        except DensityShapeError:
            failures += 1
            continue
        counts[report.count] = counts.get(report.count, 0) + 1
    valid = n_boot - failures
    if valid == 0:
        raise UnresolvedModeStructureError("every bootstrap replicate failed to resolve")
    probs = {k: c / valid for k, c in sorted(counts.items())}
    return ModeCountDistribution(
        probs=probs, replicates=n_boot, resample_size=m_sub, h=float(h),
        seed=int(seed), failures=failures,
    )


def mode_likelihood_report(sample, h, n_boot, m_sub=None, seed=0, tail_mass_floor=None):
    """Observed mode count plus the bootstrap table of P(k modes)."""
    observed = count_modes(DensityEstimate(sample, h), tail_mass_floor=tail_mass_floor)
    dist = bootstrap_mode_distribution(
        sample, h, n_boot, m_sub=m_sub, tail_mass_floor=tail_mass_floor, seed=seed
    )
    rows = tuple(sorted(dist.probs.items()))
    return ModeLikelihoodReport(rows=rows, observed_count=observed.count, distribution=dist)
