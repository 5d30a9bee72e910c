"""Desk-scale simulation of the asymptotic objects behind mode counting and
excess-mass inference: Brownian-bridge-driven processes whose downcrossings
of zero mirror mode counts, the Gaussian limit of the excess-mass statistic,
and a shoulder-plus-bump density family for bandwidth/detection experiments.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .density import DensityEstimate, gauss_kernel
from .errors import InvalidCovarianceError
from .modes import count_modes
from .rng import STAGE_BRIDGE, STAGE_BUMP, STAGE_LIMIT_Z, stream
from .sample import Sample

GAUSS_DERIV_SQ_INT = 1.0 / (4.0 * np.sqrt(np.pi))  # integral of K'(u)^2


class DegeneratePathWarning(UserWarning):
    """Raised when a path offers no sign information (identically zero)."""


# ---------------------------------------------------------------------------
# Brownian bridge and the derivative-limit processes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BridgePath:
    """Discrete standard Brownian bridge on a uniform grid over [0, 1]."""

    grid: np.ndarray
    values: np.ndarray


def simulate_bridge(grid_n, rng):
    """Brownian bridge via cumulative increments pinned at both ends."""
    if grid_n < 2:
        raise ValueError("bridge grid needs at least 2 points")
    t = np.linspace(0.0, 1.0, grid_n)
    dt = t[1] - t[0]
    w = np.empty(grid_n)
    w[0] = 0.0
    np.cumsum(rng.standard_normal(grid_n - 1) * np.sqrt(dt), out=w[1:])
    values = w - t * w[-1]
    values[-1] = 0.0
    return BridgePath(grid=t, values=values)


@dataclass(frozen=True)
class LimitConfig:
    """Geometry and constants for the limit processes.

    The bridge lives on [0, 1]; the (dimensionless) process argument y + u is
    embedded affinely, t = 1/2 + (y+u) / (2 (Y + T + 1)).  The embedding
    compresses time, so the noise term carries an extra factor relative to a
    unit-rate parametrisation; this affects constants only and is reported
    alongside results.  With y_max=None the window grows so the drift at the
    ends dominates the noise by 5 standard deviations, keeping at least one
    downcrossing in essentially every path.
    """

    c0: float
    f_x0: float = float(gauss_kernel(0.0))
    f2_x0: float = -float(gauss_kernel(0.0))
    y_max: float = None
    y_step: float = 0.02
    u_trunc: float = 8.0
    bridge_grid_n: int = None

    def __post_init__(self):
        if not self.c0 > 0:
            raise ValueError("c0 must be positive")
        if not self.f_x0 > 0:
            raise ValueError("f(x0) must be positive")
        if not self.f2_x0 < 0:
            raise ValueError("f''(x0) must be negative")
        if self.u_trunc < 6:
            raise ValueError("u truncation must be >= 6")

    def resolved_y_max(self):
        if self.y_max is not None:
            return float(self.y_max)
        y = 6.0
        for _ in range(4):
            rate = 0.5 / (y + self.u_trunc + 1.0)
            sd_xi = np.sqrt(self.f_x0 * rate * GAUSS_DERIV_SQ_INT)
            y = max(6.0, 5.0 * sd_xi * self.c0 ** (-2.5) / abs(self.f2_x0))
        return float(np.ceil(y / self.y_step) * self.y_step)

    def y_grid(self):
        y = self.resolved_y_max()
        n = int(round(2 * y / self.y_step)) + 1
        return np.linspace(-y, y, n)

    def u_grid(self):
        n = int(round(2 * self.u_trunc / self.y_step)) + 1
        return np.linspace(-self.u_trunc, self.u_trunc, n)

    def lattice(self):
        y = self.resolved_y_max()
        span = y + self.u_trunc
        n = int(round(2 * span / self.y_step)) + 1
        return np.linspace(-span, span, n)

    def embed(self, a):
        span = self.resolved_y_max() + self.u_trunc
        return 0.5 + a / (2.0 * (span + 1.0))

    def resolved_bridge_grid_n(self):
        if self.bridge_grid_n is not None:
            return int(self.bridge_grid_n)
        return max(2048, 2 * self.lattice().size)


def bridge_on_lattice(bridge, cfg):
    """Bridge values at the embedded lattice times, linearly interpolated."""
    t = cfg.embed(cfg.lattice())
    if t[0] < 0.0 or t[-1] > 1.0:
        raise ValueError("y range exceeds the embeddable window")
    return np.interp(t, bridge.grid, bridge.values)


def xi_process(bridge, cfg):
    """Truncated convolution of the bridge with the kernel's second
    derivative, scaled by f(x0)^(1/2); sampled on cfg.y_grid()."""
    w_lat = bridge_on_lattice(bridge, cfg)
    u = cfg.u_grid()
    weights = (u * u - 1.0) * gauss_kernel(u) * cfg.y_step
    return np.sqrt(cfg.f_x0) * np.correlate(w_lat, weights, mode="valid")


def eta_process(xi, xi_star, cfg):
    """Drifted limit process: noise plus the c0 * y * f''(x0) line.

    Pass xi_star=None for the single-sample process; with xi_star the noise
    term is the sum of both, matching the bootstrap version.
    """
    noise = xi if xi_star is None else xi + xi_star
    y = cfg.y_grid()
    if noise.size != y.size:
        raise ValueError("xi was not sampled on this config's y grid")
    return cfg.c0 ** (-1.5) * noise + cfg.c0 * y * cfg.f2_x0


def count_downcrossings(values):
    """Strict positive-to-negative sign transitions along the path.

    Exact zeros are skipped forward (a touch that recovers does not count);
    an identically zero path counts 0 and emits DegeneratePathWarning.
    """
    v = np.asarray(values, dtype=float)
    nz = v[v != 0.0]
    if nz.size == 0:
        warnings.warn("path is identically zero", DegeneratePathWarning)
        return 0
    return int(np.count_nonzero((nz[:-1] > 0) & (nz[1:] < 0)))


@dataclass(frozen=True)
class LimitModeDistribution:
    """Monte Carlo distribution of downcrossing counts."""

    probs: dict
    reps: int
    c0: float

    def prob(self, k):
        return self.probs.get(int(k), 0.0)

    def prob_at_least(self, k):
        return float(sum(p for kk, p in self.probs.items() if kk >= k))


def limit_mode_distribution(cfg, reps, seed=0):
    """Distribution of downcrossing counts of the drifted process."""
    if reps < 1:
        raise ValueError("need at least one rep")
    grid_n = cfg.resolved_bridge_grid_n()
    counts = {}
    for r in range(reps):
        bridge = simulate_bridge(grid_n, stream(seed, STAGE_BRIDGE, r))
        n = count_downcrossings(eta_process(xi_process(bridge, cfg), None, cfg))
        counts[n] = counts.get(n, 0) + 1
    return LimitModeDistribution(
        probs={k: c / reps for k, c in sorted(counts.items())}, reps=reps, c0=cfg.c0
    )


def conditional_mode_distribution(cfg, bridge, reps, seed=0):
    """Distribution of downcrossings of the bootstrap process, conditioning
    on one realised bridge and resampling only the second one."""
    if reps < 1:
        raise ValueError("need at least one rep")
    xi = xi_process(bridge, cfg)
    grid_n = cfg.resolved_bridge_grid_n()
    counts = {}
    for r in range(reps):
        star = simulate_bridge(grid_n, stream(seed, STAGE_BRIDGE, 1_000_000 + r))
        n = count_downcrossings(eta_process(xi, xi_process(star, cfg), cfg))
        counts[n] = counts.get(n, 0) + 1
    return LimitModeDistribution(
        probs={k: c / reps for k, c in sorted(counts.items())}, reps=reps, c0=cfg.c0
    )


# ---------------------------------------------------------------------------
# Gaussian limit of the excess-mass statistic
# ---------------------------------------------------------------------------


def _sup_drifted_bm(rng, n_paths, u_max, u_step):
    """sup over |u| <= u_max of B(u) - u^2 for two-sided Brownian motions."""
    steps = int(round(u_max / u_step))
    u = np.arange(1, steps + 1) * u_step
    penalty = u * u
    sup = np.zeros(n_paths)
    for _ in range(2):  # two independent sides from the origin
        incr = rng.standard_normal((n_paths, steps)) * np.sqrt(u_step)
        path = np.cumsum(incr, axis=1) - penalty[None, :]
        np.maximum(sup, path.max(axis=1), out=sup)
    return sup


def theorem34_limit_Z(f_cdf_vals, f_prime_vals, reps, seed=0, u_max=8.0, u_step=0.01):
    """Samples of the limit variable behind the excess-mass statistic.

    f_cdf_vals   : (F(x2), F(x3), F(x4)), strictly inside (0, 1)
    f_prime_vals : (f'(x2), f'(x4)), both nonzero

    Draws the trivariate normal with cov(N_i, N_j) = F(x_i)(1 - F(x_j)) for
    i <= j, picks which outer interval endpoint matters by comparing suprema
    of two drifted Brownian motions against |f'(x2)/f'(x4)|^(1/3), and
    returns N_{2I} - N_3.  The suprema use a truncated grid; B(u) - u^2
    drifts to -infinity, so truncation error is negligible (check by
    doubling u_max).
    """
    f2, f3, f4 = (float(v) for v in f_cdf_vals)
    fp2, fp4 = (float(v) for v in f_prime_vals)
    if not (0.0 < f2 <= f3 <= f4 < 1.0):
        raise ValueError("need 0 < F(x2) <= F(x3) <= F(x4) < 1")
    if fp2 == 0.0 or fp4 == 0.0:
        raise ValueError("f' values must be nonzero")
    fs = np.array([f2, f3, f4])
    cov = np.minimum.outer(fs, fs) * (1.0 - np.maximum.outer(fs, fs))
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise InvalidCovarianceError(
            f"non-positive-definite covariance (invalid F ordering): {fs}"
        ) from exc

    threshold = abs(fp2 / fp4) ** (1.0 / 3.0)
    out = np.empty(reps)
    chunk = 2048
    for lo in range(0, reps, chunk):
        c = min(chunk, reps - lo)
        rng = stream(seed, STAGE_LIMIT_Z, lo)
        normals = chol @ rng.standard_normal((3, c))
        sup2 = _sup_drifted_bm(rng, c, u_max, u_step)
        sup4 = _sup_drifted_bm(rng, c, u_max, u_step)
        with np.errstate(divide="ignore", invalid="ignore"):
            pick_first = np.where(sup4 > 0, sup2 / sup4, np.inf) < threshold
        out[lo : lo + c] = np.where(pick_first, normals[0], normals[2]) - normals[1]
    return out


# ---------------------------------------------------------------------------
# Shoulder base density, bump kernel, and the perturbed family
# ---------------------------------------------------------------------------


class PolyShoulderDensity:
    """Compactly supported quartic density on [0, 1] with one mode and one
    shoulder.

    Built from f' proportional to (x0 - x)(x - x1)^2 with x0 = 3/14 and
    x1 = 3/4: the double root puts f' = f'' = 0 and f''' != 0 at x1, and the
    choice of x0 makes f vanish at both support ends while staying positive
    inside.
    """

    def __init__(self):
        self.x0 = 3.0 / 14.0
        self.x1 = 0.75
        # f' ~ -t^3 + (x0 + 2 x1) t^2 - (2 x0 x1 + x1^2) t + x0 x1^2
        dcoef = np.array(
            [self.x0 * self.x1**2, -(2 * self.x0 * self.x1 + self.x1**2),
             self.x0 + 2 * self.x1, -1.0]
        )
        qcoef = npoly.polyint(dcoef)
        norm = npoly.polyval(1.0, npoly.polyint(qcoef))
        self.coef = qcoef / norm
        self.support = (0.0, 1.0)
        self.max_pdf = float(npoly.polyval(self.x0, self.coef))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= 0.0) & (x <= 1.0)
        return np.where(inside, npoly.polyval(x, self.coef), 0.0)

    def deriv(self, x, order=1):
        x = np.asarray(x, dtype=float)
        inside = (x >= 0.0) & (x <= 1.0)
        c = self.coef
        for _ in range(order):
            c = npoly.polyder(c)
        return np.where(inside, npoly.polyval(x, c), 0.0)

    def sample(self, n, rng):
        out = np.empty(n)
        got = 0
        while got < n:
            cand = rng.uniform(0.0, 1.0, size=2 * (n - got) + 16)
            accept = rng.uniform(0.0, self.max_pdf, size=cand.size) < self.pdf(cand)
            take = cand[accept][: n - got]
            out[got : got + take.size] = take
            got += take.size
        return out


class QuarticBump:
    """Symmetric C^3 bump (315/256)(1 - u^2)^4 on [-1, 1], unique mode at 0."""

    def __init__(self):
        base = np.array([1.0, 0.0, -1.0])  # 1 - u^2
        c = np.array([1.0])
        for _ in range(4):
            c = npoly.polymul(c, base)
        self.coef = c * (315.0 / 256.0)
        self.support = (-1.0, 1.0)
        self.max_pdf = 315.0 / 256.0

    def pdf(self, u):
        u = np.asarray(u, dtype=float)
        inside = np.abs(u) <= 1.0
        return np.where(inside, npoly.polyval(u, self.coef), 0.0)

    def deriv(self, u, order=1):
        u = np.asarray(u, dtype=float)
        inside = np.abs(u) <= 1.0
        c = self.coef
        for _ in range(order):
            c = npoly.polyder(c)
        return np.where(inside, npoly.polyval(u, c), 0.0)

    def sample(self, n, rng):
        out = np.empty(n)
        got = 0
        while got < n:
            cand = rng.uniform(-1.0, 1.0, size=2 * (n - got) + 16)
            accept = rng.uniform(0.0, self.max_pdf, size=cand.size) < self.pdf(cand)
            take = cand[accept][: n - got]
            out[got : got + take.size] = take
            got += take.size
        return out


@dataclass(frozen=True)
class BumpDensitySpec:
    """Base density with a shoulder, a bump kernel, and the bump width h1.

    Construction validates the shoulder (f'(x1) = 0 +- 1e-8, f''(x1) = 0
    +- 1e-6, |f'''(x1)| > 0.01), that the bump is a density with a unique
    interior mode, and that the matching equation
    (1/2)|f'''(x1)| y^2 = |psi'(y)| has exactly one root y0 > 0 with
    f'''(x1) y0 + psi''(y0) != 0, which is what makes the perturbation add
    exactly one mode.
    """

    base: PolyShoulderDensity
    psi: QuarticBump
    h1: float

    def __post_init__(self):
        if not self.h1 > 0:
            raise ValueError("h1 must be positive")
        b, p = self.base, self.psi
        x1 = b.x1
        if abs(float(b.deriv(x1, 1))) > 1e-8:
            raise ValueError("base density: f'(x1) must vanish at the shoulder")
        if abs(float(b.deriv(x1, 2))) > 1e-6:
            raise ValueError("base density: f''(x1) must vanish at the shoulder")
        f3 = float(b.deriv(x1, 3))
        if abs(f3) <= 0.01:
            raise ValueError("base density: f'''(x1) too small for a shoulder")
        xs = np.linspace(*p.support, 20001)
        total = np.trapezoid(p.pdf(xs), xs)
        if abs(total - 1.0) > 1e-8:
            raise ValueError(f"bump kernel integrates to {total}, not 1")
        if not float(p.deriv(0.0, 2)) < 0:
            raise ValueError("bump kernel needs a strict mode at 0")
        ys = np.linspace(1e-6, p.support[1], 20001)
        r = 0.5 * abs(f3) * ys**2 - np.abs(p.deriv(ys, 1))
        crossings = np.nonzero(np.diff(np.sign(r)) != 0)[0]
        if crossings.size != 1:
            raise ValueError(
                f"matching equation has {crossings.size} roots; need exactly one"
            )
        y0 = ys[crossings[0]]
        if abs(f3 * y0 + float(p.deriv(y0, 2))) < 1e-6:
            raise ValueError("degenerate bump: f'''(x1) y0 + psi''(y0) vanishes")

    @classmethod
    def default(cls, h1):
        return cls(base=PolyShoulderDensity(), psi=QuarticBump(), h1=h1)


class BumpDensity:
    """The perturbed density (f + h1^3 psi((x - x1)/h1)) / (1 + h1^4)."""

    def __init__(self, spec):
        self.spec = spec
        self.norm = 1.0 + spec.h1**4

    def pdf(self, x):
        s = self.spec
        bump = s.psi.pdf((np.asarray(x, dtype=float) - s.base.x1) / s.h1)
        return (s.base.pdf(x) + s.h1**3 * bump) / self.norm

    def deriv(self, x, order=1):
        s = self.spec
        u = (np.asarray(x, dtype=float) - s.base.x1) / s.h1
        bump = s.psi.deriv(u, order) * s.h1 ** (3 - order)
        return (s.base.deriv(x, order) + bump) / self.norm

    def sample(self, n, rng):
        """Exact mixture sampler: base w.p. 1/(1+h1^4), shifted bump else."""
        s = self.spec
        from_base = rng.random(n) < 1.0 / self.norm
        n_base = int(from_base.sum())
        out = np.empty(n)
        out[from_base] = s.base.sample(n_base, rng)
        out[~from_base] = s.base.x1 + s.h1 * s.psi.sample(n - n_base, rng)
        return out

    def mode_count(self, grid_n=200001):
        """Exact modes of the perturbed density by derivative sign scan."""
        s = self.spec
        lo = min(s.base.support[0], s.base.x1 - s.h1)
        hi = max(s.base.support[1], s.base.x1 + s.h1)
        pad = 1e-9 * (hi - lo)
        x = np.linspace(lo + pad, hi - pad, grid_n)
        sign = np.sign(self.deriv(x, 1))
        sign = sign[sign != 0]
        return int(np.count_nonzero((sign[:-1] > 0) & (sign[1:] < 0)))


def make_bump_density(spec):
    """Evaluable perturbed density plus exact sampler for the spec."""
    return BumpDensity(spec)


@dataclass(frozen=True)
class DetectionRow:
    h: float
    bump_detection_rate: float
    base_unimodal_rate: float
    base_spurious_shoulder_rate: float


def bump_detection_experiment(spec, n, h_values, reps, seed=0,
                              tail_mass_floor=None, shoulder_window=0.15):
    """Mode-count detection rates on the bump family versus its base.

    For each bandwidth h: rate of counting exactly 2 modes on samples from
    the perturbed density; rate of exactly 1 on samples from the base; and
    the rate of spurious extra modes near the shoulder on base samples
    (count >= 2 with some mode within shoulder_window of x1).
    """
    bump = make_bump_density(spec)
    base = spec.base
    rows = []
    for hi, h in enumerate(h_values):
        detect = spurious = unimodal = 0
        for r in range(reps):
            rng = stream(seed, STAGE_BUMP, hi, r)
            sb = Sample.from_values(bump.sample(n, rng))
            rep_b = count_modes(DensityEstimate(sb, h), tail_mass_floor=tail_mass_floor)
            detect += rep_b.count == 2

            s0 = Sample.from_values(base.sample(n, rng))
            rep_0 = count_modes(DensityEstimate(s0, h), tail_mass_floor=tail_mass_floor)
            unimodal += rep_0.count == 1
            near = np.abs(rep_0.modes - base.x1) <= shoulder_window
            spurious += rep_0.count >= 2 and bool(near.any())
        rows.append(DetectionRow(
            h=float(h),
            bump_detection_rate=detect / reps,
            base_unimodal_rate=unimodal / reps,
            base_spurious_shoulder_rate=spurious / reps,
        ))
    return rows
