"""Monte Carlo coverage experiments for the simultaneous bands.

Each replication simulates one series, builds the band for every
configured bandwidth and records the studentized sup-deviation

    max_x |truth(x) - center(x)| / unit_width(x)

over the usable grid points. The band with cutoff ``q`` covers the truth
exactly when that statistic is ``<= q``, so one replication answers the
coverage question for every cutoff kind at once.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bands
from .errors import InvalidInputError, TsBandsError
from .estimators import SampleSet
from .kernels import get_kernel
from .processes import ProcessSpec, check_stability, derive_seed, generate, model1, model2

__all__ = [
    "CoverageConfig",
    "CoverageCell",
    "CoverageReport",
    "table1_config",
    "table2_config",
    "replication_statistics",
    "run_single_replication",
    "run_coverage",
]

log = logging.getLogger(__name__)

TABLE1_BANDWIDTHS = (0.10, 0.12, 0.14, 0.15, 0.16, 0.18, 0.20)
TABLE2_BANDWIDTHS = (0.16, 0.18, 0.20, 0.22, 0.24, 0.26, 0.28, 0.30)
DEFAULT_MASTER_SEED = 20080801


@dataclass
class CoverageConfig:
    """Design of a coverage experiment.

    ``aux_bandwidth`` is the bandwidth of the nuisance fit: the variance
    used to studentize a mean band, or the mean removed before a variance
    band. ``None`` reuses the band bandwidth. ``true_sigma`` scales band
    widths with the true sigma (mean target) or variance (variance target).
    """

    process: ProcessSpec
    target: str = "mean"
    n: int = 2500
    replications: int = 2000
    bandwidths: tuple = TABLE1_BANDWIDTHS
    interval: tuple = (-1.1, 1.1)
    grid: object = 20
    level: float = 0.95
    cutoff_kinds: tuple = ("asymptotic", "finite_sample")
    fit_grid_count: int = 300
    master_seed: int = DEFAULT_MASTER_SEED
    kernel: str = "epanechnikov"
    true_sigma: bool = False
    aux_bandwidth: float = None
    density_floor: float = None

    def __post_init__(self):
        if self.replications < 1:
            raise InvalidInputError("replications must be >= 1")
        if self.n < 100:
            raise InvalidInputError("n must be >= 100")
        if self.target not in ("mean", "variance"):
            raise InvalidInputError("target must be 'mean' or 'variance'")
        if not 0 < self.level < 1:
            raise InvalidInputError("level must lie in (0, 1)")
        for kind in self.cutoff_kinds:
            if kind not in bands.CUTOFF_KINDS:
                raise InvalidInputError(f"unknown cutoff kind {kind!r}")
        self.bandwidths = tuple(float(b) for b in self.bandwidths)
        self.interval = tuple(float(t) for t in self.interval)

    @property
    def alpha(self):
        return 1.0 - self.level

    def truth(self):
        if self.target == "mean":
            return self.process.mean_fn()
        return self.process.variance_fn()

    def describe(self):
        d = asdict(self)
        d["process"] = {"kind": self.process.kind, "params": self.process.params,
                        "burn_in": self.process.burn_in,
                        "innovation": self.process.innovation}
        return d


def table1_config(**overrides):
    """Model 1 mean-band experiment (``mu = 0.9 sin x``, ``s = 0.4``)."""
    opts = dict(process=model1(), target="mean", interval=(-1.1, 1.1),
                bandwidths=TABLE1_BANDWIDTHS)
    opts.update(overrides)
    return CoverageConfig(**opts)


def table2_config(**overrides):
    """Model 2 variance-band experiment (``sigma^2 = 0.4 + 0.2 x^2``)."""
    opts = dict(process=model2(), target="variance", interval=(-1.0, 1.0),
                bandwidths=TABLE2_BANDWIDTHS)
    opts.update(overrides)
    return CoverageConfig(**opts)


def _sample(config, seed):
    spec = config.process.with_seed(seed)
    _, pairs = generate(spec, config.n + 1, force=True)
    return SampleSet(pairs[:, 0], pairs[:, 1], config.interval)


def _parts(config, data, kernel, bandwidth):
    if config.target == "mean":
        sd = config.process.sd_fn() if config.true_sigma else None
        return bands.mean_band_parts(data, kernel, bandwidth, config.grid, sd=sd,
                                     h=config.aux_bandwidth,
                                     density_floor=config.density_floor,
                                     fit_points=config.fit_grid_count)
    scale = config.process.variance_fn() if config.true_sigma else None
    return bands.variance_band_parts(data, kernel, bandwidth, config.grid,
                                     b=config.aux_bandwidth,
                                     density_floor=config.density_floor,
                                     fit_points=config.fit_grid_count, scale=scale)


def replication_statistics(config, seed, bandwidths=None):
    """Studentized sup-deviation for each bandwidth (NaN on failure)."""
    kernel = get_kernel(config.kernel)
    truth = config.truth()
    data = _sample(config, seed)
    out = {}
    for b in bandwidths or config.bandwidths:
        try:
            parts = _parts(config, data, kernel, b)
        except TsBandsError as exc:
            log.debug("replication seed=%d b=%g failed: %s", seed, b, exc)
            out[b] = math.nan
            continue
        ok = ~parts.floored
        dev = np.abs(truth(parts.grid.points[ok]) - parts.center[ok]) / parts.unit[ok]
        out[b] = float(dev.max()) if np.all(np.isfinite(dev)) else math.inf
    return out


def run_single_replication(config, bandwidth, cutoff_kind, seed):
    """Build one band through the public API and check that it covers the truth.

    A band that cannot be built counts as not covering.
    """
    kernel = get_kernel(config.kernel)
    data = _sample(config, seed)
    try:
        if config.target == "mean":
            sd = config.process.sd_fn() if config.true_sigma else None
            band = bands.scb_mean(data, kernel, bandwidth, config.alpha, cutoff_kind,
                                  config.grid, sd=sd, h=config.aux_bandwidth,
                                  density_floor=config.density_floor,
                                  fit_points=config.fit_grid_count)
        else:
            scale = config.process.variance_fn() if config.true_sigma else None
            band = bands.scb_variance(data, kernel, bandwidth, config.alpha, cutoff_kind,
                                      config.grid, b=config.aux_bandwidth,
                                      density_floor=config.density_floor,
                                      fit_points=config.fit_grid_count, scale=scale)
    except TsBandsError:
        return False
    return bands.validate_parametric(band, config.truth()).accepted


@dataclass
class CoverageCell:
    bandwidth: float
    cutoff_kind: str
    cutoff: float
    cover_count: int
    replications: int
    failures: int

    @property
    def coverage(self):
        return self.cover_count / self.replications

    @property
    def mc_standard_error(self):
        p = self.coverage
        return math.sqrt(p * (1.0 - p) / self.replications)


@dataclass
class CoverageReport:
    config: CoverageConfig
    cells: dict = field(default_factory=dict)

    def cell(self, bandwidth, cutoff_kind):
        return self.cells[(float(bandwidth), cutoff_kind)]

    def row(self, cutoff_kind):
        return [self.cell(b, cutoff_kind).coverage for b in self.config.bandwidths]

    def to_csv(self):
        """Table with bandwidth columns and one coverage row per cutoff kind."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        label = "b_n" if self.config.target == "mean" else "h_n"
        bws = self.config.bandwidths
        w.writerow([label, *(f"{b:g}" for b in bws)])
        for kind in self.config.cutoff_kinds:
            w.writerow([f"coverage_{kind}",
                        *(f"{self.cell(b, kind).coverage:.4f}" for b in bws)])
        for kind in self.config.cutoff_kinds:
            w.writerow([f"se_{kind}",
                        *(f"{self.cell(b, kind).mc_standard_error:.4f}" for b in bws)])
        w.writerow(["failures", *(str(self.cell(b, self.config.cutoff_kinds[0]).failures)
                                   for b in bws)])
        return buf.getvalue()


def _chunk_statistics(args):
    config, indices = args
    return [replication_statistics(config, derive_seed(config.master_seed, i))
            for i in indices]


def _statistics(config, workers, progress_every):
    reps = config.replications
    if workers <= 1:
        stats = []
        for i in range(reps):
            stats.append(replication_statistics(config, derive_seed(config.master_seed, i)))
            if progress_every and (i + 1) % progress_every == 0:
                log.info("%d/%d replications", i + 1, reps)
        return stats
    chunks = [range(s, min(reps, s + 50)) for s in range(0, reps, 50)]
    stats = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for done in pool.map(_chunk_statistics, [(config, c) for c in chunks]):
            stats.extend(done)
            log.info("%d/%d replications", len(stats), reps)
    return stats


def run_coverage(config, workers=1, progress_every=100):
    """Run the experiment and tally coverage per bandwidth and cutoff kind.

    Replication ``i`` uses seed ``derive_seed(master_seed, i)`` and the same
    series for every bandwidth, so results do not depend on ``workers``.
    """
    stab = check_stability(config.process)
    if not stab.stable:
        raise InvalidInputError(f"process is not stable (margin {stab.margin:.4g})")
    stats = _statistics(config, workers, progress_every)
    report = CoverageReport(config)
    for kind in config.cutoff_kinds:
        for b in config.bandwidths:
            # grid size depends on b only for the 2k0b spacing rule
            kstar_k0 = math.sqrt(2.0) * get_kernel(config.kernel).k0
            m = bands.resolve_grid(config.grid, config.interval, kstar_k0, b).m
            q = bands.cutoff_value(kind, m, config.alpha)
            vals = np.array([s[b] for s in stats])
            failures = int(np.count_nonzero(np.isnan(vals)))
            covered = int(np.count_nonzero(vals <= q))
            report.cells[(b, kind)] = CoverageCell(b, kind, q, covered, config.replications,
                                                  failures)
    return report
