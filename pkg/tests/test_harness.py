import numpy as np
import pytest

from tsbands.bands import scb_mean
from tsbands.errors import InvalidInputError
from tsbands.estimators import SampleSet
from tsbands.harness import (
    CoverageConfig,
    replication_statistics,
    run_coverage,
    run_single_replication,
    table1_config,
    table2_config,
)
from tsbands.kernels import make_epanechnikov
from tsbands.processes import arch, model1


def small(**kw):
    opts = dict(n=500, replications=12, bandwidths=(0.15, 0.2))
    opts.update(kw)
    return table1_config(**opts)


def test_noiseless_band_contains_truth():
    # zero noise with spread covariates: the band collapses onto the truth
    x = np.linspace(-1.2, 1.2, 2000)
    d = SampleSet(x, np.full_like(x, 0.3), (-1.1, 1.1))
    band = scb_mean(d, make_epanechnikov(), 0.14, sd=lambda v: np.zeros_like(v))
    ok = ~band.floored
    gap = np.abs(band.center[ok] - 0.3) - band.half_width()[ok]
    assert np.all(gap <= 1e-6)


def test_noiseless_model1_collapses_to_fixed_point():
    # with s = 0 the series sits at 0, so the band carries no information
    cfg = small(process=model1(s=0.0), replications=1)
    assert run_single_replication(cfg, 0.14, "finite_sample", 1) is False


def test_single_replication_deterministic():
    cfg = small()
    a = [run_single_replication(cfg, 0.15, "finite_sample", s) for s in range(4)]
    b = [run_single_replication(cfg, 0.15, "finite_sample", s) for s in range(4)]
    assert a == b


def test_single_replication_matches_statistic():
    cfg = small()
    rep = run_coverage(cfg, progress_every=0)
    stats = replication_statistics(cfg, 7)
    for b in cfg.bandwidths:
        q = rep.cell(b, "finite_sample").cutoff
        assert run_single_replication(cfg, b, "finite_sample", 7) == (stats[b] <= q)


def test_variance_target_runs():
    cfg = table2_config(n=500, replications=5, bandwidths=(0.3,))
    rep = run_coverage(cfg, progress_every=0)
    assert 0 <= rep.cell(0.3, "finite_sample").coverage <= 1


def test_one_replication_gives_zero_or_one():
    rep = run_coverage(small(replications=1), progress_every=0)
    for cell in rep.cells.values():
        assert cell.coverage in (0.0, 1.0)


def test_report_deterministic_and_worker_independent():
    cfg = small()
    a = run_coverage(cfg, progress_every=0).to_csv()
    b = run_coverage(cfg, progress_every=0).to_csv()
    c = run_coverage(cfg, workers=2, progress_every=0).to_csv()
    assert a == b == c


def test_asymptotic_cutoff_covers_at_least_as_often():
    rep = run_coverage(small(replications=30), progress_every=0)
    for b in rep.config.bandwidths:
        assert rep.cell(b, "asymptotic").coverage >= rep.cell(b, "finite_sample").coverage
        assert rep.cell(b, "asymptotic").cutoff > rep.cell(b, "finite_sample").cutoff


def test_coverage_increases_with_level():
    covs = []
    for level in (0.90, 0.95, 0.99):
        rep = run_coverage(small(replications=30, level=level, bandwidths=(0.15,)),
                           progress_every=0)
        covs.append(rep.cell(0.15, "finite_sample").coverage)
    assert covs[0] <= covs[1] <= covs[2]


def test_csv_layout():
    cfg = small(replications=3)
    rows = run_coverage(cfg, progress_every=0).to_csv().strip().splitlines()
    assert rows[0] == "b_n,0.15,0.2"
    assert [r.split(",")[0] for r in rows[1:]] == [
        "coverage_asymptotic", "coverage_finite_sample", "se_asymptotic",
        "se_finite_sample", "failures"]
    assert all(len(r.split(",")) == 3 for r in rows)


def test_standard_error():
    rep = run_coverage(small(replications=12), progress_every=0)
    cell = rep.cell(0.15, "finite_sample")
    p = cell.coverage
    assert cell.mc_standard_error == pytest.approx(np.sqrt(p * (1 - p) / 12))


def test_config_validation():
    with pytest.raises(InvalidInputError):
        small(replications=0)
    with pytest.raises(InvalidInputError):
        small(n=50)
    with pytest.raises(InvalidInputError):
        CoverageConfig(model1(), target="median")
    with pytest.raises(InvalidInputError):
        small(cutoff_kinds=("bonferroni",))


def test_unstable_process_refused():
    with pytest.raises(InvalidInputError):
        run_coverage(table2_config(process=arch(1.0, 1.2), replications=1, n=200))


def test_true_sigma_variance_runs():
    cfg = table2_config(n=500, replications=4, bandwidths=(0.3,), true_sigma=True)
    base = run_coverage(table2_config(n=500, replications=4, bandwidths=(0.3,)),
                        progress_every=0)
    rep = run_coverage(cfg, progress_every=0)
    assert rep.cell(0.3, "finite_sample").cutoff == base.cell(0.3, "finite_sample").cutoff
    assert run_single_replication(cfg, 0.3, "finite_sample", 3) in (True, False)
