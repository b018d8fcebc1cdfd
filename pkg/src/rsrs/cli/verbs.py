import sys
import csv
import json
import logging
from dataclasses import asdict, astuple, dataclass, fields

from .. import config, container, core, metrics, oracles, proxy, report
from ..exceptions import RsrsError
from ..tree import build_tree

log = logging.getLogger("rsrs")


@dataclass
class BenchRow:
    N: int
    m: int
    p: int
    atol: float
    t_factor_s: float = 0.0
    memory_scalars: int = 0
    relerr_est: float = 0.0
    errsolve_est: float = 0.0
    status: str = "ok"


CSV_HEADER = [f.name for f in fields(BenchRow)]


def factorize(cfg, o=None):
    """Run the configured method on the configured operator

    :param ExperimentConfig cfg:
    :param LinearOracle o: defaults to the problem's oracle
    :rtype: SkelFactorization
    """
    o = o or config.oracle_for(cfg.problem)
    tree = build_tree(config.points_for(o), cfg.tree.m,
                      admissibility=cfg.tree.admissibility)
    sched = core.ToleranceSchedule(
        atol_leaf=cfg.schedule.atol_leaf,
        growth=cfg.schedule.growth,
        kmax=cfg.sampling.kmax,
    )

    if cfg.method == "srs-proxy":
        return proxy.srs_factor_proxy(
            o, tree, sched,
            proxy=proxy.ProxyConfig(
                radius_factor=cfg.proxy.radius_factor,
                n_proxy=cfg.proxy.n_proxy,
            ),
            stop_level=cfg.schedule.stop_level,
        )

    p = cfg.sampling.p
    if p == "auto":
        p = core.auto_sample_count(tree, sched.kmax,
                                   oversampling=cfg.sampling.oversampling)
    return core.rsrs_factor(
        o, tree, p, sched, cfg.seed,
        stop_level=cfg.schedule.stop_level,
        oversampling=cfg.sampling.oversampling,
        parallel=cfg.parallel,
    )


def _emit(record, stream=None):
    print(json.dumps(record), file=stream or sys.stdout)


def cmd_factor(cfg, out=None):
    f = factorize(cfg)
    report.log_levels(f)
    stats = dict(command="factor", problem=cfg.problem.type)
    stats.update(core.factor_report(f))
    if out:
        container.save_factorization(f, out)
        stats["out"] = out
    _emit(stats)
    return 0


def cmd_verify(cfg, path):
    o = config.oracle_for(cfg.problem)
    f = container.load_factorization(path)
    iters = cfg.verify.power_iterations
    _emit(dict(
        command="verify",
        n=f.n,
        relerr_est=metrics.relerr_estimate(o, f, iters=iters, seed=cfg.seed),
        errsolve_est=metrics.errsolve_estimate(o, f, iters=iters,
                                               seed=cfg.seed),
    ))
    return 0


def bench_row(cfg):
    """Factorize and measure one configuration

    :rtype: BenchRow
    """
    o = config.oracle_for(cfg.problem)
    f = factorize(cfg, o)
    seconds = f.seconds
    if cfg.bench.include_sketch_time:
        seconds += f.sketch_seconds

    iters = cfg.verify.power_iterations
    return BenchRow(
        N=o.n,
        m=cfg.tree.m,
        p=f.p,
        atol=cfg.schedule.atol_leaf,
        t_factor_s=seconds,
        memory_scalars=core.factor_memory(f),
        relerr_est=metrics.relerr_estimate(o, f, iters=iters, seed=cfg.seed),
        errsolve_est=metrics.errsolve_estimate(o, f, iters=iters,
                                               seed=cfg.seed),
    )


def cmd_bench(cfg, csv_path=None):
    rows = []
    for n in cfg.bench.sweep:
        run = cfg.model_copy(update={"problem": config.resize(cfg.problem, n)})
        try:
            row = bench_row(run)
        except RsrsError as e:
            log.warning(f"Sweep entry {n} failed: {e}")
            row = BenchRow(N=n, m=cfg.tree.m, p=0,
                           atol=cfg.schedule.atol_leaf,
                           status=f"error: {type(e).__name__}")
        log.info(f"N={row.N}: {row.t_factor_s:.2f}s, {row.status}")
        rows.append(row)

    if csv_path:
        with open(csv_path, "w", newline="") as f:
            write_csv(f, rows)
    else:
        write_csv(sys.stdout, rows)
    return 0


def write_csv(stream, rows):
    writer = csv.writer(stream)
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(astuple(row))


def cmd_selftest(cfg):
    o = config.oracle_for(cfg.problem)
    result = oracles.oracle_selftest(o, seed=cfg.seed,
                                     probes=cfg.verify.probes)
    _emit(dict(command="selftest", **asdict(result)))
    return 0 if result.passed else 1


def run(opts):
    cfg = config.with_overrides(config.load_config(opts.config),
                                seed=opts.seed)

    if opts.verb == "factor":
        return cmd_factor(cfg, out=opts.out)
    if opts.verb == "verify":
        return cmd_verify(cfg, opts.factorization)
    if opts.verb == "bench":
        return cmd_bench(cfg, csv_path=opts.csv)
    return cmd_selftest(cfg)
