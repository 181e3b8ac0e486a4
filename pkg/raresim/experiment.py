"""
Experiment harness — sweep the awareness ratio μ_r, run IPS-FAS trials and
the Monte Carlo baseline per value, tabulate and persist the results.

Trial n uses the same particle keys at every μ_r (common random numbers).
"""
import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.stats import spearmanr

import raresim
from core.state import load_state, save_state
from raresim.config import RareSimConfig, overridden_fields, provenance
from raresim.scenario import build_scenario_model
from raresim.splitting import estimate_trials, monte_carlo_hits

logger = logging.getLogger(__name__)

METHOD_ORDER = {"ips": 0, "mc": 1}


@dataclass
class ResultRow:
    mu_r: float
    method: str
    gamma_hat: float
    std: float
    stderr: float
    n: int                       # trials (ips) or runs (mc)
    per_level_mean: list = field(default_factory=list)
    values: list = field(default_factory=list)   # per-trial γ̄ (ips) or [hits] (mc)
    wall_time: float = 0.0

    @property
    def sort_key(self) -> tuple:
        return (self.mu_r, METHOD_ORDER.get(self.method, 99))


@dataclass
class ResultTable:
    rows: list
    config: RareSimConfig
    seed: int

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: r.sort_key)

    def method_rows(self, method: str) -> list[ResultRow]:
        return [r for r in self.rows if r.method == method]

    def spearman(self, method: str = "ips") -> Optional[float]:
        """Rank correlation of γ̂ against μ_r (None when undefined)."""
        rows = self.method_rows(method)
        if len(rows) < 2:
            return None
        gammas = [r.gamma_hat for r in rows]
        if len(set(gammas)) < 2:
            return None
        rho = spearmanr([r.mu_r for r in rows], gammas)[0]
        return None if math.isnan(rho) else float(rho)


def _trial_mean(values: Sequence[float]) -> float:
    # numpy sums pairwise
    return float(np.sum(np.asarray(values, dtype=float))) / len(values)


def _run_ips(cfg: RareSimConfig, mu_r: float) -> ResultRow:
    est = cfg.estimator
    model, scenario = build_scenario_model(cfg, mu_r, est.dt)
    schedule = scenario.level_schedule(est.horizon)
    t0 = time.perf_counter()
    chunk = max(1, est.mc_batch // est.particles)
    results = []
    for start in range(0, est.trials, chunk):
        results += estimate_trials(model, schedule, est.particles, est.seed,
                                   range(start, min(start + chunk, est.trials)), dt=est.dt,
                                   budget_policy=est.budget_policy, block_steps=est.block_steps)
    values = [r.gamma for r in results]
    n = len(values)
    std = float(np.std(values, ddof=1)) if n > 1 else 0.0
    per_level = np.asarray([r.per_level_gamma for r in results], dtype=float)
    return ResultRow(mu_r=mu_r, method="ips", gamma_hat=_trial_mean(values), std=std,
                     stderr=std / math.sqrt(n), n=n,
                     per_level_mean=[float(v) for v in per_level.mean(axis=0)],
                     values=values, wall_time=time.perf_counter() - t0)


def _run_mc(cfg: RareSimConfig, mu_r: float) -> ResultRow:
    est = cfg.estimator
    model, scenario = build_scenario_model(cfg, mu_r, est.dt)
    terminal = scenario.level_schedule(est.horizon).predicates[-1]
    t0 = time.perf_counter()
    hits = monte_carlo_hits(model, terminal, est.horizon, est.mc_runs, est.seed, dt=est.dt,
                            batch_size=est.mc_batch, block_steps=est.block_steps)
    p = hits / est.mc_runs
    std = math.sqrt(p * (1.0 - p))
    return ResultRow(mu_r=mu_r, method="mc", gamma_hat=p, std=std,
                     stderr=std / math.sqrt(est.mc_runs), n=est.mc_runs, values=[hits],
                     wall_time=time.perf_counter() - t0)


def run_job(cfg: RareSimConfig, mu_r: float, method: str) -> ResultRow:
    """One (μ_r, method) cell of the sweep."""
    if method == "ips":
        row = _run_ips(cfg, mu_r)
    elif method == "mc":
        row = _run_mc(cfg, mu_r)
    else:
        raise ValueError(f"unknown method {method!r}")
    logger.info(f"mu_r={mu_r:g} {method}: gamma={row.gamma_hat:.4e} "
                f"(stderr {row.stderr:.2e}, {row.wall_time:.1f}s)")
    return row


def check_schedule(cfg: RareSimConfig, samples: int = 64) -> None:
    """Setup checks: no initial state in D_1, levels nested on initial states."""
    model, scenario = build_scenario_model(cfg)
    schedule = scenario.level_schedule(cfg.estimator.horizon)
    hits = schedule.initial_hits(model, cfg.estimator.seed, samples)
    if hits:
        raise ValueError(f"{hits}/{samples} initial states already lie in the first level set")
    mode, cont = scenario.initial_rows(samples)
    schedule.verify_nesting(mode, cont)


def run_sweep(cfg: RareSimConfig, mu_values: Optional[Sequence[float]] = None,
              methods: Optional[Sequence[str]] = None,
              partial_path: Optional[Path] = None) -> ResultTable:
    """Every (μ_r, method) job; rows come back sorted whatever the completion order."""
    mu_values = tuple(cfg.sweep.awareness_ratios if mu_values is None else mu_values)
    methods = tuple(cfg.sweep.methods if methods is None else methods)
    if not mu_values or not methods:
        raise ValueError("sweep needs at least one μ_r value and one method")
    check_schedule(cfg)

    jobs = [(mu, m) for mu in mu_values for m in methods]
    done: dict[tuple, ResultRow] = {}
    logger.info(f"sweep: {len(jobs)} jobs, workers={cfg.output.workers}, seed={cfg.estimator.seed}")
    try:
        if cfg.output.workers > 1:
            with ProcessPoolExecutor(max_workers=cfg.output.workers) as pool:
                futures = {pool.submit(run_job, cfg, mu, m): (mu, m) for mu, m in jobs}
                for fut in as_completed(futures):
                    done[futures[fut]] = fut.result()
        else:
            for mu, m in jobs:
                done[(mu, m)] = run_job(cfg, mu, m)
    except KeyboardInterrupt:
        if partial_path is not None:
            save_state(partial_path, results_document(
                ResultTable(list(done.values()), cfg, cfg.estimator.seed), partial=True))
            logger.warning(f"interrupted: {len(done)}/{len(jobs)} jobs flushed to {partial_path}")
        raise
    return ResultTable(list(done.values()), cfg, cfg.estimator.seed)


# ─── output ───

CSV_FIELDS = ["mu_r", "method", "gamma_hat", "std", "stderr", "n"]


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def results_csv(table: ResultTable) -> str:
    """The results table as RFC-4180 CSV (no timing columns)."""
    levels = max((len(r.per_level_mean) for r in table.rows), default=0)
    header = CSV_FIELDS + [f"level_{k}" for k in range(1, levels + 1)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in table.rows:
        cells = [_fmt(r.mu_r), r.method, _fmt(r.gamma_hat), _fmt(r.std), _fmt(r.stderr), str(r.n)]
        per = [_fmt(v) for v in r.per_level_mean]
        w.writerow(cells + per + [""] * (levels - len(per)))
    return buf.getvalue()


def long_format_csv(table: ResultTable) -> str:
    """Plot-ready γ̂ vs μ_r, one observation per line."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["mu_r", "method", "gamma_hat", "stderr"])
    for r in table.rows:
        w.writerow([_fmt(r.mu_r), r.method, _fmt(r.gamma_hat), _fmt(r.stderr)])
    return buf.getvalue()


def results_document(table: ResultTable, partial: bool = False) -> dict:
    cfg = table.config
    return {
        "provenance": {
            "version": raresim.__version__,
            "seed": table.seed,
            "partial": partial,
            "fields": provenance(cfg),
            "overridden": overridden_fields(cfg),
        },
        "config": asdict(cfg),
        "spearman_ips": table.spearman("ips"),
        "rows": [asdict(r) for r in table.rows],
    }


def emit_results(table: ResultTable, out_dir: Path, fmt: str = "all") -> list[Path]:
    """Write results.csv / gamma_vs_mu_r.csv and/or results.json; returns the paths."""
    if fmt not in ("csv", "json", "all"):
        raise ValueError(f"unknown format {fmt!r}")
    if not table.rows:
        raise ValueError("refusing to write an empty results table")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("csv", "all"):
        for name, text in (("results.csv", results_csv(table)),
                           ("gamma_vs_mu_r.csv", long_format_csv(table))):
            path = out_dir / name
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(text.encode("utf-8"))
            tmp.replace(path)
            written.append(path)
    if fmt in ("json", "all"):
        path = out_dir / "results.json"
        save_state(path, results_document(table))
        written.append(path)
    logger.info(f"wrote {', '.join(str(p) for p in written)}")
    return written


def load_rows(path: Path) -> list[ResultRow]:
    """Rows back from a results.json document."""
    doc = load_state(Path(path))
    if "rows" not in doc:
        raise ValueError(f"{path}: not a results document")
    return [ResultRow(**row) for row in doc["rows"]]


def format_table(table: ResultTable) -> str:
    """Human-readable summary, one line per μ_r."""
    lines = [f"{'mu_r':>8}  {'IPS-FAS':>12}  {'MC':>12}"]
    by_mu: dict[float, dict[str, ResultRow]] = {}
    for r in table.rows:
        by_mu.setdefault(r.mu_r, {})[r.method] = r
    for mu, cells in sorted(by_mu.items()):
        ips = f"{cells['ips'].gamma_hat:.4e}" if "ips" in cells else "-"
        mc = f"{cells['mc'].gamma_hat:.4e}" if "mc" in cells else "-"
        lines.append(f"{mu:>8g}  {ips:>12}  {mc:>12}")
    rho = table.spearman("ips")
    if rho is not None:
        lines.append(f"spearman(mu_r, IPS) = {rho:+.3f}")
    return "\n".join(lines)
