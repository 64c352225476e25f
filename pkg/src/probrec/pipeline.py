"""Batch reconciliation runs: load or simulate base forecasts, reconcile each
step, score against observations and write CSV tables.

Output files (UTF-8, comma separated, ``\\n`` line endings, floats written
with ``repr`` so reruns are byte-identical):

``reconciled.csv``
    step:int, series:str, method:{base,reconc}, mean:float, var:float,
    median:float, lower:float, upper:float. ``lower``/``upper`` are the
    ``alpha/2`` and ``1 - alpha/2`` inverse-CDF quantiles.
``scores.csv`` (only with observations)
    step:int, series:str, metric:{ES,IS,SE,AE}, base:float, reconc:float,
    skill:float. ES is joint over the hierarchy and uses series ``joint``;
    its skill is ``nan`` when a sample ES estimate is negative.
``diagnostics.csv``
    step:int, status:str (``ok`` or ``error:<Kind>``), p_c:float,
    p_c_error:float, ess:float, base_upper_mean:float,
    bottom_up_mean:float, reconc_upper_mean:float, effect:str, message:str.
    ``p_c`` is the exact truncated value (enumerate; ``p_c_error`` is the
    truncation bound) or the mean importance weight (importance;
    ``p_c_error`` its standard error). Gaussian runs leave it empty.
``gaussian.json`` (gaussian mode), ``panel.csv`` and ``summary.json``
(simulate-study mode).
"""

from __future__ import annotations

import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .analytic import enumerate_reconciled, exact_pc
from .distributions import (
    HierForecast,
    MultivariateGaussian,
    Normal,
    NegativeBinomial,
    child_generators,
    distribution_from_json,
)
from .errors import ConfigError, ReconciliationError
from .gaussian import convex_weights_single_upper, reconcile_gaussian
from .hierarchy import Hierarchy, build_hierarchy, load_hierarchy
from .importance import MIN_DRAWS, empirical_quantile, reconcile_is, sample_stats
from .scoredriven import ScoreDrivenParams, adi, aggregate_forecast, simulate_panel
from .scoring import score_step

__all__ = ["RunConfig", "run", "classify_effect", "MODES"]

MODES = ("gaussian", "importance", "enumerate", "simulate-study")


@dataclass
class RunConfig:
    mode: str
    out: str
    hierarchy: str | None = None
    forecasts: str | None = None
    obs: str | None = None
    n_draws: int = 100_000
    seed: int = 0
    tail_tol: float = 1e-9
    alpha: float = 0.1
    workers: int = 1
    es_pairing: str = "disjoint"

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.forecasts is None:
            raise ConfigError(f"--forecasts is required for mode {self.mode}")
        if self.mode != "simulate-study" and self.hierarchy is None:
            raise ConfigError(f"--hierarchy is required for mode {self.mode}")
        if self.mode in ("importance", "simulate-study") and self.n_draws < MIN_DRAWS:
            raise ConfigError(f"n_draws must be at least {MIN_DRAWS} for importance sampling")
        if self.n_draws < 2:
            raise ConfigError("n_draws must be at least 2")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0 < self.tail_tol < 1:
            raise ConfigError("tail_tol must lie in (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.es_pairing not in ("disjoint", "all"):
            raise ConfigError("es_pairing must be 'disjoint' or 'all'")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


def classify_effect(base_upper_mean, bottom_up_mean, reconciled_upper_mean, tol: float = 0.0) -> str:
    """Label how reconciliation moved the upper mean.

    ``"strengthening"`` if it fell below both the base and the bottom-up mean
    (by more than ``tol``), ``"compromise"`` if it lies strictly between them
    (at least ``tol`` away from both), ``"other"`` otherwise.
    """
    lo = min(base_upper_mean, bottom_up_mean)
    hi = max(base_upper_mean, bottom_up_mean)
    r = reconciled_upper_mean
    if r < lo - tol:
        return "strengthening"
    if lo + tol < r < hi - tol:
        return "compromise"
    return "other"


# ---------------------------------------------------------------- parsing


def _parse_block(items):
    if isinstance(items, dict):
        return distribution_from_json(items)
    return [distribution_from_json(d) for d in items]


def parse_step(obj: dict):
    """One step of a forecasts file: ``{"upper": [...], "bottom": [...]}`` or ``{"joint": {...}}``."""
    if "joint" in obj:
        d = distribution_from_json(obj["joint"])
        if not isinstance(d, MultivariateGaussian):
            raise ConfigError("a joint forecast must be a multivariate gaussian")
        return d
    try:
        return HierForecast(_parse_block(obj["upper"]), _parse_block(obj["bottom"]), bool(obj.get("independent", True)))
    except KeyError as exc:
        raise ConfigError(f"forecast step is missing {exc}") from None


def load_forecasts(path) -> list:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    steps = obj["steps"] if isinstance(obj, dict) and "steps" in obj else [obj]
    return [parse_step(s) for s in steps]


def load_observations(path, h: Hierarchy) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    missing = [lab for lab in h.labels if rows and lab not in rows[0]]
    if missing:
        raise ConfigError(f"observation file lacks columns {missing}")
    return np.array([[float(r[lab]) for lab in h.labels] for r in rows])


# ---------------------------------------------------------------- per-step work


@dataclass
class StepOutput:
    step: int
    reconciled: list = field(default_factory=list)
    scores: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    error: str | None = None


def _step_seed(seed: int, step: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(1, step))


def _dist_summary(d, probs, tail_tol):
    """(mean, var, median, lower, upper) of a univariate base distribution."""
    mean, var = d.mean_var()
    if isinstance(d, Normal):
        q = norm.ppf([0.5, *probs], loc=d.mean, scale=math.sqrt(d.var))
    else:
        values, p, _ = d.support(tail_tol)
        cdf = np.cumsum(p)
        # inverse CDF on the (truncated) support
        q = values[np.minimum(np.searchsorted(cdf, [0.5, *probs], side="left"), values.size - 1)]
    return [mean, var, *(float(v) for v in q)]


def _base_rows(h: Hierarchy, base, probs, tail_tol):
    if isinstance(base, MultivariateGaussian):
        out = []
        for i in range(h.n):
            out.append(_dist_summary(Normal(base.mean[i], max(base.cov[i, i], 1e-300)), probs, tail_tol))
        return out
    rows = []
    for block in (base.upper, base.bottom):
        if isinstance(block, MultivariateGaussian):
            for i in range(block.dim):
                rows.append(_dist_summary(Normal(block.mean[i], block.cov[i, i]), probs, tail_tol))
        else:
            rows.extend(_dist_summary(d, probs, tail_tol) for d in block)
    return rows


def _sample_base(base, seed, size):
    if isinstance(base, MultivariateGaussian):
        (rng,) = child_generators(seed, 1)
        return base.sample(rng, size)
    up_ss, bottom_ss = seed.spawn(2)
    return np.hstack([base.sample_block("upper", up_ss, size), base.sample_block("bottom", bottom_ss, size)])


def _rows(step, h, method, stats):
    return [[step, lab, method, *stats[i]] for i, lab in enumerate(h.labels)]


def _stats_from_samples(x, probs):
    st = sample_stats(x, probs)
    return [[st.mean[i], st.var[i], st.median[i], *st.quantiles[:, i]] for i in range(x.shape[1])]


def _upper_means(h, base):
    means, _ = base.mean_var() if isinstance(base, HierForecast) else (base.mean, None)
    base_up = float(means[0])
    bottom_up = float(h.A[0] @ means[h.n_upper :])
    return base_up, bottom_up


def _score(out: StepOutput, h, cfg, base, reconc_draws, y, seed, base_draws=None):
    if y is None:
        return
    if base_draws is None:
        base_draws = _sample_base(base, seed, cfg.n_draws)
    rep = score_step(h.labels, base_draws, reconc_draws, y, cfg.alpha, cfg.es_pairing)
    out.scores = [[out.step, *r] for r in rep.rows()]
    out.extra.update(
        width_base=rep.width["base"].tolist(),
        width_reconc=rep.width["reconc"].tolist(),
        covered_base=rep.covered["base"].tolist(),
        covered_reconc=rep.covered["reconc"].tolist(),
        ae_upper_base=float(rep.ae_per_series["base"][0]),
        ae_upper_optimal=float(rep.ae_per_series["reconc"][0]),
    )


def _run_step(args) -> StepOutput:
    cfg, h, step, base, y = args
    out = StepOutput(step)
    probs = (cfg.alpha / 2.0, 1.0 - cfg.alpha / 2.0)
    ss = _step_seed(cfg.seed, step)
    rec_ss, base_ss, draw_ss = ss.spawn(3)
    diag = dict.fromkeys(
        ["p_c", "p_c_error", "ess", "base_upper_mean", "bottom_up_mean", "reconc_upper_mean"], None
    )
    diag.update(status="ok", effect="", message="")
    base_draws = None
    try:
        if isinstance(base, HierForecast):
            base.check(h)
        out.reconciled.extend(_rows(step, h, "base", _base_rows(h, base, probs, cfg.tail_tol)))

        if cfg.mode == "gaussian":
            joint = base if isinstance(base, MultivariateGaussian) else base.to_gaussian()
            g = reconcile_gaussian(h, joint)
            sd = np.sqrt(np.concatenate([np.diag(g.upper_cov), np.diag(g.bottom_cov)]))
            mean = g.mean
            stats = [[mean[i], sd[i] ** 2, mean[i], *norm.ppf(probs, mean[i], max(sd[i], 1e-300))] for i in range(h.n)]
            out.reconciled.extend(_rows(step, h, "reconc", stats))
            info = g.to_json()
            try:
                w_base, w_bu, var_bu = convex_weights_single_upper(h, joint)
                info["weights"] = {"base": w_base, "bottom_up": w_bu, "bottom_up_var": var_bu}
            except ReconciliationError:
                info["weights"] = None
            out.extra["gaussian"] = info
            reconc_upper = float(g.upper_mean[0])
            rec_draws = None
            if y is not None:
                (rng,) = child_generators(draw_ss, 1)
                b = rng.multivariate_normal(g.bottom_mean, g.bottom_cov, size=cfg.n_draws, method="eigh")
                rec_draws = b @ h.S.T
            tol = 1e-9
        elif cfg.mode == "enumerate":
            table = enumerate_reconciled(h, base, cfg.tail_tol)
            full = table.full_support
            stats = []
            mean, var = table.mean(), table.var()
            for i in range(h.n):
                values, p = table.marginal(i)
                cdf = np.cumsum(p)
                q = values[np.minimum(np.searchsorted(cdf, [0.5, *probs], side="left"), values.size - 1)]
                stats.append([mean[i], var[i], *(float(v) for v in q)])
            out.reconciled.extend(_rows(step, h, "reconc", stats))
            pc = exact_pc(h, base, cfg.tail_tol)
            diag.update(p_c=pc.p_c, p_c_error=pc.truncation_bound)
            reconc_upper = float(mean[0])
            rec_draws = None
            if y is not None:
                (rng,) = child_generators(draw_ss, 1)
                rec_draws = full[rng.choice(full.shape[0], size=cfg.n_draws, p=table.probs)]
            tol = 1e-9
        else:
            s = reconcile_is(h, base, cfg.n_draws, rec_ss)
            rec_draws = s.full
            st = _stats_from_samples(s.full, probs)
            out.reconciled.extend(_rows(step, h, "reconc", st))
            diag.update(p_c=s.mean_weight, p_c_error=s.mean_weight_se, ess=s.ess)
            reconc_upper = float(st[0][0])
            # three Monte Carlo standard errors of the reconciled upper mean
            tol = 3.0 * math.sqrt(st[0][1] * (1.0 / s.ess + 1.0 / cfg.n_draws))
            med = empirical_quantile(s.bottom, 0.5)
            if y is not None:
                out.extra["ae_upper_coherent"] = float(abs(y[0] - h.A[0] @ med))
                # the proposals are already an i.i.d. base bottom sample
                base_draws = np.hstack([base.sample_block("upper", base_ss, cfg.n_draws), s.proposals])

        if h.n_upper == 1:
            base_up, bottom_up = _upper_means(h, base)
            diag.update(base_upper_mean=base_up, bottom_up_mean=bottom_up, reconc_upper_mean=reconc_upper)
            diag["effect"] = classify_effect(base_up, bottom_up, reconc_upper, tol)
        _score(out, h, cfg, base, rec_draws, y, base_ss, base_draws)
    except ReconciliationError as exc:
        out.error = type(exc).__name__
        diag["status"] = f"error:{out.error}"
        diag["message"] = str(exc)
        out.reconciled = []
        out.scores = []
    out.diagnostics = diag
    return out


# ---------------------------------------------------------------- output


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            writer.writerow([_fmt(v) for v in r])


RECONCILED_HEADER = ["step", "series", "method", "mean", "var", "median", "lower", "upper"]
SCORES_HEADER = ["step", "series", "metric", "base", "reconc", "skill"]
DIAG_HEADER = [
    "step", "status", "p_c", "p_c_error", "ess", "base_upper_mean",
    "bottom_up_mean", "reconc_upper_mean", "effect", "message",
]


def _write_outputs(out_dir: Path, outputs: list[StepOutput], with_scores: bool) -> None:
    _write_csv(out_dir / "reconciled.csv", RECONCILED_HEADER, [r for o in outputs for r in o.reconciled])
    if with_scores:
        _write_csv(out_dir / "scores.csv", SCORES_HEADER, [r for o in outputs for r in o.scores])
    _write_csv(
        out_dir / "diagnostics.csv",
        DIAG_HEADER,
        [[o.step, *(o.diagnostics[k] for k in DIAG_HEADER[1:])] for o in outputs],
    )


def _dump_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _summarise(h: Hierarchy, outputs: list[StepOutput]) -> dict:
    ok = [o for o in outputs if o.error is None]
    summary: dict = {"steps": len(outputs), "failed_steps": len(outputs) - len(ok)}
    effects = [o.diagnostics["effect"] for o in ok]
    summary["effect_fraction"] = {
        e: (effects.count(e) / len(effects) if effects else float("nan"))
        for e in ("strengthening", "compromise", "other")
    }
    scored = [o for o in ok if o.scores]
    if not scored:
        return summary
    skill: dict = {}
    for metric in ("ES", "IS", "SE", "AE"):
        for series in (["joint"] if metric == "ES" else list(h.labels)):
            vals = np.array([r[5] for o in scored for r in o.scores if r[1] == series and r[2] == metric], dtype=float)
            skill.setdefault(metric, {})[series] = float(np.nanmean(vals)) if np.any(~np.isnan(vals)) else float("nan")
    summary["mean_skill"] = skill
    summary["es_skill_undefined_steps"] = int(
        sum(1 for o in scored for r in o.scores if r[2] == "ES" and math.isnan(r[5]))
    )
    wb = np.array([o.extra["width_base"] for o in scored])
    wr = np.array([o.extra["width_reconc"] for o in scored])
    cb = np.array([o.extra["covered_base"] for o in scored], dtype=float)
    cr = np.array([o.extra["covered_reconc"] for o in scored], dtype=float)
    summary["mean_width"] = {
        "base": dict(zip(h.labels, wb.mean(axis=0).tolist())),
        "reconc": dict(zip(h.labels, wr.mean(axis=0).tolist())),
    }
    summary["coverage"] = {
        "base": dict(zip(h.labels, cb.mean(axis=0).tolist())),
        "reconc": dict(zip(h.labels, cr.mean(axis=0).tolist())),
    }
    summary["upper_width_not_larger_fraction"] = float(np.mean(wr[:, 0] <= wb[:, 0]))
    if all("ae_upper_coherent" in o.extra for o in scored):
        summary["upper_mae"] = {
            "optimal": float(np.mean([o.extra["ae_upper_optimal"] for o in scored])),
            "coherent": float(np.mean([o.extra["ae_upper_coherent"] for o in scored])),
            "base": float(np.mean([o.extra["ae_upper_base"] for o in scored])),
        }
    return summary


def _execute(cfg: RunConfig, h: Hierarchy, forecasts: list, obs) -> list[StepOutput]:
    jobs = [(cfg, h, i, f, None if obs is None else obs[i]) for i, f in enumerate(forecasts)]
    if cfg.workers == 1:
        return [_run_step(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        # map preserves step order, so the files do not depend on scheduling
        return list(pool.map(_run_step, jobs, chunksize=max(1, len(jobs) // (4 * cfg.workers))))


def _simulate_inputs(cfg: RunConfig):
    with open(cfg.forecasts, encoding="utf-8") as fh:
        sim = json.load(fh)
    try:
        bottom_params = ScoreDrivenParams.from_json(sim["bottom"])
        upper_params = ScoreDrivenParams.from_json(sim["upper"])
        T = int(sim["T"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad simulation parameters: {exc}") from None
    burn_in = int(sim.get("burn_in", 0))
    if cfg.hierarchy is not None:
        h = load_hierarchy(cfg.hierarchy)
    else:
        labels_b = sim.get("labels_bottom") or [f"B{i + 1}" for i in range(bottom_params.k)]
        h = build_hierarchy(np.ones((1, bottom_params.k), dtype=int), [sim.get("label_upper", "ALL"), *labels_b])
    if h.n_upper != 1 or h.m != bottom_params.k:
        raise ConfigError("simulation needs a one-upper hierarchy over the simulated series")

    panel = simulate_panel(bottom_params, T, np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,))))
    upper = aggregate_forecast(panel.counts @ h.A.T, upper_params)
    forecasts, obs = [], []
    for t in range(burn_in, T):
        up = NegativeBinomial(float(upper.mus[t, 0]), float(upper_params.alpha[0]))
        forecasts.append(HierForecast([up], panel.forecast_distributions(t)))
        obs.append(np.concatenate([h.A @ panel.counts[t], panel.counts[t]]).astype(float))
    stats = {
        "zero_fraction": dict(zip(h.labels_bottom, (panel.counts == 0).mean(axis=0).tolist())),
        "adi": {lab: adi(panel.counts[:, i]) for i, lab in enumerate(h.labels_bottom)},
        "mean": dict(zip(h.labels_bottom, panel.counts.mean(axis=0).tolist())),
    }
    return h, panel, forecasts, np.array(obs), stats


def run(cfg: RunConfig) -> int:
    """Execute a configured run; returns the process exit status (0 ok, 1 step failures).

    Raises :class:`ConfigError` (exit status 2 in the CLI) for invalid configuration or inputs.
    """
    cfg.validate()
    out_dir = Path(cfg.out)
    try:
        if cfg.mode == "simulate-study":
            h, panel, forecasts, obs, panel_stats = _simulate_inputs(cfg)
        else:
            h = load_hierarchy(cfg.hierarchy)
            forecasts = load_forecasts(cfg.forecasts)
            obs = load_observations(cfg.obs, h) if cfg.obs else None
            if obs is not None and obs.shape[0] != len(forecasts):
                raise ConfigError(f"{obs.shape[0]} observation rows for {len(forecasts)} forecast steps")
    except (OSError, json.JSONDecodeError, ReconciliationError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot load inputs: {exc}") from exc

    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = _execute(cfg, h, forecasts, obs)
    _write_outputs(out_dir, outputs, obs is not None)

    if cfg.mode == "gaussian":
        _dump_json(out_dir / "gaussian.json", [o.extra.get("gaussian") for o in outputs])
    if cfg.mode == "simulate-study":
        panel.to_csv(out_dir / "panel.csv", list(h.labels_bottom))
        summary = _summarise(h, outputs)
        summary["panel"] = panel_stats
        summary["config"] = {k: v for k, v in asdict(cfg).items() if k not in ("out", "workers")}
        _dump_json(out_dir / "summary.json", summary)

    failed = [o for o in outputs if o.error]
    for o in failed:
        print(f"step={o.step} error={o.error} message={o.diagnostics['message']}", file=sys.stderr)
    return 1 if failed else 0
