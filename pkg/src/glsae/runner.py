"""Run orchestration: panel fits and the replicated evaluation harness.

Both commands write a ``manifest.json`` capturing every input that can
affect the result (package version, seeds, sampler settings, grid
selection); every emitted table carries the manifest hash, and re-running
with the same configuration reproduces each file byte-exactly regardless
of worker count. The evaluation driver caches one JSON file per
(row, replicate) work item, so an interrupted run resumes where it
stopped and still produces identical tables.

Worker count comes from the GLSAE_WORKERS environment variable (default
1); work items are scheduled across a process pool but every item derives
its streams from its own coordinates, so scheduling cannot leak into the
results.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import DEFAULT_THRESHOLD, rhat_report
from .gibbs import DrawStore, run_chains
from .io import load_panel, sha256_file, write_manifest, write_table
from .metrics import FitScore, MEASURES, aggregate, best_model_counts, discrepancy_ratio, score
from .model import SamplerSettings, SourcePanel, variant
from .rng import RngStream, derive_stream_id
from .simgen import generate, load_spec_table, spec_table, synthetic_v_pool
from .summary import kappa_weights, phi_distribution, summarize

_STREAM_FIT = 0
_STREAM_GEN = 1
_STREAM_MODEL0 = 16


def worker_count() -> int:
    raw = os.environ.get("GLSAE_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# fit


@dataclass(frozen=True)
class FitConfig:
    panel_path: str
    models: tuple[str, ...]
    seed: int
    out_dir: str
    n_chains: int = 1
    n_iter: int = 18000
    n_burnin: int = 3000
    thin: int = 1
    source: str | None = None
    level: float = 0.95
    overdispersion: float | None = None
    save_draws: bool = True

    def to_payload(self) -> dict:
        return {
            "command": "fit",
            "version": __version__,
            "panel": str(self.panel_path),
            "panel_sha256": sha256_file(self.panel_path),
            "models": list(self.models),
            "seed": self.seed,
            "n_chains": self.n_chains,
            "n_iter": self.n_iter,
            "n_burnin": self.n_burnin,
            "thin": self.thin,
            "source": self.source,
            "level": self.level,
            "overdispersion": self.overdispersion,
        }


def _fit_panel_for(model, panel: SourcePanel, source: str | None) -> SourcePanel:
    if model.has_theta_level:
        return panel
    if panel.n_sources == 1:
        return panel
    if source is None:
        raise ValueError("one_source on a multi-source panel needs --source")
    if source in panel.sources:
        return panel.select_source(panel.sources.index(source))
    try:
        return panel.select_source(int(source))
    except (ValueError, IndexError):
        raise ValueError(f"unknown source {source!r}; panel has {panel.sources}") from None


def _save_draws(store: DrawStore, out: Path, tag: str) -> list[Path]:
    droot = out / "draws" / tag
    droot.mkdir(parents=True, exist_ok=True)
    written = []
    for name, arr in sorted(store.draws.items()):
        p = droot / f"{name}.npy"
        np.save(p, arr)
        written.append(p)
    meta = {
        "variant": store.variant.tag,
        "n_chains": store.settings.n_chains,
        "n_iter": store.settings.n_iter,
        "n_burnin": store.settings.n_burnin,
        "thin": store.settings.thin,
        "seed": store.settings.seed,
        "quantities": sorted(store.draws),
        "n_areas": store.n_areas,
        "n_sources": store.n_sources,
    }
    mp = droot / "meta.json"
    mp.write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
    written.append(mp)
    return written


def run_fit(config: FitConfig) -> dict:
    """Fit the requested variants on one panel; returns the manifest payload."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    panel = load_panel(config.panel_path)
    payload = config.to_payload()
    from .io import manifest_hash as _mh

    stamp = _mh(payload)
    written: list[Path] = []
    long_rows = []

    for m_idx, tag in enumerate(config.models):
        model = variant(tag)
        fit_panel = _fit_panel_for(model, panel, config.source)
        settings = SamplerSettings(
            seed=config.seed,
            n_iter=config.n_iter,
            n_burnin=config.n_burnin,
            n_chains=config.n_chains,
            thin=config.thin,
            monitor=frozenset({"mu", "eta", "variances", "phi"}),
        )
        store = run_chains(
            fit_panel,
            model,
            settings,
            overdispersion=config.overdispersion,
            stream_base=derive_stream_id(_STREAM_FIT, m_idx),
        )

        summ = summarize(store, level=config.level, quantity="mu")
        rows = [
            (area, summ.mean[i], summ.sd[i], summ.lower[i], summ.upper[i])
            for i, area in enumerate(fit_panel.areas)
        ]
        p = out / f"summary_{model.tag}.csv"
        write_table(p, ("area", "post_mean", "post_sd", "lower", "upper"), rows, stamp)
        written.append(p)
        for i, area in enumerate(fit_panel.areas):
            long_rows.append((area, model.tag, "post_mean", summ.mean[i]))
            long_rows.append((area, model.tag, "post_sd", summ.sd[i]))
            long_rows.append((area, model.tag, "lower", summ.lower[i]))
            long_rows.append((area, model.tag, "upper", summ.upper[i]))

        fives = phi_distribution(store)
        p = out / f"phi_{model.tag}.csv"
        write_table(
            p,
            ("area", "min", "q1", "median", "q3", "max"),
            [(area, *fives[i]) for i, area in enumerate(fit_panel.areas)],
            stamp,
        )
        written.append(p)

        if model.theta_variance_form == "source":
            kap = kappa_weights(fit_panel, store.draws["lambda_ij"], store.draws["tau1_sq"])
            kap_mean = kap.reshape((-1,) + kap.shape[2:]).mean(axis=0)
            rows = [
                (area, src, kap_mean[i, j])
                for i, area in enumerate(fit_panel.areas)
                for j, src in enumerate(fit_panel.sources)
            ]
            p = out / f"kappa_{model.tag}.csv"
            write_table(p, ("area", "source", "kappa_mean"), rows, stamp)
            written.append(p)

        if config.n_chains > 1:
            report = rhat_report(store, "mu", DEFAULT_THRESHOLD)
            rows = [
                (fit_panel.areas[k], value, "pass" if ok else "fail")
                for k, (name, value, ok) in enumerate(report.rows())
            ]
            p = out / f"rhat_{model.tag}.csv"
            write_table(p, ("area", "split_rhat", "status"), rows, stamp)
            written.append(p)

        if config.save_draws:
            written.extend(_save_draws(store, out, model.tag))

    p = out / "plot_long.csv"
    write_table(p, ("area", "model", "quantity", "value"), long_rows, stamp)
    written.append(p)

    outputs = {str(w.relative_to(out)): sha256_file(w) for w in written}
    write_manifest(out / "manifest.json", payload, outputs)
    return payload


# ---------------------------------------------------------------------------
# simulation harness


@dataclass(frozen=True)
class SimTarget:
    """A model to fit inside the harness; one-source targets pin a column."""

    name: str           # table label: m1a, m12, mbr, msa, ...
    tag: str            # variant tag
    source_index: int | None = None


def parse_target(name: str) -> SimTarget:
    lowered = name.strip().lower()
    if lowered == "mbr":
        return SimTarget(name="mbr", tag="one_source", source_index=0)
    if lowered == "msa":
        return SimTarget(name="msa", tag="one_source", source_index=1)
    return SimTarget(name=lowered, tag=lowered)


@dataclass(frozen=True)
class SimConfig:
    case: int
    seed: int
    out_dir: str
    models: tuple[str, ...] = ("m1a", "m12")
    baseline: str | None = None  # default: m12 for cases 1-4, m1a for 5-6
    rows: tuple[int, ...] | None = None
    n_replicates: int = 30
    n_iter: int = 6000
    n_burnin: int = 1000
    thin: int = 1
    n_sources: int = 2
    bootstrap_v: bool = False  # redraw sampling variances per replicate from the pool
    v_panel: str | None = None
    spec_file: str | None = None
    delta_scope: str = "unit"

    def resolved_baseline(self) -> str:
        if self.baseline is not None:
            return self.baseline.lower()
        return "m12" if self.case in (1, 2, 3, 4) else "m1a"

    def to_payload(self) -> dict:
        return {
            "command": "simulate",
            "version": __version__,
            "case": self.case,
            "seed": self.seed,
            "models": list(self.models),
            "baseline": self.resolved_baseline(),
            "rows": list(self.rows) if self.rows is not None else "all",
            "n_replicates": self.n_replicates,
            "n_iter": self.n_iter,
            "n_burnin": self.n_burnin,
            "thin": self.thin,
            "n_sources": self.n_sources,
            "bootstrap_v": self.bootstrap_v,
            "v_panel": self.v_panel and str(self.v_panel),
            "v_panel_sha256": sha256_file(self.v_panel) if self.v_panel else None,
            "spec_file": self.spec_file and str(self.spec_file),
            "spec_file_sha256": sha256_file(self.spec_file) if self.spec_file else None,
            "delta_scope": self.delta_scope,
        }


def apply_preset(name: str) -> dict:
    """Sampler scale presets: `desk` finishes in minutes, `paper` is full scale."""
    if name == "desk":
        return {"n_replicates": 30, "n_iter": 6000, "n_burnin": 1000}
    if name == "paper":
        return {"n_replicates": 100, "n_iter": 18000, "n_burnin": 3000}
    raise ValueError(f"unknown preset {name!r}")


def _sim_item(args) -> tuple[int, int, dict[str, dict]]:
    (spec, rep, targets, seed, n_iter, n_burnin, thin) = args
    data = generate(spec, rep, RngStream(seed, derive_stream_id(spec.case_id, spec.row, rep, _STREAM_GEN)))
    out: dict[str, dict] = {}
    for t_idx, target in enumerate(targets):
        model = variant(target.tag)
        fit_panel = data.panel
        if target.source_index is not None:
            fit_panel = fit_panel.select_source(target.source_index)
        settings = SamplerSettings(
            seed=seed, n_iter=n_iter, n_burnin=n_burnin, n_chains=1, thin=thin,
            monitor=frozenset({"mu"}),
        )
        store = run_chains(
            fit_panel, model, settings,
            stream_base=derive_stream_id(spec.case_id, spec.row, rep, _STREAM_MODEL0 + t_idx),
        )
        estimate = store.pooled("mu").mean(axis=0)
        sc = score(estimate, data.truth_mu)
        out[target.name] = {
            "arb": sc.arb, "asrb": sc.asrb, "aad": sc.aad, "asd": sc.asd,
            "n_nonpositive_truth": sc.n_nonpositive_truth,
        }
    return spec.row, rep, out


def _cache_path(cache_dir: Path, case: int, row: int, rep: int) -> Path:
    return cache_dir / f"case{case}_row{row:03d}_rep{rep:04d}.json"


def _load_cached(path: Path, targets) -> dict[str, dict] | None:
    if not path.exists():
        return None
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return None
    if set(payload.get("scores", {})) >= {t.name for t in targets}:
        return payload["scores"]
    return None


def run_simulation(config: SimConfig, workers: int | None = None) -> dict:
    """Generate, fit and score a case grid; writes the ratio tables.

    Returns a results dict with per-row aggregated scores and ratio
    summaries (also used by the verification suite).
    """
    out = Path(config.out_dir)
    cache_dir = out / "cache"
    cache_dir.mkdir(parents=True, exist_ok=True)
    if workers is None:
        workers = worker_count()

    targets = tuple(parse_target(m) for m in config.models)
    base_name = config.resolved_baseline()
    names = [t.name for t in targets]
    if base_name not in names:
        raise ValueError(f"baseline {base_name!r} is not among the fitted models {names}")
    if len(set(names)) != len(names):
        raise ValueError("duplicate model names")

    if config.v_panel:
        observed = load_panel(config.v_panel).v
    else:
        observed = synthetic_v_pool()
    if config.bootstrap_v:
        # the wider-J study resamples the observed pool per replicate
        v_kw = {"v": None, "v_pool": observed.reshape(-1)}
    else:
        if observed.shape[1] != config.n_sources:
            raise ValueError("fixed-variance mode needs a pool matching --sources; use bootstrap for other J")
        v_kw = {"v": observed, "v_pool": None}
    common = {
        "n_replicates": config.n_replicates,
        "n_sources": config.n_sources,
        "delta_scope": config.delta_scope,
        **v_kw,
    }
    if config.spec_file:
        specs = load_spec_table(config.spec_file, config.case, **common)
    else:
        specs = spec_table(config.case, **common)
    if config.rows is not None:
        wanted = set(config.rows)
        specs = [s for s in specs if s.row in wanted]
        if not specs:
            raise ValueError(f"row selection {sorted(wanted)} matched nothing")

    items = []
    cached: dict[tuple[int, int], dict[str, dict]] = {}
    for spec in specs:
        for rep in range(config.n_replicates):
            hit = _load_cached(_cache_path(cache_dir, config.case, spec.row, rep), targets)
            if hit is not None:
                cached[(spec.row, rep)] = hit
            else:
                items.append((spec, rep, targets, config.seed, config.n_iter, config.n_burnin, config.thin))

    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            fresh = list(pool.map(_sim_item, items, chunksize=1))
    else:
        fresh = [_sim_item(it) for it in items]
    for row, rep, scores in fresh:
        path = _cache_path(cache_dir, config.case, row, rep)
        path.write_text(json.dumps({"scores": scores}, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
        cached[(row, rep)] = scores

    # aggregate medians per (row, model)
    agg: dict[str, dict[int, FitScore]] = {name: {} for name in names}
    for spec in specs:
        for name in names:
            reps = [
                FitScore(**cached[(spec.row, rep)][name])
                for rep in range(config.n_replicates)
            ]
            agg[name][spec.row] = aggregate(reps)

    ratios = {
        name: discrepancy_ratio(agg[name], agg[base_name], numerator=name, denominator=base_name)
        for name in names
        if name != base_name
    }

    payload = config.to_payload()
    from .io import manifest_hash as _mh

    stamp = _mh(payload)
    written: list[Path] = []
    param_cols = list(specs[0].params)

    rows_med = []
    for spec in specs:
        for name in names:
            s = agg[name][spec.row]
            rows_med.append((spec.row, *[spec.params[c] for c in param_cols], name, s.arb, s.asrb, s.aad, s.asd))
    p = out / f"case{config.case}_medians.csv"
    write_table(p, ("row", *param_cols, "model", "arb", "asrb", "aad", "asd"), rows_med, stamp)
    written.append(p)

    ratio_cols = []
    for name in names:
        if name != base_name:
            ratio_cols += [f"{name}_arb_ratio", f"{name}_asrb_ratio"]
    rows_ratio = []
    for spec in specs:
        row = [spec.row, *[spec.params[c] for c in param_cols]]
        for name in names:
            if name == base_name:
                continue
            row.append(ratios[name].ratio("arb", spec.row))
            row.append(ratios[name].ratio("asrb", spec.row))
        rows_ratio.append(tuple(row))
    p = out / f"case{config.case}_ratio_by_spec.csv"
    write_table(p, ("row", *param_cols, *ratio_cols), rows_ratio, stamp)
    written.append(p)

    rows_summary = []
    for measure in MEASURES:
        for name in names:
            if name == base_name:
                continue
            six = ratios[name].stats[measure]
            rows_summary.append(
                (measure, f"{name}/{base_name}", six.minimum, six.q1, six.median, six.mean, six.q3, six.maximum)
            )
    p = out / f"case{config.case}_ratio_summary.csv"
    write_table(p, ("measure", "ratio", "min", "q1", "median", "mean", "q3", "max"), rows_summary, stamp)
    written.append(p)

    if sum(1 for n in names if n != base_name) >= 2:
        rows_counts = []
        for measure in MEASURES:
            table = {name: ratios[name].ratios[measure] for name in names if name != base_name}
            counts = best_model_counts(table)
            for name in sorted(table):
                rows_counts.append((measure, name, counts.counts[name], len(counts.ties)))
        p = out / f"case{config.case}_best_counts.csv"
        write_table(p, ("measure", "model", "wins", "tied_rows"), rows_counts, stamp)
        written.append(p)

    outputs = {str(w.relative_to(out)): sha256_file(w) for w in written}
    write_manifest(out / "manifest.json", payload, outputs)
    return {"specs": specs, "aggregated": agg, "ratios": ratios, "stamp": stamp}
