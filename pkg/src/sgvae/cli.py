"""``sg`` command-line entry point.

    sg synth    --config run.ini --out runs/a
    sg train    --config run.ini --out runs/a          (reads runs/a/dataset.sgds)
    sg encode   --out runs/a [--data other.sgds]
    sg generate --out runs/a --za 1.5 -n 500
    sg analyze  --out runs/a [--data other.sgds]
    sg report   --out runs/a

Each command writes ``<command>.manifest.json`` next to its outputs. Manifests
record the resolved config, seeds and the sha256 of every input and output;
inputs listed as outputs of an earlier manifest in the same directory are
re-hashed and refused on mismatch.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np
import torch

from . import config as config_mod
from . import dataset as dataset_mod
from . import latent, stats
from .autodiff import checkpoint
from .errors import ConfigError, DataError, SgError
from .sampler import synthesize
from .transfer import SgParams, cached_ground_state, coherence_of_Q, drift, ground_state
from .vae import HISTORY_COLUMNS, VaeModel, encode, generate, model_from_state, model_manifest, train

log = logging.getLogger("sgvae")

DATASET = "dataset.sgds"
CHECKPOINT = "model.sgck"
HISTORY = "history.csv"
REPORT_DIR = "report"
REPORT_FILES = (
    "summary.json",
    "fig2a_sigma.csv",
    "fig2b_sweep.csv",
    "fig2b_encoded.csv",
    "fig2c_histograms.csv",
    "fig2d_increments.csv",
    "fig2e_corr.csv",
    "fig2f_m4.csv",
    "fig3_solitons.csv",
    "figA1_coherence.csv",
    "figA2_increments.csv",
    "figA3_distributions.csv",
)


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- manifests -------------------------------------------------------------------

class Run:
    """Book-keeping for one command invocation inside an output directory."""

    def __init__(self, command, cfg: config_mod.RunConfig, out: Path):
        self.command, self.cfg, self.out = command, cfg, Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs, self.outputs = {}, {}
        self.started = time.time()
        self.extra = {}

    def use(self, path) -> Path:
        path = Path(path)
        if not path.exists():
            raise DataError(f"input not found: {path}")
        digest = sha256_file(path)
        expected = recorded_hash(path)
        if expected is not None and expected != digest:
            raise DataError(
                f"{path} does not match the hash recorded by the run that produced it "
                f"({digest[:12]} != {expected[:12]}); refusing to continue on modified data"
            )
        self.inputs[str(path.name if path.parent == self.out else path)] = digest
        return path

    @property
    def manifest_hash(self) -> str:
        """Hash of the deterministic part of the manifest (no wall-clock, no outputs)."""
        body = {
            "command": self.command, "config": self.cfg.to_dict(), "seeds": self.seeds(),
            "inputs": self.inputs, "version": tool_version(),
        }
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()

    def seeds(self):
        top = self.cfg["run"]["seed"]
        return {"seed": top, **{k: config_mod.sub_seed(top, k) for k in ("synth", "train", "generate", "analyze")}}

    def write(self, name, data) -> Path:
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(data, str):
            data = data.encode()
        path.write_bytes(data)
        self.outputs[str(path.relative_to(self.out))] = hashlib.sha256(data).hexdigest()
        return path

    def table(self, name, estimator, columns, rows, **meta) -> Path:
        text = stats.table_csv(estimator, columns, rows, manifest=self.manifest_hash, **meta)
        return self.write(name, text)

    def finish(self):
        manifest = {
            "command": self.command,
            "config": self.cfg.to_dict(),
            "seeds": self.seeds(),
            "inputs": self.inputs,
            "outputs": self.outputs,
            "version": tool_version(),
            "threads": self.cfg["run"]["threads"],
            "manifest_hash": self.manifest_hash,
            "wall_clock_s": round(time.time() - self.started, 3),
            **self.extra,
        }
        path = self.out / f"{self.command}.manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return manifest


def recorded_hash(path: Path):
    """Hash recorded for ``path`` by any manifest in its directory, if any."""
    for mf in sorted(path.parent.glob("*.manifest.json")):
        try:
            outputs = json.loads(mf.read_text()).get("outputs", {})
        except (OSError, json.JSONDecodeError):
            continue
        if path.name in outputs:
            return outputs[path.name]
    return None


# -- commands --------------------------------------------------------------------

def cmd_synth(cfg, out, **spec_overrides):
    run = Run("synth", cfg, out)
    spec = cfg.dataset_spec(**spec_overrides)
    ds = synthesize(spec)
    ds.spec["manifest"] = run.manifest_hash
    run.write(DATASET, dataset_mod.to_bytes(ds))
    run.extra["dataset"] = {"records": len(ds), "kind": spec.kind}
    return run.finish()


def _load_dataset(run: Run, data) -> dataset_mod.Dataset:
    return dataset_mod.load(run.use(data or run.out / DATASET))


def cmd_train(cfg, out, data=None):
    run = Run("train", cfg, out)
    ds = _load_dataset(run, data)
    tcfg = cfg.train_config()
    model = VaeModel().initialize(tcfg.seed)
    if ds.L != model.cfg.L:
        raise DataError(f"dataset length {ds.L} does not match the model length {model.cfg.L}")
    model, history = train(model, ds, tcfg, progress=lambda r: log.info(
        "epoch %d total %.4f nll %.4f kl %.4f", r["epoch"], r["total"], r["nll"], r["kl"]))
    manifest = model_manifest(model, tcfg, history, ds.spec)
    manifest["run_manifest"] = run.manifest_hash
    run.write(CHECKPOINT, checkpoint.to_bytes(model.state_dict(), manifest))
    columns = list(HISTORY_COLUMNS) + [f"sigma_{i + 1}" for i in range(model.cfg.latent)]
    run.table(HISTORY, "training_history", columns, [[row[c] for c in columns] for row in history])
    run.extra["final_median_sigma"] = manifest.get("final_median_sigma")
    return run.finish()


def load_model(run: Run, path=None) -> VaeModel:
    state, manifest = checkpoint.load(run.use(path or run.out / CHECKPOINT))
    return model_from_state(state, manifest)


def _neurons(model, ds, cfg):
    report = latent.classify_neurons(model, ds, cfg["latent"]["threshold"])
    if not report.unique:
        log.warning("active neuron set %s is not a single neuron; using full-latent mode", report.active_set)
    return report


def cmd_encode(cfg, out, data=None, checkpoint_path=None):
    run = Run("encode", cfg, out)
    model = load_model(run, checkpoint_path)
    ds = _load_dataset(run, data)
    neurons = _neurons(model, ds, cfg)
    rep = latent.probe(model, ds, neurons=neurons)
    k = model.cfg.latent
    cols = ["shot_id", "Q", "kind"] + [f"mu_{i + 1}" for i in range(k)] + [f"sigma_{i + 1}" for i in range(k)]
    if rep.z_a is not None:
        cols.append("z_a")
    rows = []
    for i in range(len(ds)):
        row = [int(ds.shot_id[i]), float(ds.Q[i]), ds.kind[i], *rep.mu[i], *rep.sigma[i]]
        if rep.z_a is not None:
            row.append(rep.z_a[i])
        rows.append(row)
    run.table("latent.csv", "latent_report", cols, rows, active_index=rep.active_index,
              orientation=rep.orientation)
    run.table("neurons.csv", "neuron_report", ["neuron", "median_sigma", "active"],
              [[i + 1, s, int(a)] for i, (s, a) in enumerate(zip(neurons.median_sigma, neurons.active))],
              threshold=neurons.threshold, unique=neurons.unique)
    run.extra["neurons"] = neurons.summary()
    return run.finish()


def cmd_generate(cfg, out, n=500, za=None, z=None, checkpoint_path=None, reference=None):
    run = Run("generate", cfg, out)
    model = load_model(run, checkpoint_path)
    k = model.cfg.latent
    if z is not None:
        vec = np.asarray(z, dtype=np.float64)
        if vec.shape != (k,):
            raise ConfigError(f"--z needs {k} comma-separated values, got {vec.size}")
    else:
        vec = np.zeros(k)
        if za is not None:
            ref = _load_dataset(run, reference)
            neurons = _neurons(model, ref, cfg)
            if neurons.unique:
                vec[neurons.active_index] = za
            else:
                vec[:] = za  # full-latent mode
    seed = config_mod.sub_seed(cfg["run"]["seed"], "generate")
    ds = generate(model, vec, int(n), seed)
    ds.spec["manifest"] = run.manifest_hash
    run.write("generated.sgds", dataset_mod.to_bytes(ds))
    run.extra["z"] = vec.tolist()
    return run.finish()


def _analysis_tables(run: Run, cfg, ds, prefix=""):
    a = cfg["analyze"]
    est = set(a["estimators"])
    unknown = est - {"coherence", "corr", "increments", "m4", "histogram"}
    if unknown:
        raise ConfigError(f"unknown estimators {sorted(unknown)}")
    seed = config_mod.sub_seed(cfg["run"]["seed"], "analyze")
    dh = ds.content_hash()
    if "coherence" in est:
        value, se = stats.coherence(ds, resamples=1000, seed=seed)
        run.table(f"{prefix}coherence.csv", "coherence", ["coherence", "se", "shots"], [[value, se, len(ds)]],
                  dataset=dh, seed=seed)
    if "corr" in est:
        C, se = stats.circular_corr(ds)
        run.table(f"{prefix}corr.csv", "circular_corr", ["d", "C", "se"],
                  [[d, C[d], se[d]] for d in range(len(C))], dataset=dh)
    if "increments" in est:
        rows = []
        for sep in a["separations"]:
            inc = stats.increment_stats(ds, int(sep), a["bins"])
            rows += [[int(sep), c, m, s, int(n), e, int(f)] for c, m, s, n, e, f in
                     zip(inc.centers, inc.mean, inc.std, inc.count, inc.sem, inc.flagged)]
        run.table(f"{prefix}increments.csv", "increment_stats",
                  ["n", "phi", "mean", "std", "count", "sem", "low_count"], rows, dataset=dh)
    if "m4" in est:
        res = stats.m4(ds, a["reference"], bootstrap=a["bootstrap"] or None, seed=seed)
        lo, hi = res.interval or (math.nan, math.nan)
        null = stats.m4_gaussian_null(ds, a["reference"], a["null_draws"], seed=seed)[0] if a["null_draws"] else math.nan
        run.table(f"{prefix}m4.csv", "m4", ["m4", "ci_low", "ci_high", "null95", "tuples", "degenerate"],
                  [[res.value, lo, hi, null, res.tuples, int(res.degenerate)]], dataset=dh, seed=seed,
                  reference=a["reference"])
    if "histogram" in est:
        dens, edges = stats.phase_histogram(ds, bins=2 * a["bins"])
        run.table(f"{prefix}histogram.csv", "phase_histogram", ["phi", "density"],
                  [[0.5 * (edges[i] + edges[i + 1]), dens[i]] for i in range(len(dens))], dataset=dh)


def cmd_analyze(cfg, out, data=None):
    run = Run("analyze", cfg, out)
    ds = _load_dataset(run, data)
    _analysis_tables(run, cfg, ds)
    return run.finish()


# -- report ------------------------------------------------------------------------

def cmd_report(cfg, out):
    """Plot-ready data series for every figure analogue, from a trained run directory."""
    run = Run("report", cfg, out)
    ds = _load_dataset(run, None)
    model = load_model(run)
    history_path = run.use(run.out / HISTORY)
    lat, rep_cfg = cfg["latent"], cfg["report"]
    base_seed = config_mod.sub_seed(cfg["run"]["seed"], "generate")
    R = REPORT_DIR + "/"
    summary = {"manifest": run.manifest_hash, "dataset": ds.content_hash(), "seeds": run.seeds()}

    # Fig. 2a: per-epoch median sigma.
    meta, columns, rows = stats.read_table(history_path.read_text())
    sig_cols = [c for c in columns if c.startswith("sigma_")]
    run.table(R + "fig2a_sigma.csv", "median_sigma_history", ["epoch"] + sig_cols,
              [[r[columns.index("epoch")]] + [r[columns.index(c)] for c in sig_cols] for r in rows])

    neurons = _neurons(model, ds, cfg)
    summary["neurons"] = neurons.summary()
    a = neurons.active_index
    if a is None:
        # keep the figure data complete: fall back to the least collapsed neuron and say so
        a = int(np.argmin(neurons.median_sigma))
        log.warning("no unique active neuron; report uses the least collapsed neuron %d", a)
    summary["report_neuron"] = {"index": a, "meets_threshold": neurons.active_index is not None}
    probe_eq = latent.probe(model, ds, active_index=a)
    summary["orientation"] = probe_eq.orientation

    # Fig. 2b: encoded activations per Q level.
    rows = []
    if probe_eq.z_a is not None:
        for q in sorted(set(ds.spec.get("dataset_spec", {}).get("Q_values", [])) or set(np.unique(ds.Q))):
            level = _level_mask(ds, q)
            if not level.any():
                continue
            zq = probe_eq.z_a[level]
            rows.append([q, int(level.sum()), float(np.cos(ds.phases[level]).mean())]
                        + [float(np.quantile(zq, p)) for p in latent.QUANTILES])
    run.table(R + "fig2b_encoded.csv", "encoded_activation_by_Q",
              ["Q", "shots", "coherence"] + [f"q{int(100 * p)}" for p in latent.QUANTILES], rows)

    # Fig. 2b-f: latent sweep.
    sweep = latent.latent_sweep(model, cfg.z_grid(), lat["samples_per_point"], base_seed, a,
                                cfg["analyze"]["reference"])
    run.table(R + "fig2b_sweep.csv", "latent_sweep",
              ["z_a", "coherence", "coherence_se", "m4", "samples", "seed"],
              [[p.z_a, p.coherence, p.coherence_se, p.m4, p.samples, p.seed] for p in sweep.points])
    edges = np.linspace(-math.pi, math.pi, len(sweep.points[0].histogram) + 1) if sweep.points else []
    run.table(R + "fig2c_histograms.csv", "sweep_phase_histogram", ["z_a", "phi", "density"],
              [[p.z_a, 0.5 * (edges[i] + edges[i + 1]), d] for p in sweep.points for i, d in enumerate(p.histogram)])
    run.table(R + "fig2d_increments.csv", "sweep_increment_stats", ["z_a", "phi", "mean", "std", "count"],
              [[p.z_a, c, m, s, int(n)] for p in sweep.points
               for c, m, s, n in zip(p.increments.centers, p.increments.mean, p.increments.std, p.increments.count)])
    run.table(R + "fig2e_corr.csv", "sweep_circular_corr", ["z_a", "d", "C"],
              [[p.z_a, d, c] for p in sweep.points for d, c in enumerate(p.circular_corr)])
    if len(sweep.points) > 2:
        from scipy.stats import spearmanr
        summary["sweep_coherence_spearman"] = float(spearmanr(sweep.grid, sweep.column("coherence")).correlation)

    # Fig. 2f: M4 vs coherence for sweep ensembles and data subsets, with Gaussian null bands.
    rows = []
    ref = cfg["analyze"]["reference"]
    draws = cfg["analyze"]["null_draws"]
    for p in sweep.points:
        rows.append(["generated", p.z_a, p.coherence, p.m4, math.nan, math.nan, math.nan])
    for q in sorted(set(np.round(ds.spec.get("dataset_spec", {}).get("Q_values", []), 6))):
        sub = ds.subset(np.flatnonzero(_level_mask(ds, q)))
        if len(sub) < 2:
            continue
        res = stats.m4(sub, ref, bootstrap=cfg["analyze"]["bootstrap"] or None, seed=base_seed)
        lo, hi = res.interval or (math.nan, math.nan)
        null = stats.m4_gaussian_null(sub, ref, draws, seed=base_seed)[0] if draws else math.nan
        rows.append(["data", q, float(np.cos(sub.phases).mean()), res.value, lo, hi, null])
    run.table(R + "fig2f_m4.csv", "m4_vs_coherence",
              ["source", "parameter", "coherence", "m4", "ci_low", "ci_high", "null95"], rows, reference=ref)

    # Fig. 3: soliton discrimination at strong and weak coupling.
    rows = []
    summary["solitons"] = {}
    for regime, Q in (("strong", rep_cfg["soliton_Q_strong"]), ("weak", rep_cfg["soliton_Q_weak"])):
        n = rep_cfg["report_shots"]
        eq = synthesize(cfg.dataset_spec(kind="equilibrium", Q_values=(Q,), shots_per_Q=n,
                                         seed=config_mod.sub_seed(base_seed, f"eq-{regime}")))
        sol = synthesize(cfg.dataset_spec(kind="soliton_injected", Q_values=(Q,), shots_per_Q=n,
                                          seed=config_mod.sub_seed(base_seed, f"sol-{regime}")))
        r_eq = latent.probe(model, eq, active_index=a)
        r_eq.orientation = probe_eq.orientation
        r_sol = latent.probe(model, sol, active_index=a)
        sep = latent.discriminate(r_eq, r_sol)
        # shots that drew zero kinks are plain equilibrium shots; score the kinked ones separately
        kinked = sol.subset(np.flatnonzero(sol.n_solitons > 0))
        auc_kinked = latent.discriminate(r_eq, latent.probe(model, kinked, active_index=a)).auc if len(kinked) else math.nan
        summary["solitons"][regime] = {
            "Q": Q, "auc": sep.auc, "auc_kinked": auc_kinked, "kinked_shots": len(kinked),
            "threshold": sep.threshold, "peaks": list(sep.peaks),
            "weights": list(sep.weights), "dip_pvalue": sep.dip_pvalue,
            "coherence_eq": float(np.cos(eq.phases).mean()), "coherence_soliton": float(np.cos(sol.phases).mean()),
        }
        both = np.r_[r_eq.z_a, r_sol.z_a]
        hedges = np.linspace(both.min(), both.max(), 41) if np.ptp(both) > 0 else np.linspace(both[0] - 1, both[0] + 1, 41)
        for label, za_vals in (("equilibrium", r_eq.z_a), ("soliton_injected", r_sol.z_a)):
            dens, _ = np.histogram(za_vals, bins=hedges, density=True)
            rows += [[regime, label, 0.5 * (hedges[i] + hedges[i + 1]), dens[i]] for i in range(len(dens))]
    run.table(R + "fig3_solitons.csv", "soliton_activation_histogram", ["regime", "population", "z_a", "density"], rows)

    # Fig. A1: coherence vs Q (transfer operator and data), with the sweep on a separate axis in fig2b.
    rows = []
    for q in np.arange(0.0, 10.01, 0.5):
        rows.append(["theory", float(q), coherence_of_Q(cached_ground_state(float(q)))])
    for q in sorted(set(np.round(ds.spec.get("dataset_spec", {}).get("Q_values", []), 6))):
        mask = _level_mask(ds, q)
        if mask.any():
            rows.append(["data", float(q), float(np.cos(ds.phases[mask]).mean())])
    run.table(R + "figA1_coherence.csv", "coherence_vs_Q", ["source", "Q", "coherence"], rows)

    # Fig. A2: post-imaging increments per Q level next to the drift A*dx and diffusion sqrt(2 D dx).
    rows = []
    lam = cfg["synth"]["lambda_T"]
    dx = ds.pixel_size
    for q in sorted(set(np.round(ds.spec.get("dataset_spec", {}).get("Q_values", []), 6))):
        mask = _level_mask(ds, q)
        if not mask.any():
            continue
        inc = stats.increment_stats(ds.phases[mask], 1, cfg["analyze"]["bins"])
        params = SgParams(Q=float(q), lambda_T=lam)
        A = drift(ground_state(params), params, inc.centers) if q > 0 else np.zeros_like(inc.centers)
        diff = math.sqrt(2 * params.D * dx)
        rows += [[q, c, m, s, int(n), A_i * dx, diff] for c, m, s, n, A_i in
                 zip(inc.centers, inc.mean, inc.std, inc.count, A)]
    run.table(R + "figA2_increments.csv", "imaged_increments_vs_theory",
              ["Q", "phi", "mean", "std", "count", "drift_dx", "diffusion"], rows, lambda_T=lam, dx=dx)

    # Fig. A3: increment distributions at separations 1, 3, 15 and phase distributions per Q level.
    rows = []
    bins = np.linspace(-math.pi, math.pi, 2 * cfg["analyze"]["bins"] + 1)
    for q in sorted(set(np.round(ds.spec.get("dataset_spec", {}).get("Q_values", []), 6))):
        phases = ds.phases[_level_mask(ds, q)]
        if len(phases) == 0:
            continue
        for sep in (1, 3, 15):
            if sep >= phases.shape[1]:
                continue
            _, inc = stats.increment_pairs(phases, sep)
            dens, _ = np.histogram(inc, bins=bins, density=True)
            rows += [[q, f"increment_{sep}", 0.5 * (bins[i] + bins[i + 1]), dens[i]] for i in range(len(dens))]
        dens, _ = np.histogram(phases, bins=bins, density=True)
        rows += [[q, "phase", 0.5 * (bins[i] + bins[i + 1]), dens[i]] for i in range(len(dens))]
    run.table(R + "figA3_distributions.csv", "increment_and_phase_distributions",
              ["Q", "quantity", "x", "density"], rows)

    run.write(R + "summary.json", json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n")
    return run.finish()


def _level_mask(ds, q, rel=0.5):
    """Shots whose nominal Q level is ``q`` (levels are separated by more than the jitter)."""
    levels = np.asarray(sorted(ds.spec.get("dataset_spec", {}).get("Q_values", []) or np.unique(ds.Q)))
    if len(levels) == 0:
        return np.zeros(len(ds), dtype=bool)
    nearest = levels[np.argmin(np.abs(np.log(np.maximum(ds.Q, 1e-12))[:, None]
                                      - np.log(np.maximum(levels, 1e-12))[None, :]), axis=1)]
    return np.isclose(nearest, q)


def _json_default(v):
    if isinstance(v, (np.integer, np.floating)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v).__name__)


# -- argument parsing ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sg", description="Sine-Gordon phase trajectories and latent analysis.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="INI config file (defaults apply when omitted)")
        sp.add_argument("--seed", type=int, help="top-level seed (overrides [run] seed)")
        sp.add_argument("--threads", type=int, help="torch thread count (overrides [run] threads)")
        sp.add_argument("--out", type=Path, required=True, help="run directory")
        return sp

    common(sub.add_parser("synth", help="synthesise a dataset"))
    sp = common(sub.add_parser("train", help="train the VAE"))
    sp.add_argument("--data", type=Path)
    sp = common(sub.add_parser("encode", help="encode a dataset with a trained model"))
    sp.add_argument("--data", type=Path)
    sp.add_argument("--checkpoint", type=Path)
    sp = common(sub.add_parser("generate", help="sample trajectories from the decoder"))
    sp.add_argument("-n", type=int, default=500)
    group = sp.add_mutually_exclusive_group()
    group.add_argument("--za", type=float, help="value of the active neuron (others at 0)")
    group.add_argument("--z", type=lambda s: [float(v) for v in s.split(",")], help="full latent vector")
    sp.add_argument("--checkpoint", type=Path)
    sp.add_argument("--reference", type=Path, help="dataset used to identify the active neuron")
    sp = common(sub.add_parser("analyze", help="estimator tables for a dataset"))
    sp.add_argument("--data", type=Path)
    common(sub.add_parser("report", help="figure data bundle for a trained run directory"))
    return p


def resolve_config(args) -> config_mod.RunConfig:
    cfg = config_mod.load(args.config) if args.config else config_mod.RunConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if overrides:
        cfg = cfg.with_overrides(run=overrides)
        config_mod.parse(cfg.to_text())  # re-validate
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        torch.set_num_threads(cfg["run"]["threads"])
        if args.command == "synth":
            cmd_synth(cfg, args.out)
        elif args.command == "train":
            cmd_train(cfg, args.out, args.data)
        elif args.command == "encode":
            cmd_encode(cfg, args.out, args.data, args.checkpoint)
        elif args.command == "generate":
            cmd_generate(cfg, args.out, args.n, args.za, args.z, args.checkpoint, args.reference)
        elif args.command == "analyze":
            cmd_analyze(cfg, args.out, args.data)
        elif args.command == "report":
            cmd_report(cfg, args.out)
    except SgError as exc:
        print(f"sg {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
