"""Command-line entry point: synth, run, ablate, eval, sinkhorn."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import clustering, metrics, otmatch, pipeline, report, synthgen
from .core import (FeatureMatrix, LoadError, ModalityDataset, PipelineConfig,
                   l2_normalize, load_features, load_labels, save_features,
                   save_labels)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("config overrides")
    for name in PipelineConfig.field_names():
        group.add_argument(f"--{name.replace('_', '-')}", dest=f"cfg_{name}",
                           type=str, default=None, metavar="V")


def _resolve_config(args) -> PipelineConfig:
    config = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    overrides = {name: getattr(args, f"cfg_{name}")
                 for name in PipelineConfig.field_names()
                 if getattr(args, f"cfg_{name}", None) is not None}
    if overrides:
        config = PipelineConfig.from_mapping(
            {**{k: getattr(config, k) for k in PipelineConfig.field_names()},
             **overrides})
    return config


def _echo_config(config: PipelineConfig, outdir: Path | None) -> None:
    text = config.to_text()
    sys.stdout.write("# resolved config\n" + text)
    if outdir is not None:
        (outdir / "resolved_config.txt").write_text(text)


def _dataset_paths(data_dir: Path, modality: str):
    for fmt, ext in (("binary", "bin"), ("csv", "csv")):
        path = data_dir / f"{modality}_features.{ext}"
        if path.exists():
            return path, fmt
    raise LoadError(f"no {modality} feature file found in {data_dir}")


def _load_dataset(data_dir: Path, modality: str) -> ModalityDataset:
    path, fmt = _dataset_paths(data_dir, modality)
    features = l2_normalize(load_features(path, fmt))
    truth_path = data_dir / f"{modality}_truth.txt"
    truth = load_labels(truth_path) if truth_path.exists() else None
    return ModalityDataset(features=features, modality=modality, truth=truth)


def _cmd_synth(args) -> int:
    spec = synthgen.SynthSpec(
        n_identities=args.identities, per_identity_per_modality=args.per,
        d=args.dim, intra_sigma=args.intra_sigma,
        modality_shift_norm=args.shift, noise_frac=args.noise_frac,
        seed=args.seed)
    visible, infrared = synthgen.generate(spec)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    ext = "bin" if args.format == "binary" else "csv"
    for ds in (visible, infrared):
        save_features(ds.features, outdir / f"{ds.modality}_features.{ext}",
                      args.format)
        save_labels(ds.truth, outdir / f"{ds.modality}_truth.txt")
    print(f"# synth spec\n{spec}")
    print(f"wrote 4 files to {outdir}")
    return 0


def _cmd_run(args) -> int:
    config = _resolve_config(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _echo_config(config, outdir)
    data_dir = Path(args.data)
    visible = _load_dataset(data_dir, "visible")
    infrared = _load_dataset(data_dir, "infrared")
    toggles = _toggles_from_disable(args.disable)

    result = pipeline.run(config, visible, infrared, toggles)
    (outdir / "metrics.csv").write_text(pipeline.metrics_csv(result.rows))
    if result.state is not None:
        state = result.state
        save_features(FeatureMatrix(state.emb_v), outdir / "visible_embeddings.bin")
        save_features(FeatureMatrix(state.emb_r), outdir / "infrared_embeddings.bin")
        for bank, name in ((state.bank_v, "memory_visible.bin"),
                           (state.bank_r, "memory_infrared.bin"),
                           (state.bank_h, "memory_hybrid.bin")):
            if bank is not None:
                save_features(FeatureMatrix(bank.rows), outdir / name)
    if not args.no_plots:
        report.render_run_figures(result.rows, outdir)
    if result.rows:
        final = result.rows[-1]
        print(f"final epoch {final.epoch}: rank1={final.rank1} mAP={final.map_score} "
              f"ARI_v={final.ari_v} ARI_r={final.ari_r}")
    return 0


def _toggles_from_disable(disable: str | None) -> pipeline.ModuleToggles:
    disabled = {tok.strip() for tok in (disable or "").split(",") if tok.strip()}
    unknown = disabled - {"npc", "nrl", "otpm"}
    if unknown:
        raise ValueError(f"cannot disable unknown modules: {sorted(unknown)}")
    return pipeline.ModuleToggles(npc="npc" not in disabled,
                                  nrl="nrl" not in disabled,
                                  otpm_mhl="otpm" not in disabled)


def _cmd_ablate(args) -> int:
    config = _resolve_config(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _echo_config(config, outdir)
    data_dir = Path(args.data)
    visible = _load_dataset(data_dir, "visible")
    infrared = _load_dataset(data_dir, "infrared")
    grid = pipeline.DEFAULT_GRID if args.grid == "full" \
        else tuple(tok.strip() for tok in args.grid.split(";") if tok.strip())
    results = pipeline.ablate(config, visible, infrared, grid)
    (outdir / "ablation.csv").write_text(pipeline.ablation_csv(results))
    if not args.no_plots:
        report.render_ablation_figure(results, outdir)
    print((outdir / "ablation.csv").read_text(), end="")
    return 0


def _cmd_eval(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    query = load_features(args.query_features, _format_of(args.query_features))
    gallery = load_features(args.gallery_features, _format_of(args.gallery_features))
    query_truth = load_labels(args.query_truth)
    gallery_truth = load_labels(args.gallery_truth)
    rank_k, map_score, skipped = metrics.cmc_map(
        l2_normalize(query).data, query_truth,
        l2_normalize(gallery).data, gallery_truth,
        ranks=(1, 5, 10, 20))

    kwargs = {"rank_k": rank_k, "map_score": map_score, "skipped_queries": skipped}
    if args.labels and args.label_truth:
        pred = load_labels(args.labels)
        truth = load_labels(args.label_truth)
        kwargs.update(ari=metrics.ari(pred, truth), nmi=metrics.nmi(pred, truth),
                      v_measure=metrics.v_measure(pred, truth),
                      homogeneity=metrics.homogeneity(pred, truth),
                      completeness=metrics.completeness(pred, truth))
    result = metrics.EvalReport(**kwargs)
    (outdir / "eval.json").write_text(result.to_json() + "\n")
    lines = ["metric,value"]
    for k in sorted(rank_k):
        lines.append(f"rank{k},{rank_k[k]:.10g}")
    lines.append(f"mAP,{map_score:.10g}")
    for name in ("ari", "nmi", "v_measure", "homogeneity", "completeness"):
        value = getattr(result, name)
        if value is not None:
            lines.append(f"{name},{value:.10g}")
    (outdir / "eval.csv").write_text("\n".join(lines) + "\n")
    if not args.no_plots:
        report.render_cmc_figure(rank_k, outdir)
    print("\n".join(lines))
    return 0


def _format_of(path) -> str:
    return "csv" if str(path).endswith(".csv") else "binary"


def _cmd_sinkhorn(args) -> int:
    cost = otmatch.CostMatrix(values=np.loadtxt(args.cost, delimiter=",", ndmin=2))
    plan = otmatch.sinkhorn(cost, args.lam, max_iters=args.max_iters, tol=args.tol)
    for row in plan.q:
        print(",".join(format(v, ".10g") for v in row))
    print(f"# converged={plan.converged} iterations={plan.iterations} "
          f"marginal_residual={plan.marginal_violation():.3e}")
    if args.out:
        np.savetxt(args.out, plan.q, delimiter=",", fmt="%.17g")
    return 0 if plan.converged else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modbridge",
        description="Cross-modality pseudo-label learning toolkit")
    parser.add_argument("--threads", type=int,
                        default=int(os.environ.get("MB_THREADS", "1")),
                        help="bound worker parallelism (env fallback MB_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic two-modality dataset")
    p.add_argument("--identities", type=int, required=True)
    p.add_argument("--per", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--intra-sigma", type=float, default=0.05)
    p.add_argument("--shift", type=float, default=0.5)
    p.add_argument("--noise-frac", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("binary", "csv"), default="binary")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("run", help="execute the full training pipeline")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--disable", default=None,
                   help="comma list of modules to disable: npc,nrl,otpm")
    p.add_argument("--no-plots", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("ablate", help="run the module ablation grid")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid", default="full",
                   help='"full" or semicolon list like "baseline;npc+nrl"')
    p.add_argument("--no-plots", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("eval", help="score saved embeddings and labelings")
    p.add_argument("--query-features", required=True)
    p.add_argument("--query-truth", required=True)
    p.add_argument("--gallery-features", required=True)
    p.add_argument("--gallery-truth", required=True)
    p.add_argument("--labels", default=None, help="predicted labels to score")
    p.add_argument("--label-truth", default=None)
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sinkhorn", help="solve a cost-matrix file standalone")
    p.add_argument("--cost", required=True, help="CSV cost matrix")
    p.add_argument("--lambda", dest="lam", type=float, default=25.0)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_sinkhorn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    clustering.set_default_workers(args.threads)
    try:
        return args.func(args)
    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
