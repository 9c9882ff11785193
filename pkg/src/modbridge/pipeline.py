"""Epoch loop tying clustering, calibration, matching, and training together.

The "encoder" at desk scale is a free per-sample embedding table optimized
by plain gradient descent; every loss, matching, and memory-update rule
operates exactly as it would behind a real backbone.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import calibration, clustering, losses, memory, metrics, otmatch
from .core import FeatureMatrix, ModalityDataset, PipelineConfig, PseudoLabeling


@dataclass(frozen=True)
class ModuleToggles:
    """Ablation switches; the hybrid-memory stage requires the matcher."""

    npc: bool = True
    nrl: bool = True
    otpm_mhl: bool = True


DEFAULT_GRID = (
    "baseline",
    "npc",
    "nrl",
    "npc+nrl",
    "otpm+mhl",
    "npc+otpm+mhl",
    "nrl+otpm+mhl",
    "npc+nrl+otpm+mhl",
)


@dataclass
class EpochReport:
    epoch: int
    l_ms: float | None = None
    l_mi: float | None = None
    l_nrl: float | None = None
    l_total: float | None = None
    y_v: int = 0
    y_r: int = 0
    ari_v: float | None = None
    ari_r: float | None = None
    match_acc: float | None = None
    rank1: float | None = None
    map_score: float | None = None


@dataclass
class TrainState:
    visible: ModalityDataset
    infrared: ModalityDataset
    emb_v: np.ndarray
    emb_r: np.ndarray
    rng: np.random.Generator
    epoch: int = 0
    labeling_v: PseudoLabeling | None = None
    labeling_r: PseudoLabeling | None = None
    protos_v: calibration.PrototypeSet | None = None
    protos_r: calibration.PrototypeSet | None = None
    match: otmatch.CrossModalMatch | None = None
    bank_v: memory.MemoryBank | None = None
    bank_r: memory.MemoryBank | None = None
    bank_h: memory.MemoryBank | None = None
    v2h: np.ndarray | None = None
    r2h: np.ndarray | None = None


@dataclass
class RunReport:
    rows: list
    state: TrainState | None = None


def init_state(visible: ModalityDataset, infrared: ModalityDataset,
               config: PipelineConfig) -> TrainState:
    for ds in (visible, infrared):
        if not ds.features.normalized:
            raise ValueError("pipeline expects L2-normalized input features")
    return TrainState(
        visible=visible,
        infrared=infrared,
        emb_v=visible.features.data.copy(),
        emb_r=infrared.features.data.copy(),
        rng=np.random.default_rng(config.seed),
    )


def _cluster_and_label(emb: np.ndarray, config: PipelineConfig, use_npc: bool):
    features = FeatureMatrix(emb, normalized=True)
    dist = clustering.pairwise_distances(features, "cosine_distance")
    labeling = clustering.dbscan(dist, config.dbscan_eps, config.dbscan_min_pts)
    if labeling.y_count == 0:
        return labeling, None
    if use_npc:
        return calibration.calibrate(features, labeling, config)
    return labeling, calibration.centroid_prototypes(features, labeling)


def _sample_batch(labeling: PseudoLabeling, emb: np.ndarray, modality: str,
                  config: PipelineConfig, rng: np.random.Generator):
    p = min(config.batch_p, labeling.y_count)
    if p < config.batch_p:
        warnings.warn(
            f"only {labeling.y_count} clusters available, shrinking batch_p "
            f"from {config.batch_p} to {p}", stacklevel=2)
    clusters = rng.choice(labeling.y_count, size=p, replace=False)
    idx = []
    for c in clusters:
        members = labeling.members(int(c))
        take = rng.choice(members, size=config.batch_k,
                          replace=members.size < config.batch_k)
        idx.extend(int(i) for i in take)
    idx = np.asarray(idx, dtype=np.int64)
    batch = losses.Batch(features=emb[idx], labels=labeling.labels[idx],
                         modality=modality)
    return batch, idx


def _run_matching(state: TrainState, config: PipelineConfig) -> None:
    """Couple the prototype sets and build the hybrid bank over the smaller side."""
    pv, pr = state.protos_v, state.protos_r
    if pv.y > pr.y:
        plan = otmatch.sinkhorn(otmatch.build_cost(pv, pr), config.lambda_reg)
        state.match = otmatch.extract_match(plan)
        state.bank_h = memory.build_hybrid(state.bank_r, pv, pr, state.match,
                                           config.alpha)
        state.v2h = state.match.v2r
        state.r2h = None
    else:
        # fewer (or equal) visible clusters: index the hybrid by visible ids
        plan = otmatch.sinkhorn(otmatch.build_cost(pr, pv), config.lambda_reg)
        swapped = otmatch.extract_match(plan)
        state.match = otmatch.CrossModalMatch(v2r=swapped.r2v, r2v=swapped.v2r)
        state.bank_h = memory.build_hybrid(state.bank_v, pr, pv, swapped,
                                           config.alpha)
        state.v2h = np.arange(pv.y, dtype=np.int64)
        state.r2h = state.match.r2v


def run_epoch(state: TrainState, config: PipelineConfig,
              toggles: ModuleToggles = ModuleToggles()) -> EpochReport:
    epoch = state.epoch
    post_warmup = epoch >= config.warmup_epochs
    report = EpochReport(epoch=epoch)

    state.labeling_v, state.protos_v = _cluster_and_label(
        state.emb_v, config, post_warmup and toggles.npc)
    state.labeling_r, state.protos_r = _cluster_and_label(
        state.emb_r, config, post_warmup and toggles.npc)
    report.y_v = state.labeling_v.y_count
    report.y_r = state.labeling_r.y_count

    trainable = report.y_v > 0 and report.y_r > 0
    if not trainable:
        warnings.warn(f"epoch {epoch}: a modality produced no clusters, "
                      "skipping the training phase", stacklevel=2)

    state.match = state.bank_h = state.v2h = state.r2h = None
    if trainable:
        state.bank_v = memory.init_from_centroids(
            FeatureMatrix(state.emb_v, normalized=True), state.labeling_v,
            config.mu, "visible")
        state.bank_r = memory.init_from_centroids(
            FeatureMatrix(state.emb_r, normalized=True), state.labeling_r,
            config.mu, "infrared")
        mhl_active = post_warmup and toggles.otpm_mhl
        if mhl_active:
            _run_matching(state, config)
        nrl_active = post_warmup and toggles.nrl
        _train_batches(state, config, report, mhl_active, nrl_active)

    if state.visible.truth is not None and state.infrared.truth is not None:
        _evaluate(state, report)
    if not (np.all(np.isfinite(state.emb_v)) and np.all(np.isfinite(state.emb_r))):
        raise FloatingPointError(f"epoch {epoch}: non-finite embedding values")
    state.epoch += 1
    return report


def _train_batches(state: TrainState, config: PipelineConfig, report: EpochReport,
                   mhl_active: bool, nrl_active: bool) -> None:
    n_max = max(state.emb_v.shape[0], state.emb_r.shape[0])
    iters = max(1, math.ceil(n_max / (config.batch_p * config.batch_k)))
    sums = {"ms": 0.0, "mi": 0.0, "nrl": 0.0, "total": 0.0}
    epoch = state.epoch
    for _ in range(iters):
        batch_v, idx_v = _sample_batch(state.labeling_v, state.emb_v, "visible",
                                       config, state.rng)
        batch_r, idx_r = _sample_batch(state.labeling_r, state.emb_r, "infrared",
                                       config, state.rng)

        ms_v = losses.cluster_nce(batch_v, state.bank_v, tau=config.tau)
        ms_r = losses.cluster_nce(batch_r, state.bank_r, tau=config.tau)

        mi = None
        if mhl_active:
            mi_batch = batch_v if epoch % 2 == 0 else batch_r
            mi = losses.modality_invariant_loss(
                mi_batch, state.bank_h, epoch, state.v2h, config.tau,
                r2h_map=state.r2h)

        nrl_v = nrl_r = None
        if nrl_active:
            nrl_v = losses.nrl_loss(batch_v, config.gamma, config.sigma)
            nrl_r = losses.nrl_loss(batch_r, config.gamma, config.sigma)

        grad_v = ms_v.grad.copy()
        grad_r = ms_r.grad.copy()
        if mi is not None:
            if epoch % 2 == 0:
                grad_v += config.beta1 * mi.grad
            else:
                grad_r += config.beta1 * mi.grad
        if nrl_v is not None:
            grad_v += config.beta2 * nrl_v.grad
            grad_r += config.beta2 * nrl_r.grad

        if config.learning_rate > 0:
            _apply_step(state.emb_v, idx_v, grad_v, config.learning_rate)
            _apply_step(state.emb_r, idx_r, grad_r, config.learning_rate)

        for f, label in zip(batch_v.features, batch_v.labels):
            memory.momentum_update(state.bank_v, int(label), f, config.mu)
        for f, label in zip(batch_r.features, batch_r.labels):
            memory.momentum_update(state.bank_r, int(label), f, config.mu)
        if mhl_active:
            hyb_batch = batch_v if epoch % 2 == 0 else batch_r
            memory.hybrid_update(state.bank_h, epoch, hyb_batch, state.v2h,
                                 config.mu, r2h_map=state.r2h)

        ms = ms_v.value + ms_r.value
        mi_val = mi.value if mi is not None else 0.0
        nrl_val = (nrl_v.value + nrl_r.value) if nrl_v is not None else 0.0
        sums["ms"] += ms
        sums["mi"] += mi_val
        sums["nrl"] += nrl_val
        sums["total"] += ms + config.beta1 * mi_val + config.beta2 * nrl_val

    report.l_ms = sums["ms"] / iters
    report.l_total = sums["total"] / iters
    if mhl_active:
        report.l_mi = sums["mi"] / iters
    if nrl_active:
        report.l_nrl = sums["nrl"] / iters


def _apply_step(emb: np.ndarray, idx: np.ndarray, grad: np.ndarray,
                lr: float) -> None:
    np.add.at(emb, idx, -lr * grad)
    touched = np.unique(idx)
    emb[touched] /= np.linalg.norm(emb[touched], axis=1, keepdims=True)


def _evaluate(state: TrainState, report: EpochReport) -> None:
    report.ari_v = metrics.ari(state.labeling_v.labels, state.visible.truth)
    report.ari_r = metrics.ari(state.labeling_r.labels, state.infrared.truth)
    if state.match is not None:
        truth_v = metrics.majority_identity(state.labeling_v, state.visible.truth)
        truth_r = metrics.majority_identity(state.labeling_r, state.infrared.truth)
        report.match_acc = metrics.match_accuracy(state.match, truth_v, truth_r)
    rank_k, map_score, _ = metrics.cmc_map(
        state.emb_r, state.infrared.truth, state.emb_v, state.visible.truth)
    report.rank1 = rank_k[1]
    report.map_score = map_score


def run(config: PipelineConfig, visible: ModalityDataset, infrared: ModalityDataset,
        toggles: ModuleToggles = ModuleToggles()) -> RunReport:
    """Execute the configured number of epochs; deterministic given the seed."""
    if config.total_epochs == 0:
        return RunReport(rows=[], state=None)
    state = init_state(visible, infrared, config)
    rows = [run_epoch(state, config, toggles) for _ in range(config.total_epochs)]
    return RunReport(rows=rows, state=state)


def parse_grid_entry(entry: str) -> ModuleToggles:
    tokens = {tok.strip() for tok in entry.split("+") if tok.strip()}
    known = {"baseline", "npc", "nrl", "otpm", "mhl"}
    unknown = tokens - known
    if unknown:
        raise ValueError(f"unknown ablation modules: {sorted(unknown)}")
    if ("mhl" in tokens) != ("otpm" in tokens):
        raise ValueError("the hybrid-memory stage requires the transport matcher; "
                         "enable otpm and mhl together")
    return ModuleToggles(npc="npc" in tokens, nrl="nrl" in tokens,
                         otpm_mhl="otpm" in tokens)


def ablate(config: PipelineConfig, visible: ModalityDataset,
           infrared: ModalityDataset, grid=DEFAULT_GRID) -> list:
    """Run every grid configuration with a shared seed; report final metrics."""
    results = []
    for entry in grid:
        toggles = parse_grid_entry(entry)
        report = run(config, visible, infrared, toggles)
        final = report.rows[-1] if report.rows else EpochReport(epoch=-1)
        results.append((entry, toggles, final))
    return results


_CSV_COLUMNS = ("epoch", "L_MS", "L_MI", "L_NRL", "L_total", "Y_v", "Y_r",
                "ARI_v", "ARI_r", "match_acc", "rank1", "mAP")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".10g")


def metrics_csv(rows) -> str:
    lines = [",".join(_CSV_COLUMNS)]
    for r in rows:
        lines.append(",".join(_fmt(v) for v in (
            r.epoch, r.l_ms, r.l_mi, r.l_nrl, r.l_total, r.y_v, r.y_r,
            r.ari_v, r.ari_r, r.match_acc, r.rank1, r.map_score)))
    return "\n".join(lines) + "\n"


def ablation_csv(results) -> str:
    lines = ["modules,rank1,mAP,ARI_v,ARI_r"]
    for entry, _, final in results:
        lines.append(",".join([entry, _fmt(final.rank1), _fmt(final.map_score),
                               _fmt(final.ari_v), _fmt(final.ari_r)]))
    return "\n".join(lines) + "\n"
