"""End-to-end training: contract, attend, cluster, refine weights, descend.

One epoch runs the attention network over the working (sub)graph, fits fuzzy
c-means on the representations, refines edge weights with the final-layer
attention, evaluates the combined objective, and applies a hand-derived
reverse-mode gradient step with adaptive-moment updates. Hard labels and the
drawn positive/negative samples are treated as constants within an epoch;
gradients reach the modularity term only through the attention coefficients
inside the edge-weight refinement.

Everything is seeded and reduction orders are fixed, so a (graph, K, config)
triple maps to a bit-identical trained model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import (
    ForwardOptions,
    ModelParams,
    build_attention_structure,
    init_model_params,
    network_backward,
    network_forward_cached,
)
from .config import TrainConfig, config_to_text, parse_config_text
from .contraction import ContractionConfig, SubgraphSelection, contract
from .fcm import fcm_fit
from .graph import WeightedGraph, build_graph, induce_subgraph
from .losses import (
    LossBreakdown,
    NegativeSampler,
    draw_structure_samples,
    modularity,
    modularity_weight_grad,
    structure_loss_from_samples,
    structure_loss_grad,
    total_loss,
    update_edge_weights,
)

__all__ = ["TrainedModel", "train", "infer", "gradient_check", "save_checkpoint", "load_checkpoint"]

MIN_LOSS_IMPROVEMENT = 1e-5
CHECKPOINT_VERSION = 1

# spawn keys for the independent random streams derived from config.seed
_RNG_INIT, _RNG_EPOCH, _RNG_FCM, _RNG_INFER, _RNG_SAMPLE_ABLATION = range(5)


def _rng(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


class Adam:
    """Adaptive-moment updates (decay 0.9/0.999, eps 1e-8) over a list of arrays."""

    def __init__(self, shapes, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class TrainedModel:
    """Trained parameters plus everything needed to reproduce inference."""

    params: ModelParams
    cluster_count: int
    config: TrainConfig
    loss_history: list[LossBreakdown]
    selection: SubgraphSelection | None
    working_graph: WeightedGraph | None  # refined training graph after the last epoch
    centers: np.ndarray | None  # final training-time cluster centers

    def history_array(self) -> np.ndarray:
        return np.array(
            [[h.structure, h.modularity_loss, h.total, h.modularity_q] for h in self.loss_history]
        ).reshape(-1, 4)


def _forward_options(config: TrainConfig) -> ForwardOptions:
    return ForwardOptions(
        alpha=config.entmax_alpha,
        normalizer="softmax" if config.use_softmax else "entmax",
        use_weight_factor=config.use_weight_factor,
    )


def _select_training_graph(g, cluster_count, config):
    """Contract (or randomly sample, or pass through) the training graph."""
    if config.no_contraction:
        return None, g
    cc = ContractionConfig(
        core_count=config.core_count,
        density_weight=config.density_weight,
        teleport=config.teleport,
        importance_threshold=config.importance_threshold,
        distance_mode=config.distance_mode,
    )
    selection = contract(g, cc, cluster_count)
    if config.random_sampling:
        rng = _rng(config.seed, _RNG_SAMPLE_ABLATION)
        nodes = np.sort(rng.choice(g.n, size=selection.selected.size, replace=False))
        subgraph, old_to_new = induce_subgraph(g, nodes)
        selection = SubgraphSelection(
            selected=nodes,
            core_nodes=np.empty(0, dtype=np.int64),
            old_to_new=old_to_new,
            subgraph=subgraph,
        )
    if selection.selected.size < cluster_count:
        raise ValueError(
            f"contraction kept {selection.selected.size} nodes, fewer than K={cluster_count}"
        )
    return selection, selection.subgraph


def _rescale_total_weight(g: WeightedGraph, target_2m: float) -> WeightedGraph:
    # Refinement only shrinks weights; restore the total so float range is
    # never exhausted over many epochs (every consumer is scale-invariant).
    current = g.total_weight_2m
    if current == 0 or target_2m == 0:
        return g
    return WeightedGraph(
        n=g.n,
        indptr=g.indptr.copy(),
        indices=g.indices.copy(),
        weights=g.weights * (target_2m / current),
        node_ids=g.node_ids,
    )


def _refinement_coeff_grad(working, refined, record, modularity_weight, labels, heads):
    """Gradient of the modularity term w.r.t. the final-layer coefficients.

    Maps per-edge dQ/dw of the refined graph back onto the working graph's
    surviving directed entries, chains through w' = sym(attention) * w, and
    spreads over heads (the refinement uses the head average). Pruned edges
    contribute nothing.
    """
    dq_refined = modularity_weight_grad(refined, labels)
    work_src = working.directed_src()
    work_keys = work_src * working.n + working.indices
    ref_keys = refined.directed_src() * refined.n + refined.indices
    pos = np.searchsorted(work_keys, ref_keys)
    dq_work = np.zeros(work_keys.size)
    dq_work[pos] = dq_refined
    # d total / d a_dir = modularity_weight * (-dQ/dw'_edge) * w_edge / 2
    d_edge_coeff = modularity_weight * (-dq_work) * working.weights * 0.5
    s = record.structure
    d_coeffs = np.zeros((s.src.size, heads))
    d_coeffs[s.edge_pos] = (d_edge_coeff / heads)[:, None]
    return d_coeffs


def _epoch_losses_and_grads(working, structure, model, opts, config, labels, samples):
    """Forward + losses + full parameter gradient for fixed labels and samples."""
    h_final, record, caches = network_forward_cached(structure, model, opts)
    if config.no_weight_update:
        refined = working
    else:
        refined = update_edge_weights(working, record)
    if refined.num_edges == 0:
        raise RuntimeError("all edges pruned by the weight refinement")
    q = modularity(refined, labels)
    l_g = structure_loss_from_samples(h_final, samples)
    breakdown = total_loss(l_g, -q, config.modularity_weight)
    d_h = structure_loss_grad(h_final, samples)
    d_coeffs = None
    if not config.no_weight_update and config.modularity_weight != 0.0:
        d_coeffs = _refinement_coeff_grad(
            working, refined, record, config.modularity_weight, labels, config.heads
        )
    grads = network_backward(structure, model, opts, caches, d_h, d_coeffs)
    return h_final, record, refined, breakdown, grads


def train(g: WeightedGraph, cluster_count: int, config: TrainConfig) -> TrainedModel:
    """Run the full training loop on (a contraction of) the graph.

    Stops at ``config.epochs`` or once the total loss has failed to improve
    by at least 1e-5 for ``config.patience`` consecutive epochs (patience 0
    disables early stopping). Raises on divergence (non-finite loss) and when
    contraction keeps fewer than K nodes.
    """
    if cluster_count < 2:
        raise ValueError("cluster_count must be >= 2")
    selection, working = _select_training_graph(g, cluster_count, config)
    sub_nodes = selection.selected if selection is not None else np.arange(g.n)

    init_rng = _rng(config.seed, _RNG_INIT)
    params = init_model_params(g.n, config.layer_dims(), config.heads, init_rng)
    opts = _forward_options(config)
    epoch_rng = _rng(config.seed, _RNG_EPOCH)
    fcm_seed = int(_rng(config.seed, _RNG_FCM).integers(2**31))

    adam = Adam([a.shape for a in params.flat_arrays()], config.learning_rate)
    history: list[LossBreakdown] = []
    centers = None
    best_total = np.inf
    stall = 0
    structure = build_attention_structure(working, config.self_loop_mode)
    target_2m = working.total_weight_2m

    for epoch in range(config.epochs):
        sub_model = ModelParams(embedding=params.embedding[sub_nodes], layers=params.layers)
        h_probe, record, caches = network_forward_cached(structure, sub_model, opts)
        if config.warm_start_fcm and centers is not None:
            assignment = fcm_fit(
                h_probe, cluster_count, iters=config.fcm_iters, mode=config.fcm_mode,
                seed=fcm_seed, restarts=1, initial_centers=centers,
            )
        else:
            assignment = fcm_fit(
                h_probe, cluster_count, iters=config.fcm_iters, mode=config.fcm_mode,
                seed=fcm_seed, restarts=config.fcm_restarts,
            )
        centers = assignment.centers
        labels = assignment.labels

        if config.no_weight_update:
            refined = working
        else:
            refined = update_edge_weights(working, record)
        if refined.num_edges == 0:
            raise RuntimeError(f"epoch {epoch}: weight refinement pruned every edge")
        sampler = NegativeSampler.for_graph(refined, config.negatives)
        samples = draw_structure_samples(refined, sampler, epoch_rng)

        q = modularity(refined, labels)
        l_g = structure_loss_from_samples(h_probe, samples)
        breakdown = total_loss(l_g, -q, config.modularity_weight)
        if not np.isfinite(breakdown.total):
            raise RuntimeError(f"epoch {epoch}: training diverged (loss {breakdown.total})")
        history.append(breakdown)

        d_h = structure_loss_grad(h_probe, samples)
        d_coeffs = None
        if not config.no_weight_update and config.modularity_weight != 0.0:
            d_coeffs = _refinement_coeff_grad(
                working, refined, record, config.modularity_weight, labels, config.heads
            )
        grads = network_backward(structure, sub_model, opts, caches, d_h, d_coeffs)
        full_emb_grad = np.zeros_like(params.embedding)
        full_emb_grad[sub_nodes] = grads.embedding
        grads_full = ModelParams(embedding=full_emb_grad, layers=grads.layers)
        adam.step(params.flat_arrays(), grads_full.flat_arrays())

        if config.persist_refined and not config.no_weight_update:
            working = _rescale_total_weight(refined, target_2m)
            structure = build_attention_structure(working, config.self_loop_mode)

        if best_total - breakdown.total < MIN_LOSS_IMPROVEMENT:
            stall += 1
        else:
            stall = 0
        best_total = min(best_total, breakdown.total)
        if config.patience > 0 and stall >= config.patience:
            break

    return TrainedModel(
        params=params,
        cluster_count=cluster_count,
        config=config,
        loss_history=history,
        selection=selection,
        working_graph=working,
        centers=centers,
    )


def infer(g: WeightedGraph, model: TrainedModel, cluster_count: int | None = None,
          return_attention: bool = False):
    """Full-graph forward (no contraction) and a cluster assignment.

    By default runs a fresh fuzzy c-means fit on the representations;
    ``config.reuse_centers`` starts from the training-time centers instead.
    """
    config = model.config
    k = cluster_count if cluster_count is not None else model.cluster_count
    if g.n != model.params.embedding.shape[0]:
        raise ValueError(
            f"graph has {g.n} nodes but the model embeds {model.params.embedding.shape[0]}"
        )
    structure = build_attention_structure(g, config.self_loop_mode)
    h, record, _ = network_forward_cached(structure, model.params, _forward_options(config))
    infer_seed = int(_rng(config.seed, _RNG_INFER).integers(2**31))
    if config.reuse_centers and model.centers is not None and model.centers.shape[0] == k:
        assignment = fcm_fit(
            h, k, iters=config.fcm_iters, mode=config.fcm_mode,
            seed=infer_seed, restarts=1, initial_centers=model.centers,
        )
    else:
        assignment = fcm_fit(
            h, k, iters=config.fcm_iters, mode=config.fcm_mode,
            seed=infer_seed, restarts=config.fcm_restarts,
        )
    if return_attention:
        return assignment, record
    return assignment


def gradient_check(config: TrainConfig, g: WeightedGraph, fd_step: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference gradients.

    Labels and contrastive samples are drawn once and held fixed; every
    scalar parameter (embedding rows, both projection stacks, head fusion)
    is perturbed by +-fd_step. Per coordinate the error is
    |g_a - g_fd| / max(|g_a| + |g_fd|, 1e-3 * gradient_scale, 1e-8), so
    coordinates far below the gradient's dominant magnitude are measured
    against that scale instead of their own finite-difference noise.
    """
    if g.n > 8:
        raise ValueError("gradient_check expects a tiny graph (n <= 8)")
    structure = build_attention_structure(g, config.self_loop_mode)
    opts = _forward_options(config)
    params = init_model_params(g.n, config.layer_dims(), config.heads, _rng(config.seed, _RNG_INIT))
    h0, record0, _ = network_forward_cached(structure, params, opts)
    k = min(3, g.n)
    labels = fcm_fit(h0, k, iters=config.fcm_iters, seed=0, restarts=2).labels
    sampler = NegativeSampler.for_graph(g, config.negatives)
    samples = draw_structure_samples(g, sampler, _rng(config.seed, _RNG_EPOCH))

    def loss_of(model: ModelParams) -> float:
        h, record, _ = network_forward_cached(structure, model, opts)
        refined = g if config.no_weight_update else update_edge_weights(g, record)
        q = modularity(refined, labels)
        l_g = structure_loss_from_samples(h, samples)
        return l_g + config.modularity_weight * (-q)

    _, _, _, _, grads = _epoch_losses_and_grads(g, structure, params, opts, config, labels, samples)

    worst = 0.0
    probe = params.copy()
    scale = max(float(np.abs(a).max()) for a in grads.flat_arrays())
    for arr, g_arr in zip(probe.flat_arrays(), grads.flat_arrays()):
        flat = arr.reshape(-1)
        gflat = g_arr.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + fd_step
            up = loss_of(probe)
            flat[i] = keep - fd_step
            down = loss_of(probe)
            flat[i] = keep
            fd = (up - down) / (2.0 * fd_step)
            err = abs(gflat[i] - fd) / max(abs(gflat[i]) + abs(fd), 1e-3 * scale, 1e-8)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Checkpoint IO: a versioned key-value container (numpy .npz, row-major arrays)
# ---------------------------------------------------------------------------


def save_checkpoint(model: TrainedModel, path) -> None:
    """Write the model as an .npz with documented keys (see README)."""
    data: dict[str, np.ndarray] = {
        "format_version": np.array(CHECKPOINT_VERSION),
        "config_text": np.array(config_to_text(model.config)),
        "cluster_count": np.array(model.cluster_count),
        "embedding": model.params.embedding,
        "layer_count": np.array(len(model.params.layers)),
        "loss_history": model.history_array(),
    }
    for i, layer in enumerate(model.params.layers):
        data[f"layer{i}_w1"] = layer.w1
        data[f"layer{i}_w2"] = layer.w2
        data[f"layer{i}_gamma"] = layer.gamma
    if model.selection is not None:
        data["selected_nodes"] = model.selection.selected
        data["core_nodes"] = model.selection.core_nodes
    if model.working_graph is not None:
        u, v, w = model.working_graph.edge_arrays()
        data["working_edge_u"] = u
        data["working_edge_v"] = v
        data["working_edge_w"] = w
        data["working_n"] = np.array(model.working_graph.n)
    if model.centers is not None:
        data["centers"] = model.centers
    np.savez(path, **data)


def load_checkpoint(path) -> TrainedModel:
    from .attention import LayerParams

    with np.load(path, allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        config = parse_config_text(str(z["config_text"]))
        layers = [
            LayerParams(w1=z[f"layer{i}_w1"], w2=z[f"layer{i}_w2"], gamma=z[f"layer{i}_gamma"])
            for i in range(int(z["layer_count"]))
        ]
        params = ModelParams(embedding=z["embedding"], layers=layers)
        history = [
            LossBreakdown(structure=row[0], modularity_loss=row[1], total=row[2], modularity_q=row[3])
            for row in z["loss_history"]
        ]
        selection = None
        if "selected_nodes" in z:
            selected = z["selected_nodes"]
            old_to_new = np.full(params.embedding.shape[0], -1, dtype=np.int64)
            old_to_new[selected] = np.arange(selected.size)
            selection = SubgraphSelection(
                selected=selected,
                core_nodes=z["core_nodes"],
                old_to_new=old_to_new,
                subgraph=None,  # not needed after training; rebuildable from the source graph
            )
        working = None
        if "working_n" in z:
            working = build_graph(
                int(z["working_n"]), z["working_edge_u"], z["working_edge_v"], z["working_edge_w"]
            )
        centers = z["centers"] if "centers" in z else None
        return TrainedModel(
            params=params,
            cluster_count=int(z["cluster_count"]),
            config=config,
            loss_history=history,
            selection=selection,
            working_graph=working,
            centers=centers,
        )


def write_loss_history(model: TrainedModel, path) -> None:
    """Loss history CSV: epoch,L_G,L_M,total,Q."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,L_G,L_M,total,Q\n")
        for e, h in enumerate(model.loss_history):
            fh.write(
                f"{e},{float(h.structure)!r},{float(h.modularity_loss)!r},"
                f"{float(h.total)!r},{float(h.modularity_q)!r}\n"
            )
