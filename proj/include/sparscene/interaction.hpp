#pragma once

#include <string>
#include <vector>

#include "sparscene/bool_adjacency.hpp"
#include "sparscene/encoders.hpp"
#include "sparscene/error.hpp"
#include "sparscene/lane_topology.hpp"
#include "sparscene/scene.hpp"
#include "sparscene/tensor.hpp"

namespace sparscene {

struct ModelConfig {
    EncoderConfig enc;
    int heads = 4;
    double radius = 30.0;       // A2L alignment radius, meters
    std::string plan = "OFF";   // lane-topology expansion plan
    int til_layers = 1;
    int l2a_layers = 2;
    int a2a_layers = 2;
    int decoder_hidden = 128;
    // Fixed de-normalization of the regression head: heads emit positions in
    // units of this many meters, keeping weight magnitudes O(1) at horizon
    // scale.
    double decoder_output_gain = 10.0;
    int num_modes = kNumModes;
    int future_steps = kFutureSteps;

    void validate() const {
        enc.validate();
        if (enc.hidden_dim % heads != 0)
            throw ConfigError("model config: heads must divide hidden_dim");
        if (til_layers < 1 || l2a_layers < 1 || a2a_layers < 1)
            throw ConfigError("model config: layer counts must be >= 1");
        ExpansionPlan::parse(plan);
    }
};

// ---------------------------------------------------------------------------
// Message-passing layer
// ---------------------------------------------------------------------------

struct MpLayerParams {
    LinearParams query;     // D -> D, from target features
    LinearParams key;       // 2D -> D, from [source; edge]
    MlpParams value;        // 2D -> D -> D, message function over [source; edge]
    LinearParams gate;      // 2D -> D, from [target; message]
    LinearParams out;       // D -> D
    Tensor ln_gamma, ln_beta;
};

inline MpLayerParams make_mp_layer(ParamRegistry& reg, const std::string& name, int d, Rng& rng) {
    MpLayerParams p;
    p.query = make_linear(reg, name + ".query", d, d, rng);
    p.key = make_linear(reg, name + ".key", 2 * d, d, rng);
    p.value = make_mlp(reg, name + ".value", {2 * d, d, d}, rng);
    p.gate = make_linear(reg, name + ".gate", 2 * d, d, rng);
    p.out = make_linear(reg, name + ".out", d, d, rng);
    p.ln_gamma = reg.add_constant(name + ".ln_gamma", {d}, 1.0);
    p.ln_beta = reg.add_constant(name + ".ln_beta", {d}, 0.0);
    return p;
}

// Directed edges in message order: sorted by target, then source, matching
// BoolAdjacency::edges_by_col. Segment ids for the attention ops are the
// target indices.
struct EdgeList {
    std::vector<int> src;
    std::vector<int> tgt;
    int num_targets = 0;

    static EdgeList from_adjacency(const BoolAdjacency& adj) {
        EdgeList el;
        el.num_targets = adj.cols();
        const auto pairs = adj.edges_by_col();
        el.src.reserve(pairs.size());
        el.tgt.reserve(pairs.size());
        for (const auto& [r, c] : pairs) {
            el.src.push_back(r);
            el.tgt.push_back(c);
        }
        return el;
    }

    std::size_t size() const { return src.size(); }
};

// One step of the unified message-passing operator: multi-head attention
// aggregation over each target's in-edges, then a gated residual update
// x' = x + g . (m - x). Targets without edges pass through bitwise.
inline Tensor mp_layer(const Tensor& targets, const Tensor& sources, const Tensor& edge_embed,
                       const EdgeList& edges, const MpLayerParams& p, int heads) {
    if (edges.size() == 0) return targets;
    const int n_t = targets.dim(0);
    const int d = targets.shape().back();
    if (edges.num_targets != n_t)
        throw ContractError("mp_layer: edge list targets " + std::to_string(edges.num_targets) +
                            " != feature rows " + std::to_string(n_t));
    if (static_cast<std::int64_t>(edges.size()) != edge_embed.dim(0))
        throw ContractError("mp_layer: edge embedding rows do not match edge list");
    const int head_dim = d / heads;

    const Tensor q_edges = gather_rows(linear(targets, p.query), edges.tgt);
    const Tensor src_edge = concat({gather_rows(sources, edges.src), edge_embed});
    const Tensor k_edges = linear(src_edge, p.key);
    const Tensor v_edges = mlp(src_edge, p.value);

    // Per-head scaled dot product via a block-constant pooling matrix.
    Tensor pool = Tensor::zeros({d, heads});
    Tensor spread = Tensor::zeros({heads, d});
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    for (int i = 0; i < d; ++i) {
        const int h = i / head_dim;
        pool.data()[static_cast<size_t>(i) * heads + h] = inv_sqrt;
        spread.data()[static_cast<size_t>(h) * d + i] = 1.0;
    }
    const Tensor scores = matmul(mul(q_edges, k_edges), pool);        // [E, H]
    const Tensor alpha = segment_softmax(scores, edges.tgt);          // [E, H]
    const Tensor weights = matmul(alpha, spread);                     // [E, D]
    const Tensor agg = segment_sum(mul(weights, v_edges), edges.tgt, n_t);

    const Tensor message = layer_norm(linear(agg, p.out), p.ln_gamma, p.ln_beta);
    const Tensor g = sigmoid(linear(concat({targets, message}), p.gate));

    // Mask confines the update to targets that actually received messages.
    Tensor mask = Tensor::zeros({n_t, d});
    for (int t : edges.tgt) {
        double* row = &mask.data()[static_cast<size_t>(t) * d];
        std::fill(row, row + d, 1.0);
    }
    return add(targets, mul(mask, mul(g, sub(message, targets))));
}

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

struct DecoderParams {
    Tensor mode_embed;  // [M, D]
    MlpParams head;     // 4D -> hidden -> hidden -> T_f * 2
};

struct KindBlock {
    AgentKind kind = AgentKind::Vehicle;
    std::vector<int> agent_rows;  // rows of the scene this block covers
    Tensor preds;                 // [n, M * T_f * 2]
};

// Multimodal futures for every agent, in each agent's local frame.
struct TrajectorySet {
    int num_agents = 0;
    int num_modes = kNumModes;
    int horizon = kFutureSteps;
    std::vector<double> data;       // dense [N_a, M, T_f, 2]
    std::vector<KindBlock> blocks;  // autodiff handles for training

    double at(int a, int m, int t, int c) const {
        return data[((static_cast<size_t>(a) * num_modes + m) * horizon + t) * 2 + c];
    }
};

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

struct ModelParams {
    ModelConfig cfg;
    EncoderParams enc;
    std::vector<MpLayerParams> til;
    std::vector<MpLayerParams> l2a;
    std::vector<MpLayerParams> a2a;
    std::vector<DecoderParams> decoders;  // one per agent kind
};

inline ModelParams make_model_params(ParamRegistry& reg, const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParams p;
    p.cfg = cfg;
    p.enc = make_encoder_params(reg, cfg.enc, rng);
    const int d = cfg.enc.hidden_dim;
    for (int l = 0; l < cfg.til_layers; ++l)
        p.til.push_back(make_mp_layer(reg, "til.layer" + std::to_string(l), d, rng));
    for (int l = 0; l < cfg.l2a_layers; ++l)
        p.l2a.push_back(make_mp_layer(reg, "l2a.layer" + std::to_string(l), d, rng));
    for (int l = 0; l < cfg.a2a_layers; ++l)
        p.a2a.push_back(make_mp_layer(reg, "a2a.layer" + std::to_string(l), d, rng));
    const int out_dim = cfg.future_steps * 2;
    for (int k = 0; k < cfg.enc.num_agent_kinds; ++k) {
        DecoderParams dec;
        const std::string name = "dec.kind" + std::to_string(k);
        dec.mode_embed = reg.add(name + ".modes", {cfg.num_modes, d}, d, rng);
        dec.head = make_mlp(reg, name + ".head",
                            {4 * d, cfg.decoder_hidden, cfg.decoder_hidden, out_dim}, rng);
        p.decoders.push_back(std::move(dec));
    }
    return p;
}

// Everything derived from one Scene for a forward pass. The Scene must
// outlive the graph (LocalizedScene keeps a pointer into it).
struct SceneGraph {
    LocalizedScene local;
    EdgeSets edges;
    EdgeList til_edges, l2a_edges, a2a_edges;
    std::vector<EdgeGeom> til_geoms, l2a_geoms, a2a_geoms;

    int num_agents() const { return static_cast<int>(local.agents.size()); }
    int num_lanes() const { return static_cast<int>(local.lanes.size()); }
};

inline SceneGraph build_scene_graph(const Scene& scene, const ModelConfig& cfg) {
    SceneGraph g;
    g.local = localize(scene);
    g.edges = build_edge_sets(scene, cfg.radius, ExpansionPlan::parse(cfg.plan));

    auto geoms_for = [&](const EdgeList& el, bool src_agent, bool tgt_agent, EdgeType et) {
        std::vector<EdgeGeom> gs;
        gs.reserve(el.size());
        for (size_t i = 0; i < el.size(); ++i) {
            const Pose& src = src_agent ? g.local.agents[el.src[i]].anchor
                                        : g.local.lanes[el.src[i]].anchor;
            const Pose& tgt = tgt_agent ? g.local.agents[el.tgt[i]].anchor
                                        : g.local.lanes[el.tgt[i]].anchor;
            gs.push_back(rel_pose(tgt, src, et));
        }
        return gs;
    };

    g.til_edges = EdgeList::from_adjacency(g.edges.a2l);   // agents -> lanes
    g.l2a_edges = EdgeList::from_adjacency(g.edges.l2a);   // lanes -> agents
    g.a2a_edges = EdgeList::from_adjacency(g.edges.a2a);   // agents -> agents
    g.til_geoms = geoms_for(g.til_edges, true, false, EdgeType::A2L);
    g.l2a_geoms = geoms_for(g.l2a_edges, false, true, EdgeType::L2A);
    g.a2a_geoms = geoms_for(g.a2a_edges, true, true, EdgeType::A2A);
    return g;
}

// Traffic-in-Lane: inject agent dynamics into aligned lane nodes.
inline Tensor til_stage(const Tensor& agent_feats, const Tensor& lane_feats, const SceneGraph& g,
                        const ModelParams& p) {
    if (g.til_edges.size() == 0) return lane_feats;
    const Tensor edge_embed = encode_edges(g.til_geoms, p.enc);
    Tensor lanes = lane_feats;
    for (const MpLayerParams& layer : p.til) {
        lanes = mp_layer(lanes, agent_feats, edge_embed, g.til_edges, layer, p.cfg.heads);
    }
    return lanes;
}

// Lane-to-Agent: propagate traffic-aware lane semantics to agents over the
// topology-expanded edge set.
inline Tensor l2a_stage(const Tensor& agent_feats, const Tensor& lane_feats, const SceneGraph& g,
                        const ModelParams& p) {
    if (g.l2a_edges.size() == 0) return agent_feats;
    const Tensor edge_embed = encode_edges(g.l2a_geoms, p.enc);
    Tensor agents = agent_feats;
    for (const MpLayerParams& layer : p.l2a) {
        agents = mp_layer(agents, lane_feats, edge_embed, g.l2a_edges, layer, p.cfg.heads);
    }
    return agents;
}

// Agent-to-Agent over lane-guided edges.
inline Tensor a2a_stage(const Tensor& agent_feats, const SceneGraph& g, const ModelParams& p) {
    if (g.a2a_edges.size() == 0) return agent_feats;
    const Tensor edge_embed = encode_edges(g.a2a_geoms, p.enc);
    Tensor agents = agent_feats;
    for (const MpLayerParams& layer : p.a2a) {
        agents = mp_layer(agents, agents, edge_embed, g.a2a_edges, layer, p.cfg.heads);
    }
    return agents;
}

// Per-kind multimodal regression heads over concatenated dynamic, lane
// context, and interaction features. No cross-agent computation.
inline TrajectorySet decode(const Tensor& dyn, const Tensor& lane_ctx, const Tensor& interaction,
                            const std::vector<AgentKind>& kinds, const ModelParams& p) {
    const int n = dyn.dim(0);
    if (static_cast<int>(kinds.size()) != n)
        throw ContractError("decode: kinds length does not match agent rows");
    for (AgentKind k : kinds) {
        const int ki = static_cast<int>(k);
        if (ki < 0 || ki >= p.cfg.enc.num_agent_kinds)
            throw ContractError("decode: unknown agent kind " + std::to_string(ki));
    }
    const Tensor feats = concat({dyn, lane_ctx, interaction});

    TrajectorySet out;
    out.num_agents = n;
    out.num_modes = p.cfg.num_modes;
    out.horizon = p.cfg.future_steps;
    out.data.assign(static_cast<size_t>(n) * out.num_modes * out.horizon * 2, 0.0);

    const int block = out.num_modes * out.horizon * 2;
    for (int k = 0; k < p.cfg.enc.num_agent_kinds; ++k) {
        std::vector<int> rows;
        for (int i = 0; i < n; ++i) {
            if (static_cast<int>(kinds[i]) == k) rows.push_back(i);
        }
        if (rows.empty()) continue;
        const DecoderParams& dec = p.decoders[static_cast<size_t>(k)];
        const Tensor kind_feats = gather_rows(feats, rows);
        std::vector<Tensor> mode_outs;
        mode_outs.reserve(out.num_modes);
        for (int m = 0; m < out.num_modes; ++m) {
            const std::vector<int> mode_idx(rows.size(), m);
            const Tensor mode_emb = gather_rows(dec.mode_embed, mode_idx);
            mode_outs.push_back(scale(mlp(concat({kind_feats, mode_emb}), dec.head),
                                      p.cfg.decoder_output_gain));
        }
        KindBlock kb;
        kb.kind = static_cast<AgentKind>(k);
        kb.agent_rows = rows;
        kb.preds = concat(mode_outs);  // [n_k, M * T_f * 2], mode-major per row
        const auto& pd = kb.preds.data();
        for (size_t r = 0; r < rows.size(); ++r) {
            std::copy_n(&pd[r * block], block, &out.data[static_cast<size_t>(rows[r]) * block]);
        }
        out.blocks.push_back(std::move(kb));
    }
    return out;
}

struct ForwardResult {
    Tensor dyn;           // agent features after encoding
    Tensor lane_ctx;      // agent features after L2A
    Tensor interaction;   // agent features after A2A
    Tensor lane_feats;    // lane features after TiL
    TrajectorySet traj;
};

// Full pipeline on a prebuilt scene graph: encode, TiL, L2A, A2A, decode.
inline ForwardResult forward(const SceneGraph& g, const ModelParams& p) {
    ForwardResult r;
    r.dyn = encode_agents(g.local, p.enc);
    const Tensor lanes0 = encode_lanes(g.local, p.enc);
    r.lane_feats = til_stage(r.dyn, lanes0, g, p);
    r.lane_ctx = l2a_stage(r.dyn, r.lane_feats, g, p);
    r.interaction = a2a_stage(r.lane_ctx, g, p);

    std::vector<AgentKind> kinds;
    kinds.reserve(g.local.agents.size());
    for (const auto& a : g.local.scene->agents) kinds.push_back(a.kind);
    r.traj = decode(r.dyn, r.lane_ctx, r.interaction, kinds, p);
    return r;
}

// Convenience wrapper: predictions for a scene in each agent's local frame.
inline TrajectorySet predict(const Scene& scene, const ModelParams& p) {
    const SceneGraph g = build_scene_graph(scene, p.cfg);
    return forward(g, p).traj;
}

}  // namespace sparscene
