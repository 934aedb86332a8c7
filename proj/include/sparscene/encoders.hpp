#pragma once

#include <string>
#include <vector>

#include "sparscene/error.hpp"
#include "sparscene/geometry.hpp"
#include "sparscene/params.hpp"
#include "sparscene/scene.hpp"
#include "sparscene/tensor.hpp"

namespace sparscene {

struct EncoderConfig {
    int hidden_dim = 64;
    int type_embed_dim = 16;
    int num_agent_kinds = kNumAgentKinds;
    int num_edge_types = kNumEdgeTypes;
    int gru_layers = 1;
    bool use_z_feature = false;  // feed raw z to the agent GRU; geometry stays 2-D

    void validate() const {
        if (hidden_dim < 1 || type_embed_dim < 1 || num_agent_kinds < 1 ||
            num_edge_types < 1 || gru_layers < 1)
            throw ConfigError("encoder config: all dims must be >= 1");
    }

    int agent_input_dim() const { return use_z_feature ? 7 : 6; }
    static constexpr int lane_input_dim() { return 2; }
    static constexpr int agent_attr_dim() { return 3 + kNumAgentKinds; }           // l, w, h + kind
    static constexpr int lane_attr_dim() { return kNumLaneKinds + kNumSignalStates; }
};

// ---------------------------------------------------------------------------
// Small NN building blocks
// ---------------------------------------------------------------------------

struct LinearParams {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]
};

inline LinearParams make_linear(ParamRegistry& reg, const std::string& name, int in, int out,
                                Rng& rng) {
    LinearParams p;
    p.weight = reg.add(name + ".weight", {in, out}, in, rng);
    p.bias = reg.add(name + ".bias", {out}, in, rng);
    return p;
}

inline Tensor linear(const Tensor& x, const LinearParams& p) {
    return add(matmul(x, p.weight), p.bias);
}

struct MlpParams {
    std::vector<LinearParams> layers;
};

inline MlpParams make_mlp(ParamRegistry& reg, const std::string& name,
                          const std::vector<int>& dims, Rng& rng) {
    if (dims.size() < 2) throw ContractError("make_mlp: need at least one layer");
    MlpParams p;
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        p.layers.push_back(
            make_linear(reg, name + ".l" + std::to_string(i), dims[i], dims[i + 1], rng));
    }
    return p;
}

// ReLU between layers, none after the last.
inline Tensor mlp(const Tensor& x, const MlpParams& p) {
    Tensor h = x;
    for (size_t i = 0; i < p.layers.size(); ++i) {
        h = linear(h, p.layers[i]);
        if (i + 1 < p.layers.size()) h = relu(h);
    }
    return h;
}

// Row-wise layer normalization with learnable scale and shift.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         double eps = 1e-5) {
    const int d = x.shape().back();
    const Tensor averager = Tensor::full({d, d}, 1.0 / d);
    const Tensor mean = matmul(x, averager);
    const Tensor centered = sub(x, mean);
    const Tensor var = matmul(mul(centered, centered), averager);
    const Tensor inv_std = exp(scale(log(add_scalar(var, eps)), -0.5));
    return add(mul(mul(centered, inv_std), gamma), beta);
}

// ---------------------------------------------------------------------------
// GRU
// ---------------------------------------------------------------------------

struct GruParams {
    Tensor w_z, u_z, b_z;
    Tensor w_r, u_r, b_r;
    Tensor w_h, u_h, b_h;
};

inline GruParams make_gru(ParamRegistry& reg, const std::string& name, int in, int hidden,
                          Rng& rng) {
    GruParams p;
    auto mat = [&](const char* g, int rows) {
        return reg.add(name + "." + g, {rows, hidden}, rows, rng);
    };
    auto vec = [&](const char* g) { return reg.add(name + "." + g, {hidden}, in, rng); };
    p.w_z = mat("w_z", in);
    p.u_z = mat("u_z", hidden);
    p.b_z = vec("b_z");
    p.w_r = mat("w_r", in);
    p.u_r = mat("u_r", hidden);
    p.b_r = vec("b_r");
    p.w_h = mat("w_h", in);
    p.u_h = mat("u_h", hidden);
    p.b_h = vec("b_h");
    return p;
}

// z = sig(Wz x + Uz h + bz); r = sig(Wr x + Ur h + br);
// hc = tanh(Wh x + Uh (r . h) + bh); h' = (1 - z) . h + z . hc
inline Tensor gru_step(const Tensor& x, const Tensor& h, const GruParams& p) {
    const Tensor z = sigmoid(add(add(matmul(x, p.w_z), matmul(h, p.u_z)), p.b_z));
    const Tensor r = sigmoid(add(add(matmul(x, p.w_r), matmul(h, p.u_r)), p.b_r));
    const Tensor hc = tanh(add(add(matmul(x, p.w_h), matmul(mul(r, h), p.u_h)), p.b_h));
    return add(h, mul(z, sub(hc, h)));
}

struct GruStack {
    std::vector<GruParams> layers;
    int hidden = 0;
};

inline GruStack make_gru_stack(ParamRegistry& reg, const std::string& name, int in, int hidden,
                               int layers, Rng& rng) {
    GruStack s;
    s.hidden = hidden;
    int d = in;
    for (int l = 0; l < layers; ++l) {
        s.layers.push_back(make_gru(reg, name + ".layer" + std::to_string(l), d, hidden, rng));
        d = hidden;
    }
    return s;
}

// Runs the stack over a step-major sequence of [N, in] tensors; returns the
// top layer's final hidden state [N, hidden].
inline Tensor gru_sequence(const std::vector<Tensor>& steps, const GruStack& stack) {
    if (steps.empty()) throw ContractError("gru_sequence: empty sequence");
    const int n = steps[0].dim(0);
    std::vector<Tensor> inputs = steps;
    Tensor h;
    for (const GruParams& layer : stack.layers) {
        h = Tensor::zeros({n, stack.hidden});
        for (Tensor& x : inputs) {
            h = gru_step(x, h, layer);
            x = h;  // becomes next layer's input
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// Node and edge encoders
// ---------------------------------------------------------------------------

struct EncoderParams {
    EncoderConfig cfg;
    GruStack agent_gru;
    LinearParams agent_attr;
    MlpParams agent_fuse;
    GruStack lane_gru;
    LinearParams lane_attr;
    MlpParams lane_fuse;
    Tensor edge_type_table;  // [num_edge_types, type_embed_dim]
    MlpParams edge_mlp;
};

inline EncoderParams make_encoder_params(ParamRegistry& reg, const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    EncoderParams p;
    p.cfg = cfg;
    const int d = cfg.hidden_dim;
    p.agent_gru = make_gru_stack(reg, "enc.agent.gru", cfg.agent_input_dim(), d,
                                 cfg.gru_layers, rng);
    p.agent_attr = make_linear(reg, "enc.agent.attr", EncoderConfig::agent_attr_dim(), d, rng);
    p.agent_fuse = make_mlp(reg, "enc.agent.fuse", {2 * d, d, d}, rng);
    p.lane_gru =
        make_gru_stack(reg, "enc.lane.gru", EncoderConfig::lane_input_dim(), d, cfg.gru_layers, rng);
    p.lane_attr = make_linear(reg, "enc.lane.attr", EncoderConfig::lane_attr_dim(), d, rng);
    p.lane_fuse = make_mlp(reg, "enc.lane.fuse", {2 * d, d, d}, rng);
    p.edge_type_table =
        reg.add("enc.edge.type_table", {cfg.num_edge_types, cfg.type_embed_dim}, d, rng);
    p.edge_mlp = make_mlp(reg, "enc.edge.mlp", {4 + cfg.type_embed_dim, d, d}, rng);
    return p;
}

// GRU over each agent's displacement history (validity as an input channel),
// fused with an embedding of size and kind. Output [N_a, D].
inline Tensor encode_agents(const LocalizedScene& local, const EncoderParams& p) {
    const int n = static_cast<int>(local.agents.size());
    const int in_dim = p.cfg.agent_input_dim();
    std::vector<Tensor> steps;
    steps.reserve(kAgentDeltaSteps);
    for (int t = 0; t < kAgentDeltaSteps; ++t) {
        std::vector<double> buf(static_cast<size_t>(n) * in_dim, 0.0);
        for (int i = 0; i < n; ++i) {
            const Displacement& d = local.agents[i].motion[t];
            double* row = &buf[static_cast<size_t>(i) * in_dim];
            row[0] = d.dx;
            row[1] = d.dy;
            row[2] = d.vx;
            row[3] = d.vy;
            row[4] = d.dtheta;
            row[5] = d.valid ? 1.0 : 0.0;
            if (p.cfg.use_z_feature) row[6] = local.scene->agents[i].states[t + 1].z;
        }
        steps.push_back(Tensor::from({n, in_dim}, std::move(buf)));
    }
    const Tensor motion = gru_sequence(steps, p.agent_gru);

    std::vector<double> attrs(static_cast<size_t>(n) * EncoderConfig::agent_attr_dim(), 0.0);
    for (int i = 0; i < n; ++i) {
        const AgentTrack& a = local.scene->agents[i];
        double* row = &attrs[static_cast<size_t>(i) * EncoderConfig::agent_attr_dim()];
        row[0] = a.length;
        row[1] = a.width;
        row[2] = a.height;
        row[3 + static_cast<int>(a.kind)] = 1.0;
    }
    const Tensor attr_emb =
        relu(linear(Tensor::from({n, EncoderConfig::agent_attr_dim()}, std::move(attrs)),
                    p.agent_attr));
    return mlp(concat({motion, attr_emb}), p.agent_fuse);
}

// GRU over resampled waypoint deltas in the lane frame, fused with an
// embedding of lane kind and signal state. Output [N_l, D].
inline Tensor encode_lanes(const LocalizedScene& local, const EncoderParams& p) {
    const int n = static_cast<int>(local.lanes.size());
    std::vector<Tensor> steps;
    steps.reserve(kLaneDeltaSteps);
    for (int t = 0; t < kLaneDeltaSteps; ++t) {
        std::vector<double> buf(static_cast<size_t>(n) * 2, 0.0);
        for (int j = 0; j < n; ++j) {
            const auto& w = local.lanes[j].waypoints;
            buf[static_cast<size_t>(j) * 2] = w[t + 1].x - w[t].x;
            buf[static_cast<size_t>(j) * 2 + 1] = w[t + 1].y - w[t].y;
        }
        steps.push_back(Tensor::from({n, 2}, std::move(buf)));
    }
    const Tensor geom = gru_sequence(steps, p.lane_gru);

    std::vector<double> attrs(static_cast<size_t>(n) * EncoderConfig::lane_attr_dim(), 0.0);
    for (int j = 0; j < n; ++j) {
        const LanePolyline& l = local.scene->lanes[j];
        double* row = &attrs[static_cast<size_t>(j) * EncoderConfig::lane_attr_dim()];
        row[static_cast<int>(l.kind)] = 1.0;
        row[kNumLaneKinds + static_cast<int>(l.signal)] = 1.0;
    }
    const Tensor attr_emb =
        relu(linear(Tensor::from({n, EncoderConfig::lane_attr_dim()}, std::move(attrs)),
                    p.lane_attr));
    return mlp(concat({geom, attr_emb}), p.lane_fuse);
}

// MLP over [dx, dy, cos dt, sin dt] concatenated with the edge-type
// embedding. Output [E, D].
inline Tensor encode_edges(const std::vector<EdgeGeom>& geoms, const EncoderParams& p) {
    const int e = static_cast<int>(geoms.size());
    if (e == 0) throw ContractError("encode_edges: empty edge list");
    std::vector<double> buf(static_cast<size_t>(e) * 4);
    std::vector<int> types(geoms.size());
    for (int i = 0; i < e; ++i) {
        double* row = &buf[static_cast<size_t>(i) * 4];
        row[0] = geoms[i].dx;
        row[1] = geoms[i].dy;
        row[2] = geoms[i].cos_dt;
        row[3] = geoms[i].sin_dt;
        types[i] = static_cast<int>(geoms[i].etype);
    }
    const Tensor geom = Tensor::from({e, 4}, std::move(buf));
    const Tensor type_emb = gather_rows(p.edge_type_table, types);
    return mlp(concat({geom, type_emb}), p.edge_mlp);
}

}  // namespace sparscene
