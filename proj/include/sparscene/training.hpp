#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "sparscene/error.hpp"
#include "sparscene/interaction.hpp"
#include "sparscene/params.hpp"
#include "sparscene/scene.hpp"
#include "sparscene/tensor.hpp"

namespace sparscene {

struct TrainConfig {
    double lr_init = 3e-4;
    double lr_final = 1e-6;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double huber_delta = 1.0;  // meters
    double miss_threshold = 2.0;  // meters
    int epochs = 250;
    int batch_size = 4;
    std::uint64_t seed = 1;
    bool shuffle = true;

    void validate() const {
        if (lr_init <= 0.0 || lr_final <= 0.0 || lr_final > lr_init)
            throw ConfigError("train config: need 0 < lr_final <= lr_init");
        if (weight_decay < 0.0 || huber_delta <= 0.0 || epochs < 1 || batch_size < 1)
            throw ConfigError("train config: invalid rates or sizes");
    }
};

// One scenario with ground-truth futures, both in the global frame.
// futures is flat [N_a * T_f * 2]; future_valid is [N_a * T_f].
struct ScenarioSample {
    Scene scene;
    std::vector<double> futures;
    std::vector<std::uint8_t> future_valid;
};

// Transform global-frame futures into each agent's anchor frame.
inline std::vector<double> localize_futures(const Scene& scene,
                                            const std::vector<double>& futures_global,
                                            int horizon = kFutureSteps) {
    const int n = scene.num_agents();
    if (futures_global.size() != static_cast<size_t>(n) * horizon * 2)
        throw ContractError("localize_futures: flat futures size mismatch");
    std::vector<double> out(futures_global.size());
    for (int i = 0; i < n; ++i) {
        const Pose anchor = scene.agents[i].anchor();
        for (int t = 0; t < horizon; ++t) {
            const size_t k = (static_cast<size_t>(i) * horizon + t) * 2;
            const Vec2 local = anchor.to_local({futures_global[k], futures_global[k + 1]});
            out[k] = local.x;
            out[k + 1] = local.y;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Best-of-M regression loss
// ---------------------------------------------------------------------------

// Elementwise Huber built from relu primitives:
// 0.5 * min(|r|, delta)^2 + delta * relu(|r| - delta).
inline Tensor huber(const Tensor& r, double delta) {
    const Tensor abs_r = add(relu(r), relu(scale(r, -1.0)));
    const Tensor clipped = add_scalar(scale(relu(add_scalar(scale(abs_r, -1.0), delta)), -1.0),
                                      delta);  // min(|r|, delta)
    const Tensor quad = scale(mul(clipped, clipped), 0.5);
    const Tensor lin = scale(relu(add_scalar(abs_r, -delta)), delta);
    return add(quad, lin);
}

// min over the columns of x [n, m]; ties resolved toward the lower index.
inline Tensor min_over_columns(const Tensor& x) {
    const int m = x.shape().back();
    Tensor acc = slice(x, 0, 1);
    for (int j = 1; j < m; ++j) {
        const Tensor next = slice(x, j, 1);
        acc = sub(acc, relu(sub(acc, next)));
    }
    return acc;
}

// Best-of-M smooth-L1 objective: per agent, the per-element mean Huber error
// of each mode (over valid steps and both coordinates), minimized over modes,
// averaged over supervised agents. gts/gt_valid are in agent-local frames,
// flat [N_a * T_f * 2] and [N_a * T_f].
inline Tensor mtp_loss(const TrajectorySet& preds, const std::vector<double>& gts,
                       const std::vector<std::uint8_t>& gt_valid, double huber_delta = 1.0) {
    const int t_f = preds.horizon;
    const int m = preds.num_modes;
    const int step_dim = t_f * 2;
    if (gts.size() != static_cast<size_t>(preds.num_agents) * step_dim ||
        gt_valid.size() != static_cast<size_t>(preds.num_agents) * t_f)
        throw ContractError("mtp_loss: ground-truth size mismatch");

    Tensor total;
    int supervised = 0;
    for (const KindBlock& block : preds.blocks) {
        // Keep only rows with at least one valid future step.
        std::vector<int> keep;
        for (size_t r = 0; r < block.agent_rows.size(); ++r) {
            const int a = block.agent_rows[r];
            for (int t = 0; t < t_f; ++t) {
                if (gt_valid[static_cast<size_t>(a) * t_f + t]) {
                    keep.push_back(static_cast<int>(r));
                    break;
                }
            }
        }
        if (keep.empty()) continue;
        const int n = static_cast<int>(keep.size());
        supervised += n;

        std::vector<double> gt_tile(static_cast<size_t>(n) * m * step_dim, 0.0);
        std::vector<double> mask_tile(gt_tile.size(), 0.0);
        std::vector<double> inv_count(static_cast<size_t>(n) * m, 0.0);
        for (int r = 0; r < n; ++r) {
            const int a = block.agent_rows[static_cast<size_t>(keep[r])];
            int valid_steps = 0;
            for (int t = 0; t < t_f; ++t)
                valid_steps += gt_valid[static_cast<size_t>(a) * t_f + t] ? 1 : 0;
            for (int mm = 0; mm < m; ++mm) {
                double* gdst = &gt_tile[(static_cast<size_t>(r) * m + mm) * step_dim];
                double* mdst = &mask_tile[(static_cast<size_t>(r) * m + mm) * step_dim];
                for (int t = 0; t < t_f; ++t) {
                    if (!gt_valid[static_cast<size_t>(a) * t_f + t]) continue;
                    gdst[t * 2] = gts[(static_cast<size_t>(a) * t_f + t) * 2];
                    gdst[t * 2 + 1] = gts[(static_cast<size_t>(a) * t_f + t) * 2 + 1];
                    mdst[t * 2] = 1.0;
                    mdst[t * 2 + 1] = 1.0;
                }
                inv_count[static_cast<size_t>(r) * m + mm] = 1.0 / (2.0 * valid_steps);
            }
        }

        const Tensor pred_rows = gather_rows(block.preds, keep);            // [n, M*T*2]
        const Tensor flat = reshape(pred_rows, {n * m, step_dim});
        const Tensor residual = sub(flat, Tensor::from({n * m, step_dim}, std::move(gt_tile)));
        const Tensor err = mul(huber(residual, huber_delta),
                               Tensor::from({n * m, step_dim}, std::move(mask_tile)));
        const Tensor per_mode = mul(matmul(err, Tensor::full({step_dim, 1}, 1.0)),
                                    Tensor::from({n * m, 1}, std::move(inv_count)));
        const Tensor best = min_over_columns(reshape(per_mode, {n, m}));    // [n, 1]
        const Tensor block_sum = sum_all(best);
        total = total.defined() ? add(total, block_sum) : block_sum;
    }
    if (supervised == 0) throw ContractError("mtp_loss: no agent has a valid future");
    return scale(total, 1.0 / supervised);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct Metrics {
    double min_ade = 0.0;
    double min_fde = 0.0;
    double miss_rate = 0.0;
    int agents = 0;
};

// Displacement metrics at a horizon (steps), averaged over agents that have
// at least one valid step inside it. The endpoint is the last valid step
// within the horizon; an agent misses when its best endpoint error exceeds
// the threshold.
inline Metrics compute_metrics(const TrajectorySet& preds, const std::vector<double>& gts,
                               const std::vector<std::uint8_t>& gt_valid, int horizon,
                               double miss_threshold = 2.0) {
    if (horizon < 1 || horizon > preds.horizon)
        throw ContractError("compute_metrics: horizon out of range");
    Metrics out;
    const int t_f = preds.horizon;
    for (int a = 0; a < preds.num_agents; ++a) {
        int endpoint = -1;
        for (int t = horizon - 1; t >= 0; --t) {
            if (gt_valid[static_cast<size_t>(a) * t_f + t]) {
                endpoint = t;
                break;
            }
        }
        if (endpoint < 0) continue;
        double best_ade = std::numeric_limits<double>::infinity();
        double best_fde = std::numeric_limits<double>::infinity();
        for (int m = 0; m < preds.num_modes; ++m) {
            double ade = 0.0;
            int steps = 0;
            for (int t = 0; t < horizon; ++t) {
                if (!gt_valid[static_cast<size_t>(a) * t_f + t]) continue;
                const double dx = preds.at(a, m, t, 0) - gts[(static_cast<size_t>(a) * t_f + t) * 2];
                const double dy =
                    preds.at(a, m, t, 1) - gts[(static_cast<size_t>(a) * t_f + t) * 2 + 1];
                ade += std::hypot(dx, dy);
                ++steps;
            }
            ade /= steps;
            const double ex =
                preds.at(a, m, endpoint, 0) - gts[(static_cast<size_t>(a) * t_f + endpoint) * 2];
            const double ey = preds.at(a, m, endpoint, 1) -
                              gts[(static_cast<size_t>(a) * t_f + endpoint) * 2 + 1];
            const double fde = std::hypot(ex, ey);
            best_ade = std::min(best_ade, ade);
            best_fde = std::min(best_fde, fde);
        }
        out.min_ade += best_ade;
        out.min_fde += best_fde;
        out.miss_rate += best_fde > miss_threshold ? 1.0 : 0.0;
        ++out.agents;
    }
    if (out.agents > 0) {
        out.min_ade /= out.agents;
        out.min_fde /= out.agents;
        out.miss_rate /= out.agents;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Optimizer and schedule
// ---------------------------------------------------------------------------

// Cosine decay from lr_init at step 0 to lr_final at step total_steps.
inline double cosine_lr(const TrainConfig& cfg, std::int64_t step, std::int64_t total_steps) {
    if (total_steps <= 0) return cfg.lr_init;
    const double s = std::min<double>(1.0, static_cast<double>(step) / total_steps);
    return cfg.lr_final + 0.5 * (cfg.lr_init - cfg.lr_final) * (1.0 + std::cos(M_PI * s));
}

// Decoupled-weight-decay Adam over every registered parameter; t is the
// 1-based step index used for bias correction.
inline void optimizer_step(ParamRegistry& reg, const TrainConfig& cfg, std::int64_t t,
                           double lr) {
    if (t < 1) throw ContractError("optimizer_step: t is 1-based");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (const std::string& name : reg.names()) {
        Tensor p = reg.get(name);
        ParamRegistry::Slot& slot = reg.slot(name);
        auto& w = p.data();
        const auto& g = p.grad();
        for (size_t i = 0; i < w.size(); ++i) {
            slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * g[i];
            slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = slot.m[i] / bc1;
            const double vhat = slot.v[i] / bc2;
            w[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * w[i]);
        }
    }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct LossCurveRow {
    std::int64_t step = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double min_ade = 0.0;
    double min_fde = 0.0;
    double miss_rate = 0.0;
};

struct TrainResult {
    std::vector<LossCurveRow> curve;
    std::int64_t steps_done = 0;
};

// Deterministic epoch ordering: a Fisher-Yates shuffle seeded by
// (seed, epoch), so resuming at any step reproduces the schedule.
inline std::vector<int> epoch_order(int n, std::uint64_t seed, std::int64_t epoch, bool shuffle) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (!shuffle) return order;
    Rng rng(seed * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(epoch) + 1);
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
        std::swap(order[i], order[j]);
    }
    return order;
}

// Mini-batch training over block-diagonal scene batches. Resumable: pass
// start_step (and the registry's restored optimizer slots) to continue a
// previous run bit-exactly.
inline TrainResult train_loop(const std::vector<ScenarioSample>& samples, ModelParams& model,
                              ParamRegistry& reg, const TrainConfig& cfg,
                              std::int64_t start_step = 0) {
    cfg.validate();
    if (samples.empty()) throw ContractError("train_loop: empty dataset");
    const int n = static_cast<int>(samples.size());
    const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::int64_t total_steps = static_cast<std::int64_t>(cfg.epochs) * steps_per_epoch;

    TrainResult result;
    for (std::int64_t step = start_step; step < total_steps; ++step) {
        const std::int64_t epoch = step / steps_per_epoch;
        const int batch_idx = static_cast<int>(step % steps_per_epoch);
        const std::vector<int> order = epoch_order(n, cfg.seed, epoch, cfg.shuffle);

        std::vector<Scene> scenes;
        std::vector<double> futures;
        std::vector<std::uint8_t> valid;
        for (int k = batch_idx * cfg.batch_size;
             k < std::min(n, (batch_idx + 1) * cfg.batch_size); ++k) {
            const ScenarioSample& s = samples[static_cast<size_t>(order[k])];
            scenes.push_back(s.scene);
            futures.insert(futures.end(), s.futures.begin(), s.futures.end());
            valid.insert(valid.end(), s.future_valid.begin(), s.future_valid.end());
        }
        auto [merged, offsets] = batch_scenes(scenes);
        (void)offsets;

        const SceneGraph graph = build_scene_graph(merged, model.cfg);
        const ForwardResult fwd = forward(graph, model);
        const std::vector<double> gts_local = localize_futures(merged, futures);
        const Tensor loss = mtp_loss(fwd.traj, gts_local, valid, cfg.huber_delta);
        const double loss_value = loss.value();
        if (!std::isfinite(loss_value))
            throw NumericalError("train_loop: non-finite loss at step " + std::to_string(step) +
                                 " (epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_idx) + ")");

        reg.zero_grad();
        loss.backward();
        const double lr = cosine_lr(cfg, step, total_steps);
        optimizer_step(reg, cfg, step + 1, lr);

        const Metrics metr =
            compute_metrics(fwd.traj, gts_local, valid, model.cfg.future_steps,
                            cfg.miss_threshold);
        result.curve.push_back(
            {step, lr, loss_value, metr.min_ade, metr.min_fde, metr.miss_rate});
        result.steps_done = step + 1;
    }
    return result;
}

}  // namespace sparscene
