#pragma once

// The actor network: residual edge-graph-attention encoder and two-layer
// attention pointer decoder, plus the critic head used by PPO. Forwards are
// templated over the engine so training (TapeCtx) and inference (EagerCtx)
// share one implementation.

#include "egat/engine.hpp"
#include "egat/instance.hpp"
#include "egat/nn.hpp"
#include "egat/rng.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace egat {

struct ModelConfig {
    int node_dim = 128;  // d_x
    int edge_dim = 64;   // d_e
    int layers = 4;      // L
    int heads = 8;       // H
    real logit_clip = 10.0;
    Problem problem = Problem::Tsp;
    bool residual = true;

    int head_dim() const { return node_dim / heads; }
    int node_feat_dim() const { return problem == Problem::Cvrp ? 3 : 2; }

    void validate() const {
        if (layers < 1) throw Error("model config: layers must be >= 1");
        if (node_dim <= 0 || edge_dim <= 0 || heads <= 0)
            throw Error("model config: dimensions must be positive");
        if (node_dim % heads != 0) throw Error("model config: node_dim not divisible by heads");
        if (logit_clip <= 0.0) throw Error("model config: logit clip must be positive");
    }
};

enum class InitKind { Orthogonal, Xavier };

constexpr real kBnEps = 1e-5;
constexpr real kBnMomentum = 0.1;
constexpr real kLeakySlope = 0.2;

// All learnable tensors plus batch-norm running statistics, under stable
// names. Includes the critic head (inert under trainers that ignore it).
ParamStore build_params(const ModelConfig& cfg, InitKind kind, Rng& rng);

// ================================ encoder ===================================

template <class Ctx>
struct Enc {
    typename Ctx::Ref nodes;       // m x d_x
    typename Ctx::Ref graph;       // 1 x d_x, arithmetic mean of node rows
    typename Ctx::Ref edges;       // m x m x d_e view
    typename Ctx::Ref edges_flat;  // (m*m) x d_e working layout
    int m = 0;
    BnStats bn_node, bn_edge;  // filled in training mode
};

template <class Ctx>
std::pair<typename Ctx::Ref, typename Ctx::Ref> embed_inputs(Ctx& cx, Bound<Ctx>& bp,
                                                             const ModelConfig& cfg,
                                                             const Instance& inst, bool training,
                                                             BnStats* node_stats,
                                                             BnStats* edge_stats) {
    const int m = inst.num_nodes();
    const int f = cfg.node_feat_dim();
    if (inst.kind != cfg.problem) throw Error("model: instance kind does not match config");

    Tensor feats = Tensor::zeros({m, f});
    for (int i = 0; i < m; ++i) {
        feats.at(i, 0) = inst.coords[static_cast<std::size_t>(i)][0];
        feats.at(i, 1) = inst.coords[static_cast<std::size_t>(i)][1];
        if (f == 3) feats.at(i, 2) = inst.demands[static_cast<std::size_t>(i)];
    }
    Tensor edist({m * m, 1}, inst.dist_matrix());

    auto lin_n = cx.add_rowvec(cx.matmul(cx.lift(std::move(feats)), bp("embed.node.W")),
                               bp("embed.node.b"));
    auto lin_e = cx.add_rowvec(cx.matmul(cx.lift(std::move(edist)), bp("embed.edge.W")),
                               bp("embed.edge.b"));
    typename Ctx::Ref x0, e0;
    if (training) {
        x0 = cx.batchnorm_train(lin_n, bp("embed.node.bn.gamma"), bp("embed.node.bn.beta"), kBnEps,
                                node_stats);
        e0 = cx.batchnorm_train(lin_e, bp("embed.edge.bn.gamma"), bp("embed.edge.bn.beta"), kBnEps,
                                edge_stats);
    } else {
        x0 = cx.batchnorm_eval(lin_n, bp("embed.node.bn.gamma"), bp("embed.node.bn.beta"),
                               bp.raw("embed.node.bn.run_mean"), bp.raw("embed.node.bn.run_var"),
                               kBnEps);
        e0 = cx.batchnorm_eval(lin_e, bp("embed.edge.bn.gamma"), bp("embed.edge.bn.beta"),
                               bp.raw("embed.edge.bn.run_mean"), bp.raw("embed.edge.bn.run_var"),
                               kBnEps);
    }
    return {x0, e0};
}

// One residual E-GAT layer. The raw score of a pair is the scalar
// g^T [W (x_i || x_j || e_ij)] under LeakyReLU; splitting W by row blocks
// turns it into LeakyReLU(a_i + b_j + c_ij) with per-node and per-edge
// scalars, which avoids materializing the m^2 x (2d_x+d_e) concat tensor.
// Softmax runs over all j (self included); the update is alpha * W1 * x plus
// the skip connection.
template <class Ctx>
typename Ctx::Ref encoder_layer(Ctx& cx, Bound<Ctx>& bp, const ModelConfig& cfg,
                                typename Ctx::Ref x, typename Ctx::Ref edges_flat, int layer,
                                int m, typename Ctx::Ref* alpha_out = nullptr) {
    const std::string pre = "enc." + std::to_string(layer) + ".";
    const int dx = cfg.node_dim, de = cfg.edge_dim;

    std::vector<int> rows_top(static_cast<std::size_t>(dx)), rows_mid(static_cast<std::size_t>(dx)),
        rows_bot(static_cast<std::size_t>(de));
    for (int k = 0; k < dx; ++k) {
        rows_top[static_cast<std::size_t>(k)] = k;
        rows_mid[static_cast<std::size_t>(k)] = dx + k;
    }
    for (int k = 0; k < de; ++k) rows_bot[static_cast<std::size_t>(k)] = 2 * dx + k;

    auto w = bp(pre + "W");
    auto g = bp(pre + "g");
    auto u = cx.matmul(cx.gather_rows(w, rows_top), g);  // d_x x 1
    auto v = cx.matmul(cx.gather_rows(w, rows_mid), g);  // d_x x 1
    auto e_head = cx.matmul(cx.gather_rows(w, rows_bot), g);

    auto a_col = cx.matmul(x, u);                               // m x 1: a_i
    auto b_row = cx.reshape(cx.matmul(x, v), {1, m});           // 1 x m: b_j
    auto c_pair = cx.reshape(cx.matmul(edges_flat, e_head), {m, m});
    auto ones_row = cx.lift(Tensor::full({1, m}, 1.0));
    auto ones_col = cx.lift(Tensor::full({m, 1}, 1.0));
    auto score = cx.add(cx.add(cx.matmul(a_col, ones_row), cx.matmul(ones_col, b_row)), c_pair);
    auto alpha = cx.softmax_rows(cx.leaky_relu(score, kLeakySlope));
    if (alpha_out) *alpha_out = alpha;
    auto message = cx.matmul(alpha, cx.matmul(x, bp(pre + "W1")));
    return cfg.residual ? cx.add(message, x) : message;
}

template <class Ctx>
Enc<Ctx> encode(Ctx& cx, Bound<Ctx>& bp, const ModelConfig& cfg, const Instance& inst,
                bool training) {
    cfg.validate();
    Enc<Ctx> enc;
    enc.m = inst.num_nodes();
    auto [x, e] = embed_inputs(cx, bp, cfg, inst, training, &enc.bn_node, &enc.bn_edge);
    enc.edges_flat = e;
    enc.edges = cx.reshape(e, {enc.m, enc.m, cfg.edge_dim});
    for (int l = 0; l < cfg.layers; ++l) x = encoder_layer(cx, bp, cfg, x, e, l, enc.m);
    enc.nodes = x;
    enc.graph = cx.mean_rows(x);

    // Invariant: the graph embedding is the arithmetic mean of node rows.
    const Tensor& nv = cx.val(enc.nodes);
    const Tensor& gv = cx.val(enc.graph);
    for (int j = 0; j < cfg.node_dim; ++j) {
        real mean = 0.0;
        for (int i = 0; i < enc.m; ++i) mean += nv.at(i, j);
        mean /= static_cast<real>(enc.m);
        if (std::abs(mean - gv.data[static_cast<std::size_t>(j)]) > 1e-5)
            throw NumericError("encode: graph embedding deviates from node mean");
    }
    return enc;
}

// ================================ decoder ===================================

// Per-encoding tensors that do not change across decode steps.
template <class Ctx>
struct DecCache {
    std::vector<typename Ctx::Ref> keys;    // per head, m x d_v
    std::vector<typename Ctx::Ref> values;  // per head, m x d_v
    typename Ctx::Ref final_keys;           // m x d_x
};

template <class Ctx>
DecCache<Ctx> build_dec_cache(Ctx& cx, Bound<Ctx>& bp, const ModelConfig& cfg,
                              const Enc<Ctx>& enc) {
    DecCache<Ctx> cache;
    auto k = cx.matmul(enc.nodes, bp("dec.WK"));
    auto v = cx.matmul(enc.nodes, bp("dec.WV"));
    const int dv = cfg.head_dim();
    for (int h = 0; h < cfg.heads; ++h) {
        cache.keys.push_back(cx.slice_cols(k, h * dv, dv));
        cache.values.push_back(cx.slice_cols(v, h * dv, dv));
    }
    cache.final_keys = cx.matmul(enc.nodes, bp("dec.Kfin"));
    return cache;
}

// Decoder context vector (layer-0 input) for the current partial solution.
template <class Ctx>
typename Ctx::Ref decoder_context(Ctx& cx, Bound<Ctx>& bp, const ModelConfig& cfg,
                                  const Enc<Ctx>& enc, const DecodeState& state) {
    if (state.t < 1) throw Error("decoder_context: step out of range");
    if (cfg.problem == Problem::Tsp) {
        if (state.t == 1) return cx.add(enc.graph, bp("dec.v"));
        auto first = cx.gather_rows(enc.nodes, {state.first_node});
        auto last = cx.gather_rows(enc.nodes, {state.last_node});
        return cx.add(enc.graph, cx.matmul(cx.concat_cols({first, last}), bp("dec.Wx")));
    }
    const int anchor = state.t == 1 ? 0 : state.last_node;
    auto node = cx.gather_rows(enc.nodes, {anchor});
    auto cap = cx.lift(Tensor::scalar(state.remaining));
    return cx.add(enc.graph, cx.matmul(cx.concat_cols({node, cap}), bp("dec.Wx")));
}

// Diagnostics recorded per decode step when requested.
struct StepProbe {
    std::vector<std::vector<real>> probs;
    std::vector<std::vector<real>> clipped_logits;  // feasible entries of u(2)
    std::vector<std::vector<std::uint8_t>> masks;
};

// Runs both decoder attention layers and returns the selection distribution.
// `inv_temp_lambda` is the Eq.-24 sampling temperature (1 = plain softmax).
template <class Ctx>
typename Ctx::Ref decode_step(Ctx& cx, Bound<Ctx>& bp, const ModelConfig& cfg, const Enc<Ctx>& enc,
                              const DecCache<Ctx>& cache, typename Ctx::Ref context,
                              const std::vector<std::uint8_t>& mask, real lambda = 1.0,
                              StepProbe* probe = nullptr) {
    bool any = false;
    for (auto f : mask) any = any || f;
    if (!any) throw Error("decode_step: empty feasible set");

    const int dv = cfg.head_dim();
    const real kq_scale = 1.0 / std::sqrt(static_cast<real>(dv));
    auto q = cx.matmul(context, bp("dec.WQ"));
    std::vector<typename Ctx::Ref> heads;
    heads.reserve(static_cast<std::size_t>(cfg.heads));
    for (int h = 0; h < cfg.heads; ++h) {
        auto qh = cx.slice_cols(q, h * dv, dv);
        auto att = cx.scale(cx.matmul_nt(qh, cache.keys[static_cast<std::size_t>(h)]), kq_scale);
        auto weights = cx.masked_softmax_rows(att, mask);
        heads.push_back(cx.matmul(weights, cache.values[static_cast<std::size_t>(h)]));
    }
    auto c1 = cx.matmul(cx.concat_cols(heads), bp("dec.Wf"));

    const real fin_scale = 1.0 / std::sqrt(static_cast<real>(cfg.node_dim));
    auto scores = cx.scale(cx.matmul_nt(c1, cache.final_keys), fin_scale);
    auto clipped = cx.scale(cx.tanh_op(scores), cfg.logit_clip);
    auto logits = lambda == 1.0 ? clipped : cx.scale(clipped, 1.0 / lambda);
    auto probs = cx.masked_softmax_rows(logits, mask);

    if (probe) {
        const Tensor& u2 = cx.val(clipped);
        const Tensor& p = cx.val(probs);
        std::vector<real> feas_logits;
        for (int j = 0; j < u2.cols(); ++j)
            if (mask[static_cast<std::size_t>(j)]) feas_logits.push_back(u2.data[j]);
        probe->clipped_logits.push_back(std::move(feas_logits));
        probe->probs.push_back(p.data);
        probe->masks.push_back(mask);
    }
    return probs;
}

// ================================= critic ===================================

// Two kernel-1 convolutions over node embeddings with relu, mean-pool, then a
// linear map to one scalar.
template <class Ctx>
typename Ctx::Ref critic_value(Ctx& cx, Bound<Ctx>& bp, const Enc<Ctx>& enc) {
    auto h1 = cx.relu(cx.add_rowvec(cx.matmul(enc.nodes, bp("critic.c1.W")), bp("critic.c1.b")));
    auto h2 = cx.relu(cx.add_rowvec(cx.matmul(h1, bp("critic.c2.W")), bp("critic.c2.b")));
    auto pooled = cx.mean_rows(h2);
    return cx.add_rowvec(cx.matmul(pooled, bp("critic.out.W")), bp("critic.out.b"));
}

// ================================ rollout ===================================

enum class Selector { Greedy, Sample };

struct RolloutOptions {
    Selector selector = Selector::Greedy;
    Rng* rng = nullptr;  // required for Sample
    const std::vector<int>* forced = nullptr;
    real lambda = 1.0;
    bool training_bn = false;
    bool want_logp = false;     // accumulate log-probability on the engine
    bool want_entropy = false;  // accumulate per-step entropy on the engine
    bool want_critic = false;
    StepProbe* probe = nullptr;
};

template <class Ctx>
struct RolloutOut {
    Trajectory traj;
    Enc<Ctx> enc;
    typename Ctx::Ref logp_sum{};
    typename Ctx::Ref entropy_sum{};
    typename Ctx::Ref critic{};
};

inline int select_greedy(const Tensor& probs, const std::vector<std::uint8_t>& mask) {
    int best = -1;
    real bp = -1.0;
    for (int j = 0; j < probs.cols(); ++j) {
        if (!mask[static_cast<std::size_t>(j)]) continue;
        if (probs.data[static_cast<std::size_t>(j)] > bp) {  // lowest index on ties
            bp = probs.data[static_cast<std::size_t>(j)];
            best = j;
        }
    }
    return best;
}

inline int select_sample(const Tensor& probs, const std::vector<std::uint8_t>& mask, Rng& rng) {
    const real u = rng.uniform01();
    real acc = 0.0;
    int last_feasible = -1;
    for (int j = 0; j < probs.cols(); ++j) {
        if (!mask[static_cast<std::size_t>(j)]) continue;
        last_feasible = j;
        acc += probs.data[static_cast<std::size_t>(j)];
        if (u < acc) return j;
    }
    return last_feasible;  // rounding tail
}

// Decode-only rollout against an existing encoding (the encoder output does
// not depend on the trajectory, so best-of-k sampling reuses one encoding).
template <class Ctx>
RolloutOut<Ctx> rollout_decode(Ctx& cx, Bound<Ctx>& bp, const ModelConfig& cfg,
                               const Instance& inst, const RolloutOptions& opts,
                               const Enc<Ctx>& enc, const DecCache<Ctx>& cache) {
    if (opts.selector == Selector::Sample && !opts.rng && !opts.forced)
        throw Error("rollout: sampling needs an rng");
    RolloutOut<Ctx> out;
    out.enc = enc;
    if (opts.want_critic) out.critic = critic_value(cx, bp, out.enc);

    DecodeState state = DecodeState::initial(inst);
    bool have_logp = false, have_ent = false;
    std::size_t step = 0;
    while (!terminated(state, inst)) {
        const auto mask = feasible_mask(state, inst);
        auto context = decoder_context(cx, bp, cfg, out.enc, state);
        auto probs = decode_step(cx, bp, cfg, out.enc, cache, context, mask, opts.lambda,
                                 opts.probe);
        const Tensor& pv = cx.val(probs);

        int action;
        if (opts.forced) {
            if (step >= opts.forced->size()) throw Error("rollout: forced action underrun");
            action = (*opts.forced)[step];
        } else if (opts.selector == Selector::Greedy) {
            action = select_greedy(pv, mask);
        } else {
            action = select_sample(pv, mask, *opts.rng);
        }
        if (action < 0 || !mask[static_cast<std::size_t>(action)])
            throw Error("rollout: selected infeasible action");

        out.traj.logps.push_back(std::log(pv.data[static_cast<std::size_t>(action)]));
        if (opts.want_logp) {
            auto lp = cx.log_op(cx.pick(probs, 0, action));
            out.logp_sum = have_logp ? cx.add(out.logp_sum, lp) : lp;
            have_logp = true;
        }
        if (opts.want_entropy) {
            auto ent = cx.entropy_masked(probs, mask);
            out.entropy_sum = have_ent ? cx.add(out.entropy_sum, ent) : ent;
            have_ent = true;
        }

        out.traj.seq.push_back(action);
        state = env_step(state, action, inst);
        ++step;
    }
    out.traj.length = tour_length(inst, out.traj.seq);
    return out;
}

template <class Ctx>
RolloutOut<Ctx> rollout(Ctx& cx, Bound<Ctx>& bp, const ModelConfig& cfg, const Instance& inst,
                        const RolloutOptions& opts) {
    auto enc = encode(cx, bp, cfg, inst, opts.training_bn);
    auto cache = build_dec_cache(cx, bp, cfg, enc);
    return rollout_decode(cx, bp, cfg, inst, opts, enc, cache);
}

}  // namespace egat
