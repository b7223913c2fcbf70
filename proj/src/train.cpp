#include "egat/train.hpp"

#include "egat/baselines.hpp"
#include "egat/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace egat {

// ========================= small training primitives ========================

std::vector<real> normalize_rewards(const std::vector<real>& values) {
    if (values.size() < 2) throw Error("normalize_rewards: batch size must be >= 2");
    const real n = static_cast<real>(values.size());
    real mean = 0.0;
    for (real v : values) mean += v;
    mean /= n;
    real var = 0.0;
    for (real v : values) var += (v - mean) * (v - mean);
    var /= n;
    const real sd = std::sqrt(var);
    if (sd == 0.0) return std::vector<real>(values.size(), 0.0);
    std::vector<real> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mean) / (sd + 1e-8);
    return out;
}

real lr_schedule(int epoch, real l0, real beta) {
    if (epoch < 0) throw Error("lr_schedule: epoch must be >= 0");
    return l0 * std::pow(beta, static_cast<real>(epoch));
}

namespace {

// Regularized incomplete beta via Lentz's continued fraction.
real betacf(real a, real b, real x) {
    const real fpmin = 1e-300;
    const real qab = a + b, qap = a + 1.0, qam = a - 1.0;
    real c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    real h = d;
    for (int m = 1; m <= 300; ++m) {
        const real m2 = 2.0 * m;
        real aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        real del = d * c;
        h *= del;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 3e-16) break;
    }
    return h;
}

real ibeta(real a, real b, real x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const real ln = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                    b * std::log(1.0 - x);
    const real front = std::exp(ln);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

real student_t_cdf(real t, real dof) {
    const real x = dof / (dof + t * t);
    const real tail = 0.5 * ibeta(dof / 2.0, 0.5, x);
    return t <= 0.0 ? tail : 1.0 - tail;
}

bool paired_t_test(const std::vector<real>& candidate, const std::vector<real>& baseline,
                   real alpha) {
    if (candidate.size() != baseline.size() || candidate.size() < 2)
        throw Error("paired_t_test: need equal-length samples of size >= 2");
    const std::size_t n = candidate.size();
    real dbar = 0.0;
    for (std::size_t i = 0; i < n; ++i) dbar += candidate[i] - baseline[i];
    dbar /= static_cast<real>(n);
    real ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const real d = candidate[i] - baseline[i] - dbar;
        ss += d * d;
    }
    const real sd = std::sqrt(ss / static_cast<real>(n - 1));
    if (sd == 0.0) return dbar < 0.0 && alpha > 0.0;
    const real t = dbar / (sd / std::sqrt(static_cast<real>(n)));
    const real p = student_t_cdf(t, static_cast<real>(n - 1));  // one-sided: mean diff < 0
    return p < alpha;
}

void PpoConfig::validate() const {
    if (total_epochs <= 0 || steps_per_epoch <= 0 || batch_size <= 1 || ppo_epochs <= 0 ||
        ppo_steps <= 0)
        throw Error("ppo config: counts must be positive (batch >= 2)");
    if (clip_eps <= 0.0 || clip_eps >= 1.0) throw Error("ppo config: clip eps must be in (0,1)");
    if (lr <= 0.0 || lr_decay <= 0.0 || max_grad_norm <= 0.0)
        throw Error("ppo config: rates must be positive");
}

void RolloutTrainConfig::validate() const {
    if (epochs <= 0 || steps_per_epoch <= 0 || batch_size <= 1 || eval_size < 2)
        throw Error("rollout config: counts must be positive (batch/eval >= 2)");
    if (alpha <= 0.0 || alpha >= 1.0) throw Error("rollout config: alpha must be in (0,1)");
    if (lr <= 0.0 || lr_decay <= 0.0 || max_grad_norm <= 0.0)
        throw Error("rollout config: rates must be positive");
}

// ============================== shared helpers ==============================

namespace {

Instance make_instance(const TrainSetup& setup, std::uint64_t seed) {
    return setup.model.problem == Problem::Tsp
               ? generate_tsp(setup.size, seed)
               : generate_cvrp(setup.size, seed, setup.cvrp_capacity);
}

std::uint64_t sub_seed(const TrainSetup& setup, std::string_view tag, std::uint64_t index) {
    return splitmix64(setup.seed ^ splitmix64(hash_tag(tag) + index * 0x9e3779b97f4a7c15ull));
}

// Accumulates `add` into `into` (ordered by key; missing keys are created).
void add_grads(GradMap& into, const GradMap& add, real scale) {
    for (const auto& [k, g] : add) {
        auto it = into.find(k);
        if (it == into.end()) {
            Tensor t = g;
            for (real& v : t.data) v *= scale;
            into.emplace(k, std::move(t));
        } else {
            for (std::size_t i = 0; i < g.size(); ++i) it->second.data[i] += scale * g.data[i];
        }
    }
}

// Ensures every trainable key exists (zeros elsewhere) so adam_step sees a
// complete gradient map even when a head was untouched.
void complete_grads(GradMap& grads, const ParamStore& params) {
    for (const auto& name : params.trainable_names())
        if (grads.find(name) == grads.end())
            grads.emplace(name, Tensor::zeros(params.at(name).shape));
}

GradMap extract_grads(TapeCtx& tape, Bound<TapeCtx>& bp) {
    GradMap out;
    for (const auto& [name, ref] : bp.refs) {
        const Tensor* g = tape.grad(ref);
        if (g) out.emplace(name, *g);
    }
    return out;
}

real mean_of(const std::vector<real>& v) {
    real acc = 0.0;
    for (real x : v) acc += x;
    return v.empty() ? 0.0 : acc / static_cast<real>(v.size());
}

struct Watchdog {
    int streak = 0;
    real last = std::numeric_limits<real>::infinity();
    bool warned = false;

    void observe(real gap, bool quiet) {
        streak = gap > last ? streak + 1 : 0;
        last = gap;
        if (streak >= 10 && !warned) {
            warned = true;
            if (!quiet)
                std::cerr << "[train] warning: validation gap worsened for " << streak
                          << " consecutive epochs\n";
        }
    }
};

std::vector<real> greedy_costs(const ParamStore& params, const ModelConfig& cfg,
                               const std::vector<Instance>& instances) {
    std::vector<real> costs(instances.size(), 0.0);
    kern::parallel_for(static_cast<int>(instances.size()), [&](int i) {
        EagerCtx cx;
        Bound<EagerCtx> bp(cx, params);
        RolloutOptions opts;  // greedy, eval-mode batch norm
        costs[static_cast<std::size_t>(i)] =
            rollout(cx, bp, cfg, instances[static_cast<std::size_t>(i)], opts).traj.length;
    });
    return costs;
}

}  // namespace

ValSet make_val_set(const TrainSetup& setup, std::string_view tag, int count) {
    ValSet out;
    out.instances.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        out.instances.push_back(make_instance(setup, sub_seed(setup, tag, static_cast<std::uint64_t>(i))));

    ValReference ref = setup.val_ref;
    if (ref == ValReference::Auto)
        ref = (setup.model.problem == Problem::Tsp && setup.size <= 12) ? ValReference::HeldKarp
                                                                        : ValReference::TwoOptProxy;
    out.refs.assign(out.instances.size(), 0.0);
    kern::parallel_for(static_cast<int>(out.instances.size()), [&](int i) {
        const Instance& inst = out.instances[static_cast<std::size_t>(i)];
        real r;
        if (ref == ValReference::HeldKarp) {
            r = held_karp(inst).length;
        } else if (inst.kind == Problem::Tsp) {
            r = two_opt(insertion(inst, InsertionRule::Farthest), inst).length;
        } else {
            r = cvrp_greedy_reference(inst).length;
        }
        out.refs[static_cast<std::size_t>(i)] = r;
    });
    return out;
}

real validation_gap(const ParamStore& params, const ModelConfig& cfg, const ValSet& val) {
    return opt_gap(greedy_costs(params, cfg, val.instances), val.refs);
}

// ================================ PPO trainer ===============================

namespace {

struct BufferEntry {
    Instance inst;
    std::vector<int> actions;
    real reward = 0.0;
    real logp_old = 0.0;
};

struct UpdateOutcome {
    real clip_term = 0.0, mse_term = 0.0, entropy_term = 0.0;
    real postclip_norm = 0.0;
    real max_ratio_dev = 0.0;
};

// One gradient step over a stored batch (Algorithm 1 inner loop body).
UpdateOutcome ppo_update_batch(const TrainSetup& setup, const PpoConfig& cfg, ParamStore& params,
                               AdamState& adam, const std::vector<BufferEntry>& batch, real lr,
                               bool check_sync_ratio) {
    const int b = static_cast<int>(batch.size());
    std::vector<real> rewards(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) rewards[i] = batch[i].reward;
    const std::vector<real> norm = normalize_rewards(rewards);

    std::vector<GradMap> grads(batch.size());
    std::vector<real> clip_vals(batch.size()), mse_vals(batch.size()), ent_vals(batch.size());
    std::vector<real> ratio_devs(batch.size(), 0.0);
    std::vector<BnStats> bn_node(batch.size()), bn_edge(batch.size());

    kern::parallel_for(b, [&](int ii) {
        const std::size_t i = static_cast<std::size_t>(ii);
        const BufferEntry& e = batch[i];
        TapeCtx tape;
        Bound<TapeCtx> bp(tape, params);
        RolloutOptions opts;
        opts.forced = &e.actions;
        opts.training_bn = true;
        opts.want_logp = true;
        opts.want_entropy = true;
        opts.want_critic = true;
        auto out = rollout(tape, bp, setup.model, e.inst, opts);
        bn_node[i] = out.enc.bn_node;
        bn_edge[i] = out.enc.bn_edge;

        // r(theta) in log space; advantage uses the critic value as a constant.
        const real vhat = tape.val(out.critic).item();
        const real advantage = norm[i] - vhat;
        auto ratio = tape.exp_op(tape.add_const(out.logp_sum, -e.logp_old));
        ratio_devs[i] = std::abs(tape.val(ratio).item() - 1.0);

        auto surr = tape.scale(ratio, advantage);
        auto surr_clipped = tape.scale(tape.clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps),
                                       advantage);
        auto l_clip = tape.min2(surr, surr_clipped);
        auto err = tape.add_const(out.critic, -norm[i]);
        auto l_mse = tape.mul(err, err);
        auto loss = tape.add(tape.scale(l_clip, cfg.c_p),
                             tape.sub(tape.scale(l_mse, cfg.c_v),
                                      tape.scale(out.entropy_sum, cfg.c_e)));
        clip_vals[i] = tape.val(l_clip).item();
        mse_vals[i] = tape.val(l_mse).item();
        ent_vals[i] = tape.val(out.entropy_sum).item();

        tape.backward(loss, 1.0 / static_cast<real>(b));
        grads[i] = extract_grads(tape, bp);
    });

    GradMap total;
    for (const auto& g : grads) add_grads(total, g, 1.0);
    complete_grads(total, params);
    const real scale = clip_global_norm(total, cfg.max_grad_norm);
    UpdateOutcome out;
    out.postclip_norm = global_norm(total);
    (void)scale;
    adam_step(params, total, adam, lr);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        bn_running_update(params, "embed.node.bn", bn_node[i], kBnMomentum);
        bn_running_update(params, "embed.edge.bn", bn_edge[i], kBnMomentum);
    }
    out.clip_term = mean_of(clip_vals);
    out.mse_term = mean_of(mse_vals);
    out.entropy_term = mean_of(ent_vals);
    if (check_sync_ratio)
        out.max_ratio_dev = *std::max_element(ratio_devs.begin(), ratio_devs.end());
    return out;
}

}  // namespace

TrainResult ppo_train(const TrainSetup& setup, const PpoConfig& cfg, ParamStore& params) {
    cfg.validate();
    setup.model.validate();
    TrainResult result;
    AdamState adam;
    ParamStore params_old = params;  // behaviour policy
    std::vector<std::vector<BufferEntry>> buffer;  // memory buffer, T_s batches
    Watchdog watchdog;
    ValSet val = make_val_set(setup, "valset", setup.val_size);
    std::uint64_t inst_counter = static_cast<std::uint64_t>(setup.start_epoch) *
                                 static_cast<std::uint64_t>(cfg.steps_per_epoch) *
                                 static_cast<std::uint64_t>(cfg.batch_size);
    std::uint64_t rollout_counter = inst_counter;

    for (int epoch = setup.start_epoch; epoch < cfg.total_epochs; ++epoch) {
        const real lr = lr_schedule(epoch, cfg.lr, cfg.lr_decay);
        EpochStats es;
        es.epoch = epoch;
        es.lr = lr;
        std::vector<real> epoch_lengths;
        std::vector<real> clip_terms, mse_terms, ent_terms;

        for (int step = 1; step <= cfg.steps_per_epoch; ++step) {
            // Collect one batch with the behaviour policy.
            std::vector<BufferEntry> batch(static_cast<std::size_t>(cfg.batch_size));
            for (auto& e : batch) e.inst = make_instance(setup, sub_seed(setup, "inst", inst_counter++));
            const std::uint64_t roll_base = rollout_counter;
            rollout_counter += static_cast<std::uint64_t>(cfg.batch_size);
            try {
                kern::parallel_for(cfg.batch_size, [&](int ii) {
                    const std::size_t i = static_cast<std::size_t>(ii);
                    Rng rng = Rng::stream(setup.seed, "ppo_rollout",
                                          roll_base + static_cast<std::uint64_t>(ii));
                    EagerCtx cx;
                    Bound<EagerCtx> bp(cx, params_old);
                    RolloutOptions opts;
                    opts.selector = Selector::Sample;
                    opts.rng = &rng;
                    opts.training_bn = true;
                    auto out = rollout(cx, bp, setup.model, batch[i].inst, opts);
                    batch[i].actions = out.traj.seq;
                    batch[i].reward = out.traj.length;
                    real lp = 0.0;
                    for (real v : out.traj.logps) lp += v;
                    batch[i].logp_old = lp;
                });
            } catch (const NumericError& err) {
                es.skipped_batches += 1;
                if (!setup.quiet) std::cerr << "[ppo] skipping batch: " << err.what() << "\n";
                continue;
            }
            for (const auto& e : batch) epoch_lengths.push_back(e.reward);
            buffer.push_back(std::move(batch));

            if (step % cfg.ppo_steps == 0) {
                bool first_pass = true;
                try {
                    for (int pe = 0; pe < cfg.ppo_epochs; ++pe) {
                        for (const auto& stored : buffer) {
                            UpdateOutcome u = ppo_update_batch(setup, cfg, params, adam, stored,
                                                               lr, first_pass);
                            if (first_pass) {
                                result.ratio_devs_at_sync.push_back(u.max_ratio_dev);
                                first_pass = false;
                            }
                            result.postclip_norms.push_back(u.postclip_norm);
                            es.max_postclip_norm = std::max(es.max_postclip_norm, u.postclip_norm);
                            clip_terms.push_back(u.clip_term);
                            mse_terms.push_back(u.mse_term);
                            ent_terms.push_back(u.entropy_term);
                        }
                    }
                } catch (const NumericError& err) {
                    es.skipped_batches += 1;
                    if (!setup.quiet) std::cerr << "[ppo] skipping update: " << err.what() << "\n";
                }
                params_old = params;  // theta_old <- theta
                buffer.clear();       // clear memory buffer
            }
        }

        es.mean_train_length = mean_of(epoch_lengths);
        es.loss_clip = mean_of(clip_terms);
        es.loss_mse = mean_of(mse_terms);
        es.loss_entropy = mean_of(ent_terms);
        es.loss_total = cfg.c_p * es.loss_clip + cfg.c_v * es.loss_mse - cfg.c_e * es.loss_entropy;
        es.val_gap = validation_gap(params, setup.model, val);
        watchdog.observe(es.val_gap, setup.quiet);
        result.val_gaps.push_back(es.val_gap);
        result.epochs.push_back(es);
        if (setup.on_epoch) setup.on_epoch(epoch, params);
        if (!setup.quiet)
            std::cerr << "[ppo] epoch " << epoch << " lr " << lr << " len " << es.mean_train_length
                      << " val gap " << es.val_gap * 100.0 << "%\n";
    }
    return result;
}

// ============================== Rollout trainer =============================

TrainResult rollout_train(const TrainSetup& setup, const RolloutTrainConfig& cfg,
                          ParamStore& params) {
    cfg.validate();
    setup.model.validate();
    TrainResult result;
    AdamState adam;
    ParamStore baseline = params;  // theta^BL <- theta
    Watchdog watchdog;
    ValSet val = make_val_set(setup, "valset", setup.val_size);

    // Fixed evaluation set for the baseline-refresh t-test.
    std::vector<Instance> eval_set;
    eval_set.reserve(static_cast<std::size_t>(cfg.eval_size));
    for (int i = 0; i < cfg.eval_size; ++i)
        eval_set.push_back(make_instance(setup, sub_seed(setup, "evalset", static_cast<std::uint64_t>(i))));

    std::uint64_t inst_counter = static_cast<std::uint64_t>(setup.start_epoch) *
                                 static_cast<std::uint64_t>(cfg.steps_per_epoch) *
                                 static_cast<std::uint64_t>(cfg.batch_size);
    std::uint64_t rollout_counter = inst_counter;

    for (int epoch = setup.start_epoch; epoch < cfg.epochs; ++epoch) {
        const real lr = lr_schedule(epoch, cfg.lr, cfg.lr_decay);
        EpochStats es;
        es.epoch = epoch;
        es.lr = lr;
        std::vector<real> epoch_lengths;

        for (int step = 1; step <= cfg.steps_per_epoch; ++step) {
            std::vector<Instance> batch;
            batch.reserve(static_cast<std::size_t>(cfg.batch_size));
            for (int i = 0; i < cfg.batch_size; ++i)
                batch.push_back(make_instance(setup, sub_seed(setup, "inst", inst_counter++)));
            const std::uint64_t roll_base = rollout_counter;
            rollout_counter += static_cast<std::uint64_t>(cfg.batch_size);

            std::vector<real> cost(batch.size()), cost_bl(batch.size());
            std::vector<GradMap> grads(batch.size());
            std::vector<BnStats> bn_node(batch.size()), bn_edge(batch.size());
            try {
                kern::parallel_for(cfg.batch_size, [&](int ii) {
                    const std::size_t i = static_cast<std::size_t>(ii);
                    // Sampled rollout under theta, gradient of its log-likelihood.
                    Rng rng = Rng::stream(setup.seed, "rollout_sample",
                                          roll_base + static_cast<std::uint64_t>(ii));
                    TapeCtx tape;
                    Bound<TapeCtx> bp(tape, params);
                    RolloutOptions opts;
                    opts.selector = Selector::Sample;
                    opts.rng = &rng;
                    opts.training_bn = true;
                    opts.want_logp = true;
                    auto out = rollout(tape, bp, setup.model, batch[i], opts);
                    cost[i] = out.traj.length;
                    bn_node[i] = out.enc.bn_node;
                    bn_edge[i] = out.enc.bn_edge;
                    tape.backward(out.logp_sum, 1.0);
                    grads[i] = extract_grads(tape, bp);

                    // Greedy baseline rollout under frozen theta^BL (eval mode).
                    EagerCtx ecx;
                    Bound<EagerCtx> ebp(ecx, baseline);
                    RolloutOptions bopts;
                    cost_bl[i] = rollout(ecx, ebp, setup.model, batch[i], bopts).traj.length;
                });

                const std::vector<real> norm = normalize_rewards(cost);
                const std::vector<real> norm_bl = normalize_rewards(cost_bl);
                GradMap total;
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    const real advantage = norm[i] - norm_bl[i];
                    add_grads(total, grads[i], advantage / static_cast<real>(cfg.batch_size));
                }
                complete_grads(total, params);
                clip_global_norm(total, cfg.max_grad_norm);
                const real postclip = global_norm(total);
                adam_step(params, total, adam, lr);
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    bn_running_update(params, "embed.node.bn", bn_node[i], kBnMomentum);
                    bn_running_update(params, "embed.edge.bn", bn_edge[i], kBnMomentum);
                }
                result.postclip_norms.push_back(postclip);
                es.max_postclip_norm = std::max(es.max_postclip_norm, postclip);
                for (real c : cost) epoch_lengths.push_back(c);
            } catch (const NumericError& err) {
                es.skipped_batches += 1;
                if (!setup.quiet) std::cerr << "[rollout] skipping batch: " << err.what() << "\n";
            }
        }

        // Baseline refresh: only on a significant one-sided improvement.
        const std::vector<real> cand = greedy_costs(params, setup.model, eval_set);
        const std::vector<real> base = greedy_costs(baseline, setup.model, eval_set);
        if (paired_t_test(cand, base, cfg.alpha)) {
            baseline = params;
            es.baseline_updated = true;
        }

        es.mean_train_length = mean_of(epoch_lengths);
        es.val_gap = validation_gap(params, setup.model, val);
        watchdog.observe(es.val_gap, setup.quiet);
        result.val_gaps.push_back(es.val_gap);
        result.epochs.push_back(es);
        if (setup.on_epoch) setup.on_epoch(epoch, params);
        if (!setup.quiet)
            std::cerr << "[rollout] epoch " << epoch << " lr " << lr << " len "
                      << es.mean_train_length << " val gap " << es.val_gap * 100.0 << "%"
                      << (es.baseline_updated ? " (baseline updated)" : "") << "\n";
    }
    return result;
}

}  // namespace egat
