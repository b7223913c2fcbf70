#pragma once

#include "egat/instance.hpp"
#include "egat/model.hpp"
#include "egat/nn.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace egat {

// ========================= small training primitives ========================

// Subtract the batch mean and divide by the population standard deviation
// (+1e-8 guard). A constant batch normalizes to all zeros.
std::vector<real> normalize_rewards(const std::vector<real>& values);

// Annealed learning rate: l0 * beta^epoch.
real lr_schedule(int epoch, real l0, real beta);

// One-sided paired t-test: true iff the candidate is significantly cheaper
// than the baseline at level alpha.
bool paired_t_test(const std::vector<real>& candidate, const std::vector<real>& baseline,
                   real alpha);

// Student-t left-tail CDF (exposed for testing against known quantiles).
real student_t_cdf(real t, real dof);

// Eq.-18 clipped surrogate for one sample (advantage treated as constant).
inline real clip_surrogate(real ratio, real advantage, real eps) {
    const real lo = 1.0 - eps, hi = 1.0 + eps;
    const real clipped = ratio < lo ? lo : (ratio > hi ? hi : ratio);
    const real a = ratio * advantage, b = clipped * advantage;
    return a <= b ? a : b;
}

// =============================== configuration ==============================

struct PpoConfig {
    int total_epochs = 10;    // E_t
    int steps_per_epoch = 20; // P_e
    int batch_size = 64;      // B
    int ppo_epochs = 3;       // E_p
    int ppo_steps = 1;        // T_s
    real clip_eps = 0.2;
    real c_p = 1.0, c_v = 0.5, c_e = 0.01;
    real lr = 3e-4;
    real lr_decay = 0.96;
    real max_grad_norm = 2.0;

    void validate() const;
};

struct RolloutTrainConfig {
    int epochs = 10;
    int steps_per_epoch = 40;
    int batch_size = 64;
    real alpha = 0.05;        // paired t-test significance
    int eval_size = 10000;    // baseline-comparison set
    real lr = 1e-3;
    real lr_decay = 0.96;
    real max_grad_norm = 2.0;

    void validate() const;
};

enum class ValReference { Auto, HeldKarp, TwoOptProxy };

struct TrainSetup {
    ModelConfig model;
    int size = 20;              // customers (TSP nodes)
    real cvrp_capacity = 0.0;   // explicit capacity for nonstandard CVRP sizes
    std::uint64_t seed = 1;
    int start_epoch = 0;        // resume point; also offsets the data streams
    int val_size = 500;
    ValReference val_ref = ValReference::Auto;
    // Called after each epoch with the current parameters (checkpoint feed).
    std::function<void(int, const ParamStore&)> on_epoch;
    bool quiet = false;
};

// ================================== output ==================================

struct EpochStats {
    int epoch = 0;
    real lr = 0.0;
    real mean_train_length = 0.0;
    real val_gap = 0.0;
    real loss_total = 0.0, loss_clip = 0.0, loss_mse = 0.0, loss_entropy = 0.0;
    real max_postclip_norm = 0.0;
    int skipped_batches = 0;
    bool baseline_updated = false;  // rollout trainer
};

struct TrainResult {
    std::vector<EpochStats> epochs;
    std::vector<real> postclip_norms;       // one per applied update
    std::vector<real> ratio_devs_at_sync;   // PPO: max |r-1| at each sync point
    std::vector<real> val_gaps;
};

// ================================= trainers =================================

// Algorithm-1 PPO with reward normalization, lr annealing and global-norm
// clipping. `params` should carry an orthogonal initialization.
TrainResult ppo_train(const TrainSetup& setup, const PpoConfig& cfg, ParamStore& params);

// Algorithm-2 REINFORCE with a greedy rollout baseline refreshed on a
// significant paired t-test. `params` should carry a Xavier initialization.
TrainResult rollout_train(const TrainSetup& setup, const RolloutTrainConfig& cfg,
                          ParamStore& params);

// Greedy-decode mean cost and Eq.-25 gap of `params` over a fixed set.
struct ValSet {
    std::vector<Instance> instances;
    std::vector<real> refs;
};
ValSet make_val_set(const TrainSetup& setup, std::string_view tag, int count);
real validation_gap(const ParamStore& params, const ModelConfig& cfg, const ValSet& val);

}  // namespace egat
