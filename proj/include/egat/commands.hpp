#pragma once

#include "egat/decode.hpp"
#include "egat/io.hpp"
#include "egat/train.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace egat::cmd {

struct UsageError : Error {
    using Error::Error;
};

// Exit codes of the CLI contract.
constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kNumeric = 2;
constexpr int kIo = 3;

// =============================== run config =================================

// One serializable bundle for every command; a saved config plus the same
// build reproduces a run. Flags override file fields; the merged result is
// written next to all outputs.
struct RunConfig {
    std::string kind = "tsp";  // tsp | cvrp
    int size = 20;
    real capacity = 0.0;  // explicit CVRP capacity for nonstandard sizes

    ModelConfig model;

    std::string trainer = "rollout";  // ppo | rollout
    PpoConfig ppo;
    RolloutTrainConfig rollout;

    std::uint64_t seed = 1;
    int threads = 0;
    bool timing = true;  // false writes zero wall times (byte-reproducible reports)

    std::string decode_mode = "greedy";  // greedy | sample
    real lambda = 0.0;                   // 0 = per-size default
    int samples = 1280;

    std::vector<int> sweep_node_dims, sweep_edge_dims, sweep_layers;

    int val_size = 500;
    std::string val_ref = "auto";  // auto | heldkarp | two_opt

    Problem problem() const { return problem_from_name(kind); }
    void sync() { model.problem = problem(); }
};

nlohmann::json to_json(const RunConfig& rc);
RunConfig run_config_from_json(const nlohmann::json& j);

// File config + JSON-pointer style overrides from CLI flags.
RunConfig merge_config(const std::optional<std::string>& config_path,
                       const nlohmann::json& overrides);

// FNV-1a hex digest of the canonical serialized config.
std::string config_hash(const RunConfig& rc);

// Built-in presets. Paper-scale presets reproduce the published
// hyper-parameters and are sized for accelerator hardware; desk presets run
// on a CPU in minutes.
std::vector<std::string> preset_names();
RunConfig preset_config(const std::string& name);
bool preset_is_paper_scale(const std::string& name);

// ================================ commands ==================================

int cmd_generate(const RunConfig& rc, int count, const std::string& out_path);

struct TrainOutput {
    TrainResult result;
    std::vector<std::string> checkpoint_paths;
};
int cmd_train(const RunConfig& rc, const std::string& out_dir,
              const std::optional<std::string>& resume = std::nullopt,
              TrainOutput* out = nullptr);

// `reference`: heldkarp | known | file:<path> | baseline:<method>.
int cmd_evaluate(const RunConfig& rc, const std::vector<std::string>& checkpoints,
                 const std::string& input_path, const std::string& reference,
                 const std::string& out_dir, Report* out = nullptr);

int cmd_baseline(const RunConfig& rc, const std::string& dataset_path,
                 const std::vector<std::string>& methods, const std::string& reference,
                 const std::string& out_dir, Report* out = nullptr);

int cmd_sweep(const RunConfig& rc, const std::string& out_dir);

struct GradCheckResult {
    std::string name;
    real max_rel_err = 0.0;
    real tolerance = 0.0;
    bool pass = false;
};
// `negative_control` corrupts one comparison on purpose; the suite must then
// report a failure (checker self-test).
std::vector<GradCheckResult> gradcheck_suite(std::uint64_t seed, bool negative_control = false);
int cmd_gradcheck(std::uint64_t seed, bool negative_control = false);

int cmd_render(const RunConfig& rc, const std::string& input_path, int index,
               const std::string& checkpoint_or_method, const std::string& out_path,
               bool omit_depot_legs);

// Default output root: $EGAT_OUT_ROOT or the current directory.
std::string output_root();

}  // namespace egat::cmd
