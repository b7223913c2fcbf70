#pragma once

#include "egat/instance.hpp"
#include "egat/model.hpp"
#include "egat/nn.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace egat {

// ========================== TSPLIB / CVRPLIB ================================

// EUC_2D instances with NODE_COORD_SECTION; coordinates are preserved in
// their original units. CVRP files additionally need CAPACITY,
// DEMAND_SECTION and DEPOT_SECTION; the depot is relocated to index 0 and
// demands stay raw (normalization happens in model_view).
Instance parse_tsplib(const std::string& text);
Instance parse_cvrplib(const std::string& text);

std::string write_tsplib(const Instance& inst);
std::string write_cvrplib(const Instance& inst);

Instance parse_routing_file(const std::string& path);  // dispatch on TYPE

// Rescales an instance into the unit square for model input (uniform scale,
// aspect preserved). CVRP demands become delta/Q * D_trained where D_trained
// is the normalized capacity of the nearest trained size unless given.
struct ModelView {
    Instance inst;
    real coord_scale = 1.0;  // original = model * coord_scale
};
ModelView model_view(const Instance& original, real trained_capacity = 0.0);
real nearest_trained_capacity(int customers);

// TSPLIB integer-rounded metric (nint of the Euclidean distance per leg),
// used for gaps against published optima.
real rounded_length(const Instance& original, const std::vector<int>& seq);

// Published optima (rounded metric) for the bundled benchmark names.
std::optional<real> known_optimum(const std::string& name);

// =============================== checkpoints ================================

constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelConfig config;
    ParamStore params;
    std::map<std::string, std::string> meta;  // epoch, seed, trainer, config_hash...
};

void save_checkpoint(const Checkpoint& cp, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
// Throws unless the checkpoint tensor set matches what `cfg` would build.
void check_compatible(const Checkpoint& cp, const ModelConfig& cfg);

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0);

// ================================= reports ==================================

struct ReportRow {
    std::string instance;
    std::string method;
    real length = 0.0;
    real reference = 0.0;
    real gap = 0.0;
    real seconds = 0.0;
    std::map<std::string, real> extra;  // emitted in the JSON payload only
};

struct Report {
    std::vector<ReportRow> rows;
    real aggregate_gap = 0.0;
    real mean_length = 0.0;
    real total_seconds = 0.0;

    // Recomputes per-row gaps and the aggregate from lengths and references.
    void finalize();
};

void write_report_csv(const Report& report, const std::string& path,
                      const std::string& config_hash);
void write_report_json(const Report& report, const std::string& path,
                       const std::string& config_hash);
Report parse_report_csv(const std::string& path);

// ================================ datasets ==================================

struct Dataset {
    Problem kind = Problem::Tsp;
    int size = 0;
    std::uint64_t seed = 0;
    real capacity = 0.0;  // CVRP, normalized
    std::string config_hash;
    std::vector<Instance> instances;
};

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// ================================== SVG =====================================

struct SvgOptions {
    bool omit_depot_legs = false;  // drop the two depot edges of every route
    int width = 640;
};

std::string render_svg_string(const Instance& inst, const std::vector<int>& seq,
                              const SvgOptions& opts = {}, const std::string& config_hash = "");
void render_svg(const Instance& inst, const std::vector<int>& seq, const std::string& path,
                const SvgOptions& opts = {}, const std::string& config_hash = "");

// ================================ utilities =================================

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace egat
