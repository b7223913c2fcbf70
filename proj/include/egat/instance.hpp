#pragma once

#include "egat/rng.hpp"
#include "egat/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace egat {

enum class Problem { Tsp, Cvrp };

std::string problem_name(Problem p);
Problem problem_from_name(const std::string& s);

// A routing problem on the unit square (benchmark instances keep their
// original units; `scale` records the factor applied for model input).
// For CVRP the depot sits at index 0 with zero demand.
struct Instance {
    Problem kind = Problem::Tsp;
    std::vector<std::array<real, 2>> coords;
    std::vector<real> demands;  // CVRP only, normalized; demands[0] == 0
    real capacity = 0.0;        // CVRP only, normalized (3/4/5 at sizes 20/50/100)
    std::string id;

    int num_nodes() const { return static_cast<int>(coords.size()); }
    int num_customers() const { return kind == Problem::Cvrp ? num_nodes() - 1 : num_nodes(); }

    real dist(int i, int j) const {
        return dist_[static_cast<std::size_t>(i) * coords.size() + static_cast<std::size_t>(j)];
    }
    const std::vector<real>& dist_matrix() const { return dist_; }

    // Computes the distance cache and validates invariants; call after filling
    // fields. Returns *this for chaining.
    Instance& finalize();

private:
    std::vector<real> dist_;
};

// m i.i.d. uniform points in the unit square; deterministic under seed.
Instance generate_tsp(int m, std::uint64_t seed);

// Depot + m customers; demands uniform on {0.1,...,0.9}; capacity 3/4/5 for
// m = 20/50/100, otherwise `explicit_capacity` must be positive.
Instance generate_cvrp(int m, std::uint64_t seed, real explicit_capacity = 0.0);

// ============================= decode state =================================

struct DecodeState {
    std::vector<std::uint8_t> visited;
    int first_node = -1;
    int last_node = -1;
    real remaining = 0.0;  // CVRP vehicle capacity left
    int t = 1;
    int served = 0;  // CVRP customers served so far

    static DecodeState initial(const Instance& inst);
};

// Feasible actions at the current state, one flag per node.
std::vector<std::uint8_t> feasible_mask(const DecodeState& state, const Instance& inst);

// Applies `action` (must be feasible) and returns the successor state.
DecodeState env_step(const DecodeState& state, int action, const Instance& inst);

bool terminated(const DecodeState& state, const Instance& inst);

// ============================== trajectories ================================

struct Trajectory {
    std::vector<int> seq;
    std::vector<real> logps;
    real length = 0.0;
};

// Eq.-1 tour length for TSP (closing edge included); for CVRP the cost of all
// legs including the implicit start/end at the depot.
real tour_length(const Instance& inst, const std::vector<int>& seq);

// Throws unless seq is a valid full solution for the instance.
void validate_solution(const Instance& inst, const std::vector<int>& seq);

// Splits a CVRP visit sequence into routes (depot excluded from each route).
std::vector<std::vector<int>> cvrp_routes(const std::vector<int>& seq);

// Mean relative excess over the reference optimum.
real opt_gap(const std::vector<real>& lengths, const std::vector<real>& refs);

}  // namespace egat
