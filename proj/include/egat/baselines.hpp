#pragma once

#include "egat/instance.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace egat {

struct BaselineResult {
    std::string method;
    Trajectory traj;
    double seconds = 0.0;
};

enum class InsertionRule { Nearest, Random, Farthest };

// Greedy next-closest-node construction; ties break to the lowest index.
Trajectory nearest_neighbor(const Instance& inst, int start = 0);
// Best tour over all starting nodes.
Trajectory nearest_neighbor_best_start(const Instance& inst);

// Cycle-growing insertion: pick the next node by rule (distance to the
// current cycle; random draws use `seed`), insert where the length increase
// is smallest.
Trajectory insertion(const Instance& inst, InsertionRule rule, std::uint64_t seed = 0);

// First-improvement 2-opt until no improving swap or the pass cap.
Trajectory two_opt(const Trajectory& start, const Instance& inst, int max_passes = 1000);

// Exact TSP by Held-Karp subset DP; n <= 14.
Trajectory held_karp(const Instance& inst);
constexpr int kHeldKarpMaxNodes = 14;

// Nearest-feasible-neighbor CVRP construction with depot returns.
Trajectory cvrp_greedy_reference(const Instance& inst);

InsertionRule insertion_rule_from_name(const std::string& s);

}  // namespace egat
