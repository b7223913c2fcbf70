#include "egat/instance.hpp"

#include <algorithm>
#include <cmath>

namespace egat {

std::string problem_name(Problem p) { return p == Problem::Tsp ? "tsp" : "cvrp"; }

Problem problem_from_name(const std::string& s) {
    if (s == "tsp" || s == "TSP") return Problem::Tsp;
    if (s == "cvrp" || s == "CVRP") return Problem::Cvrp;
    throw Error("unknown problem kind '" + s + "'");
}

Instance& Instance::finalize() {
    const std::size_t m = coords.size();
    if (m < 2) throw Error("instance: need at least 2 nodes");
    if (kind == Problem::Cvrp) {
        if (demands.size() != m) throw Error("instance: demand count mismatch");
        if (demands[0] != 0.0) throw Error("instance: depot demand must be 0");
        if (capacity <= 0.0) throw Error("instance: capacity must be positive");
        for (std::size_t i = 1; i < m; ++i)
            if (demands[i] <= 0.0 || demands[i] >= capacity)
                throw Error("instance: customer demand outside (0, capacity)");
    }
    dist_.assign(m * m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) {
            const real dx = coords[i][0] - coords[j][0];
            const real dy = coords[i][1] - coords[j][1];
            const real d = std::sqrt(dx * dx + dy * dy);
            dist_[i * m + j] = d;
            dist_[j * m + i] = d;
        }
    return *this;
}

Instance generate_tsp(int m, std::uint64_t seed) {
    if (m < 2) throw Error("generate_tsp: m must be >= 2");
    Rng rng(seed);
    Instance inst;
    inst.kind = Problem::Tsp;
    inst.coords.resize(static_cast<std::size_t>(m));
    for (auto& c : inst.coords) {
        c[0] = rng.uniform01();
        c[1] = rng.uniform01();
    }
    return inst.finalize();
}

Instance generate_cvrp(int m, std::uint64_t seed, real explicit_capacity) {
    real cap = explicit_capacity;
    if (cap <= 0.0) {
        switch (m) {
            case 20: cap = 3.0; break;
            case 50: cap = 4.0; break;
            case 100: cap = 5.0; break;
            default:
                throw Error("generate_cvrp: capacity required for nonstandard size " +
                            std::to_string(m));
        }
    }
    Rng rng(seed);
    Instance inst;
    inst.kind = Problem::Cvrp;
    inst.capacity = cap;
    inst.coords.resize(static_cast<std::size_t>(m) + 1);
    inst.demands.resize(static_cast<std::size_t>(m) + 1);
    for (auto& c : inst.coords) {
        c[0] = rng.uniform01();
        c[1] = rng.uniform01();
    }
    inst.demands[0] = 0.0;
    for (int i = 1; i <= m; ++i)
        inst.demands[static_cast<std::size_t>(i)] = static_cast<real>(rng.uniform_int(9) + 1) / 10.0;
    return inst.finalize();
}

// ============================= decode state =================================

DecodeState DecodeState::initial(const Instance& inst) {
    DecodeState s;
    s.visited.assign(static_cast<std::size_t>(inst.num_nodes()), 0);
    s.remaining = inst.kind == Problem::Cvrp ? inst.capacity : 0.0;
    return s;
}

std::vector<std::uint8_t> feasible_mask(const DecodeState& state, const Instance& inst) {
    const int m = inst.num_nodes();
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(m), 0);
    if (inst.kind == Problem::Tsp) {
        for (int i = 0; i < m; ++i) mask[static_cast<std::size_t>(i)] = !state.visited[i];
        return mask;
    }
    // CVRP: unserved customers that fit the remaining capacity; the depot is
    // closed at t=1 and while the vehicle already sits there.
    for (int i = 1; i < m; ++i)
        mask[static_cast<std::size_t>(i)] =
            !state.visited[i] && inst.demands[static_cast<std::size_t>(i)] <= state.remaining;
    mask[0] = !(state.t == 1 || state.last_node == 0);
    return mask;
}

DecodeState env_step(const DecodeState& state, int action, const Instance& inst) {
    const auto mask = feasible_mask(state, inst);
    if (action < 0 || action >= inst.num_nodes() || !mask[static_cast<std::size_t>(action)])
        throw Error("env_step: infeasible action " + std::to_string(action));
    DecodeState next = state;
    if (inst.kind == Problem::Tsp) {
        next.visited[static_cast<std::size_t>(action)] = 1;
    } else if (action == 0) {
        next.remaining = inst.capacity;
    } else {
        next.visited[static_cast<std::size_t>(action)] = 1;
        next.remaining = state.remaining - inst.demands[static_cast<std::size_t>(action)];
        next.served = state.served + 1;
    }
    if (state.t == 1) next.first_node = action;
    next.last_node = action;
    next.t = state.t + 1;
    return next;
}

bool terminated(const DecodeState& state, const Instance& inst) {
    if (inst.kind == Problem::Tsp)
        return std::count(state.visited.begin(), state.visited.end(), 1) == inst.num_nodes();
    return state.served == inst.num_customers();
}

// ============================== trajectories ================================

real tour_length(const Instance& inst, const std::vector<int>& seq) {
    validate_solution(inst, seq);
    real len = 0.0;
    if (inst.kind == Problem::Tsp) {
        const int m = inst.num_nodes();
        for (int t = 0; t + 1 < m; ++t)
            len += inst.dist(seq[static_cast<std::size_t>(t)], seq[static_cast<std::size_t>(t) + 1]);
        len += inst.dist(seq.back(), seq.front());
        return len;
    }
    int prev = 0;  // start at depot
    for (int node : seq) {
        len += inst.dist(prev, node);
        prev = node;
    }
    len += inst.dist(prev, 0);  // return leg
    return len;
}

void validate_solution(const Instance& inst, const std::vector<int>& seq) {
    const int m = inst.num_nodes();
    if (inst.kind == Problem::Tsp) {
        if (static_cast<int>(seq.size()) != m) throw Error("solution: wrong length for TSP");
        std::vector<std::uint8_t> seen(static_cast<std::size_t>(m), 0);
        for (int v : seq) {
            if (v < 0 || v >= m || seen[static_cast<std::size_t>(v)])
                throw Error("solution: not a permutation");
            seen[static_cast<std::size_t>(v)] = 1;
        }
        return;
    }
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(m), 0);
    int prev = 0;
    for (int v : seq) {
        if (v < 0 || v >= m) throw Error("solution: node out of range");
        if (v == 0) {
            if (prev == 0) throw Error("solution: consecutive depot visits");
        } else {
            if (seen[static_cast<std::size_t>(v)]) throw Error("solution: customer repeated");
            seen[static_cast<std::size_t>(v)] = 1;
        }
        prev = v;
    }
    for (int i = 1; i < m; ++i)
        if (!seen[static_cast<std::size_t>(i)]) throw Error("solution: customer unserved");
}

std::vector<std::vector<int>> cvrp_routes(const std::vector<int>& seq) {
    std::vector<std::vector<int>> routes;
    std::vector<int> cur;
    for (int v : seq) {
        if (v == 0) {
            if (!cur.empty()) routes.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(v);
        }
    }
    if (!cur.empty()) routes.push_back(cur);
    return routes;
}

real opt_gap(const std::vector<real>& lengths, const std::vector<real>& refs) {
    if (lengths.size() != refs.size() || lengths.empty())
        throw Error("opt_gap: size mismatch or empty");
    real acc = 0.0;
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        if (refs[i] <= 0.0) throw Error("opt_gap: nonpositive reference");
        acc += (lengths[i] - refs[i]) / refs[i];
    }
    return acc / static_cast<real>(lengths.size());
}

}  // namespace egat
