#include "egat/baselines.hpp"

#include "egat/rng.hpp"

#include <algorithm>
#include <limits>

namespace egat {

namespace {

void need_tsp(const Instance& inst, const char* who) {
    if (inst.kind != Problem::Tsp) throw Error(std::string(who) + ": TSP instance required");
}

}  // namespace

Trajectory nearest_neighbor(const Instance& inst, int start) {
    need_tsp(inst, "nearest_neighbor");
    const int m = inst.num_nodes();
    if (start < 0 || start >= m) throw Error("nearest_neighbor: bad start");
    std::vector<std::uint8_t> visited(static_cast<std::size_t>(m), 0);
    Trajectory out;
    out.seq.reserve(static_cast<std::size_t>(m));
    int cur = start;
    visited[static_cast<std::size_t>(cur)] = 1;
    out.seq.push_back(cur);
    for (int step = 1; step < m; ++step) {
        int best = -1;
        real bd = std::numeric_limits<real>::infinity();
        for (int j = 0; j < m; ++j) {
            if (visited[static_cast<std::size_t>(j)]) continue;
            const real d = inst.dist(cur, j);
            if (d < bd) {
                bd = d;
                best = j;
            }
        }
        visited[static_cast<std::size_t>(best)] = 1;
        out.seq.push_back(best);
        cur = best;
    }
    out.length = tour_length(inst, out.seq);
    return out;
}

Trajectory nearest_neighbor_best_start(const Instance& inst) {
    Trajectory best;
    for (int s = 0; s < inst.num_nodes(); ++s) {
        Trajectory t = nearest_neighbor(inst, s);
        if (best.seq.empty() || t.length < best.length) best = std::move(t);
    }
    return best;
}

Trajectory insertion(const Instance& inst, InsertionRule rule, std::uint64_t seed) {
    need_tsp(inst, "insertion");
    const int m = inst.num_nodes();
    Rng rng(seed);
    std::vector<std::uint8_t> in_cycle(static_cast<std::size_t>(m), 0);
    std::vector<int> cycle;

    // Seed pair: extreme pair for nearest/farthest, node 0 plus a random
    // partner for random (ties to the lowest index).
    if (m == 2) {
        cycle = {0, 1};
        in_cycle[0] = in_cycle[1] = 1;
    } else if (rule == InsertionRule::Random) {
        const int other = 1 + rng.uniform_int(m - 1);
        cycle = {0, other};
        in_cycle[0] = in_cycle[static_cast<std::size_t>(other)] = 1;
    } else {
        int bi = 0, bj = 1;
        real bd = inst.dist(0, 1);
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) {
                const real d = inst.dist(i, j);
                const bool better = rule == InsertionRule::Nearest ? d < bd : d > bd;
                if (better) {
                    bd = d;
                    bi = i;
                    bj = j;
                }
            }
        cycle = {bi, bj};
        in_cycle[static_cast<std::size_t>(bi)] = in_cycle[static_cast<std::size_t>(bj)] = 1;
    }

    while (static_cast<int>(cycle.size()) < m) {
        // Pick the next node by its distance to the cycle.
        int pick = -1;
        if (rule == InsertionRule::Random) {
            int remaining = m - static_cast<int>(cycle.size());
            int k = rng.uniform_int(remaining);
            for (int j = 0; j < m; ++j) {
                if (in_cycle[static_cast<std::size_t>(j)]) continue;
                if (k-- == 0) {
                    pick = j;
                    break;
                }
            }
        } else {
            real best = rule == InsertionRule::Nearest ? std::numeric_limits<real>::infinity()
                                                       : -1.0;
            for (int j = 0; j < m; ++j) {
                if (in_cycle[static_cast<std::size_t>(j)]) continue;
                real dmin = std::numeric_limits<real>::infinity();
                for (int c : cycle) dmin = std::min(dmin, inst.dist(j, c));
                const bool better = rule == InsertionRule::Nearest ? dmin < best : dmin > best;
                if (better) {
                    best = dmin;
                    pick = j;
                }
            }
        }

        // Insert at the position with the smallest length increase.
        int bpos = 0;
        real bcost = std::numeric_limits<real>::infinity();
        const int n = static_cast<int>(cycle.size());
        for (int pos = 0; pos < n; ++pos) {
            const int a = cycle[static_cast<std::size_t>(pos)];
            const int b = cycle[static_cast<std::size_t>((pos + 1) % n)];
            const real delta = inst.dist(a, pick) + inst.dist(pick, b) - inst.dist(a, b);
            if (delta < bcost) {
                bcost = delta;
                bpos = pos;
            }
        }
        cycle.insert(cycle.begin() + bpos + 1, pick);
        in_cycle[static_cast<std::size_t>(pick)] = 1;
    }

    Trajectory out;
    out.seq = std::move(cycle);
    out.length = tour_length(inst, out.seq);
    return out;
}

Trajectory two_opt(const Trajectory& start, const Instance& inst, int max_passes) {
    need_tsp(inst, "two_opt");
    Trajectory out = start;
    validate_solution(inst, out.seq);
    const int m = inst.num_nodes();
    auto& t = out.seq;
    for (int pass = 0; pass < max_passes; ++pass) {
        bool improved = false;
        for (int i = 0; i < m - 1; ++i) {
            for (int j = i + 2; j < m; ++j) {
                if (i == 0 && j == m - 1) continue;  // same edge pair
                const int a = t[static_cast<std::size_t>(i)];
                const int b = t[static_cast<std::size_t>(i + 1)];
                const int c = t[static_cast<std::size_t>(j)];
                const int d = t[static_cast<std::size_t>((j + 1) % m)];
                const real delta =
                    inst.dist(a, c) + inst.dist(b, d) - inst.dist(a, b) - inst.dist(c, d);
                if (delta < -1e-12) {
                    std::reverse(t.begin() + i + 1, t.begin() + j + 1);
                    improved = true;
                }
            }
        }
        if (!improved) break;
    }
    out.length = tour_length(inst, out.seq);
    return out;
}

Trajectory held_karp(const Instance& inst) {
    need_tsp(inst, "held_karp");
    const int m = inst.num_nodes();
    if (m > kHeldKarpMaxNodes)
        throw Error("held_karp: limited to " + std::to_string(kHeldKarpMaxNodes) + " nodes, got " +
                    std::to_string(m));

    // dp[S][j]: shortest path starting at 0, visiting exactly set S, ending
    // at j (S always contains 0 and j).
    const std::size_t nsets = std::size_t{1} << m;
    const real inf = std::numeric_limits<real>::infinity();
    std::vector<real> dp(nsets * static_cast<std::size_t>(m), inf);
    std::vector<std::int8_t> parent(nsets * static_cast<std::size_t>(m), -1);
    auto at = [m](std::size_t s, int j) { return s * static_cast<std::size_t>(m) + j; };

    dp[at(1u, 0)] = 0.0;
    for (std::size_t s = 1; s < nsets; ++s) {
        if (!(s & 1u)) continue;
        for (int j = 0; j < m; ++j) {
            if (!(s >> j & 1u)) continue;
            const real cur = dp[at(s, j)];
            if (cur == inf) continue;
            for (int k = 0; k < m; ++k) {
                if (s >> k & 1u) continue;
                const std::size_t ns = s | (std::size_t{1} << k);
                const real cand = cur + inst.dist(j, k);
                if (cand < dp[at(ns, k)]) {
                    dp[at(ns, k)] = cand;
                    parent[at(ns, k)] = static_cast<std::int8_t>(j);
                }
            }
        }
    }

    const std::size_t full = nsets - 1;
    int last = -1;
    real best = inf;
    for (int j = 1; j < m; ++j) {
        const real cand = dp[at(full, j)] + inst.dist(j, 0);
        if (cand < best) {
            best = cand;
            last = j;
        }
    }

    Trajectory out;
    out.seq.resize(static_cast<std::size_t>(m));
    std::size_t s = full;
    int j = last;
    for (int pos = m - 1; pos >= 0; --pos) {
        out.seq[static_cast<std::size_t>(pos)] = j;
        const int pj = parent[at(s, j)];
        s &= ~(std::size_t{1} << j);
        j = pj;
    }
    out.length = tour_length(inst, out.seq);
    return out;
}

Trajectory cvrp_greedy_reference(const Instance& inst) {
    if (inst.kind != Problem::Cvrp) throw Error("cvrp_greedy_reference: CVRP instance required");
    Trajectory out;
    DecodeState state = DecodeState::initial(inst);
    while (!terminated(state, inst)) {
        const auto mask = feasible_mask(state, inst);
        const int from = state.last_node < 0 ? 0 : state.last_node;
        int best = -1;
        real bd = std::numeric_limits<real>::infinity();
        for (int j = 1; j < inst.num_nodes(); ++j) {
            if (!mask[static_cast<std::size_t>(j)]) continue;
            const real d = inst.dist(from, j);
            if (d < bd) {
                bd = d;
                best = j;
            }
        }
        if (best < 0) best = 0;  // nothing fits: return to the depot
        out.seq.push_back(best);
        state = env_step(state, best, inst);
    }
    out.length = tour_length(inst, out.seq);
    return out;
}

InsertionRule insertion_rule_from_name(const std::string& s) {
    if (s == "nearest") return InsertionRule::Nearest;
    if (s == "random") return InsertionRule::Random;
    if (s == "farthest") return InsertionRule::Farthest;
    throw Error("unknown insertion rule '" + s + "'");
}

}  // namespace egat
