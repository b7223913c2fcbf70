#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "egat/baselines.hpp"
#include "egat/rng.hpp"

#include <algorithm>
#include <cmath>

using namespace egat;

namespace {

// Test-side oracle: exhaustive tour enumeration with node 0 fixed.
Trajectory brute_force_tsp(const Instance& inst) {
    const int m = inst.num_nodes();
    std::vector<int> perm(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) perm[static_cast<std::size_t>(i)] = i;
    Trajectory best;
    best.length = std::numeric_limits<real>::infinity();
    do {
        const real len = tour_length(inst, perm);
        if (len < best.length) {
            best.length = len;
            best.seq = perm;
        }
    } while (std::next_permutation(perm.begin() + 1, perm.end()));
    return best;
}

Instance square_instance() {
    Instance inst;
    inst.kind = Problem::Tsp;
    inst.coords = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    return inst.finalize();
}

}  // namespace

TEST_CASE("nearest neighbor") {
    SUBCASE("worked 3-node example") {
        Instance inst;
        inst.kind = Problem::Tsp;
        inst.coords = {{0, 0}, {0.9, 0}, {1, 1}};
        inst.finalize();
        Trajectory t = nearest_neighbor(inst, 0);
        CHECK(t.seq == std::vector<int>{0, 1, 2});
        CHECK(t.length == doctest::Approx(0.9 + std::sqrt(1.01) + std::sqrt(2.0)).epsilon(1e-9));
    }
    SUBCASE("equidistant candidates break to the lowest index") {
        Instance inst;
        inst.kind = Problem::Tsp;
        inst.coords = {{0.5, 0.5}, {0.5, 0.75}, {0.5, 0.25}, {0.75, 0.5}};
        inst.finalize();
        Trajectory t = nearest_neighbor(inst, 0);
        CHECK(t.seq[1] == 1);
    }
    SUBCASE("never beats the exact oracle") {
        for (int i = 0; i < 20; ++i) {
            Instance inst = generate_tsp(9, 100 + static_cast<std::uint64_t>(i));
            CHECK(nearest_neighbor(inst, 0).length >= held_karp(inst).length - 1e-9);
        }
    }
    SUBCASE("best-of-starts is no worse than start 0") {
        Instance inst = generate_tsp(12, 7);
        CHECK(nearest_neighbor_best_start(inst).length <= nearest_neighbor(inst, 0).length + 1e-12);
    }
}

TEST_CASE("insertion heuristics") {
    SUBCASE("n=3 gives the unique triangle under every rule") {
        Instance inst = generate_tsp(3, 5);
        const real perim = tour_length(inst, {0, 1, 2});
        CHECK(insertion(inst, InsertionRule::Nearest).length == doctest::Approx(perim));
        CHECK(insertion(inst, InsertionRule::Farthest).length == doctest::Approx(perim));
        CHECK(insertion(inst, InsertionRule::Random, 3).length == doctest::Approx(perim));
    }
    SUBCASE("every step inserts at the cheapest position (independent replay, n=8)") {
        Instance inst = generate_tsp(8, 11);
        // Replay nearest insertion with an exhaustive position scan.
        std::vector<int> cycle;
        std::vector<bool> used(8, false);
        int bi = 0, bj = 1;
        real bd = inst.dist(0, 1);
        for (int i = 0; i < 8; ++i)
            for (int j = i + 1; j < 8; ++j)
                if (inst.dist(i, j) < bd) {
                    bd = inst.dist(i, j);
                    bi = i;
                    bj = j;
                }
        cycle = {bi, bj};
        used[static_cast<std::size_t>(bi)] = used[static_cast<std::size_t>(bj)] = true;
        while (cycle.size() < 8) {
            int pick = -1;
            real best = std::numeric_limits<real>::infinity();
            for (int j = 0; j < 8; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                real dmin = std::numeric_limits<real>::infinity();
                for (int c : cycle) dmin = std::min(dmin, inst.dist(j, c));
                if (dmin < best) {
                    best = dmin;
                    pick = j;
                }
            }
            int bpos = 0;
            real bcost = std::numeric_limits<real>::infinity();
            for (std::size_t pos = 0; pos < cycle.size(); ++pos) {
                const int a = cycle[pos];
                const int b = cycle[(pos + 1) % cycle.size()];
                const real delta = inst.dist(a, pick) + inst.dist(pick, b) - inst.dist(a, b);
                if (delta < bcost) {
                    bcost = delta;
                    bpos = static_cast<int>(pos);
                }
            }
            cycle.insert(cycle.begin() + bpos + 1, pick);
            used[static_cast<std::size_t>(pick)] = true;
        }
        Trajectory ours = insertion(inst, InsertionRule::Nearest);
        CHECK(ours.seq == cycle);
    }
    SUBCASE("all rules stay above the oracle") {
        for (int i = 0; i < 10; ++i) {
            Instance inst = generate_tsp(8, 500 + static_cast<std::uint64_t>(i));
            const real opt = held_karp(inst).length;
            CHECK(insertion(inst, InsertionRule::Nearest).length >= opt - 1e-9);
            CHECK(insertion(inst, InsertionRule::Farthest).length >= opt - 1e-9);
            CHECK(insertion(inst, InsertionRule::Random, 9).length >= opt - 1e-9);
        }
    }
}

TEST_CASE("two_opt") {
    SUBCASE("optimal square tour is unchanged") {
        Instance sq = square_instance();
        Trajectory t;
        t.seq = {0, 1, 2, 3};
        t.length = tour_length(sq, t.seq);
        Trajectory improved = two_opt(t, sq);
        CHECK(improved.seq == t.seq);
        CHECK(improved.length == doctest::Approx(4.0));
    }
    SUBCASE("self-crossing square tour gets uncrossed") {
        Instance sq = square_instance();
        Trajectory t;
        t.seq = {0, 2, 1, 3};  // crossing diagonals
        t.length = tour_length(sq, t.seq);
        Trajectory improved = two_opt(t, sq);
        CHECK(improved.length == doctest::Approx(4.0));
        CHECK(improved.length < t.length);
    }
    SUBCASE("output is 2-opt local under an exhaustive swap scan") {
        for (int trial = 0; trial < 10; ++trial) {
            Instance inst = generate_tsp(10, 700 + static_cast<std::uint64_t>(trial));
            Trajectory improved = two_opt(nearest_neighbor(inst, 0), inst);
            const auto& t = improved.seq;
            const int m = 10;
            for (int i = 0; i < m - 1; ++i)
                for (int j = i + 2; j < m; ++j) {
                    if (i == 0 && j == m - 1) continue;
                    const real delta = inst.dist(t[static_cast<std::size_t>(i)],
                                                 t[static_cast<std::size_t>(j)]) +
                                       inst.dist(t[static_cast<std::size_t>(i + 1)],
                                                 t[static_cast<std::size_t>((j + 1) % m)]) -
                                       inst.dist(t[static_cast<std::size_t>(i)],
                                                 t[static_cast<std::size_t>(i + 1)]) -
                                       inst.dist(t[static_cast<std::size_t>(j)],
                                                 t[static_cast<std::size_t>((j + 1) % m)]);
                    CHECK(delta >= -1e-12);
                }
            CHECK(improved.length <= nearest_neighbor(inst, 0).length + 1e-12);
        }
    }
}

TEST_CASE("held_karp") {
    SUBCASE("unit square corners give 4") {
        CHECK(held_karp(square_instance()).length == doctest::Approx(4.0));
    }
    SUBCASE("triangle gives its perimeter") {
        Instance inst = generate_tsp(3, 13);
        CHECK(held_karp(inst).length == doctest::Approx(tour_length(inst, {0, 1, 2})));
    }
    SUBCASE("matches exhaustive enumeration on random n=8") {
        for (int i = 0; i < 15; ++i) {
            Instance inst = generate_tsp(8, 900 + static_cast<std::uint64_t>(i));
            const Trajectory hk = held_karp(inst);
            const Trajectory bf = brute_force_tsp(inst);
            CHECK(hk.length == doctest::Approx(bf.length).epsilon(1e-12));
            validate_solution(inst, hk.seq);
        }
    }
    SUBCASE("size guard") { CHECK_THROWS(held_karp(generate_tsp(15, 1))); }
}

TEST_CASE("cvrp greedy reference") {
    SUBCASE("feasible on random instances") {
        for (int i = 0; i < 10; ++i) {
            Instance inst = generate_cvrp(20, 40 + static_cast<std::uint64_t>(i));
            Trajectory t = cvrp_greedy_reference(inst);
            validate_solution(inst, t.seq);
            for (const auto& route : cvrp_routes(t.seq)) {
                real load = 0.0;
                for (int c : route) load += inst.demands[static_cast<std::size_t>(c)];
                CHECK(load <= inst.capacity + 1e-12);
            }
        }
    }
    SUBCASE("single customer routes out and back") {
        Instance inst;
        inst.kind = Problem::Cvrp;
        inst.coords = {{0, 0}, {0.3, 0.4}};
        inst.demands = {0, 0.5};
        inst.capacity = 1.0;
        inst.finalize();
        Trajectory t = cvrp_greedy_reference(inst);
        CHECK(t.seq == std::vector<int>{1});
        CHECK(t.length == doctest::Approx(1.0));
    }
    SUBCASE("oversized demands force one customer per route") {
        Instance inst;
        inst.kind = Problem::Cvrp;
        inst.coords = {{0, 0}, {0.2, 0}, {0.4, 0}, {0.6, 0}};
        inst.demands = {0, 0.6, 0.7, 0.8};
        inst.capacity = 1.0;
        inst.finalize();
        Trajectory t = cvrp_greedy_reference(inst);
        for (const auto& route : cvrp_routes(t.seq)) CHECK(route.size() == 1);
    }
}
