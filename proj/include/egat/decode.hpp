#pragma once

#include "egat/instance.hpp"
#include "egat/model.hpp"
#include "egat/nn.hpp"

#include <cstdint>
#include <vector>

namespace egat {

struct DecodePolicy {
    Selector mode = Selector::Greedy;
    real lambda = 0.0;  // 0 = problem/size default
    int samples = 1280;

    void validate() const {
        if (lambda < 0.0) throw Error("decode policy: lambda must be positive");
        if (samples < 1) throw Error("decode policy: sample count must be >= 1");
    }
};

// Grid-searched sampling temperatures per problem and size; 1.0 off-grid.
real default_lambda(Problem kind, int customers);

// Deterministic greedy construction (eval-mode batch norm, lowest-index ties).
Trajectory greedy_decode(const ParamStore& params, const ModelConfig& cfg, const Instance& inst);

// Best of k temperature-λ samples. One RNG stream per instance derived from
// (master_seed, instance_index), so a larger k extends the same stream.
Trajectory sample_decode(const ParamStore& params, const ModelConfig& cfg, const Instance& inst,
                         real lambda, int k, std::uint64_t master_seed,
                         std::uint64_t instance_index = 0);

// Greedy under every checkpoint's parameters; shortest tour wins (first on
// ties, so duplicates cannot change the answer).
Trajectory ensemble_solve(const std::vector<const ParamStore*>& members, const ModelConfig& cfg,
                          const Instance& inst);

}  // namespace egat
