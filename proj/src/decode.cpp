#include "egat/decode.hpp"

#include <cmath>

namespace egat {

real default_lambda(Problem kind, int customers) {
    if (kind == Problem::Tsp) {
        switch (customers) {
            case 20: return 2.0;
            case 50: return 2.5;
            case 100: return 1.5;
            default: return 1.0;
        }
    }
    switch (customers) {
        case 20: return 2.5;
        case 50: return 1.8;
        case 100: return 1.2;
        default: return 1.0;
    }
}

Trajectory greedy_decode(const ParamStore& params, const ModelConfig& cfg, const Instance& inst) {
    EagerCtx cx;
    Bound<EagerCtx> bp(cx, params);
    RolloutOptions opts;
    opts.selector = Selector::Greedy;
    auto out = rollout(cx, bp, cfg, inst, opts);
    // Reported length is always recomputed from the sequence (rollout does),
    // so there is no cached drift to worry about.
    return std::move(out.traj);
}

Trajectory sample_decode(const ParamStore& params, const ModelConfig& cfg, const Instance& inst,
                         real lambda, int k, std::uint64_t master_seed,
                         std::uint64_t instance_index) {
    if (lambda <= 0.0) throw Error("sample_decode: lambda must be positive");
    if (k < 1) throw Error("sample_decode: k must be >= 1");
    Rng rng = Rng::stream(master_seed, "sample_decode", instance_index);
    EagerCtx cx;
    Bound<EagerCtx> bp(cx, params);
    auto enc = encode(cx, bp, cfg, inst, false);
    auto cache = build_dec_cache(cx, bp, cfg, enc);
    Trajectory best;
    for (int s = 0; s < k; ++s) {
        RolloutOptions opts;
        opts.selector = Selector::Sample;
        opts.rng = &rng;
        opts.lambda = lambda;
        auto out = rollout_decode(cx, bp, cfg, inst, opts, enc, cache);
        if (best.seq.empty() || out.traj.length < best.length) best = std::move(out.traj);
    }
    return best;
}

Trajectory ensemble_solve(const std::vector<const ParamStore*>& members, const ModelConfig& cfg,
                          const Instance& inst) {
    if (members.empty()) throw Error("ensemble_solve: empty ensemble");
    Trajectory best;
    for (const ParamStore* ps : members) {
        Trajectory t = greedy_decode(*ps, cfg, inst);
        if (best.seq.empty() || t.length < best.length) best = std::move(t);
    }
    return best;
}

}  // namespace egat
