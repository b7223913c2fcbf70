#pragma once

#include "egat/engine.hpp"
#include "egat/rng.hpp"
#include "egat/tensor.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace egat {

// Named-tensor collection for all learnable weights plus persistent state
// (batch-norm running statistics). Ordered map so that every iteration --
// global-norm clipping, checkpoints, Adam -- is deterministic.
struct ParamStore {
    std::map<std::string, Tensor> tensors;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return tensors.count(name) != 0; }
    void insert(const std::string& name, Tensor t);

    std::vector<std::string> trainable_names() const;
    std::size_t trainable_count() const;
};

using GradMap = std::map<std::string, Tensor>;

// Rows (or columns, for tall matrices) orthonormal, scaled by gain.
Tensor init_orthogonal(std::vector<int> shape, real gain, Rng& rng);
// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor init_xavier(std::vector<int> shape, Rng& rng);

// Scales all gradients by max_norm/total when the concatenated L2 norm
// exceeds max_norm; returns the scale applied (1.0 when untouched).
real clip_global_norm(GradMap& grads, real max_norm);
real global_norm(const GradMap& grads);

struct AdamConfig {
    real beta1 = 0.9;
    real beta2 = 0.999;
    real eps = 1e-8;
};

struct AdamState {
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
    long step = 0;
};

// Standard bias-corrected Adam over the trainable subset of `params`.
// `grads` must carry exactly the trainable keys.
void adam_step(ParamStore& params, const GradMap& grads, AdamState& state, real lr,
               const AdamConfig& cfg = {});

// Advances BN running statistics with momentum toward a batch observation.
void bn_running_update(ParamStore& params, const std::string& prefix, const BnStats& stats,
                       real momentum = 0.1);

// Lazily binds named parameters to engine leaves, deduping so fan-out
// accumulates on one node per parameter.
template <class Ctx>
struct Bound {
    Ctx* cx;
    const ParamStore* store;
    std::map<std::string, typename Ctx::Ref> refs;

    Bound(Ctx& c, const ParamStore& s) : cx(&c), store(&s) {}

    typename Ctx::Ref operator()(const std::string& name) {
        auto it = refs.find(name);
        if (it != refs.end()) return it->second;
        auto r = cx->leaf(&store->at(name));
        refs.emplace(name, r);
        return r;
    }
    const Tensor& raw(const std::string& name) const { return store->at(name); }
};

// ============================ gradient checking =============================

// Builds a scalar-valued function of one tensor on the tape engine.
using ScalarFn = std::function<TapeCtx::Ref(TapeCtx&, TapeCtx::Ref)>;

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
real grad_check(const ScalarFn& f, const Tensor& x, real h = 1e-5);

// Same, but differentiates w.r.t. every trainable parameter in the store.
using ParamScalarFn = std::function<TapeCtx::Ref(TapeCtx&, Bound<TapeCtx>&)>;
real grad_check_params(const ParamScalarFn& f, const ParamStore& params, real h = 1e-5);

}  // namespace egat
