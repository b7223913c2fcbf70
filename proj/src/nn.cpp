#include "egat/nn.hpp"

#include <algorithm>
#include <cmath>

namespace egat {

Tensor& ParamStore::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("param store: unknown tensor '" + name + "'");
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("param store: unknown tensor '" + name + "'");
    return it->second;
}

void ParamStore::insert(const std::string& name, Tensor t) {
    if (!tensors.emplace(name, std::move(t)).second)
        throw Error("param store: duplicate tensor '" + name + "'");
}

std::vector<std::string> ParamStore::trainable_names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : tensors)
        if (v.requires_grad) out.push_back(k);
    return out;
}

std::size_t ParamStore::trainable_count() const {
    std::size_t n = 0;
    for (const auto& [k, v] : tensors)
        if (v.requires_grad) n += v.size();
    return n;
}

// ============================== initializers ================================

namespace {

// Gram-Schmidt over the shorter axis; deterministic sign fix via the leading
// nonzero component.
void orthonormalize_rows(std::vector<std::vector<real>>& rows) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            real dot = 0.0;
            for (std::size_t k = 0; k < rows[i].size(); ++k) dot += rows[i][k] * rows[j][k];
            for (std::size_t k = 0; k < rows[i].size(); ++k) rows[i][k] -= dot * rows[j][k];
        }
        real norm = 0.0;
        for (real v : rows[i]) norm += v * v;
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw Error("init_orthogonal: degenerate random draw");
        for (real& v : rows[i]) v /= norm;
    }
}

std::pair<int, int> fan_2d(const std::vector<int>& shape) {
    if (shape.empty()) throw Error("init: empty shape");
    if (shape.size() == 1) return {1, shape[0]};
    // Higher ranks: flatten trailing dims.
    int fan_out = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) fan_out *= shape[i];
    return {shape[0], fan_out};
}

}  // namespace

Tensor init_orthogonal(std::vector<int> shape, real gain, Rng& rng) {
    auto [r, c] = fan_2d(shape);
    const bool wide = r <= c;  // orthonormalize rows when wide, columns when tall
    const int vecs = wide ? r : c;
    const int dim = wide ? c : r;
    std::vector<std::vector<real>> v(static_cast<std::size_t>(vecs),
                                     std::vector<real>(static_cast<std::size_t>(dim)));
    for (auto& row : v)
        for (real& x : row) x = rng.normal();
    orthonormalize_rows(v);
    Tensor out = Tensor::zeros(shape, true);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            out.data[static_cast<std::size_t>(i) * c + j] =
                gain * (wide ? v[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]
                             : v[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]);
    return out;
}

Tensor init_xavier(std::vector<int> shape, Rng& rng) {
    auto [fan_in, fan_out] = fan_2d(shape);
    const real bound = std::sqrt(6.0 / static_cast<real>(fan_in + fan_out));
    Tensor out = Tensor::zeros(shape, true);
    for (real& v : out.data) v = rng.uniform(-bound, bound);
    return out;
}

// ================================ clipping ==================================

real global_norm(const GradMap& grads) {
    real ss = 0.0;
    for (const auto& [k, g] : grads) {
        for (real v : g.data) {
            if (!std::isfinite(v)) throw NumericError("global_norm: non-finite gradient in " + k);
            ss += v * v;
        }
    }
    return std::sqrt(ss);
}

real clip_global_norm(GradMap& grads, real max_norm) {
    if (max_norm <= 0.0) throw Error("clip_global_norm: max_norm must be positive");
    const real total = global_norm(grads);
    if (total <= max_norm) return 1.0;
    const real scale = max_norm / total;
    for (auto& [k, g] : grads)
        for (real& v : g.data) v *= scale;
    return scale;
}

// ================================== Adam ====================================

void adam_step(ParamStore& params, const GradMap& grads, AdamState& state, real lr,
               const AdamConfig& cfg) {
    const auto names = params.trainable_names();
    if (names.size() != grads.size()) throw Error("adam_step: gradient key count mismatch");
    for (const auto& name : names)
        if (grads.find(name) == grads.end()) throw Error("adam_step: missing gradient for " + name);

    state.step += 1;
    const real bc1 = 1.0 - std::pow(cfg.beta1, static_cast<real>(state.step));
    const real bc2 = 1.0 - std::pow(cfg.beta2, static_cast<real>(state.step));
    for (const auto& name : names) {
        Tensor& p = params.at(name);
        const Tensor& g = grads.at(name);
        if (!p.same_shape(g)) throw Error("adam_step: gradient shape mismatch for " + name);
        Tensor& m = state.m.try_emplace(name, Tensor::zeros(p.shape)).first->second;
        Tensor& v = state.v.try_emplace(name, Tensor::zeros(p.shape)).first->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g.data[i];
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g.data[i] * g.data[i];
            const real mhat = m.data[i] / bc1;
            const real vhat = v.data[i] / bc2;
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
            if (!std::isfinite(p.data[i]))
                throw NumericError("adam_step: non-finite parameter in " + name);
        }
    }
}

void bn_running_update(ParamStore& params, const std::string& prefix, const BnStats& stats,
                       real momentum) {
    Tensor& rm = params.at(prefix + ".run_mean");
    Tensor& rv = params.at(prefix + ".run_var");
    for (std::size_t j = 0; j < rm.size(); ++j) {
        rm.data[j] = (1.0 - momentum) * rm.data[j] + momentum * stats.mean[j];
        rv.data[j] = (1.0 - momentum) * rv.data[j] + momentum * stats.var_unbiased[j];
    }
}

// ============================ gradient checking =============================

real grad_check(const ScalarFn& f, const Tensor& x, real h) {
    Tensor x0 = x;
    x0.requires_grad = true;

    TapeCtx tape;
    auto xref = tape.leaf(&x0);
    auto root = f(tape, xref);
    if (tape.val(root).size() != 1) throw Error("grad_check: f must be scalar-valued");
    tape.backward(root, 1.0);
    const Tensor* g = tape.grad(xref);

    auto eval = [&](const Tensor& xv) {
        TapeCtx t2;
        Tensor xc = xv;
        xc.requires_grad = false;
        auto r = f(t2, t2.leaf(&xc));
        const real v = t2.val(r).item();
        if (!std::isfinite(v)) throw NumericError("grad_check: non-finite value at probe point");
        return v;
    };

    real max_err = 0.0;
    for (std::size_t i = 0; i < x0.size(); ++i) {
        Tensor xp = x0, xm = x0;
        xp.data[i] += h;
        xm.data[i] -= h;
        const real fd = (eval(xp) - eval(xm)) / (2.0 * h);
        const real an = g ? g->data[i] : 0.0;
        const real err = std::abs(an - fd) / std::max(static_cast<real>(1.0), std::abs(an));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

real grad_check_params(const ParamScalarFn& f, const ParamStore& params, real h) {
    TapeCtx tape;
    Bound<TapeCtx> bp(tape, params);
    auto root = f(tape, bp);
    if (tape.val(root).size() != 1) throw Error("grad_check_params: f must be scalar-valued");
    tape.backward(root, 1.0);

    GradMap analytic;
    for (const auto& [name, ref] : bp.refs) {
        const Tensor* g = tape.grad(ref);
        analytic[name] = g ? *g : Tensor::zeros(params.at(name).shape);
    }

    auto eval = [&](const ParamStore& ps) {
        TapeCtx t2;
        Bound<TapeCtx> b2(t2, ps);
        auto r = f(t2, b2);
        const real v = t2.val(r).item();
        if (!std::isfinite(v)) throw NumericError("grad_check_params: non-finite probe value");
        return v;
    };

    ParamStore probe = params;
    real max_err = 0.0;
    for (const auto& name : params.trainable_names()) {
        if (bp.refs.find(name) == bp.refs.end()) continue;  // unused by f
        Tensor& t = probe.at(name);
        for (std::size_t i = 0; i < t.size(); ++i) {
            const real saved = t.data[i];
            t.data[i] = saved + h;
            const real fp = eval(probe);
            t.data[i] = saved - h;
            const real fm = eval(probe);
            t.data[i] = saved;
            const real fd = (fp - fm) / (2.0 * h);
            const real an = analytic.at(name).data[i];
            const real err = std::abs(an - fd) / std::max(static_cast<real>(1.0), std::abs(an));
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

}  // namespace egat
