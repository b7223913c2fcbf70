#pragma once

// Two evaluation engines behind one op surface. TapeCtx records every op on a
// DAG tape (topological by construction) and supports reverse-mode backward;
// EagerCtx computes immediately and frees intermediates as handles die, which
// is what inference uses. Model code is written once against either engine.
// Both call the same forward math, so taped and eager forwards are
// bitwise-identical given identical inputs.

#include "egat/tensor.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace egat {

enum class Op : std::uint8_t {
    Leaf,
    Const,
    MatMul,
    MatMulNT,
    Add,
    AddRow,
    Sub,
    Mul,
    Scale,
    AddC,
    ConcatCols,
    GatherRows,
    SliceCols,
    Reshape,
    MeanRows,
    SoftmaxRows,
    MaskedSoftmaxRows,
    LeakyRelu,
    Relu,
    Tanh,
    Exp,
    Log,
    BatchNormTrain,
    BatchNormEval,
    Pick,
    Min2,
    Clamp,
    EntropyMasked,
};

const char* op_name(Op op);

// Batch statistics reported by a train-mode batch-norm forward, used by the
// trainer to advance running statistics.
struct BnStats {
    std::vector<real> mean;
    std::vector<real> var_unbiased;
    int count = 0;
};

namespace detail {

// Forward math shared by both engines. `aux` receives whatever the backward
// rule needs (documented per op in engine.cpp).
struct FwdAux {
    std::vector<real> raux;
};

Tensor fwd_add(const Tensor& a, const Tensor& b);
Tensor fwd_add_rowvec(const Tensor& a, const Tensor& v);
Tensor fwd_sub(const Tensor& a, const Tensor& b);
Tensor fwd_mul(const Tensor& a, const Tensor& b);
Tensor fwd_scale(const Tensor& a, real c);
Tensor fwd_add_const(const Tensor& a, real c);
Tensor fwd_concat_cols(const std::vector<const Tensor*>& xs);
Tensor fwd_gather_rows(const Tensor& a, const std::vector<int>& idx);
Tensor fwd_slice_cols(const Tensor& a, int start, int len);
Tensor fwd_reshape(const Tensor& a, const std::vector<int>& shape);
Tensor fwd_mean_rows(const Tensor& a);
Tensor fwd_tanh(const Tensor& a);
Tensor fwd_exp(const Tensor& a);
Tensor fwd_log(const Tensor& a);
Tensor fwd_relu(const Tensor& a);
Tensor fwd_pick(const Tensor& a, int r, int c);
Tensor fwd_min2(const Tensor& a, const Tensor& b);
Tensor fwd_clamp(const Tensor& a, real lo, real hi);
Tensor fwd_entropy_masked(const Tensor& p, const std::vector<std::uint8_t>& feasible);
Tensor fwd_batchnorm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps,
                           FwdAux& aux, BnStats* stats);
Tensor fwd_batchnorm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          const Tensor& run_mean, const Tensor& run_var, real eps, FwdAux& aux);

void check_finite(const Tensor& t, Op op);

}  // namespace detail

class TapeCtx {
public:
    using Ref = std::int32_t;
    static constexpr bool kTapes = true;

    TapeCtx() = default;
    TapeCtx(const TapeCtx&) = delete;
    TapeCtx& operator=(const TapeCtx&) = delete;
    TapeCtx(TapeCtx&&) = default;
    TapeCtx& operator=(TapeCtx&&) = default;

    // `t` must outlive the tape; gradient flows iff t->requires_grad.
    Ref leaf(const Tensor* t);
    Ref lift(Tensor v);

    const Tensor& val(Ref r) const;

    Ref matmul(Ref a, Ref b);
    Ref matmul_nt(Ref a, Ref b);  // a * b^T
    Ref add(Ref a, Ref b);
    Ref add_rowvec(Ref a, Ref v);
    Ref sub(Ref a, Ref b);
    Ref mul(Ref a, Ref b);
    Ref scale(Ref a, real c);
    Ref add_const(Ref a, real c);
    Ref concat_cols(const std::vector<Ref>& xs);
    Ref gather_rows(Ref a, std::vector<int> idx);
    Ref slice_cols(Ref a, int start, int len);
    Ref reshape(Ref a, std::vector<int> shape);
    Ref mean_rows(Ref a);
    Ref softmax_rows(Ref a);
    Ref masked_softmax_rows(Ref a, std::vector<std::uint8_t> feasible);
    Ref leaky_relu(Ref a, real slope);
    Ref relu(Ref a);
    Ref tanh_op(Ref a);
    Ref exp_op(Ref a);
    Ref log_op(Ref a);
    Ref batchnorm_train(Ref x, Ref gamma, Ref beta, real eps, BnStats* stats = nullptr);
    Ref batchnorm_eval(Ref x, Ref gamma, Ref beta, const Tensor& run_mean, const Tensor& run_var,
                       real eps);
    Ref pick(Ref a, int r, int c);
    Ref min2(Ref a, Ref b);
    Ref clamp(Ref a, real lo, real hi);
    Ref entropy_masked(Ref p, std::vector<std::uint8_t> feasible);

    // Reverse sweep from `root`, seeding with `seed` (shape of root's value).
    // Each node is visited once; fan-out gradients accumulate additively.
    void backward(Ref root, const Tensor& seed);
    void backward(Ref root, real seed = 1.0);

    // Gradient of a node after backward; nullptr when none reached it.
    const Tensor* grad(Ref r) const;

    std::size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Op op = Op::Leaf;
        std::vector<Ref> in;
        Tensor value;
        const Tensor* external = nullptr;
        bool requires_grad = false;
        std::vector<int> iaux;
        std::vector<real> raux;
        std::vector<std::uint8_t> mask;
    };

    Ref push(Node n);
    bool any_grad(const std::vector<Ref>& rs) const;
    void accum(Ref r, const Tensor& g);
    void accum_scaled(Ref r, const Tensor& g, real s);

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    bool backward_done_ = false;
};

class EagerCtx {
public:
    using Ref = std::shared_ptr<const Tensor>;
    static constexpr bool kTapes = false;

    Ref leaf(const Tensor* t) { return Ref(Ref{}, t); }
    Ref lift(Tensor v) { return std::make_shared<const Tensor>(std::move(v)); }

    const Tensor& val(const Ref& r) const { return *r; }

    Ref matmul(Ref a, Ref b);
    Ref matmul_nt(Ref a, Ref b);
    Ref add(Ref a, Ref b) { return done(detail::fwd_add(*a, *b), Op::Add); }
    Ref add_rowvec(Ref a, Ref v) { return done(detail::fwd_add_rowvec(*a, *v), Op::AddRow); }
    Ref sub(Ref a, Ref b) { return done(detail::fwd_sub(*a, *b), Op::Sub); }
    Ref mul(Ref a, Ref b) { return done(detail::fwd_mul(*a, *b), Op::Mul); }
    Ref scale(Ref a, real c) { return done(detail::fwd_scale(*a, c), Op::Scale); }
    Ref add_const(Ref a, real c) { return done(detail::fwd_add_const(*a, c), Op::AddC); }
    Ref concat_cols(const std::vector<Ref>& xs);
    Ref gather_rows(Ref a, std::vector<int> idx) {
        return done(detail::fwd_gather_rows(*a, idx), Op::GatherRows);
    }
    Ref slice_cols(Ref a, int start, int len) {
        return done(detail::fwd_slice_cols(*a, start, len), Op::SliceCols);
    }
    Ref reshape(Ref a, std::vector<int> shape) {
        return done(detail::fwd_reshape(*a, shape), Op::Reshape);
    }
    Ref mean_rows(Ref a) { return done(detail::fwd_mean_rows(*a), Op::MeanRows); }
    Ref softmax_rows(Ref a);
    Ref masked_softmax_rows(Ref a, std::vector<std::uint8_t> feasible);
    Ref leaky_relu(Ref a, real slope);
    Ref relu(Ref a) { return done(detail::fwd_relu(*a), Op::Relu); }
    Ref tanh_op(Ref a) { return done(detail::fwd_tanh(*a), Op::Tanh); }
    Ref exp_op(Ref a) { return done(detail::fwd_exp(*a), Op::Exp); }
    Ref log_op(Ref a) { return done(detail::fwd_log(*a), Op::Log); }
    Ref batchnorm_train(Ref x, Ref gamma, Ref beta, real eps, BnStats* stats = nullptr) {
        detail::FwdAux aux;
        return done(detail::fwd_batchnorm_train(*x, *gamma, *beta, eps, aux, stats),
                    Op::BatchNormTrain);
    }
    Ref batchnorm_eval(Ref x, Ref gamma, Ref beta, const Tensor& run_mean, const Tensor& run_var,
                       real eps) {
        detail::FwdAux aux;
        return done(detail::fwd_batchnorm_eval(*x, *gamma, *beta, run_mean, run_var, eps, aux),
                    Op::BatchNormEval);
    }
    Ref pick(Ref a, int r, int c) { return done(detail::fwd_pick(*a, r, c), Op::Pick); }
    Ref min2(Ref a, Ref b) { return done(detail::fwd_min2(*a, *b), Op::Min2); }
    Ref clamp(Ref a, real lo, real hi) { return done(detail::fwd_clamp(*a, lo, hi), Op::Clamp); }
    Ref entropy_masked(Ref p, std::vector<std::uint8_t> feasible) {
        return done(detail::fwd_entropy_masked(*p, feasible), Op::EntropyMasked);
    }

private:
    Ref done(Tensor t, Op op) {
        detail::check_finite(t, op);
        return std::make_shared<const Tensor>(std::move(t));
    }
};

}  // namespace egat
