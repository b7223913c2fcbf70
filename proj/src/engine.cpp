#include "egat/engine.hpp"

#include "egat/kernels.hpp"

#include <cmath>
#include <cstring>

namespace egat {

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Const: return "const";
        case Op::MatMul: return "matmul";
        case Op::MatMulNT: return "matmul_nt";
        case Op::Add: return "add";
        case Op::AddRow: return "add_rowvec";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Scale: return "scale";
        case Op::AddC: return "add_const";
        case Op::ConcatCols: return "concat_cols";
        case Op::GatherRows: return "gather_rows";
        case Op::SliceCols: return "slice_cols";
        case Op::Reshape: return "reshape";
        case Op::MeanRows: return "mean_rows";
        case Op::SoftmaxRows: return "softmax";
        case Op::MaskedSoftmaxRows: return "masked_softmax";
        case Op::LeakyRelu: return "leaky_relu";
        case Op::Relu: return "relu";
        case Op::Tanh: return "tanh";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::BatchNormTrain: return "batchnorm_train";
        case Op::BatchNormEval: return "batchnorm_eval";
        case Op::Pick: return "pick";
        case Op::Min2: return "min2";
        case Op::Clamp: return "clamp";
        case Op::EntropyMasked: return "entropy_masked";
    }
    return "?";
}

namespace detail {

void check_finite(const Tensor& t, Op op) {
    for (real v : t.data) {
        if (!std::isfinite(v))
            throw NumericError(std::string("non-finite value in op '") + op_name(op) + "'");
    }
}

namespace {
void need_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw Error(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                    shape_str(b.shape));
}
}  // namespace

Tensor fwd_add(const Tensor& a, const Tensor& b) {
    need_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Tensor fwd_add_rowvec(const Tensor& a, const Tensor& v) {
    if (v.rows() != 1 || v.cols() != a.cols())
        throw Error("add_rowvec: want 1x" + std::to_string(a.cols()) + ", got " +
                    shape_str(v.shape));
    Tensor out = a;
    const int r = a.rows(), c = a.cols();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.data[static_cast<std::size_t>(i) * c + j] += v.data[j];
    return out;
}

Tensor fwd_sub(const Tensor& a, const Tensor& b) {
    need_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

Tensor fwd_mul(const Tensor& a, const Tensor& b) {
    need_same_shape(a, b, "mul");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

Tensor fwd_scale(const Tensor& a, real c) {
    Tensor out = a;
    for (real& v : out.data) v *= c;
    return out;
}

Tensor fwd_add_const(const Tensor& a, real c) {
    Tensor out = a;
    for (real& v : out.data) v += c;
    return out;
}

Tensor fwd_concat_cols(const std::vector<const Tensor*>& xs) {
    if (xs.empty()) throw Error("concat_cols: no inputs");
    const int r = xs[0]->rows();
    int c = 0;
    for (const Tensor* x : xs) {
        if (x->rows() != r) throw Error("concat_cols: row mismatch");
        c += x->cols();
    }
    Tensor out = Tensor::zeros({r, c});
    int off = 0;
    for (const Tensor* x : xs) {
        const int xc = x->cols();
        for (int i = 0; i < r; ++i)
            std::memcpy(out.data.data() + static_cast<std::size_t>(i) * c + off,
                        x->data.data() + static_cast<std::size_t>(i) * xc,
                        sizeof(real) * static_cast<std::size_t>(xc));
        off += xc;
    }
    return out;
}

Tensor fwd_gather_rows(const Tensor& a, const std::vector<int>& idx) {
    const int r = a.rows(), c = a.cols();
    Tensor out = Tensor::zeros({static_cast<int>(idx.size()), c});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= r) throw Error("gather_rows: index out of range");
        std::memcpy(out.data.data() + i * c, a.data.data() + static_cast<std::size_t>(idx[i]) * c,
                    sizeof(real) * static_cast<std::size_t>(c));
    }
    return out;
}

Tensor fwd_slice_cols(const Tensor& a, int start, int len) {
    const int r = a.rows(), c = a.cols();
    if (start < 0 || len <= 0 || start + len > c) throw Error("slice_cols: range out of bounds");
    Tensor out = Tensor::zeros({r, len});
    for (int i = 0; i < r; ++i)
        std::memcpy(out.data.data() + static_cast<std::size_t>(i) * len,
                    a.data.data() + static_cast<std::size_t>(i) * c + start,
                    sizeof(real) * static_cast<std::size_t>(len));
    return out;
}

Tensor fwd_reshape(const Tensor& a, const std::vector<int>& shape) {
    if (Tensor::numel(shape) != a.size()) throw Error("reshape: element count mismatch");
    Tensor out = a;
    out.shape = shape;
    return out;
}

Tensor fwd_mean_rows(const Tensor& a) {
    const int r = a.rows(), c = a.cols();
    Tensor out = Tensor::zeros({1, c});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.data[j] += a.data[static_cast<std::size_t>(i) * c + j];
    for (int j = 0; j < c; ++j) out.data[j] /= static_cast<real>(r);
    return out;
}

Tensor fwd_tanh(const Tensor& a) {
    Tensor out = a;
    for (real& v : out.data) v = std::tanh(v);
    return out;
}

Tensor fwd_exp(const Tensor& a) {
    Tensor out = a;
    for (real& v : out.data) v = std::exp(v);
    return out;
}

Tensor fwd_log(const Tensor& a) {
    Tensor out = a;
    for (real& v : out.data) v = std::log(v);
    return out;
}

Tensor fwd_relu(const Tensor& a) {
    Tensor out = a;
    for (real& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor fwd_pick(const Tensor& a, int r, int c) {
    if (r < 0 || r >= a.rows() || c < 0 || c >= a.cols()) throw Error("pick: out of range");
    return Tensor::scalar(a.at(r, c));
}

Tensor fwd_min2(const Tensor& a, const Tensor& b) {
    need_same_shape(a, b, "min2");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = a.data[i] <= b.data[i] ? a.data[i] : b.data[i];
    return out;
}

Tensor fwd_clamp(const Tensor& a, real lo, real hi) {
    Tensor out = a;
    for (real& v : out.data) v = v < lo ? lo : (v > hi ? hi : v);
    return out;
}

Tensor fwd_entropy_masked(const Tensor& p, const std::vector<std::uint8_t>& feasible) {
    if (static_cast<int>(feasible.size()) != p.cols())
        throw Error("entropy_masked: mask length mismatch");
    real h = 0.0;
    for (int i = 0; i < p.rows(); ++i)
        for (int j = 0; j < p.cols(); ++j) {
            if (!feasible[j]) continue;
            const real v = p.at(i, j);
            if (v > 1e-300) h -= v * std::log(v);
        }
    return Tensor::scalar(h);
}

// raux = [eps, mean(C), invstd(C)]
Tensor fwd_batchnorm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps,
                           FwdAux& aux, BnStats* stats) {
    const int n = x.rows(), c = x.cols();
    if (gamma.cols() != c || beta.cols() != c) throw Error("batchnorm: affine size mismatch");
    std::vector<real> mean(c, 0.0), var(c, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) mean[j] += x.at(i, j);
    for (int j = 0; j < c; ++j) mean[j] /= static_cast<real>(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            const real d = x.at(i, j) - mean[j];
            var[j] += d * d;
        }
    for (int j = 0; j < c; ++j) var[j] /= static_cast<real>(n);

    Tensor out = Tensor::zeros(x.shape);
    aux.raux.resize(1 + 2 * static_cast<std::size_t>(c));
    aux.raux[0] = eps;
    for (int j = 0; j < c; ++j) {
        aux.raux[1 + j] = mean[j];
        aux.raux[1 + c + j] = 1.0 / std::sqrt(var[j] + eps);
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            const real xhat = (x.at(i, j) - mean[j]) * aux.raux[1 + c + j];
            out.at(i, j) = gamma.data[j] * xhat + beta.data[j];
        }
    if (stats) {
        stats->mean = mean;
        stats->var_unbiased.assign(c, 0.0);
        const real corr = n > 1 ? static_cast<real>(n) / static_cast<real>(n - 1) : 1.0;
        for (int j = 0; j < c; ++j) stats->var_unbiased[j] = var[j] * corr;
        stats->count = n;
    }
    return out;
}

// raux = [eps, rmean(C), rinvstd(C)]
Tensor fwd_batchnorm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          const Tensor& run_mean, const Tensor& run_var, real eps, FwdAux& aux) {
    const int n = x.rows(), c = x.cols();
    if (gamma.cols() != c || beta.cols() != c || run_mean.cols() != c || run_var.cols() != c)
        throw Error("batchnorm_eval: size mismatch");
    aux.raux.resize(1 + 2 * static_cast<std::size_t>(c));
    aux.raux[0] = eps;
    for (int j = 0; j < c; ++j) {
        aux.raux[1 + j] = run_mean.data[j];
        aux.raux[1 + c + j] = 1.0 / std::sqrt(run_var.data[j] + eps);
    }
    Tensor out = Tensor::zeros(x.shape);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            const real xhat = (x.at(i, j) - aux.raux[1 + j]) * aux.raux[1 + c + j];
            out.at(i, j) = gamma.data[j] * xhat + beta.data[j];
        }
    return out;
}

}  // namespace detail

// ============================== TapeCtx =====================================

TapeCtx::Ref TapeCtx::push(Node n) {
    if (!n.external) detail::check_finite(n.value, n.op);
    nodes_.push_back(std::move(n));
    return static_cast<Ref>(nodes_.size() - 1);
}

const Tensor& TapeCtx::val(Ref r) const {
    const Node& n = nodes_[static_cast<std::size_t>(r)];
    return n.external ? *n.external : n.value;
}

bool TapeCtx::any_grad(const std::vector<Ref>& rs) const {
    for (Ref r : rs)
        if (nodes_[static_cast<std::size_t>(r)].requires_grad) return true;
    return false;
}

TapeCtx::Ref TapeCtx::leaf(const Tensor* t) {
    Node n;
    n.op = Op::Leaf;
    n.external = t;
    n.requires_grad = t->requires_grad;
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::lift(Tensor v) {
    Node n;
    n.op = Op::Const;
    n.requires_grad = v.requires_grad;
    n.value = std::move(v);
    return push(std::move(n));
}

#define EGAT_NODE2(OP, A, B)                 \
    Node n;                                  \
    n.op = OP;                               \
    n.in = {A, B};                           \
    n.requires_grad = any_grad(n.in);

#define EGAT_NODE1(OP, A)                    \
    Node n;                                  \
    n.op = OP;                               \
    n.in = {A};                              \
    n.requires_grad = any_grad(n.in);

TapeCtx::Ref TapeCtx::matmul(Ref a, Ref b) {
    EGAT_NODE2(Op::MatMul, a, b);
    kern::matmul(val(a), val(b), n.value);
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::matmul_nt(Ref a, Ref b) {
    EGAT_NODE2(Op::MatMulNT, a, b);
    kern::matmul_nt(val(a), val(b), n.value);
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::add(Ref a, Ref b) {
    EGAT_NODE2(Op::Add, a, b);
    n.value = detail::fwd_add(val(a), val(b));
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::add_rowvec(Ref a, Ref v) {
    EGAT_NODE2(Op::AddRow, a, v);
    n.value = detail::fwd_add_rowvec(val(a), val(v));
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::sub(Ref a, Ref b) {
    EGAT_NODE2(Op::Sub, a, b);
    n.value = detail::fwd_sub(val(a), val(b));
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::mul(Ref a, Ref b) {
    EGAT_NODE2(Op::Mul, a, b);
    n.value = detail::fwd_mul(val(a), val(b));
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::scale(Ref a, real c) {
    EGAT_NODE1(Op::Scale, a);
    n.raux = {c};
    n.value = detail::fwd_scale(val(a), c);
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::add_const(Ref a, real c) {
    EGAT_NODE1(Op::AddC, a);
    n.raux = {c};
    n.value = detail::fwd_add_const(val(a), c);
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::concat_cols(const std::vector<Ref>& xs) {
    if (xs.empty()) throw Error("concat_cols: no inputs");
    Node n;
    n.op = Op::ConcatCols;
    n.in = xs;
    n.requires_grad = any_grad(n.in);
    std::vector<const Tensor*> ptrs;
    for (Ref r : xs) ptrs.push_back(&val(r));
    n.value = detail::fwd_concat_cols(ptrs);
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::gather_rows(Ref a, std::vector<int> idx) {
    EGAT_NODE1(Op::GatherRows, a);
    n.value = detail::fwd_gather_rows(val(a), idx);
    n.iaux = std::move(idx);
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::slice_cols(Ref a, int start, int len) {
    EGAT_NODE1(Op::SliceCols, a);
    n.iaux = {start, len};
    n.value = detail::fwd_slice_cols(val(a), start, len);
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::reshape(Ref a, std::vector<int> shape) {
    EGAT_NODE1(Op::Reshape, a);
    n.value = detail::fwd_reshape(val(a), shape);
    n.iaux.assign(val(a).shape.begin(), val(a).shape.end());
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::mean_rows(Ref a) {
    EGAT_NODE1(Op::MeanRows, a);
    n.value = detail::fwd_mean_rows(val(a));
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::softmax_rows(Ref a) {
    EGAT_NODE1(Op::SoftmaxRows, a);
    kern::softmax_rows(val(a), n.value);
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::masked_softmax_rows(Ref a, std::vector<std::uint8_t> feasible) {
    EGAT_NODE1(Op::MaskedSoftmaxRows, a);
    kern::masked_softmax_rows(val(a), feasible, n.value);
    n.mask = std::move(feasible);
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::leaky_relu(Ref a, real slope) {
    EGAT_NODE1(Op::LeakyRelu, a);
    n.raux = {slope};
    kern::leaky_relu(val(a), slope, n.value);
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::relu(Ref a) {
    EGAT_NODE1(Op::Relu, a);
    n.value = detail::fwd_relu(val(a));
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::tanh_op(Ref a) {
    EGAT_NODE1(Op::Tanh, a);
    n.value = detail::fwd_tanh(val(a));
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::exp_op(Ref a) {
    EGAT_NODE1(Op::Exp, a);
    n.value = detail::fwd_exp(val(a));
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::log_op(Ref a) {
    EGAT_NODE1(Op::Log, a);
    n.value = detail::fwd_log(val(a));
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::batchnorm_train(Ref x, Ref gamma, Ref beta, real eps, BnStats* stats) {
    Node n;
    n.op = Op::BatchNormTrain;
    n.in = {x, gamma, beta};
    n.requires_grad = any_grad(n.in);
    detail::FwdAux aux;
    n.value = detail::fwd_batchnorm_train(val(x), val(gamma), val(beta), eps, aux, stats);
    n.raux = std::move(aux.raux);
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::batchnorm_eval(Ref x, Ref gamma, Ref beta, const Tensor& run_mean,
                                     const Tensor& run_var, real eps) {
    Node n;
    n.op = Op::BatchNormEval;
    n.in = {x, gamma, beta};
    n.requires_grad = any_grad(n.in);
    detail::FwdAux aux;
    n.value = detail::fwd_batchnorm_eval(val(x), val(gamma), val(beta), run_mean, run_var, eps, aux);
    n.raux = std::move(aux.raux);
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::pick(Ref a, int r, int c) {
    EGAT_NODE1(Op::Pick, a);
    n.iaux = {r, c};
    n.value = detail::fwd_pick(val(a), r, c);
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::min2(Ref a, Ref b) {
    EGAT_NODE2(Op::Min2, a, b);
    n.value = detail::fwd_min2(val(a), val(b));
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::clamp(Ref a, real lo, real hi) {
    EGAT_NODE1(Op::Clamp, a);
    n.raux = {lo, hi};
    n.value = detail::fwd_clamp(val(a), lo, hi);
    return push(std::move(n));
}

TapeCtx::Ref TapeCtx::entropy_masked(Ref p, std::vector<std::uint8_t> feasible) {
    EGAT_NODE1(Op::EntropyMasked, p);
    n.value = detail::fwd_entropy_masked(val(p), feasible);
    n.mask = std::move(feasible);
    return push(std::move(n));
}

#undef EGAT_NODE1
#undef EGAT_NODE2

void TapeCtx::accum(Ref r, const Tensor& g) {
    Tensor& slot = grads_[static_cast<std::size_t>(r)];
    if (slot.data.empty()) {
        slot = g;
        return;
    }
    for (std::size_t i = 0; i < slot.size(); ++i) slot.data[i] += g.data[i];
}

void TapeCtx::accum_scaled(Ref r, const Tensor& g, real s) {
    Tensor& slot = grads_[static_cast<std::size_t>(r)];
    if (slot.data.empty()) slot = Tensor::zeros(val(r).shape);
    for (std::size_t i = 0; i < slot.size(); ++i) slot.data[i] += s * g.data[i];
}

const Tensor* TapeCtx::grad(Ref r) const {
    if (static_cast<std::size_t>(r) >= grads_.size()) return nullptr;
    const Tensor& g = grads_[static_cast<std::size_t>(r)];
    return g.data.empty() ? nullptr : &g;
}

void TapeCtx::backward(Ref root, real seed) {
    const Tensor& rv = val(root);
    if (rv.size() != 1) throw Error("backward: scalar seed on non-scalar root");
    Tensor s = rv;
    s.data[0] = seed;
    backward(root, s);
}

void TapeCtx::backward(Ref root, const Tensor& seed) {
    if (backward_done_) throw Error("backward: called twice without reset");
    backward_done_ = true;
    if (!seed.same_shape(val(root))) throw Error("backward: seed shape mismatch");
    grads_.assign(nodes_.size(), Tensor{});
    if (!nodes_[static_cast<std::size_t>(root)].requires_grad) return;
    grads_[static_cast<std::size_t>(root)] = seed;

    for (Ref i = root; i >= 0; --i) {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.requires_grad) continue;
        const Tensor& g = grads_[static_cast<std::size_t>(i)];
        if (g.data.empty()) continue;

        auto rg = [&](int k) { return nodes_[static_cast<std::size_t>(n.in[k])].requires_grad; };

        switch (n.op) {
            case Op::Leaf:
            case Op::Const:
                break;
            case Op::MatMul: {
                const Tensor& a = val(n.in[0]);
                const Tensor& b = val(n.in[1]);
                if (rg(0)) {
                    Tensor da;
                    kern::matmul_nt(g, b, da);
                    accum(n.in[0], da);
                }
                if (rg(1)) {
                    Tensor db;
                    kern::matmul_tn(a, g, db);
                    accum(n.in[1], db);
                }
                break;
            }
            case Op::MatMulNT: {
                // C = A * B^T: dA = G * B, dB = G^T * A
                const Tensor& a = val(n.in[0]);
                const Tensor& b = val(n.in[1]);
                if (rg(0)) {
                    Tensor da;
                    kern::matmul(g, b, da);
                    accum(n.in[0], da);
                }
                if (rg(1)) {
                    Tensor db;
                    kern::matmul_tn(g, a, db);
                    accum(n.in[1], db);
                }
                break;
            }
            case Op::Add:
                if (rg(0)) accum(n.in[0], g);
                if (rg(1)) accum(n.in[1], g);
                break;
            case Op::AddRow: {
                if (rg(0)) accum(n.in[0], g);
                if (rg(1)) {
                    const int r = g.rows(), c = g.cols();
                    Tensor dv = Tensor::zeros({1, c});
                    for (int ii = 0; ii < r; ++ii)
                        for (int j = 0; j < c; ++j) dv.data[j] += g.at(ii, j);
                    accum(n.in[1], dv);
                }
                break;
            }
            case Op::Sub:
                if (rg(0)) accum(n.in[0], g);
                if (rg(1)) accum_scaled(n.in[1], g, -1.0);
                break;
            case Op::Mul: {
                if (rg(0)) accum(n.in[0], detail::fwd_mul(g, val(n.in[1])));
                if (rg(1)) accum(n.in[1], detail::fwd_mul(g, val(n.in[0])));
                break;
            }
            case Op::Scale:
                if (rg(0)) accum_scaled(n.in[0], g, n.raux[0]);
                break;
            case Op::AddC:
                if (rg(0)) accum(n.in[0], g);
                break;
            case Op::ConcatCols: {
                int off = 0;
                for (int k = 0; k < static_cast<int>(n.in.size()); ++k) {
                    const int w = val(n.in[k]).cols();
                    if (rg(k)) accum(n.in[k], detail::fwd_slice_cols(g, off, w));
                    off += w;
                }
                break;
            }
            case Op::GatherRows: {
                if (rg(0)) {
                    const Tensor& a = val(n.in[0]);
                    Tensor da = Tensor::zeros(a.shape);
                    const int c = a.cols();
                    for (std::size_t k = 0; k < n.iaux.size(); ++k)
                        for (int j = 0; j < c; ++j)
                            da.data[static_cast<std::size_t>(n.iaux[k]) * c + j] +=
                                g.data[k * c + j];
                    accum(n.in[0], da);
                }
                break;
            }
            case Op::SliceCols: {
                if (rg(0)) {
                    const Tensor& a = val(n.in[0]);
                    Tensor da = Tensor::zeros(a.shape);
                    const int start = n.iaux[0], len = n.iaux[1], c = a.cols();
                    for (int ii = 0; ii < a.rows(); ++ii)
                        for (int j = 0; j < len; ++j)
                            da.data[static_cast<std::size_t>(ii) * c + start + j] += g.at(ii, j);
                    accum(n.in[0], da);
                }
                break;
            }
            case Op::Reshape: {
                if (rg(0)) {
                    Tensor da = g;
                    da.shape.assign(n.iaux.begin(), n.iaux.end());
                    accum(n.in[0], da);
                }
                break;
            }
            case Op::MeanRows: {
                if (rg(0)) {
                    const Tensor& a = val(n.in[0]);
                    const int r = a.rows(), c = a.cols();
                    Tensor da = Tensor::zeros(a.shape);
                    const real inv = 1.0 / static_cast<real>(r);
                    for (int ii = 0; ii < r; ++ii)
                        for (int j = 0; j < c; ++j) da.at(ii, j) = g.data[j] * inv;
                    accum(n.in[0], da);
                }
                break;
            }
            case Op::SoftmaxRows:
            case Op::MaskedSoftmaxRows: {
                if (rg(0)) {
                    const Tensor& y = n.value;
                    const int r = y.rows(), c = y.cols();
                    Tensor da = Tensor::zeros(y.shape);
                    for (int ii = 0; ii < r; ++ii) {
                        real dot = 0.0;
                        for (int j = 0; j < c; ++j) dot += g.at(ii, j) * y.at(ii, j);
                        for (int j = 0; j < c; ++j) {
                            if (n.op == Op::MaskedSoftmaxRows && !n.mask[j]) continue;
                            da.at(ii, j) = y.at(ii, j) * (g.at(ii, j) - dot);
                        }
                    }
                    accum(n.in[0], da);
                }
                break;
            }
            case Op::LeakyRelu: {
                if (rg(0)) {
                    const Tensor& a = val(n.in[0]);
                    Tensor da = g;
                    for (std::size_t k = 0; k < da.size(); ++k)
                        if (a.data[k] <= 0.0) da.data[k] *= n.raux[0];
                    accum(n.in[0], da);
                }
                break;
            }
            case Op::Relu: {
                if (rg(0)) {
                    const Tensor& a = val(n.in[0]);
                    Tensor da = g;
                    for (std::size_t k = 0; k < da.size(); ++k)
                        if (a.data[k] <= 0.0) da.data[k] = 0.0;
                    accum(n.in[0], da);
                }
                break;
            }
            case Op::Tanh: {
                if (rg(0)) {
                    Tensor da = g;
                    for (std::size_t k = 0; k < da.size(); ++k)
                        da.data[k] *= 1.0 - n.value.data[k] * n.value.data[k];
                    accum(n.in[0], da);
                }
                break;
            }
            case Op::Exp: {
                if (rg(0)) accum(n.in[0], detail::fwd_mul(g, n.value));
                break;
            }
            case Op::Log: {
                if (rg(0)) {
                    const Tensor& a = val(n.in[0]);
                    Tensor da = g;
                    for (std::size_t k = 0; k < da.size(); ++k) da.data[k] /= a.data[k];
                    accum(n.in[0], da);
                }
                break;
            }
            case Op::BatchNormTrain: {
                const Tensor& x = val(n.in[0]);
                const Tensor& gamma = val(n.in[1]);
                const int nr = x.rows(), c = x.cols();
                const real* mean = n.raux.data() + 1;
                const real* invstd = mean + c;
                // dβ, dγ and the standard dx through batch statistics.
                Tensor dgamma = Tensor::zeros({1, c});
                Tensor dbeta = Tensor::zeros({1, c});
                std::vector<real> sum_dxh(c, 0.0), sum_dxh_xh(c, 0.0);
                for (int ii = 0; ii < nr; ++ii)
                    for (int j = 0; j < c; ++j) {
                        const real xhat = (x.at(ii, j) - mean[j]) * invstd[j];
                        const real go = g.at(ii, j);
                        dbeta.data[j] += go;
                        dgamma.data[j] += go * xhat;
                        const real dxh = go * gamma.data[j];
                        sum_dxh[j] += dxh;
                        sum_dxh_xh[j] += dxh * xhat;
                    }
                if (rg(0)) {
                    Tensor dx = Tensor::zeros(x.shape);
                    const real invn = 1.0 / static_cast<real>(nr);
                    for (int ii = 0; ii < nr; ++ii)
                        for (int j = 0; j < c; ++j) {
                            const real xhat = (x.at(ii, j) - mean[j]) * invstd[j];
                            const real dxh = g.at(ii, j) * gamma.data[j];
                            dx.at(ii, j) =
                                invstd[j] * (dxh - invn * sum_dxh[j] - xhat * invn * sum_dxh_xh[j]);
                        }
                    accum(n.in[0], dx);
                }
                if (rg(1)) accum(n.in[1], dgamma);
                if (rg(2)) accum(n.in[2], dbeta);
                break;
            }
            case Op::BatchNormEval: {
                const Tensor& x = val(n.in[0]);
                const Tensor& gamma = val(n.in[1]);
                const int nr = x.rows(), c = x.cols();
                const real* mean = n.raux.data() + 1;
                const real* invstd = mean + c;
                if (rg(0)) {
                    Tensor dx = Tensor::zeros(x.shape);
                    for (int ii = 0; ii < nr; ++ii)
                        for (int j = 0; j < c; ++j)
                            dx.at(ii, j) = g.at(ii, j) * gamma.data[j] * invstd[j];
                    accum(n.in[0], dx);
                }
                if (rg(1)) {
                    Tensor dgamma = Tensor::zeros({1, c});
                    for (int ii = 0; ii < nr; ++ii)
                        for (int j = 0; j < c; ++j)
                            dgamma.data[j] += g.at(ii, j) * (x.at(ii, j) - mean[j]) * invstd[j];
                    accum(n.in[1], dgamma);
                }
                if (rg(2)) {
                    Tensor dbeta = Tensor::zeros({1, c});
                    for (int ii = 0; ii < nr; ++ii)
                        for (int j = 0; j < c; ++j) dbeta.data[j] += g.at(ii, j);
                    accum(n.in[2], dbeta);
                }
                break;
            }
            case Op::Pick: {
                if (rg(0)) {
                    Tensor da = Tensor::zeros(val(n.in[0]).shape);
                    da.at(n.iaux[0], n.iaux[1]) = g.data[0];
                    accum(n.in[0], da);
                }
                break;
            }
            case Op::Min2: {
                const Tensor& a = val(n.in[0]);
                const Tensor& b = val(n.in[1]);
                if (rg(0)) {
                    Tensor da = g;
                    for (std::size_t k = 0; k < da.size(); ++k)
                        if (!(a.data[k] <= b.data[k])) da.data[k] = 0.0;
                    accum(n.in[0], da);
                }
                if (rg(1)) {
                    Tensor db = g;
                    for (std::size_t k = 0; k < db.size(); ++k)
                        if (a.data[k] <= b.data[k]) db.data[k] = 0.0;
                    accum(n.in[1], db);
                }
                break;
            }
            case Op::Clamp: {
                if (rg(0)) {
                    const Tensor& a = val(n.in[0]);
                    Tensor da = g;
                    for (std::size_t k = 0; k < da.size(); ++k)
                        if (a.data[k] < n.raux[0] || a.data[k] > n.raux[1]) da.data[k] = 0.0;
                    accum(n.in[0], da);
                }
                break;
            }
            case Op::EntropyMasked: {
                if (rg(0)) {
                    const Tensor& p = val(n.in[0]);
                    Tensor dp = Tensor::zeros(p.shape);
                    for (int ii = 0; ii < p.rows(); ++ii)
                        for (int j = 0; j < p.cols(); ++j) {
                            if (!n.mask[j]) continue;
                            const real v = p.at(ii, j);
                            if (v > 1e-300) dp.at(ii, j) = -g.data[0] * (std::log(v) + 1.0);
                        }
                    accum(n.in[0], dp);
                }
                break;
            }
        }
        // Interior gradients can be released once propagated; leaves keep theirs.
        if (n.op != Op::Leaf && n.op != Op::Const && static_cast<Ref>(i) != root)
            grads_[static_cast<std::size_t>(i)] = Tensor{};
    }
}

// ============================== EagerCtx ====================================

EagerCtx::Ref EagerCtx::matmul(Ref a, Ref b) {
    Tensor out;
    kern::matmul(*a, *b, out);
    return done(std::move(out), Op::MatMul);
}

EagerCtx::Ref EagerCtx::matmul_nt(Ref a, Ref b) {
    Tensor out;
    kern::matmul_nt(*a, *b, out);
    return done(std::move(out), Op::MatMulNT);
}

EagerCtx::Ref EagerCtx::concat_cols(const std::vector<Ref>& xs) {
    std::vector<const Tensor*> ptrs;
    for (const Ref& r : xs) ptrs.push_back(r.get());
    return done(detail::fwd_concat_cols(ptrs), Op::ConcatCols);
}

EagerCtx::Ref EagerCtx::softmax_rows(Ref a) {
    Tensor out;
    kern::softmax_rows(*a, out);
    return done(std::move(out), Op::SoftmaxRows);
}

EagerCtx::Ref EagerCtx::masked_softmax_rows(Ref a, std::vector<std::uint8_t> feasible) {
    Tensor out;
    kern::masked_softmax_rows(*a, feasible, out);
    return done(std::move(out), Op::MaskedSoftmaxRows);
}

EagerCtx::Ref EagerCtx::leaky_relu(Ref a, real slope) {
    Tensor out;
    kern::leaky_relu(*a, slope, out);
    return done(std::move(out), Op::LeakyRelu);
}

}  // namespace egat
