#include "egat/kernels.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace egat::kern {

namespace {

std::atomic<Backend> g_backend{Backend::OpenMP};
std::atomic<int> g_threads{0};

inline bool use_omp(std::size_t work) {
#ifdef _OPENMP
    // Small problems are not worth the fork/join; identical results either way.
    return g_backend.load(std::memory_order_relaxed) == Backend::OpenMP && work >= 32768 &&
           !omp_in_parallel();
#else
    (void)work;
    return false;
#endif
}

inline int pool_size() {
    int n = g_threads.load(std::memory_order_relaxed);
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    return n > 0 ? n : 1;
}

inline void check_mm(const Tensor& a, const Tensor& b, int q_a, int q_b, const char* name) {
    if (a.rank() > 2 || b.rank() > 2) throw Error(std::string(name) + ": rank > 2");
    if (q_a != q_b)
        throw Error(std::string(name) + ": inner extent mismatch " + shape_str(a.shape) + " vs " +
                    shape_str(b.shape));
}

inline void mm_row(const Tensor& a, const Tensor& b, Tensor& out, int i) {
    const int q = a.cols(), r = b.cols();
    const real* arow = a.data.data() + static_cast<std::size_t>(i) * q;
    real* orow = out.data.data() + static_cast<std::size_t>(i) * r;
    for (int j = 0; j < r; ++j) orow[j] = 0.0;
    for (int k = 0; k < q; ++k) {
        const real aik = arow[k];
        const real* brow = b.data.data() + static_cast<std::size_t>(k) * r;
        for (int j = 0; j < r; ++j) orow[j] += aik * brow[j];
    }
}

inline void mm_nt_row(const Tensor& a, const Tensor& b, Tensor& out, int i) {
    const int q = a.cols(), r = b.rows();
    const real* arow = a.data.data() + static_cast<std::size_t>(i) * q;
    real* orow = out.data.data() + static_cast<std::size_t>(i) * r;
    for (int j = 0; j < r; ++j) {
        const real* brow = b.data.data() + static_cast<std::size_t>(j) * q;
        real acc = 0.0;
        for (int k = 0; k < q; ++k) acc += arow[k] * brow[k];
        orow[j] = acc;
    }
}

inline void softmax_row(const real* in, real* out, int n) {
    real mx = in[0];
    for (int j = 1; j < n; ++j) mx = in[j] > mx ? in[j] : mx;
    real z = 0.0;
    for (int j = 0; j < n; ++j) {
        out[j] = std::exp(in[j] - mx);
        z += out[j];
    }
    const real inv = 1.0 / z;
    for (int j = 0; j < n; ++j) out[j] *= inv;
}

inline void masked_softmax_row(const real* in, const std::uint8_t* feas, real* out, int n) {
    real mx = 0.0;
    bool any = false;
    for (int j = 0; j < n; ++j) {
        if (!feas[j]) continue;
        if (!any || in[j] > mx) mx = in[j];
        any = true;
    }
    if (!any) throw Error("masked_softmax: empty feasible set");
    real z = 0.0;
    for (int j = 0; j < n; ++j) {
        if (feas[j]) {
            out[j] = std::exp(in[j] - mx);
            z += out[j];
        } else {
            out[j] = 0.0;
        }
    }
    const real inv = 1.0 / z;
    for (int j = 0; j < n; ++j) {
        if (feas[j]) out[j] *= inv;
    }
}

}  // namespace

void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }
Backend backend() { return g_backend.load(std::memory_order_relaxed); }

void set_threads(int n) {
    g_threads.store(n, std::memory_order_relaxed);
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#endif
}
int threads() { return pool_size(); }

void matmul(const Tensor& a, const Tensor& b, Tensor& out) {
    check_mm(a, b, a.cols(), b.rows(), "matmul");
    const int p = a.rows(), r = b.cols();
    out = Tensor::zeros({p, r});
    const std::size_t work = static_cast<std::size_t>(p) * a.cols() * r;
    if (use_omp(work)) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < p; ++i) mm_row(a, b, out, i);
    } else {
        for (int i = 0; i < p; ++i) mm_row(a, b, out, i);
    }
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out) {
    check_mm(a, b, a.cols(), b.cols(), "matmul_nt");
    const int p = a.rows(), r = b.rows();
    out = Tensor::zeros({p, r});
    const std::size_t work = static_cast<std::size_t>(p) * a.cols() * r;
    if (use_omp(work)) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < p; ++i) mm_nt_row(a, b, out, i);
    } else {
        for (int i = 0; i < p; ++i) mm_nt_row(a, b, out, i);
    }
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out) {
    check_mm(a, b, a.rows(), b.rows(), "matmul_tn");
    const int p = a.cols(), q = a.rows(), r = b.cols();
    out = Tensor::zeros({p, r});
    const std::size_t work = static_cast<std::size_t>(p) * q * r;
    auto row = [&](int i) {
        real* orow = out.data.data() + static_cast<std::size_t>(i) * r;
        for (int k = 0; k < q; ++k) {
            const real aki = a.data[static_cast<std::size_t>(k) * p + i];
            const real* brow = b.data.data() + static_cast<std::size_t>(k) * r;
            for (int j = 0; j < r; ++j) orow[j] += aki * brow[j];
        }
    };
    if (use_omp(work)) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < p; ++i) row(i);
    } else {
        for (int i = 0; i < p; ++i) row(i);
    }
}

void softmax_rows(const Tensor& a, Tensor& out) {
    const int rws = a.rows(), n = a.cols();
    out = Tensor::zeros(a.shape);
    const std::size_t work = a.size() * 8;
    if (use_omp(work)) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < rws; ++i)
            softmax_row(a.data.data() + static_cast<std::size_t>(i) * n,
                        out.data.data() + static_cast<std::size_t>(i) * n, n);
    } else {
        for (int i = 0; i < rws; ++i)
            softmax_row(a.data.data() + static_cast<std::size_t>(i) * n,
                        out.data.data() + static_cast<std::size_t>(i) * n, n);
    }
}

void masked_softmax_rows(const Tensor& a, const std::vector<std::uint8_t>& feasible, Tensor& out) {
    const int rws = a.rows(), n = a.cols();
    if (static_cast<int>(feasible.size()) != n) throw Error("masked_softmax: mask length mismatch");
    out = Tensor::zeros(a.shape);
    for (int i = 0; i < rws; ++i)
        masked_softmax_row(a.data.data() + static_cast<std::size_t>(i) * n, feasible.data(),
                           out.data.data() + static_cast<std::size_t>(i) * n, n);
}

void leaky_relu(const Tensor& a, real slope, Tensor& out) {
    out = Tensor::zeros(a.shape);
    const std::size_t n = a.size();
    if (use_omp(n * 4)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
            out.data[i] = a.data[i] > 0.0 ? a.data[i] : slope * a.data[i];
    } else {
        for (std::size_t i = 0; i < n; ++i)
            out.data[i] = a.data[i] > 0.0 ? a.data[i] : slope * a.data[i];
    }
}

void parallel_for(int n, const std::function<void(int)>& fn) {
#ifdef _OPENMP
    if (g_backend.load(std::memory_order_relaxed) == Backend::OpenMP && n > 1 &&
        !omp_in_parallel()) {
        // Exceptions may not escape an OpenMP region; capture per index and
        // rethrow the lowest one so failures are reported deterministically.
        std::vector<std::exception_ptr> errs(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic, 1)
        for (int i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
                errs[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
        for (auto& e : errs)
            if (e) std::rethrow_exception(e);
        return;
    }
#endif
    for (int i = 0; i < n; ++i) fn(i);
}

}  // namespace egat::kern
