#pragma once

// Raw numeric kernels shared by the tape and eager engines. Every kernel has
// a serial reference implementation and an OpenMP variant that partitions
// work by output row with an identical inner loop, so the two backends
// produce bitwise-equal results. The serial path is kept as the test oracle;
// tools/bench_kernels compares throughput.

#include "egat/tensor.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace egat::kern {

enum class Backend { Serial, OpenMP };

void set_backend(Backend b);
Backend backend();

// Worker-pool size used by both kernel- and batch-level parallel loops.
// 0 = hardware concurrency.
void set_threads(int n);
int threads();

// out = a(p,q) * b(q,r)
void matmul(const Tensor& a, const Tensor& b, Tensor& out);
// out = a(p,q) * b(r,q)^T
void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out);
// out = a(q,p)^T * b(q,r)
void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out);

// Row-wise softmax; masked variant writes exact zeros at masked columns and
// normalizes over the unmasked ones.
void softmax_rows(const Tensor& a, Tensor& out);
void masked_softmax_rows(const Tensor& a, const std::vector<std::uint8_t>& feasible, Tensor& out);

void leaky_relu(const Tensor& a, real slope, Tensor& out);

// Batch-level helper: runs fn(i) for i in [0,n). Deterministic given the
// loop body (each index owns its output slot). Parallel when the backend is
// OpenMP and no parallel region is already active.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace egat::kern
