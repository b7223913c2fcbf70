// Throughput comparison of the serial reference kernels against the OpenMP
// variants, plus a batch-rollout comparison at the model level. The two
// backends are bitwise-identical by construction; this tool only reports
// speed.

#include "egat/kernels.hpp"
#include "egat/model.hpp"

#include <chrono>
#include <cstdio>
#include <vector>

using namespace egat;

namespace {

double wall() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

Tensor random_matrix(int r, int c, Rng& rng) {
    Tensor t = Tensor::zeros({r, c});
    for (real& v : t.data) v = rng.normal();
    return t;
}

double bench_matmul(int n, kern::Backend backend, int reps) {
    kern::set_backend(backend);
    Rng rng(7);
    Tensor a = random_matrix(n, n, rng);
    Tensor b = random_matrix(n, n, rng);
    Tensor out;
    kern::matmul(a, b, out);  // warm up
    const double t0 = wall();
    for (int r = 0; r < reps; ++r) kern::matmul(a, b, out);
    return (wall() - t0) / reps;
}

double bench_batch_rollout(int batch, kern::Backend backend) {
    kern::set_backend(backend);
    ModelConfig cfg;
    cfg.node_dim = 64;
    cfg.edge_dim = 16;
    cfg.layers = 2;
    cfg.problem = Problem::Tsp;
    Rng prng(3);
    ParamStore params = build_params(cfg, InitKind::Xavier, prng);
    std::vector<Instance> instances;
    for (int i = 0; i < batch; ++i)
        instances.push_back(generate_tsp(20, 100 + static_cast<std::uint64_t>(i)));

    const double t0 = wall();
    std::vector<real> lengths(instances.size());
    kern::parallel_for(batch, [&](int i) {
        EagerCtx cx;
        Bound<EagerCtx> bp(cx, params);
        RolloutOptions opts;
        lengths[static_cast<std::size_t>(i)] =
            rollout(cx, bp, cfg, instances[static_cast<std::size_t>(i)], opts).traj.length;
    });
    return wall() - t0;
}

}  // namespace

int main() {
    std::printf("threads available: %d\n\n", kern::threads());
    std::printf("%-22s %12s %12s %8s\n", "kernel", "serial(ms)", "openmp(ms)", "speedup");

    for (int n : {64, 128, 256, 512}) {
        const int reps = n <= 128 ? 50 : 10;
        const double s = bench_matmul(n, kern::Backend::Serial, reps) * 1e3;
        const double p = bench_matmul(n, kern::Backend::OpenMP, reps) * 1e3;
        std::printf("matmul %4dx%-4d        %12.3f %12.3f %7.2fx\n", n, n, s, p, s / p);
    }

    for (int batch : {32, 128}) {
        const double s = bench_batch_rollout(batch, kern::Backend::Serial) * 1e3;
        const double p = bench_batch_rollout(batch, kern::Backend::OpenMP) * 1e3;
        std::printf("rollout tsp20 b=%-4d    %12.3f %12.3f %7.2fx\n", batch, s, p, s / p);
    }
    kern::set_backend(kern::Backend::OpenMP);
    return 0;
}
