#include "egat/model.hpp"

namespace egat {

namespace {

Tensor init_matrix(std::vector<int> shape, InitKind kind, Rng& rng) {
    return kind == InitKind::Orthogonal ? init_orthogonal(std::move(shape), 1.0, rng)
                                        : init_xavier(std::move(shape), rng);
}

void add_bn(ParamStore& ps, const std::string& prefix, int dim) {
    ps.insert(prefix + ".gamma", Tensor::full({1, dim}, 1.0, true));
    ps.insert(prefix + ".beta", Tensor::zeros({1, dim}, true));
    ps.insert(prefix + ".run_mean", Tensor::zeros({1, dim}, false));
    ps.insert(prefix + ".run_var", Tensor::full({1, dim}, 1.0, false));
}

}  // namespace

ParamStore build_params(const ModelConfig& cfg, InitKind kind, Rng& rng) {
    cfg.validate();
    const int dx = cfg.node_dim, de = cfg.edge_dim;
    ParamStore ps;

    ps.insert("embed.node.W", init_matrix({cfg.node_feat_dim(), dx}, kind, rng));
    ps.insert("embed.node.b", Tensor::zeros({1, dx}, true));
    add_bn(ps, "embed.node.bn", dx);
    ps.insert("embed.edge.W", init_matrix({1, de}, kind, rng));
    ps.insert("embed.edge.b", Tensor::zeros({1, de}, true));
    add_bn(ps, "embed.edge.bn", de);

    for (int l = 0; l < cfg.layers; ++l) {
        const std::string pre = "enc." + std::to_string(l) + ".";
        ps.insert(pre + "W", init_matrix({2 * dx + de, dx}, kind, rng));
        ps.insert(pre + "g", init_matrix({dx, 1}, kind, rng));
        ps.insert(pre + "W1", init_matrix({dx, dx}, kind, rng));
    }

    const int ctx_in = cfg.problem == Problem::Cvrp ? dx + 1 : 2 * dx;
    ps.insert("dec.Wx", init_matrix({ctx_in, dx}, kind, rng));
    ps.insert("dec.v", init_matrix({1, dx}, kind, rng));
    ps.insert("dec.WQ", init_matrix({dx, dx}, kind, rng));
    ps.insert("dec.WK", init_matrix({dx, dx}, kind, rng));
    ps.insert("dec.WV", init_matrix({dx, dx}, kind, rng));
    ps.insert("dec.Wf", init_matrix({dx, dx}, kind, rng));
    ps.insert("dec.Kfin", init_matrix({dx, dx}, kind, rng));

    ps.insert("critic.c1.W", init_matrix({dx, dx}, kind, rng));
    ps.insert("critic.c1.b", Tensor::zeros({1, dx}, true));
    ps.insert("critic.c2.W", init_matrix({dx, dx}, kind, rng));
    ps.insert("critic.c2.b", Tensor::zeros({1, dx}, true));
    ps.insert("critic.out.W", init_matrix({dx, 1}, kind, rng));
    ps.insert("critic.out.b", Tensor::zeros({1, 1}, true));
    return ps;
}

}  // namespace egat
