#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "egat/train.hpp"

#include <cmath>

using namespace egat;

namespace {

ModelConfig tiny_model(Problem p = Problem::Tsp) {
    ModelConfig cfg;
    cfg.node_dim = 8;
    cfg.edge_dim = 4;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.problem = p;
    return cfg;
}

TrainSetup tiny_setup() {
    TrainSetup s;
    s.model = tiny_model();
    s.size = 5;
    s.seed = 11;
    s.val_size = 8;
    s.quiet = true;
    return s;
}

}  // namespace

TEST_CASE("normalize_rewards") {
    SUBCASE("worked example [1,2,3]") {
        auto out = normalize_rewards({1.0, 2.0, 3.0});
        CHECK(out[0] == doctest::Approx(-1.224744871).epsilon(1e-6));
        CHECK(out[1] == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(out[2] == doctest::Approx(1.224744871).epsilon(1e-6));
    }
    SUBCASE("constant batch normalizes to zeros") {
        for (real v : normalize_rewards({4.2, 4.2, 4.2, 4.2})) CHECK(v == 0.0);
    }
    SUBCASE("random batches come out with mean 0 and std 1") {
        Rng rng(3);
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<real> v(64);
            for (real& x : v) x = 3.0 + 2.5 * rng.normal();
            auto out = normalize_rewards(v);
            real mean = 0.0;
            for (real x : out) mean += x;
            mean /= 64.0;
            real var = 0.0;
            for (real x : out) var += (x - mean) * (x - mean);
            var /= 64.0;
            CHECK(std::abs(mean) < 1e-6);
            CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-4);
        }
    }
    SUBCASE("argmin is preserved") {
        std::vector<real> v = {5.0, 2.0, 7.0, 3.0};
        auto out = normalize_rewards(v);
        CHECK(std::min_element(out.begin(), out.end()) - out.begin() == 1);
    }
    SUBCASE("batch of one rejected") { CHECK_THROWS(normalize_rewards({1.0})); }
}

TEST_CASE("lr_schedule") {
    CHECK(lr_schedule(0, 3e-4, 0.96) == 3e-4);
    CHECK(lr_schedule(1, 1e-3, 0.96) == doctest::Approx(9.6e-4).epsilon(1e-12));
    CHECK(std::abs(lr_schedule(2, 1e-3, 0.96) - 9.216e-4) < 1e-12);
    CHECK_THROWS(lr_schedule(-1, 1e-3, 0.96));
}

TEST_CASE("clipped surrogate") {
    SUBCASE("worked example r=1.5 eps=0.2 A=1 gives 1.2") {
        CHECK(clip_surrogate(1.5, 1.0, 0.2) == doctest::Approx(1.2));
    }
    SUBCASE("at sync the clip is inactive") {
        CHECK(clip_surrogate(1.0, 0.7, 0.2) == doctest::Approx(0.7));
        CHECK(clip_surrogate(1.0, -0.3, 0.2) == doctest::Approx(-0.3));
    }
    SUBCASE("zero advantage kills the term") { CHECK(clip_surrogate(1.7, 0.0, 0.2) == 0.0); }
    SUBCASE("min property on randomized inputs") {
        Rng rng(9);
        for (int i = 0; i < 2000; ++i) {
            const real r = std::exp(rng.normal());
            const real a = 2.0 * rng.normal();
            const real v = clip_surrogate(r, a, 0.2);
            const real clipped = std::min(std::max(r, 0.8), 1.2);
            CHECK(v <= r * a + 1e-12);
            CHECK(v <= clipped * a + 1e-12);
            CHECK(v == doctest::Approx(std::min(r * a, clipped * a)));
        }
    }
}

TEST_CASE("student t cdf") {
    CHECK(student_t_cdf(0.0, 5.0) == doctest::Approx(0.5).epsilon(1e-9));
    // large-dof quantiles approach the normal ones
    CHECK(student_t_cdf(1.959964, 1e6) == doctest::Approx(0.975).epsilon(1e-4));
    CHECK(student_t_cdf(-1.959964, 1e6) == doctest::Approx(0.025).epsilon(1e-3));
    // classic table value: t_{0.95, nu=4} = 2.131847
    CHECK(student_t_cdf(2.131847, 4.0) == doctest::Approx(0.95).epsilon(1e-4));
}

TEST_CASE("paired t-test") {
    SUBCASE("identical samples are not significant") {
        std::vector<real> v(100, 3.0);
        CHECK_FALSE(paired_t_test(v, v, 0.05));
    }
    SUBCASE("uniform 1% improvement over 10000 instances is significant") {
        Rng rng(5);
        std::vector<real> base(10000), cand(10000);
        for (std::size_t i = 0; i < base.size(); ++i) {
            base[i] = 4.0 + rng.uniform01();
            cand[i] = 0.99 * base[i];
        }
        CHECK(paired_t_test(cand, base, 0.05));
    }
    SUBCASE("alpha = 0 never fires") {
        std::vector<real> base(50, 2.0), cand(50, 1.0);
        CHECK_FALSE(paired_t_test(cand, base, 0.0));
    }
    SUBCASE("worse candidate is not significant") {
        Rng rng(6);
        std::vector<real> base(500), cand(500);
        for (std::size_t i = 0; i < base.size(); ++i) {
            base[i] = 4.0 + 0.1 * rng.normal();
            cand[i] = base[i] + 0.05;
        }
        CHECK_FALSE(paired_t_test(cand, base, 0.05));
    }
    SUBCASE("noise alone stays below the significance level most of the time") {
        Rng rng(7);
        int fires = 0;
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<real> base(200), cand(200);
            for (std::size_t i = 0; i < base.size(); ++i) {
                base[i] = 4.0 + 0.2 * rng.normal();
                cand[i] = 4.0 + 0.2 * rng.normal();
            }
            fires += paired_t_test(cand, base, 0.05) ? 1 : 0;
        }
        CHECK(fires < 15);  // ~5% expected
    }
}

TEST_CASE("entropy is nonnegative and zero only for deterministic steps") {
    EagerCtx cx;
    auto uniform = cx.lift(Tensor::row({0.25, 0.25, 0.25, 0.25}));
    CHECK(cx.val(cx.entropy_masked(uniform, {1, 1, 1, 1})).item() ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
    auto onehot = cx.lift(Tensor::row({0.0, 1.0, 0.0, 0.0}));
    CHECK(cx.val(cx.entropy_masked(onehot, {1, 1, 1, 1})).item() == 0.0);
    Rng rng(8);
    for (int i = 0; i < 50; ++i) {
        Tensor t = Tensor::row({rng.uniform01(), rng.uniform01(), rng.uniform01()});
        real z = t.data[0] + t.data[1] + t.data[2];
        for (real& v : t.data) v /= z;
        CHECK(cx.val(cx.entropy_masked(cx.lift(t), {1, 1, 1})).item() >= 0.0);
    }
}

// Policy-gradient path of Eq. 23: backward(logp, seed=c) must equal c times
// the finite-difference gradient of the tour log-likelihood.
TEST_CASE("policy gradient with constant advantage matches finite differences") {
    ModelConfig cfg = tiny_model();
    Rng prng(21);
    ParamStore ps = build_params(cfg, InitKind::Xavier, prng);
    Instance inst = generate_tsp(5, 31);
    const std::vector<int> tour = {1, 3, 0, 2, 4};
    const real c = -1.7;

    TapeCtx tape;
    Bound<TapeCtx> bp(tape, ps);
    RolloutOptions opts;
    opts.forced = &tour;
    opts.want_logp = true;
    opts.training_bn = true;
    auto out = rollout(tape, bp, cfg, inst, opts);
    tape.backward(out.logp_sum, c);
    const Tensor* g = tape.grad(bp("enc.0.W1"));
    REQUIRE(g != nullptr);

    auto logp_at = [&](const ParamStore& probe) {
        EagerCtx cx;
        Bound<EagerCtx> b2(cx, probe);
        RolloutOptions o2;
        o2.forced = &tour;
        o2.training_bn = true;
        auto r = rollout(cx, b2, cfg, inst, o2);
        real lp = 0.0;
        for (real v : r.traj.logps) lp += v;
        return lp;
    };

    ParamStore probe = ps;
    Tensor& w = probe.at("enc.0.W1");
    const real h = 1e-5;
    for (std::size_t k = 0; k < 6; ++k) {
        const std::size_t idx = k * 7 % w.size();
        const real saved = w.data[idx];
        w.data[idx] = saved + h;
        const real fp = logp_at(probe);
        w.data[idx] = saved - h;
        const real fm = logp_at(probe);
        w.data[idx] = saved;
        const real fd = c * (fp - fm) / (2 * h);  // = -c * d(NLL)/dw
        CHECK(g->data[idx] == doctest::Approx(fd).epsilon(5e-4));
    }
}

TEST_CASE("ppo mechanics on a short run") {
    TrainSetup setup = tiny_setup();
    PpoConfig cfg;
    cfg.total_epochs = 2;
    cfg.steps_per_epoch = 3;
    cfg.batch_size = 6;
    cfg.lr = 1e-3;

    Rng prng(41);
    ParamStore params = build_params(setup.model, InitKind::Orthogonal, prng);
    TrainResult res = ppo_train(setup, cfg, params);

    REQUIRE(res.epochs.size() == 2);
    // T_s=1, E_p=3: every collected batch is updated on exactly three times.
    CHECK(res.postclip_norms.size() == 2 * 3 * 3);
    // the ratio immediately after each theta_old sync is 1 to machine accuracy
    REQUIRE(!res.ratio_devs_at_sync.empty());
    for (real dev : res.ratio_devs_at_sync) CHECK(dev < 1e-6);
    // the clipped global norm honours the bound on every recorded step
    for (real n : res.postclip_norms) CHECK(n <= cfg.max_grad_norm + 1e-6);
    // lr annealing follows l0 * beta^e
    CHECK(res.epochs[0].lr == cfg.lr);
    CHECK(std::abs(res.epochs[1].lr - cfg.lr * 0.96) < 1e-12);
    // entropy of stochastic policies is positive
    CHECK(res.epochs[0].loss_entropy > 0.0);
}

TEST_CASE("ppo batch reuse count follows T_s") {
    TrainSetup setup = tiny_setup();
    PpoConfig cfg;
    cfg.total_epochs = 1;
    cfg.steps_per_epoch = 4;
    cfg.batch_size = 4;
    cfg.ppo_steps = 2;  // buffer two batches per cycle
    cfg.lr = 1e-3;
    Rng prng(43);
    ParamStore params = build_params(setup.model, InitKind::Orthogonal, prng);
    TrainResult res = ppo_train(setup, cfg, params);
    // 2 cycles per epoch, each: E_p=3 passes over 2 stored batches.
    CHECK(res.postclip_norms.size() == 2 * 3 * 2);
}

TEST_CASE("rollout trainer mechanics on a short run") {
    TrainSetup setup = tiny_setup();
    setup.seed = 12;
    RolloutTrainConfig cfg;
    cfg.epochs = 2;
    cfg.steps_per_epoch = 4;
    cfg.batch_size = 6;
    cfg.eval_size = 16;
    cfg.lr = 1e-3;

    Rng prng(47);
    ParamStore params = build_params(setup.model, InitKind::Xavier, prng);
    ParamStore before = params;
    TrainResult res = rollout_train(setup, cfg, params);

    REQUIRE(res.epochs.size() == 2);
    CHECK(res.postclip_norms.size() == 2 * 4);
    for (real n : res.postclip_norms) CHECK(n <= cfg.max_grad_norm + 1e-6);
    // parameters actually moved
    real delta = 0.0;
    for (const auto& [k, t] : params.tensors)
        for (std::size_t i = 0; i < t.size(); ++i)
            delta += std::abs(t.data[i] - before.at(k).data[i]);
    CHECK(delta > 0.0);
    // critic stays untouched: Eq. 23 carries no value head
    for (std::size_t i = 0; i < params.at("critic.c1.W").size(); ++i)
        CHECK(params.at("critic.c1.W").data[i] == before.at("critic.c1.W").data[i]);
}

TEST_CASE("training is deterministic given the seed") {
    TrainSetup setup = tiny_setup();
    RolloutTrainConfig cfg;
    cfg.epochs = 1;
    cfg.steps_per_epoch = 2;
    cfg.batch_size = 4;
    cfg.eval_size = 8;
    cfg.lr = 1e-3;

    auto run = [&]() {
        Rng prng(53);
        ParamStore params = build_params(setup.model, InitKind::Xavier, prng);
        rollout_train(setup, cfg, params);
        return params;
    };
    ParamStore a = run();
    ParamStore b = run();
    for (const auto& [k, t] : a.tensors)
        for (std::size_t i = 0; i < t.size(); ++i) CHECK(t.data[i] == b.at(k).data[i]);
}
