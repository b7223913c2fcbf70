#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "egat/commands.hpp"

#include <filesystem>

using namespace egat;
using namespace egat::cmd;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

RunConfig tiny_train_config() {
    RunConfig rc;
    rc.kind = "tsp";
    rc.size = 5;
    rc.model.node_dim = 8;
    rc.model.edge_dim = 4;
    rc.model.layers = 1;
    rc.model.heads = 2;
    rc.trainer = "rollout";
    rc.rollout.epochs = 2;
    rc.rollout.steps_per_epoch = 2;
    rc.rollout.batch_size = 4;
    rc.rollout.eval_size = 8;
    rc.val_size = 8;
    rc.seed = 77;
    rc.timing = false;
    rc.sync();
    return rc;
}

}  // namespace

TEST_CASE("paper presets pin the published hyper-parameters") {
    RunConfig p20 = preset_config("paper_tsp20_ppo");
    CHECK(p20.ppo.lr == 3e-4);
    CHECK(p20.ppo.batch_size == 512);
    CHECK(p20.ppo.steps_per_epoch == 800);
    CHECK(p20.model.layers == 4);
    CHECK(p20.model.heads == 8);
    CHECK(p20.model.node_dim == 128);
    CHECK(p20.model.edge_dim == 64);
    CHECK(p20.ppo.ppo_epochs == 3);
    CHECK(p20.ppo.ppo_steps == 1);
    CHECK(p20.ppo.lr_decay == 0.96);

    RunConfig r20 = preset_config("paper_tsp20_rollout");
    CHECK(r20.rollout.lr == 1e-3);
    CHECK(r20.rollout.steps_per_epoch == 1600);
    CHECK(r20.rollout.eval_size == 10000);
    CHECK(r20.rollout.alpha == 0.05);

    RunConfig r50 = preset_config("paper_tsp50_rollout");
    CHECK(r50.rollout.lr == 3e-4);
    CHECK(r50.rollout.steps_per_epoch == 6000);
    CHECK(r50.rollout.batch_size == 128);
    RunConfig p100 = preset_config("paper_cvrp100_ppo");
    CHECK(p100.ppo.lr == 1e-4);
    CHECK(p100.ppo.steps_per_epoch == 3000);

    RunConfig sweep = preset_config("paper_sweep_tsp20");
    CHECK(sweep.sweep_node_dims == std::vector<int>{64, 128});
    CHECK(sweep.sweep_edge_dims == std::vector<int>{8, 16, 64});
    CHECK(sweep.sweep_layers == std::vector<int>{3, 4, 5, 6});

    CHECK(preset_is_paper_scale("paper_tsp20_ppo"));
    CHECK_FALSE(preset_is_paper_scale("desk_tsp10_rollout"));
    CHECK_THROWS_AS(preset_config("nope"), UsageError);

    RunConfig desk = preset_config("desk_tsp10_rollout");
    CHECK(desk.model.node_dim == 64);
    CHECK(desk.model.edge_dim == 16);
    CHECK(desk.model.layers == 2);
    CHECK(desk.rollout.batch_size == 128);
}

TEST_CASE("config round trip and hashing") {
    RunConfig rc = tiny_train_config();
    RunConfig back = run_config_from_json(to_json(rc));
    CHECK(to_json(back) == to_json(rc));
    CHECK(config_hash(back) == config_hash(rc));
    RunConfig other = rc;
    other.seed = 78;
    CHECK(config_hash(other) != config_hash(rc));
}

TEST_CASE("generate: deterministic dataset with manifest") {
    const std::string dir = temp_dir("egat_cmd_generate");
    RunConfig rc;
    rc.kind = "cvrp";
    rc.size = 20;
    rc.seed = 5;
    CHECK(cmd_generate(rc, 12, dir + "/a.json") == kOk);
    CHECK(cmd_generate(rc, 12, dir + "/b.json") == kOk);
    CHECK(read_text_file(dir + "/a.json") == read_text_file(dir + "/b.json"));

    Dataset ds = load_dataset(dir + "/a.json");
    CHECK(ds.instances.size() == 12);
    CHECK(ds.capacity == 3.0);  // cvrp size 20
    CHECK(ds.instances[0].id == "cvrp20-000000");
    CHECK(!ds.config_hash.empty());

    // manifest mismatch: hand-edit the size field
    std::string text = read_text_file(dir + "/a.json");
    const auto pos = text.find("\"size\":20");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 9, "\"size\":21");
    write_text_file(dir + "/bad.json", text);
    CHECK_THROWS_AS(load_dataset(dir + "/bad.json"), IoError);
}

TEST_CASE("train command: checkpoints, metrics, resume") {
    const std::string dir = temp_dir("egat_cmd_train");
    RunConfig rc = tiny_train_config();
    TrainOutput out;
    REQUIRE(cmd_train(rc, dir + "/run", std::nullopt, &out) == kOk);
    CHECK(out.result.epochs.size() == 2);
    CHECK(out.checkpoint_paths.size() == 2);
    CHECK(fs::exists(dir + "/run/checkpoint_epoch_0000.egcp"));
    CHECK(fs::exists(dir + "/run/checkpoint_last.egcp"));
    CHECK(fs::exists(dir + "/run/metrics.csv"));
    CHECK(fs::exists(dir + "/run/metrics.jsonl"));
    CHECK(fs::exists(dir + "/run/config.json"));
    const std::string metrics = read_text_file(dir + "/run/metrics.csv");
    CHECK(metrics.find("# config_hash=" + config_hash(rc)) != std::string::npos);

    SUBCASE("resume from the last checkpoint reproduces forward outputs") {
        Checkpoint last = load_checkpoint(dir + "/run/checkpoint_last.egcp");
        CHECK(last.meta.at("epoch") == "1");
        Instance probe = generate_tsp(5, 99);
        Trajectory before = greedy_decode(last.params, last.config, probe);

        RunConfig more = rc;
        more.rollout.epochs = 3;  // one extra epoch
        TrainOutput out2;
        REQUIRE(cmd_train(more, dir + "/resumed", dir + "/run/checkpoint_last.egcp", &out2) == kOk);
        CHECK(out2.result.epochs.size() == 1);
        CHECK(out2.result.epochs[0].epoch == 2);

        // the resumed run starts from identical parameters
        Checkpoint again = load_checkpoint(dir + "/run/checkpoint_last.egcp");
        Trajectory after = greedy_decode(again.params, again.config, probe);
        CHECK(before.seq == after.seq);
    }
    SUBCASE("wrong trainer name is a usage error") {
        RunConfig bad = rc;
        bad.trainer = "sgd";
        CHECK(cmd_train(bad, dir + "/bad") == kUsage);
    }
}

TEST_CASE("evaluate command") {
    const std::string dir = temp_dir("egat_cmd_eval");
    RunConfig rc = tiny_train_config();
    TrainOutput trained;
    REQUIRE(cmd_train(rc, dir + "/run", std::nullopt, &trained) == kOk);

    RunConfig gen = rc;
    CHECK(cmd_generate(gen, 6, dir + "/ds.json") == kOk);

    SUBCASE("greedy vs held-karp reference") {
        Report rep;
        REQUIRE(cmd_evaluate(rc, {dir + "/run/checkpoint_last.egcp"}, dir + "/ds.json",
                             "heldkarp", dir + "/eval", &rep) == kOk);
        CHECK(rep.rows.size() == 6);
        for (const auto& row : rep.rows) {
            CHECK(row.gap >= -1e-9);
            CHECK(row.method == "greedy");
        }
        CHECK(fs::exists(dir + "/eval/report.csv"));
        CHECK(fs::exists(dir + "/eval/report.json"));
        // byte-determinism with timing disabled
        Report rep2;
        REQUIRE(cmd_evaluate(rc, {dir + "/run/checkpoint_last.egcp"}, dir + "/ds.json",
                             "heldkarp", dir + "/eval2", &rep2) == kOk);
        CHECK(read_text_file(dir + "/eval/report.csv") ==
              read_text_file(dir + "/eval2/report.csv"));
    }
    SUBCASE("multi-checkpoint input becomes a best-of ensemble") {
        Report rep_ens, rep_single;
        REQUIRE(cmd_evaluate(rc,
                             {dir + "/run/checkpoint_epoch_0000.egcp",
                              dir + "/run/checkpoint_epoch_0001.egcp"},
                             dir + "/ds.json", "heldkarp", dir + "/ens", &rep_ens) == kOk);
        REQUIRE(cmd_evaluate(rc, {dir + "/run/checkpoint_epoch_0001.egcp"}, dir + "/ds.json",
                             "heldkarp", dir + "/single", &rep_single) == kOk);
        CHECK(rep_ens.rows[0].method == "trained-greedy2");
        for (std::size_t i = 0; i < rep_ens.rows.size(); ++i)
            CHECK(rep_ens.rows[i].length <= rep_single.rows[i].length + 1e-12);
    }
    SUBCASE("sampling policy") {
        RunConfig sc = rc;
        sc.decode_mode = "sample";
        sc.samples = 8;
        Report rep;
        REQUIRE(cmd_evaluate(sc, {dir + "/run/checkpoint_last.egcp"}, dir + "/ds.json",
                             "heldkarp", dir + "/sample", &rep) == kOk);
        CHECK(rep.rows[0].method == "sample");
    }
    SUBCASE("m=2 dataset: greedy gap is exactly zero") {
        RunConfig rc2 = rc;
        rc2.size = 2;
        TrainOutput t2;
        RunConfig tr2 = rc2;
        tr2.rollout.epochs = 1;
        tr2.rollout.steps_per_epoch = 1;
        REQUIRE(cmd_train(tr2, dir + "/run2", std::nullopt, &t2) == kOk);
        CHECK(cmd_generate(rc2, 4, dir + "/ds2.json") == kOk);
        Report rep;
        REQUIRE(cmd_evaluate(rc2, {dir + "/run2/checkpoint_last.egcp"}, dir + "/ds2.json",
                             "heldkarp", dir + "/eval_m2", &rep) == kOk);
        CHECK(rep.aggregate_gap == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("held-karp guard for big instances") {
        RunConfig big = rc;
        big.size = 16;
        CHECK(cmd_generate(big, 2, dir + "/big.json") == kOk);
        CHECK(cmd_evaluate(rc, {dir + "/run/checkpoint_last.egcp"}, dir + "/big.json", "heldkarp",
                           dir + "/evalbig") == kUsage);
    }
    SUBCASE("missing checkpoint file is an io error") {
        CHECK(cmd_evaluate(rc, {dir + "/nope.egcp"}, dir + "/ds.json", "heldkarp",
                           dir + "/evalx") == kIo);
    }
}

TEST_CASE("baseline command") {
    const std::string dir = temp_dir("egat_cmd_baseline");
    RunConfig rc;
    rc.kind = "tsp";
    rc.size = 8;
    rc.seed = 3;
    rc.timing = false;
    CHECK(cmd_generate(rc, 10, dir + "/ds.json") == kOk);

    Report rep;
    REQUIRE(cmd_baseline(rc, dir + "/ds.json", {"all"}, "heldkarp", dir + "/base", &rep) == kOk);
    CHECK(rep.rows.size() == 6 * 10);
    std::map<std::string, std::map<std::string, real>> by_method;
    for (const auto& row : rep.rows) {
        CHECK(row.gap >= -1e-9);  // nothing beats the exact oracle
        by_method[row.method][row.instance] = row.length;
    }
    // two_opt refines the nearest-neighbor tour it starts from
    for (const auto& [inst, len] : by_method.at("two_opt"))
        CHECK(len <= by_method.at("nn").at(inst) + 1e-12);

    SUBCASE("unknown method is a usage error") {
        CHECK(cmd_baseline(rc, dir + "/ds.json", {"magic"}, "heldkarp", dir + "/bad") == kUsage);
    }
}

TEST_CASE("sweep command produces one run per cell") {
    const std::string dir = temp_dir("egat_cmd_sweep");
    RunConfig rc = tiny_train_config();
    rc.rollout.epochs = 1;
    rc.rollout.steps_per_epoch = 1;
    rc.sweep_node_dims = {8, 16};
    rc.sweep_edge_dims = {4};
    rc.sweep_layers = {1, 2};
    REQUIRE(cmd_sweep(rc, dir + "/sweep") == kOk);
    for (const char* cell : {"dx8_de4_L1", "dx8_de4_L2", "dx16_de4_L1", "dx16_de4_L2"}) {
        CHECK(fs::exists(dir + "/sweep/" + cell + "/metrics.csv"));
        // each cell records its own effective config
        const auto cfg = nlohmann::json::parse(read_text_file(dir + "/sweep/" + cell + "/config.json"));
        CHECK(cfg.at("model").at("node_dim").get<int>() == (std::string(cell).substr(2, 1) == "8" ? 8 : 16));
    }
    CHECK(fs::exists(dir + "/sweep/sweep_summary.json"));
    const auto summary = nlohmann::json::parse(read_text_file(dir + "/sweep/sweep_summary.json"));
    CHECK(summary.size() == 4);

    SUBCASE("empty axes are a usage error") {
        RunConfig none = tiny_train_config();
        CHECK(cmd_sweep(none, dir + "/none") == kUsage);
    }
}

TEST_CASE("gradcheck library surface") {
    auto results = gradcheck_suite(1, false);
    for (const auto& r : results) CHECK(r.pass);
    auto with_control = gradcheck_suite(1, true);
    bool any_fail = false;
    for (const auto& r : with_control) any_fail = any_fail || !r.pass;
    CHECK(any_fail);
    CHECK(cmd_gradcheck(1, false) == kOk);
    CHECK(cmd_gradcheck(1, true) == kNumeric);
}

TEST_CASE("render command") {
    const std::string dir = temp_dir("egat_cmd_render");
    RunConfig rc;
    rc.kind = "tsp";
    rc.size = 6;
    rc.seed = 2;
    CHECK(cmd_generate(rc, 2, dir + "/ds.json") == kOk);
    REQUIRE(cmd_render(rc, dir + "/ds.json", 1, "baseline:nn", dir + "/tour.svg", false) == kOk);
    const std::string svg = read_text_file(dir + "/tour.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("config_hash=") != std::string::npos);
    std::size_t lines = 0, pos = 0;
    while ((pos = svg.find("<line", pos)) != std::string::npos) {
        ++lines;
        ++pos;
    }
    CHECK(lines == 6);
    CHECK(cmd_render(rc, dir + "/ds.json", 9, "baseline:nn", dir + "/x.svg", false) == kUsage);
}
