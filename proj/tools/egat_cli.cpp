// Command-line front end: generate | train | evaluate | baseline | sweep |
// gradcheck | render. Every subcommand takes an optional JSON config file;
// explicit flags override file fields and the merged config is written next
// to the outputs.

#include "egat/commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

using namespace egat;
using nlohmann::json;

namespace {

struct CommonArgs {
    std::optional<std::string> config_path;
    std::optional<std::string> preset;
    json overrides = json::object();
};

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "JSON config file");
    sub->add_option("--preset", args.preset,
                    "named preset (see --list-presets); applied before --config");
    auto num = [&args](const std::string& pointer) {
        return [&args, pointer](const std::string& v) {
            args.overrides[json::json_pointer(pointer)] = json::parse(v);
        };
    };
    auto str = [&args](const std::string& pointer) {
        return [&args, pointer](const std::string& v) {
            args.overrides[json::json_pointer(pointer)] = v;
        };
    };
    sub->add_option_function<std::string>("--kind", str("/kind"), "tsp | cvrp");
    sub->add_option_function<std::string>("--size", num("/size"), "problem size (customers)");
    sub->add_option_function<std::string>("--capacity", num("/capacity"),
                                          "explicit CVRP capacity for nonstandard sizes");
    sub->add_option_function<std::string>("--seed", num("/seed"), "master seed");
    sub->add_option_function<std::string>("--threads", num("/threads"), "worker count (0 = auto)");
    sub->add_option_function<std::string>("--trainer", str("/trainer"), "ppo | rollout");
    sub->add_option_function<std::string>("--epochs", num("/rollout/epochs"),
                                          "rollout trainer epochs");
    sub->add_option_function<std::string>("--ppo-epochs", num("/ppo/total_epochs"),
                                          "ppo trainer total epochs");
    sub->add_option_function<std::string>("--batch", num("/rollout/batch_size"),
                                          "rollout batch size");
    sub->add_option_function<std::string>("--node-dim", num("/model/node_dim"), "d_x");
    sub->add_option_function<std::string>("--edge-dim", num("/model/edge_dim"), "d_e");
    sub->add_option_function<std::string>("--layers", num("/model/layers"), "encoder layers L");
    sub->add_flag_callback("--no-residual", [&args]() {
        args.overrides[json::json_pointer("/model/residual")] = false;
    });
    sub->add_option_function<std::string>("--decode", str("/decode/mode"), "greedy | sample");
    sub->add_option_function<std::string>("--lambda", num("/decode/lambda"),
                                          "sampling temperature (0 = per-size default)");
    sub->add_option_function<std::string>("--samples", num("/decode/samples"),
                                          "sample count for best-of-k decoding");
    sub->add_flag_callback("--no-timing", [&args]() {
        args.overrides[json::json_pointer("/timing")] = false;
    });
}

cmd::RunConfig resolve(const CommonArgs& args) {
    json base;
    if (args.preset) {
        if (cmd::preset_is_paper_scale(*args.preset))
            std::cerr << "note: preset '" << *args.preset
                      << "' is paper-scale (sized for accelerator hardware; not part of the "
                         "acceptance surface)\n";
        base = cmd::to_json(cmd::preset_config(*args.preset));
    } else {
        base = cmd::to_json(cmd::RunConfig{});
    }
    if (args.config_path) {
        json file = json::parse(read_text_file(*args.config_path));
        base.merge_patch(file);
    }
    // Flags win over file fields.
    base.merge_patch(args.overrides);
    return cmd::run_config_from_json(base);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Residual edge-graph-attention routing solver (TSP/CVRP)"};
    app.require_subcommand(0, 1);
    bool list_presets = false;
    app.add_flag("--list-presets", list_presets, "print available presets and exit");

    CommonArgs gen_args, train_args, eval_args, base_args, sweep_args, render_args;

    auto* gen = app.add_subcommand("generate", "write a random instance dataset");
    int gen_count = 10000;
    std::string gen_out;
    gen->add_option("--count", gen_count, "number of instances");
    gen->add_option("--out", gen_out, "output dataset path (.json)");
    add_common(gen, gen_args);

    auto* train = app.add_subcommand("train", "train a model; one checkpoint per epoch");
    std::string train_out;
    std::optional<std::string> train_resume;
    train->add_option("--out", train_out, "output directory");
    train->add_option("--resume", train_resume, "checkpoint to resume from");
    add_common(train, train_args);

    auto* eval = app.add_subcommand("evaluate", "decode a dataset or benchmark file");
    std::vector<std::string> eval_cps;
    std::string eval_input, eval_ref = "heldkarp", eval_out;
    eval->add_option("--checkpoint", eval_cps,
                     "checkpoint path(s); several trigger best-of ensemble decoding")
        ->required();
    eval->add_option("--input", eval_input, "dataset .json or TSPLIB/CVRPLIB file")->required();
    eval->add_option("--reference", eval_ref, "heldkarp | known | file:<path> | baseline:<m>");
    eval->add_option("--out", eval_out, "output directory");
    add_common(eval, eval_args);

    auto* base = app.add_subcommand("baseline", "run classical heuristics over a dataset");
    std::vector<std::string> base_methods = {"all"};
    std::string base_input, base_ref = "heldkarp", base_out;
    base->add_option("--input", base_input, "dataset .json")->required();
    base->add_option("--methods", base_methods,
                     "nn nn_best insertion_nearest insertion_random insertion_farthest two_opt "
                     "cvrp_greedy all");
    base->add_option("--reference", base_ref, "heldkarp | known | file:<path> | baseline:<m>");
    base->add_option("--out", base_out, "output directory");
    add_common(base, base_args);

    auto* sweep = app.add_subcommand("sweep", "train over the configured hyper-parameter grid");
    std::string sweep_out;
    sweep->add_option("--out", sweep_out, "output directory");
    add_common(sweep, sweep_args);

    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    std::uint64_t grad_seed = 1;
    bool grad_negative = false;
    grad->add_option("--seed", grad_seed, "seed for the randomized checks");
    grad->add_flag("--negative-control", grad_negative,
                   "corrupt one comparison on purpose (checker self-test; must fail)");

    auto* render = app.add_subcommand("render", "draw a solution as SVG");
    std::string render_input, render_solver, render_out;
    int render_index = 0;
    bool render_omit = false;
    render->add_option("--input", render_input, "dataset .json or TSPLIB/CVRPLIB file")
        ->required();
    render->add_option("--index", render_index, "instance index within a dataset");
    render->add_option("--solver", render_solver, "checkpoint path or baseline:<method>")
        ->required();
    render->add_option("--out", render_out, "output .svg path")->required();
    render->add_flag("--omit-depot-legs", render_omit, "hide depot legs of each route");
    add_common(render, render_args);

    CLI11_PARSE(app, argc, argv);

    if (list_presets) {
        for (const auto& name : cmd::preset_names())
            std::printf("%s%s\n", name.c_str(),
                        cmd::preset_is_paper_scale(name)
                            ? "  (paper-scale; requires accelerator, not part of acceptance)"
                            : "");
        return cmd::kOk;
    }

    try {
        if (gen->parsed()) {
            cmd::RunConfig rc = resolve(gen_args);
            if (gen_out.empty())
                gen_out = cmd::output_root() + "/dataset_" + rc.kind + std::to_string(rc.size) +
                          ".json";
            return cmd::cmd_generate(rc, gen_count, gen_out);
        }
        if (train->parsed()) {
            cmd::RunConfig rc = resolve(train_args);
            if (train_out.empty()) train_out = cmd::output_root() + "/train";
            return cmd::cmd_train(rc, train_out, train_resume);
        }
        if (eval->parsed()) {
            cmd::RunConfig rc = resolve(eval_args);
            if (eval_out.empty()) eval_out = cmd::output_root() + "/evaluate";
            return cmd::cmd_evaluate(rc, eval_cps, eval_input, eval_ref, eval_out);
        }
        if (base->parsed()) {
            cmd::RunConfig rc = resolve(base_args);
            if (base_out.empty()) base_out = cmd::output_root() + "/baseline";
            return cmd::cmd_baseline(rc, base_input, base_methods, base_ref, base_out);
        }
        if (sweep->parsed()) {
            cmd::RunConfig rc = resolve(sweep_args);
            if (sweep_out.empty()) sweep_out = cmd::output_root() + "/sweep";
            return cmd::cmd_sweep(rc, sweep_out);
        }
        if (grad->parsed()) return cmd::cmd_gradcheck(grad_seed, grad_negative);
        if (render->parsed()) {
            cmd::RunConfig rc = resolve(render_args);
            return cmd::cmd_render(rc, render_input, render_index, render_solver, render_out,
                                   render_omit);
        }
    } catch (const cmd::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return cmd::kUsage;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return cmd::kIo;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return cmd::kNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cmd::kUsage;
    }

    std::cerr << app.help() << "\n";
    return cmd::kUsage;
}
