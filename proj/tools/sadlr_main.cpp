#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sadlr/commands.hpp"
#include "sadlr/errors.hpp"

using namespace sadlr;

namespace {

struct Common {
    std::string config;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "key=value run config file");
    cmd->add_option("--seed", c.seed, "random seed");
    cmd->add_option("--out", c.out, "output path");
    cmd->add_option("--set", c.overrides, "override a config key (key=value)");
}

RunConfig resolve(const Common& c, CLI::App* cmd) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : RunConfig::load(c.config);
    for (const auto& kv : c.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        }
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (cmd->count("--seed") > 0) {
        cfg.seed = c.seed;
    }
    if (!c.out.empty()) {
        cfg.out_dir = c.out;
    }
    cfg.validate();
    return cfg;
}

void print_metrics(const EvalResult& eval) {
    std::printf("iteration,%s\n", metrics_csv_header().c_str());
    for (std::size_t i = 0; i < eval.per_iteration.size(); ++i) {
        std::printf("%zu,%s\n", i + 1, metrics_csv_row(eval.per_iteration[i]).c_str());
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SADLR iterative referring segmentation toolkit"};
    app.require_subcommand(1);

    Common gen_c;
    std::size_t count = 2500;
    auto* gen = app.add_subcommand("gen-data", "write a RefShapes dataset");
    add_common(gen, gen_c);
    gen->add_option("--count", count, "number of samples");

    Common train_c;
    auto* train_cmd = app.add_subcommand("train", "train and evaluate one configuration");
    add_common(train_cmd, train_c);

    Common eval_c;
    std::string ckpt;
    std::string data;
    bool dump_masks = false;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval_cmd, eval_c);
    eval_cmd->add_option("--ckpt", ckpt, "checkpoint path")->required();
    eval_cmd->add_option("--data", data, "dataset path")->required();
    eval_cmd->add_flag("--dump-masks", dump_masks, "write per-iteration PGM masks");

    Common ablate_c;
    std::string axis = "iterations";
    std::string values;
    int seeds = 3;
    auto* ablate = app.add_subcommand("ablate", "seed-averaged ablation over one axis");
    add_common(ablate, ablate_c);
    ablate->add_option("--axis", axis, "iterations | structure | update");
    ablate->add_option("--values", values, "comma separated, e.g. 0,1,2,3 or \"[8],[8,32]\"")->required();
    ablate->add_option("--seeds", seeds, "seeds per value");

    Common grad_c;
    std::vector<int> grad_iters{1, 3};
    std::string corrupt;
    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    add_common(grad, grad_c);
    grad->add_option("--iterations", grad_iters, "iteration counts to audit")->delimiter(',');
    grad->add_option("--corrupt", corrupt, "scale the analytic gradient of one group (test hook)");

    Common bench_c;
    std::string bench_ckpt;
    int reps = 500;
    int warmup = 20;
    auto* bench = app.add_subcommand("bench", "FLOPs and latency report");
    add_common(bench, bench_c);
    bench->add_option("--ckpt", bench_ckpt, "checkpoint path")->required();
    bench->add_option("--reps", reps, "timed forward passes");
    bench->add_option("--warmup", warmup, "untimed forward passes");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            if (gen_c.out.empty()) {
                throw ConfigError("gen-data needs --out");
            }
            cmd_gen_data(count, gen_c.seed, gen_c.out);
            std::printf("wrote %zu samples to %s\n", count, gen_c.out.c_str());
        } else if (train_cmd->parsed()) {
            const RunConfig cfg = resolve(train_c, train_cmd);
            RunReport report = cmd_train(cfg, [&](int epoch, double loss) {
                std::fprintf(stderr, "epoch %d/%d loss %.6f\n", epoch + 1, cfg.epochs, loss);
            });
            print_metrics(report.eval);
            std::printf("outputs in %s\n", cfg.out_dir.c_str());
        } else if (eval_cmd->parsed()) {
            const std::string out = eval_c.out.empty() ? "eval" : eval_c.out;
            print_metrics(cmd_eval(ckpt, data, out, dump_masks));
        } else if (ablate->parsed()) {
            const RunConfig cfg = resolve(ablate_c, ablate);
            cmd_ablate(cfg, parse_axis(axis), split_values(values), seeds);
            std::printf("wrote %s/ablation.csv\n", cfg.out_dir.c_str());
        } else if (grad->parsed()) {
            bool ok = true;
            for (int n : grad_iters) {
                const GradcheckReport r = cmd_gradcheck(grad_c.seed, n, corrupt);
                for (const auto& g : r.groups) {
                    std::printf("n=%d %-22s %6zu  max_rel_err %.3e  fallback %zu  %s\n", n, g.name.c_str(), g.count,
                                g.max_rel_error, g.fallbacks, g.max_rel_error <= r.tolerance ? "ok" : "FAIL");
                }
                ok = ok && r.passed();
            }
            std::printf("%s\n", ok ? "gradcheck passed" : "gradcheck FAILED");
            return ok ? 0 : 1;
        } else if (bench->parsed()) {
            std::cout << bench_json(cmd_bench(bench_ckpt, reps, warmup));
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
