#include "sadlr/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "sadlr/errors.hpp"
#include "sadlr/pgm.hpp"
#include "sadlr/refshapes.hpp"

namespace sadlr {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    out << text;
    if (!out) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
    }
}

std::vector<refshapes::Sample> load_samples(const std::string& path, const char* role) {
    if (path.empty()) {
        throw ConfigError(std::string("no ") + role + " dataset path configured");
    }
    return refshapes::read_dataset(path);
}

json config_json(const RunConfig& config) {
    json out = json::object();
    std::istringstream in(config.to_text());
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (line.empty() || line[0] == '#' || eq == std::string::npos) {
            continue;
        }
        out[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return out;
}

json flops_json(const FlopReport& f) {
    json out;
    out["encoder"] = f.encoder;
    out["head"] = f.head;
    out["head_fixed"] = f.head_fixed;
    out["head_per_iteration"] = f.head_per_iteration;
    out["iterations"] = f.iterations;
    out["head_overhead_percent"] = f.overhead_percent();
    return out;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    return out + "\"";
}

} // namespace

Experiment run_experiment(const RunConfig& config, std::span<const refshapes::Sample> train_set,
                          std::span<const refshapes::Sample> val_set, const std::function<void(int, double)>& on_epoch) {
    config.validate();
    if (val_set.empty()) {
        throw ConfigError("validation dataset is empty");
    }
    check_compatible(config.model, val_set);
    Experiment ex;
    ex.model = std::make_unique<Model<float>>(config.model, config.seed);
    TrainOptions opts;
    opts.seed = config.seed;
    opts.epochs = config.epochs;
    opts.batch_size = config.batch_size;
    opts.lr = config.lr;
    opts.weight_decay = config.weight_decay;
    opts.poly_power = config.poly_power;
    TrainResult trained = train(*ex.model, train_set, opts, on_epoch);

    const auto start = std::chrono::steady_clock::now();
    ex.report.eval = evaluate(model_predictor(*ex.model), val_set);
    ex.report.eval_seconds = seconds_since(start);
    ex.report.config = config;
    ex.report.epoch_losses = trained.epoch_losses;
    ex.report.train_seconds = trained.seconds;
    ex.report.flops = count_flops(config.model, val_set.front().image.dim(1), val_set.front().image.dim(2));
    return ex;
}

std::string report_json(const RunReport& report) {
    json out;
    out["config"] = config_json(report.config);
    out["epoch_losses"] = report.epoch_losses;
    out["final_loss"] = report.final_loss();
    json rows = json::array();
    for (std::size_t i = 0; i < report.eval.per_iteration.size(); ++i) {
        json row;
        row["iteration"] = i + 1;
        row["metrics"] = json::parse(metrics_json(report.eval.per_iteration[i]));
        rows.push_back(row);
    }
    out["per_iteration"] = rows;
    out["headline"] = json::parse(metrics_json(report.eval.headline()));
    out["timings"] = {{"train_seconds", report.train_seconds}, {"eval_seconds", report.eval_seconds}};
    out["flops"] = flops_json(report.flops);
    return out.dump(2) + "\n";
}

std::string headline_csv(const MetricReport& report) {
    return metrics_csv_header() + "\n" + metrics_csv_row(report) + "\n";
}

std::string per_iteration_csv(const EvalResult& eval) {
    std::string out = "iteration," + metrics_csv_header() + "\n";
    for (std::size_t i = 0; i < eval.per_iteration.size(); ++i) {
        out += std::to_string(i + 1) + "," + metrics_csv_row(eval.per_iteration[i]) + "\n";
    }
    return out;
}

void write_run_outputs(const std::string& dir, Model<float>& model, const RunReport& report) {
    const fs::path root(dir);
    ensure_dir(root);
    save_checkpoint(model, (root / "checkpoint.sdlr").string());
    write_text(root / "config.txt", report.config.to_text());
    write_text(root / "report.json", report_json(report));
    write_text(root / "metrics.csv", headline_csv(report.eval.headline()));
    write_text(root / "metrics_per_iteration.csv", per_iteration_csv(report.eval));
}

void cmd_gen_data(std::size_t count, std::uint64_t seed, const std::string& out) {
    const auto samples = refshapes::generate_dataset(count, seed);
    refshapes::write_dataset(samples, out);
}

RunReport cmd_train(const RunConfig& config, const std::function<void(int, double)>& on_epoch) {
    config.validate();
    const auto train_set = load_samples(config.train_data, "training");
    const auto val_set = load_samples(config.val_data, "validation");
    Experiment ex = run_experiment(config, train_set, val_set, on_epoch);
    write_run_outputs(config.out_dir, *ex.model, ex.report);
    return ex.report;
}

EvalResult cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& out_dir,
                    bool dump_masks) {
    auto model = load_checkpoint<float>(checkpoint);
    const auto samples = refshapes::read_dataset(data);
    if (samples.empty()) {
        throw ConfigError("dataset " + data + " holds no samples");
    }
    check_compatible(model->config(), samples);
    const fs::path root(out_dir);
    ensure_dir(root);
    if (dump_masks) {
        ensure_dir(root / "masks");
    }
    auto dump = [&](std::size_t index, const std::vector<BinaryMask>& masks) {
        if (!dump_masks) {
            return;
        }
        char stem[32];
        std::snprintf(stem, sizeof stem, "%05zu", index);
        for (std::size_t k = 0; k < masks.size(); ++k) {
            pgm::write_mask((root / "masks" / (std::string(stem) + "_it" + std::to_string(k + 1) + ".pgm")).string(),
                            masks[k]);
        }
        pgm::write_mask((root / "masks" / (std::string(stem) + "_gt.pgm")).string(), samples[index].gt);
    };
    EvalResult result = evaluate(model_predictor(*model), samples, dump);

    json out;
    out["checkpoint"] = checkpoint;
    out["data"] = data;
    json rows = json::array();
    for (std::size_t i = 0; i < result.per_iteration.size(); ++i) {
        rows.push_back({{"iteration", i + 1}, {"metrics", json::parse(metrics_json(result.per_iteration[i]))}});
    }
    out["per_iteration"] = rows;
    out["headline"] = json::parse(metrics_json(result.headline()));
    write_text(root / "eval.json", out.dump(2) + "\n");
    write_text(root / "metrics.csv", headline_csv(result.headline()));
    write_text(root / "metrics_per_iteration.csv", per_iteration_csv(result));
    return result;
}

AblationAxis parse_axis(const std::string& text) {
    if (text == "iterations") {
        return AblationAxis::iterations;
    }
    if (text == "structure") {
        return AblationAxis::structure;
    }
    if (text == "update") {
        return AblationAxis::update;
    }
    throw ConfigError("unknown ablation axis '" + text + "' (expected iterations, structure or update)");
}

std::string to_string(AblationAxis axis) {
    switch (axis) {
    case AblationAxis::iterations:
        return "iterations";
    case AblationAxis::structure:
        return "structure";
    case AblationAxis::update:
        return "update";
    }
    return "?";
}

RunConfig ablation_variant(const RunConfig& base, AblationAxis axis, const std::string& value) {
    RunConfig cfg = base;
    switch (axis) {
    case AblationAxis::iterations:
        cfg.set("iterations", value);
        break;
    case AblationAxis::structure:
        cfg.set("structure", value);
        break;
    case AblationAxis::update:
        cfg.set("update_mode", value);
        break;
    }
    cfg.validate();
    return cfg;
}

AblationTable run_ablation(const RunConfig& base, AblationAxis axis, const std::vector<std::string>& values,
                           int seeds, const ExperimentFn& run) {
    if (values.empty()) {
        throw ConfigError("ablation needs at least one value");
    }
    if (seeds < 1) {
        throw ConfigError("ablation needs at least one seed");
    }
    std::vector<RunConfig> variants;
    for (const auto& v : values) {
        variants.push_back(ablation_variant(base, axis, v));
    }
    AblationTable table;
    table.axis = axis;
    for (std::size_t i = 0; i < values.size(); ++i) {
        AblationRow row;
        row.value = values[i];
        for (int s = 0; s < seeds; ++s) {
            RunConfig cfg = variants[i];
            cfg.seed = base.seed + static_cast<std::uint64_t>(s);
            RunReport report = run(cfg);
            if (report.eval.per_iteration.empty()) {
                throw std::runtime_error("ablation run " + values[i] + " seed " + std::to_string(cfg.seed) +
                                         " produced no metrics");
            }
            row.seeds.push_back(cfg.seed);
            row.runs.push_back(report.eval.headline());
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

namespace {

struct MeanStd {
    double mean;
    double std;
};

template <typename Get>
MeanStd summarize(const AblationRow& row, Get get) {
    double sum = 0.0;
    for (const auto& r : row.runs) {
        sum += get(r);
    }
    const double mean = sum / static_cast<double>(row.runs.size());
    double sq = 0.0;
    for (const auto& r : row.runs) {
        sq += (get(r) - mean) * (get(r) - mean);
    }
    const double var = row.runs.size() > 1 ? sq / static_cast<double>(row.runs.size() - 1) : 0.0;
    return {mean, std::sqrt(var)};
}

} // namespace

double ablation_mean(const AblationRow& row, double MetricReport::*metric) {
    if (row.runs.empty()) {
        throw ContractError("ablation row " + row.value + " has no runs");
    }
    return summarize(row, [&](const MetricReport& r) { return r.*metric; }).mean;
}

std::string ablation_csv(const AblationTable& table, int expected_seeds) {
    static const char* names[] = {"p50", "p60", "p70", "p80", "p90", "oiou", "miou"};
    std::string out = to_string(table.axis) + ",runs";
    for (const char* n : names) {
        out += std::string(",") + n + "_mean," + n + "_std";
    }
    out += "\n";
    char buf[64];
    for (const auto& row : table.rows) {
        if (row.runs.size() != static_cast<std::size_t>(expected_seeds)) {
            throw std::runtime_error("ablation row " + row.value + " has " + std::to_string(row.runs.size()) +
                                     " runs, expected " + std::to_string(expected_seeds));
        }
        out += csv_field(row.value) + "," + std::to_string(row.runs.size());
        for (int m = 0; m < 7; ++m) {
            const MeanStd ms = summarize(row, [m](const MetricReport& r) {
                return m < 5 ? r.p_at_k[static_cast<std::size_t>(m)] : (m == 5 ? r.overall_iou : r.mean_iou);
            });
            std::snprintf(buf, sizeof buf, m < 5 ? ",%.4f,%.4f" : ",%.6f,%.6f", ms.mean, ms.std);
            out += buf;
        }
        out += "\n";
    }
    return out;
}

void cmd_ablate(const RunConfig& base, AblationAxis axis, const std::vector<std::string>& values, int seeds) {
    base.validate();
    const auto train_set = load_samples(base.train_data, "training");
    const auto val_set = load_samples(base.val_data, "validation");
    const fs::path root(base.out_dir);
    ensure_dir(root);
    std::size_t index = 0;
    std::size_t run_in_value = 0;
    auto run = [&](const RunConfig& cfg) {
        RunConfig local = cfg;
        local.out_dir = (root / (to_string(axis) + "_" + std::to_string(index) + "_seed" + std::to_string(cfg.seed)))
                            .string();
        Experiment ex = run_experiment(local, train_set, val_set);
        write_run_outputs(local.out_dir, *ex.model, ex.report);
        if (++run_in_value == static_cast<std::size_t>(seeds)) {
            run_in_value = 0;
            ++index;
        }
        return ex.report;
    };
    AblationTable table = run_ablation(base, axis, values, seeds, run);
    write_text(root / "ablation.csv", ablation_csv(table, seeds));
}

bool GradcheckReport::passed() const {
    return std::all_of(groups.begin(), groups.end(),
                       [this](const GradGroup& g) { return g.max_rel_error <= tolerance; });
}

namespace {

// the first step is the reference; the others only rescue entries where a
// ReLU corner or rounding noise spoils that one
constexpr double kGradSteps[] = {1e-4, 1e-3, 1e-5, 1e-6};
constexpr double kGradFloor = 1e-8;

std::string group_of(const std::string& name) {
    const auto dot = name.rfind('.');
    return dot == std::string::npos ? name : name.substr(0, dot);
}

} // namespace

GradcheckReport cmd_gradcheck(std::uint64_t seed, int iterations, const std::string& corrupt_group) {
    ModelConfig config;
    config.encoder.channels = 8;
    config.encoder.lang_channels = 6;
    config.encoder.vocab = refshapes::kVocabSize;
    config.head.iterations = iterations;
    config.head.channels = 8;
    config.head.structure = {4, 8};
    config.head.lambdas = lambda_preset(iterations);
    config.validate();
    Model<double> model(config, seed);

    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    // move off the zero-bias init so no activation sits exactly on a ReLU corner
    std::normal_distribution<double> jitter(0.0, 0.05);
    for (Param<double>* p : model.params()) {
        for (auto& x : p->value.data()) {
            x += jitter(rng);
        }
    }
    const int size = 16;
    Tensor<double> image({3, size, size});
    for (auto& x : image.data()) {
        x = unit(rng);
    }
    TokenSeq tokens;
    tokens.valid = std::uniform_int_distribution<int>(1, refshapes::kMaxTokens)(rng);
    for (int i = 0; i < refshapes::kMaxTokens; ++i) {
        tokens.ids.push_back(i < tokens.valid ? std::uniform_int_distribution<int>(1, config.encoder.vocab - 1)(rng)
                                              : kPadId);
    }
    BinaryMask gt(size, size);
    std::uniform_int_distribution<int> coord(0, size - 1);
    const int y0 = coord(rng), y1 = coord(rng), x0 = coord(rng), x1 = coord(rng);
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y) {
        for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) {
            gt.set(y, x, true);
        }
    }
    const int stride = model.encoder().stride();
    const auto& lambdas = model.config().head.lambdas;

    auto loss_value = [&]() {
        Tape<double> tape;
        tape.set_grad_enabled(false);
        auto fwd = model.forward(tape, image, tokens);
        return tape.value(head_loss(tape, fwd.head, gt, stride, lambdas).total)[0];
    };

    model.zero_grad();
    {
        Tape<double> tape;
        if (!corrupt_group.empty()) {
            tape.corrupt_param_grads(corrupt_group + ".", 1.5);
        }
        auto fwd = model.forward(tape, image, tokens);
        tape.backward(head_loss(tape, fwd.head, gt, stride, lambdas).total);
    }

    GradcheckReport report;
    report.iterations = iterations;
    for (Param<double>* p : model.params()) {
        const std::string group = group_of(p->name);
        auto it = std::find_if(report.groups.begin(), report.groups.end(),
                               [&](const GradGroup& g) { return g.name == group; });
        if (it == report.groups.end()) {
            report.groups.push_back({group, 0, 0, 0.0});
            it = std::prev(report.groups.end());
        }
        auto values = p->value.data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double analytic = p->grad[i];
            const double orig = values[i];
            double err = 0.0;
            for (std::size_t attempt = 0; attempt < std::size(kGradSteps); ++attempt) {
                const double h = kGradSteps[attempt];
                values[i] = orig + h;
                const double plus = loss_value();
                values[i] = orig - h;
                const double minus = loss_value();
                values[i] = orig;
                const double numeric = (plus - minus) / (2.0 * h);
                err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
                if (err <= report.tolerance) {
                    if (attempt > 0) {
                        ++it->fallbacks;
                    }
                    break;
                }
            }
            it->max_rel_error = std::max(it->max_rel_error, err);
        }
        it->count += values.size();
    }
    return report;
}

BenchReport run_bench(Model<float>& model, int reps, int warmup) {
    if (reps < 1) {
        throw ConfigError("bench needs at least one repetition");
    }
    const refshapes::Sample sample = refshapes::generate_sample(0);
    BenchReport report;
    report.flops = count_flops(model.config(), sample.image.dim(1), sample.image.dim(2));
    report.reps = reps;
    auto once = [&]() {
        Tape<float> tape;
        tape.set_grad_enabled(false);
        auto fwd = model.forward(tape, sample.image, sample.tokens);
        return fwd.head.scores.size();
    };
    std::size_t sink = 0;
    for (int i = 0; i < warmup; ++i) {
        sink += once();
    }
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) {
        sink += once();
    }
    report.mean_ms = seconds_since(start) * 1000.0 / reps;
    if (sink == 0) {
        throw std::runtime_error("bench: forward produced no outputs");
    }
    return report;
}

BenchReport cmd_bench(const std::string& checkpoint, int reps, int warmup) {
    auto model = load_checkpoint<float>(checkpoint);
    return run_bench(*model, reps, warmup);
}

std::string bench_json(const BenchReport& report) {
    json out;
    out["flops"] = flops_json(report.flops);
    out["reps"] = report.reps;
    out["mean_latency_ms"] = report.mean_ms;
    return out.dump(2) + "\n";
}

} // namespace sadlr
