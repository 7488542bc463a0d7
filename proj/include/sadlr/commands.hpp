#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sadlr/flops.hpp"
#include "sadlr/run_config.hpp"
#include "sadlr/train.hpp"

namespace sadlr {

struct RunReport {
    RunConfig config;
    std::vector<double> epoch_losses;
    EvalResult eval;
    double train_seconds = 0.0;
    double eval_seconds = 0.0;
    FlopReport flops;

    double final_loss() const { return epoch_losses.empty() ? 0.0 : epoch_losses.back(); }
};

struct Experiment {
    std::unique_ptr<Model<float>> model;
    RunReport report;
};

/// Trains from `config.seed` and evaluates on `val`; touches no files.
Experiment run_experiment(const RunConfig& config, std::span<const refshapes::Sample> train_set,
                          std::span<const refshapes::Sample> val_set,
                          const std::function<void(int, double)>& on_epoch = {});

std::string report_json(const RunReport& report);
/// Header plus the headline (last-iteration) row.
std::string headline_csv(const MetricReport& report);
/// One row per iteration index, 1-based.
std::string per_iteration_csv(const EvalResult& eval);

/// Writes checkpoint.sdlr, report.json, metrics.csv, metrics_per_iteration.csv
/// and config.txt into `dir`.
void write_run_outputs(const std::string& dir, Model<float>& model, const RunReport& report);

void cmd_gen_data(std::size_t count, std::uint64_t seed, const std::string& out);

RunReport cmd_train(const RunConfig& config, const std::function<void(int, double)>& on_epoch = {});

/// Writes metrics.csv, metrics_per_iteration.csv and eval.json to `out_dir`;
/// with `dump_masks`, masks/<sample>_it<i>.pgm and masks/<sample>_gt.pgm.
EvalResult cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& out_dir,
                    bool dump_masks);

enum class AblationAxis { iterations, structure, update };
AblationAxis parse_axis(const std::string& text);
std::string to_string(AblationAxis axis);

/// Base config with one axis value applied.
RunConfig ablation_variant(const RunConfig& base, AblationAxis axis, const std::string& value);

struct AblationRow {
    std::string value;
    std::vector<std::uint64_t> seeds;
    std::vector<MetricReport> runs; // headline metrics, one per seed
};

struct AblationTable {
    AblationAxis axis = AblationAxis::iterations;
    std::vector<AblationRow> rows;
};

/// Runs every value under seeds base.seed, base.seed + 1, ...
/// `run` defaults to run_experiment; injectable for tests.
using ExperimentFn = std::function<RunReport(const RunConfig&)>;
AblationTable run_ablation(const RunConfig& base, AblationAxis axis, const std::vector<std::string>& values,
                           int seeds, const ExperimentFn& run);

/// value,runs,<metric>_mean,<metric>_std,... ; rejects rows with missing runs.
std::string ablation_csv(const AblationTable& table, int expected_seeds);
double ablation_mean(const AblationRow& row, double MetricReport::*metric);

void cmd_ablate(const RunConfig& base, AblationAxis axis, const std::vector<std::string>& values, int seeds);

struct GradGroup {
    std::string name;
    std::size_t count = 0;
    /// entries that only agreed at a fallback step
    std::size_t fallbacks = 0;
    double max_rel_error = 0.0;
};

struct GradcheckReport {
    int iterations = 0;
    std::vector<GradGroup> groups;
    double tolerance = 1e-3;
    bool passed() const;
};

/// Double-precision finite-difference audit of every parameter group on
/// one random sample. `corrupt_group` scales that group's analytic gradient.
GradcheckReport cmd_gradcheck(std::uint64_t seed, int iterations, const std::string& corrupt_group = {});

struct BenchReport {
    FlopReport flops;
    int reps = 0;
    double mean_ms = 0.0;
};

BenchReport run_bench(Model<float>& model, int reps, int warmup);
BenchReport cmd_bench(const std::string& checkpoint, int reps, int warmup);
std::string bench_json(const BenchReport& report);

} // namespace sadlr
