#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sadlr/commands.hpp"
#include "sadlr/errors.hpp"
#include "sadlr/pgm.hpp"

using namespace sadlr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("sadlr_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunConfig small_config() {
    RunConfig cfg;
    cfg.set("channels", "8");
    cfg.set("lang_channels", "6");
    cfg.set("structure", "4,8");
    cfg.set("iterations", "2");
    cfg.set("lambdas", "preset");
    return cfg;
}

} // namespace

TEST_CASE("run config text round trip") {
    RunConfig cfg;
    cfg.set("seed", "42");
    cfg.set("lr", "0.00037");
    cfg.set("structure", "[16,32]");
    cfg.set("iterations", "2");
    cfg.set("lambdas", "0.3,0.7");
    cfg.set("update_mode", "replace");
    cfg.set("train_data", "a.rfs");
    const RunConfig back = RunConfig::parse(cfg.to_text());
    CHECK(back.to_text() == cfg.to_text());
    CHECK(back.seed == 42);
    CHECK(back.lr == 0.00037);
    CHECK(back.model.head.structure == std::vector<int>{16, 32});
    CHECK(back.model.head.update_mode == UpdateMode::replace);

    CHECK(RunConfig::parse("# comment\n\nseed = 5\n").seed == 5);
    CHECK_THROWS_AS(RunConfig::parse("bogus=1\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("seed\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("epochs=abc\n"), ConfigError);
    RunConfig bad;
    bad.set("lambdas", "1,2");
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK(split_values("[8],[8,32]") == std::vector<std::string>{"[8]", "[8,32]"});
    CHECK(parse_int_list("[8,32]") == std::vector<int>{8, 32});
}

TEST_CASE("checkpoint round trip and version check") {
    const RunConfig cfg = small_config();
    Model<float> model(cfg.model, 9);
    const auto bytes = serialize_checkpoint(model);
    auto back = deserialize_checkpoint<float>(bytes);
    CHECK(serialize_checkpoint(*back) == bytes);
    CHECK(back->config().head.structure == cfg.model.head.structure);

    auto wrong = bytes;
    wrong[4] = 99;
    try {
        deserialize_checkpoint<float>(wrong);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
    auto truncated = bytes;
    truncated.resize(bytes.size() / 2);
    CHECK_THROWS_AS(deserialize_checkpoint<float>(truncated), FormatError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint<float>(bad_magic), FormatError);
}

TEST_CASE("FLOP counts against a hand count") {
    ModelConfig cfg;
    const FlopReport r = count_flops(cfg, 48, 48);
    // 12x12 feature plane, C = 32, C_l = 48, structure 8,32
    const std::int64_t plane = 144;
    CHECK(r.head_fixed == 32 * 48);
    CHECK(r.head_per_iteration == 32 * 32 * 8 + plane * 32 * 8 + 32 * 8 * 32 + plane * 8 * 32 + plane * 32 * 2);
    CHECK(r.head_per_iteration == 99328);
    CHECK(r.head == 1536 + 3 * 99328);
    CHECK(r.encoder == 16 * 24 * 24 * 27 + 32 * 144 * 16 * 9 + 32 * 48 + 144 * 32 * 64);
    CHECK(r.encoder == 1208832);
    cfg.head.iterations = 0;
    cfg.head.lambdas = lambda_preset(0);
    CHECK(count_flops(cfg, 48, 48).head == 144 * 32 * 2);
    CHECK_THROWS_AS(count_flops(cfg, 50, 48), ConfigError);
}

TEST_CASE("gen-data is deterministic") {
    const fs::path dir = scratch("gen");
    cmd_gen_data(5, 11, (dir / "a.rfs").string());
    cmd_gen_data(5, 11, (dir / "b.rfs").string());
    CHECK(slurp(dir / "a.rfs") == slurp(dir / "b.rfs"));
    CHECK(fs::file_size(dir / "a.rfs") == refshapes::dataset_file_size(5));
    cmd_gen_data(0, 11, (dir / "empty.rfs").string());
    CHECK(refshapes::read_dataset((dir / "empty.rfs").string()).empty());
    fs::remove_all(dir);
}

TEST_CASE("evaluation of a perfect predictor") {
    const auto samples = refshapes::generate_dataset(30, 500);
    const auto result = evaluate([](const refshapes::Sample& s) { return std::vector<BinaryMask>{s.gt, s.gt}; },
                                 samples);
    REQUIRE(result.per_iteration.size() == 2);
    for (double p : result.headline().p_at_k) {
        CHECK(p == 100.0);
    }
    CHECK(result.headline().mean_iou == 1.0);
    CHECK(result.headline().overall_iou == 1.0);
    CHECK_THROWS_AS(evaluate([](const refshapes::Sample& s) { return std::vector<BinaryMask>{s.gt}; },
                             std::span<const refshapes::Sample>{}),
                    ContractError);
}

TEST_CASE("eval metrics match masks dumped to disk") {
    const fs::path dir = scratch("eval");
    const RunConfig cfg = small_config();
    Model<float> model(cfg.model, 3);
    save_checkpoint(model, (dir / "model.sdlr").string());
    const auto samples = refshapes::generate_dataset(12, 700);
    refshapes::write_dataset(samples, (dir / "val.rfs").string());
    const auto result =
        cmd_eval((dir / "model.sdlr").string(), (dir / "val.rfs").string(), (dir / "out").string(), true);
    REQUIRE(result.per_iteration.size() == 2);

    for (int it = 1; it <= 2; ++it) {
        double iou_sum = 0.0;
        std::int64_t inter = 0, uni = 0;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof(name), "%05zu_it%d.pgm", i, it);
            const auto pred = pgm::read_mask((dir / "out" / "masks" / name).string());
            std::snprintf(name, sizeof(name), "%05zu_gt.pgm", i);
            const auto gt = pgm::read_mask((dir / "out" / "masks" / name).string());
            CHECK(gt == samples[i].gt);
            std::int64_t a = 0, b = 0;
            for (int y = 0; y < 48; ++y) {
                for (int x = 0; x < 48; ++x) {
                    a += pred.get(y, x) && gt.get(y, x);
                    b += pred.get(y, x) || gt.get(y, x);
                }
            }
            iou_sum += b == 0 ? 1.0 : double(a) / double(b);
            inter += a;
            uni += b;
        }
        const auto& m = result.per_iteration[static_cast<std::size_t>(it - 1)];
        CHECK(m.mean_iou == doctest::Approx(iou_sum / double(samples.size())).epsilon(1e-12));
        CHECK(m.intersection == inter);
        CHECK(m.union_ == uni);
    }
    const std::string rows = slurp(dir / "out" / "metrics_per_iteration.csv");
    CHECK(std::count(rows.begin(), rows.end(), '\n') == 3);
    CHECK(fs::exists(dir / "out" / "eval.json"));
    CHECK(slurp(dir / "out" / "metrics.csv").rfind("p50,p60,p70,p80,p90,oiou,miou\n", 0) == 0);

    refshapes::write_dataset(std::span<const refshapes::Sample>{}, (dir / "empty.rfs").string());
    CHECK_THROWS_AS(cmd_eval((dir / "model.sdlr").string(), (dir / "empty.rfs").string(), (dir / "o2").string(), false),
                    ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("ablation table shape") {
    RunConfig base = small_config();
    base.seed = 10;
    std::vector<std::uint64_t> seen;
    const ExperimentFn fake = [&](const RunConfig& cfg) {
        seen.push_back(cfg.seed);
        RunReport r;
        r.config = cfg;
        MetricReport m;
        m.mean_iou = 0.1 * cfg.model.head.iterations + 0.01 * double(cfg.seed - 10);
        r.eval.per_iteration.assign(static_cast<std::size_t>(std::max(1, cfg.model.head.iterations)), m);
        return r;
    };
    const auto table = run_ablation(base, AblationAxis::iterations, {"0", "1", "3"}, 2, fake);
    CHECK(seen == std::vector<std::uint64_t>{10, 11, 10, 11, 10, 11});
    REQUIRE(table.rows.size() == 3);
    CHECK(table.rows[2].runs.size() == 2);
    CHECK(ablation_mean(table.rows[2], &MetricReport::mean_iou) == doctest::Approx(0.305));

    const std::string csv = ablation_csv(table, 2);
    CHECK(csv.rfind("iterations,runs,p50_mean,p50_std,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

    auto broken = table;
    broken.rows[1].runs.pop_back();
    CHECK_THROWS(ablation_csv(broken, 2));

    const auto structures = run_ablation(base, AblationAxis::structure, {"[8]", "[4,8]"}, 1, fake);
    CHECK(ablation_csv(structures, 1).find("\"[4,8]\"") != std::string::npos);
    CHECK(ablation_variant(base, AblationAxis::update, "replace").model.head.update_mode == UpdateMode::replace);
    CHECK_THROWS_AS(parse_axis("depth"), ConfigError);
}

TEST_CASE("gradcheck catches an injected fault") {
    const auto clean = cmd_gradcheck(4, 1);
    CHECK(clean.passed());
    const auto faulty = cmd_gradcheck(4, 1, "head.cls");
    CHECK_FALSE(faulty.passed());
    bool flagged = false;
    for (const auto& g : faulty.groups) {
        if (g.name == "head.cls") {
            flagged = g.max_rel_error > faulty.tolerance;
        } else {
            CHECK(g.max_rel_error <= faulty.tolerance);
        }
    }
    CHECK(flagged);
}

TEST_CASE("one epoch reduces the loss") {
    RunConfig cfg;
    const auto samples = refshapes::generate_dataset(100, 0);
    Model<float> model(cfg.model, 0);
    const double before = dataset_loss(model, samples);
    TrainOptions opts;
    opts.epochs = 1;
    train(model, samples, opts);
    CHECK(dataset_loss(model, samples) < before);
}

TEST_CASE("non-finite loss is reported with its step") {
    RunConfig cfg = small_config();
    const auto samples = refshapes::generate_dataset(4, 0);
    Model<float> model(cfg.model, 0);
    model.head().cls_bias.value[0] = std::nanf("");
    TrainOptions opts;
    opts.epochs = 1;
    try {
        train(model, samples, opts);
        FAIL("expected failure");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("non-finite loss at step 0") != std::string::npos);
    }
}
