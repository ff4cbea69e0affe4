#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mirage/config.hpp"
#include "mirage/diagnostics.hpp"
#include "mirage/io.hpp"
#include "mirage/kernels.hpp"
#include "mirage/protocol.hpp"
#include "mirage/report.hpp"

namespace fs = std::filesystem;
using namespace mirage;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kNumeric = 3, kCorrupt = 4 };

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string arm = "full";
};

config::RunConfig load(const Common& c) {
    config::RunConfig cfg = c.config_path.empty() ? config::RunConfig{} : config::load_config(c.config_path);
    if (c.seed) {
        cfg.seed = *c.seed;
        cfg.protocol.seeds = {*c.seed};
    }
    if (!c.out.empty()) cfg.out_dir = c.out;
    cfg.validate();
    return cfg;
}

fs::path out_dir(const config::RunConfig& cfg) {
    const fs::path dir(cfg.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw io::IoError("cannot create output directory '" + cfg.out_dir + "'");
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    io::write_file(path.string(), std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string file_id(const std::string& subset_id) {
    std::string s;
    for (char ch : subset_id) s += std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '.' ? ch : '_';
    return s;
}

eval::Model load_model(const config::RunConfig& cfg, config::Arm arm, const std::string& checkpoint) {
    auto model = eval::make_model(cfg, arm, cfg.seed);
    if (checkpoint.empty()) return model;
    std::map<std::string, ad::Tensor<float>> named;
    for (auto& [name, t] : io::load_checkpoint(checkpoint)) named.emplace(name, t);
    try {
        model.load_named(named);
    } catch (const std::exception& e) {
        throw io::CorruptArtifact("checkpoint '" + checkpoint + "' does not match the configured model: " + e.what());
    }
    return model;
}

int cmd_synth(const Common& c) {
    const auto cfg = load(c);
    const auto dir = out_dir(cfg);
    std::map<std::string, std::size_t> counts;
    auto tally = [&](const std::vector<ImageSample>& v) {
        for (const auto& s : v) ++counts[std::string(generator_name(s.generator))];
    };
    const auto train = eval::build_train_set(cfg, cfg.seed);
    io::save_dataset((dir / "train.mird").string(), train);
    tally(train);
    const auto holdout = eval::build_holdout_set(cfg, cfg.seed);
    io::save_dataset((dir / "holdout.mird").string(), holdout);
    tally(holdout);
    for (const auto& s : eval::build_test_subsets(cfg, cfg.seed)) {
        io::save_dataset((dir / ("test_" + file_id(s.id) + ".mird")).string(), s.images);
        tally(s.images);
    }
    for (const auto& [family, n] : counts) std::printf("%-12s %zu\n", family.c_str(), n);
    return kOk;
}

int cmd_train(const Common& c, const std::string& resume) {
    const auto cfg = load(c);
    const auto arm = config::parse_arm(c.arm);
    const auto dir = out_dir(cfg);
    auto model = load_model(cfg, arm, resume);
    const auto train = eval::build_train_set(cfg, cfg.seed);
    const auto holdout = eval::build_holdout_set(cfg, cfg.seed);
    const auto log = eval::train_model(model, train, holdout, eval::train_options(cfg, arm, cfg.seed),
                                       [](const eval::EpochRecord& e) {
                                           std::printf("epoch %zu  lr %.6f  total %.6f  ce %.6f  dis %.6f  v_clip %.6f  sep %.6f\n",
                                                       e.epoch, e.lr, e.total, e.ce, e.dis, e.diagnostics.v_clip,
                                                       e.diagnostics.separation);
                                           std::fflush(stdout);
                                       });
    io::save_checkpoint((dir / "checkpoint.mirg").string(), model.named_tensors());
    auto doc = report::train_log_json(log);
    doc["arm"] = c.arm;
    doc["seed"] = cfg.seed;
    write_text(dir / "train_log.json", report::format_json(doc));
    write_text(dir / "config.json", config::serialize_config(cfg));
    std::printf("wrote %s\n", (dir / "checkpoint.mirg").string().c_str());
    return kOk;
}

int cmd_eval(const Common& c, const std::string& checkpoint) {
    const auto cfg = load(c);
    const auto dir = out_dir(cfg);
    if (checkpoint.empty()) {
        const auto report = eval::run_protocol(cfg, [](const eval::RunResult& r) {
            std::printf("seed %llu  %-12s seen %.4f  unseen %.4f  avg %.4f  mAP %.4f  (%.1fs)\n",
                        static_cast<unsigned long long>(r.seed), config::arm_name(r.arm).c_str(), r.seen_accuracy,
                        r.unseen_accuracy, r.mean_accuracy, r.map, r.seconds);
            std::fflush(stdout);
        });
        write_text(dir / "report.json", report::format_json(report::protocol_json(cfg, report)));
        write_text(dir / "timing.json", report::format_json(report::timing_json(report)));
        const auto table = report::protocol_table(cfg, report);
        write_text(dir / "report.txt", table);
        std::cout << "\n" << table;
        return kOk;
    }
    const auto arm = config::parse_arm(c.arm);
    const auto model = load_model(cfg, arm, checkpoint);
    const auto start = std::chrono::steady_clock::now();
    const auto subsets = eval::build_test_subsets(cfg, cfg.seed);
    auto loss = cfg.loss;
    auto enc = cfg.encoder;
    config::apply_arm(arm, enc, loss);
    const auto results = eval::evaluate_subsets(model, subsets, loss.temperature);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_text(dir / "report.json", report::format_json(report::eval_json(cfg, arm, results)));
    write_text(dir / "timing.json", report::format_json({{"seconds", seconds}}));
    const auto table = report::subsets_table(results, c.arm);
    write_text(dir / "report.txt", table);
    std::cout << table;
    return kOk;
}

std::vector<double> rows_of(const ad::Tensor<float>& m, std::size_t begin, std::size_t end) {
    std::vector<double> out;
    for (std::size_t i = begin; i < end; ++i)
        for (std::size_t j = 0; j < m.dim(1); ++j) out.push_back(m.at(i, j));
    return out;
}

report::json diagnose_model(const eval::Model& model, const config::RunConfig& cfg, double tau,
                            const std::vector<ImageSample>& holdout, const std::vector<eval::TestSubset>& subsets,
                            std::size_t directions, std::size_t bins) {
    using diagnostics::EmpiricalDistribution;
    const std::size_t d = model.config().out_dim;
    const std::size_t half = cfg.data.holdout;
    const auto [h_emb, anchors] = model.embed_all(holdout);
    const std::vector<double> anchor_rows(anchors.data().begin(), anchors.data().end());
    const EmpiricalDistribution train_real(rows_of(h_emb, 0, half), d, "NATURAL", Label::Real);
    const EmpiricalDistribution train_fake(rows_of(h_emb, half, 2 * half), d,
                                           std::string(generator_name(cfg.data.train_family)), Label::Fake);
    std::vector<Label> h_labels;
    for (const auto& s : holdout) h_labels.push_back(s.label);
    const auto h_ce = objective::per_sample_cross_entropy(h_emb, h_labels, anchors, tau);

    diagnostics::DistributionFamily generated = {train_fake}, natural = {train_real};
    std::vector<std::vector<double>> fake_losses, real_losses;
    for (const auto& s : subsets) {
        if (s.condition != eval::kCleanCondition) continue;
        const auto [emb, a] = model.embed_all(s.images);
        const std::size_t n = cfg.protocol.test_count;
        generated.emplace_back(rows_of(emb, n, 2 * n), d, s.id, Label::Fake);
        natural.emplace_back(rows_of(emb, 0, n), d, s.id + "-real", Label::Real);
        std::vector<Label> labels;
        for (const auto& img : s.images) labels.push_back(img.label);
        const auto ce = objective::per_sample_cross_entropy(emb, labels, a, tau);
        real_losses.emplace_back(ce.begin(), ce.begin() + static_cast<std::ptrdiff_t>(n));
        fake_losses.emplace_back(ce.begin() + static_cast<std::ptrdiff_t>(n), ce.end());
    }
    const std::vector<double> train_real_ce(h_ce.begin(), h_ce.begin() + static_cast<std::ptrdiff_t>(half));
    const std::vector<double> train_fake_ce(h_ce.begin() + static_cast<std::ptrdiff_t>(half), h_ce.end());
    return {{"v_clip", diagnostics::v_clip(train_fake, train_real, anchor_rows)},
            {"separation_train", diagnostics::inter_class_separation({train_fake}, {train_real})},
            {"separation_all", diagnostics::inter_class_separation(generated, natural)},
            {"sup_variation_1", diagnostics::sup_variation(train_fake, train_real, anchor_rows, 1, bins, cfg.seed)},
            {"sup_variation", diagnostics::sup_variation(train_fake, train_real, anchor_rows, directions, bins, cfg.seed)},
            {"sup_variation_directions", directions},
            {"sup_variation_bins", bins},
            {"generalization_error",
             diagnostics::generalization_error(train_fake_ce, train_real_ce, fake_losses, real_losses)}};
}

int cmd_diagnose(const Common& c, const std::string& checkpoint, std::size_t directions, std::size_t bins) {
    const auto cfg = load(c);
    const auto arm = config::parse_arm(c.arm);
    const auto dir = out_dir(cfg);
    auto enc = cfg.encoder;
    auto loss = cfg.loss;
    config::apply_arm(arm, enc, loss);
    const auto holdout = eval::build_holdout_set(cfg, cfg.seed);
    const auto subsets = eval::build_test_subsets(cfg, cfg.seed);
    const auto initial = load_model(cfg, arm, "");
    const auto final_model = load_model(cfg, arm, checkpoint);
    report::json doc = {{"arm", c.arm},
                        {"seed", cfg.seed},
                        {"initial", diagnose_model(initial, cfg, loss.temperature, holdout, subsets, directions, bins)},
                        {"final", diagnose_model(final_model, cfg, loss.temperature, holdout, subsets, directions, bins)},
                        {"sup_variation_note", "approximate: lower bound from sampled directions"}};
    write_text(dir / "diagnostics.json", report::format_json(doc));

    std::vector<ImageSample> samples = holdout;
    std::vector<std::string> ids(holdout.size(), "holdout");
    for (const auto& s : subsets) {
        samples.insert(samples.end(), s.images.begin(), s.images.end());
        ids.insert(ids.end(), s.images.size(), s.id);
    }
    write_text(dir / "embeddings.csv", eval::dump_embeddings(final_model, samples, ids));
    std::cout << report::format_json(doc);
    return kOk;
}

int cmd_dump(const Common& c, const std::string& checkpoint) {
    const auto cfg = load(c);
    const auto arm = config::parse_arm(c.arm);
    const auto dir = out_dir(cfg);
    const auto model = load_model(cfg, arm, checkpoint);
    std::vector<ImageSample> samples = eval::build_holdout_set(cfg, cfg.seed);
    std::vector<std::string> ids(samples.size(), "holdout");
    for (const auto& s : eval::build_test_subsets(cfg, cfg.seed)) {
        samples.insert(samples.end(), s.images.begin(), s.images.end());
        ids.insert(ids.end(), s.images.size(), s.id);
    }
    write_text(dir / "embeddings.csv", eval::dump_embeddings(model, samples, ids));
    std::printf("wrote %zu rows to %s\n", samples.size() + 2, (dir / "embeddings.csv").string().c_str());
    return kOk;
}

void add_common(CLI::App* cmd, Common& c, bool with_arm) {
    cmd->add_option("--config", c.config_path, "JSON run configuration");
    cmd->add_option("--seed", c.seed, "Override the run seed");
    cmd->add_option("--out", c.out, "Output directory");
    if (with_arm)
        cmd->add_option("--arm", c.arm, "Ablation arm")
            ->check(CLI::IsMember({"full", "no-bank", "ce-only", "single-modal"}));
}

}  // namespace

int main(int argc, char** argv) {
    kernels::configure_threads_from_env();
    CLI::App app{"Prompt-learning detector laboratory for synthetic generated-image benchmarks"};
    app.require_subcommand(1);
    Common common;
    std::string checkpoint, resume;
    std::size_t directions = 64, bins = 32;

    auto* synth = app.add_subcommand("synth", "Generate the configured datasets");
    add_common(synth, common, false);
    auto* train = app.add_subcommand("train", "Train one arm and write a checkpoint");
    add_common(train, common, true);
    train->add_option("--resume", resume, "Initialise parameters from a checkpoint");
    auto* evaluate = app.add_subcommand("eval", "Evaluate a checkpoint, or run the whole protocol without one");
    add_common(evaluate, common, true);
    evaluate->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate");
    auto* diagnose = app.add_subcommand("diagnose", "Variation, separation and generalization diagnostics");
    add_common(diagnose, common, true);
    diagnose->add_option("--checkpoint", checkpoint, "Checkpoint to analyse")->required();
    diagnose->add_option("--directions", directions, "Projection directions for sup_variation")->check(CLI::PositiveNumber);
    diagnose->add_option("--bins", bins, "Histogram bins")->check(CLI::Range(2, 100000));
    auto* dump = app.add_subcommand("dump-embeddings", "Write image and anchor embeddings as CSV");
    add_common(dump, common, true);
    dump->add_option("--checkpoint", checkpoint, "Checkpoint to embed with");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (*synth) return cmd_synth(common);
        if (*train) return cmd_train(common, resume);
        if (*evaluate) return cmd_eval(common, checkpoint);
        if (*diagnose) return cmd_diagnose(common, checkpoint, directions, bins);
        if (*dump) return cmd_dump(common, checkpoint);
    } catch (const config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const eval::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kNumeric;
    } catch (const io::CorruptArtifact& e) {
        std::cerr << "corrupt artifact: " << e.what() << "\n";
        return kCorrupt;
    } catch (const io::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}
