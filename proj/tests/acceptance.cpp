// Acceptance checks. Prints one PASS/FAIL line per selected criterion and
// exits non-zero if any of them fails.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "grad_cases.hpp"
#include "mirage/diagnostics.hpp"
#include "mirage/io.hpp"
#include "mirage/kernels.hpp"
#include "mirage/metrics.hpp"
#include "mirage/objective.hpp"
#include "mirage/protocol.hpp"
#include "mirage/report.hpp"
#include "oracles.hpp"

using namespace mirage;
using ad::Tape;
using ad::Tensor;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Tensor<double> stack(const oracle::Rows& rows, std::size_t d) {
    std::vector<double> v;
    for (const auto& r : rows) v.insert(v.end(), r.begin(), r.end());
    return Tensor<double>({rows.size(), d}, std::move(v));
}

// ---------------------------------------------------------------------------

Outcome criterion_autodiff() {
    constexpr int kInstances = 100;
    constexpr double kTol = 1e-6;
    constexpr double kStep = 1e-6;  // central-difference truncation error scales as step^2
    const auto t0 = Clock::now();
    Rng rng(0xAD0001);
    double worst_all = 0;
    std::string worst_name;
    bool ok = true;
    auto record = [&](const std::string& name, double err) {
        if (err > worst_all) worst_all = err, worst_name = name;
        if (!(err < kTol)) ok = false;
    };
    for (int p = 0; p < ad::kPrimitiveCount; ++p) {
        const auto prim = static_cast<ad::Primitive>(p);
        for (int i = 0; i < kInstances; ++i) {
            const auto c = testing::primitive_case(prim, rng);
            record(std::string(ad::primitive_name(prim)), ad::grad_check(c.function, c.point, kStep));
        }
    }
    for (std::size_t k = 0; k < testing::composite_names().size(); ++k)
        for (int i = 0; i < kInstances; ++i) {
            const auto c = testing::composite_case(k, rng);
            record(testing::composite_names()[k], ad::grad_check(c.function, c.point, kStep));
        }
    const double secs = seconds_since(t0);
    return {ok && secs < 60.0,
            fmt("%d primitives + %zu composites x %d instances; max rel err %.3g (%s) < 1e-6 at step 1e-6; %.1fs < 60s", ad::kPrimitiveCount,
                testing::composite_names().size(), kInstances, worst_all, worst_name.c_str(), secs)};
}

Outcome criterion_loss_oracles() {
    constexpr int kInstances = 200;
    Rng rng(0xAD0002);
    double worst = 0;
    for (int t = 0; t < kInstances; ++t) {
        const std::size_t images = 1 + rng.index(8), d = 2 + rng.index(15), bank_rows = rng.index(12);
        const double tau = rng.uniform(0.07, 1.0);
        oracle::Rows pool, bank_v, img;
        std::vector<Label> labels = {Label::Real, Label::Fake}, img_labels, bank_labels;
        for (int a = 0; a < 2; ++a) pool.push_back(oracle::random_unit(rng, d));
        for (std::size_t i = 0; i < images; ++i) {
            img.push_back(oracle::random_unit(rng, d));
            img_labels.push_back(rng.bernoulli(0.5) ? Label::Fake : Label::Real);
            pool.push_back(img.back());
            labels.push_back(img_labels.back());
        }
        objective::MemoryBank<double> bank(64, d);
        for (std::size_t j = 0; j < bank_rows; ++j) {
            bank_v.push_back(oracle::random_unit(rng, d));
            bank_labels.push_back(rng.bernoulli(0.5) ? Label::Fake : Label::Real);
        }
        if (bank_rows > 0) bank.push(stack(bank_v, d), bank_labels);

        const oracle::Rows anchor_rows(pool.begin(), pool.begin() + 2);
        Tape<double> tape;
        const auto anchors = stack(anchor_rows, d);
        const auto batch = stack(img, d);
        const auto set = objective::EmbeddingSet<double>::build(tape, anchors, batch, img_labels);
        const double dis = objective::discriminative_loss(tape, set, tau).item();
        const double dis_bank = objective::discriminative_loss_with_bank(tape, set, bank, tau).item();
        const double ce = objective::cross_entropy_loss(tape, batch, img_labels, anchors, tau).item();
        worst = std::max({worst, std::abs(dis - oracle::discriminative_loss(pool, labels, {}, {}, tau)),
                          std::abs(dis_bank - oracle::discriminative_loss(pool, labels, bank_v, bank_labels, tau)),
                          std::abs(ce - oracle::cross_entropy(img, img_labels, anchor_rows, tau))});
    }

    Tape<double> tape;
    const Tensor<double> anchors({2, 3}, {1, 0, 0, 0, 1, 0});
    const Tensor<double> h({1, 3}, {0, 0, 1});
    const std::vector<Label> fake = {Label::Fake};
    const double analytic = objective::discriminative_loss(tape, objective::EmbeddingSet<double>::build(tape, anchors, h, fake), 1.0).item();
    const double analytic_err = std::abs(analytic - 2.0 * std::log(2.0));
    return {worst < 1e-6 && analytic_err < 1e-6,
            fmt("%d instances (I<=8, d<=16), max |lib - naive| %.3g < 1e-6; orthonormal case %.9f vs 2ln2 (err %.2g)",
                kInstances, worst, analytic, analytic_err)};
}

Outcome criterion_separation_pressure() {
    constexpr int kSets = 60;
    Rng rng(0xAD0003);
    int increased = 0, tried = 0;
    double smallest = INFINITY;
    while (tried < kSets) {
        const std::size_t images = 2 + rng.index(7), n = images + 2, d = 16;
        const double tau = rng.uniform(0.07, 1.0);
        oracle::Rows rows;
        std::vector<Label> labels = {Label::Real, Label::Fake};
        for (std::size_t i = 0; i < n; ++i) rows.push_back(oracle::random_unit(rng, d));
        for (std::size_t i = 0; i < images; ++i) labels.push_back(rng.bernoulli(0.5) ? Label::Fake : Label::Real);

        std::size_t i = rng.index(n), j = rng.index(n);
        while (labels[j] == labels[i]) j = rng.index(n);

        // Realize the perturbed Gram matrix exactly; every other inner product is unchanged.
        Eigen::MatrixXd gram(n, n);
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b) gram(a, b) = oracle::dot(rows[a], rows[b]);
        if (gram(i, j) + 0.05 > 1.0) continue;
        Eigen::MatrixXd bumped = gram;
        bumped(i, j) += 0.05;
        bumped(j, i) += 0.05;
        Eigen::LLT<Eigen::MatrixXd> chol(gram), chol_b(bumped);
        if (chol.info() != Eigen::Success || chol_b.info() != Eigen::Success) continue;
        ++tried;

        auto loss_of = [&](const Eigen::MatrixXd& l) {
            std::vector<double> anchors, batch;
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t c = 0; c < n; ++c) (a < 2 ? anchors : batch).push_back(l(a, c));
            Tape<double> tape;
            const std::vector<Label> img_labels(labels.begin() + 2, labels.end());
            const auto set = objective::EmbeddingSet<double>::build(tape, Tensor<double>({2, n}, anchors),
                                                                     Tensor<double>({images, n}, batch), img_labels);
            return objective::discriminative_loss(tape, set, tau).item();
        };
        const Eigen::MatrixXd l0 = chol.matrixL(), l1 = chol_b.matrixL();
        const double delta = loss_of(l1) - loss_of(l0);
        smallest = std::min(smallest, delta);
        if (delta > 0) ++increased;
    }
    return {increased == kSets, fmt("%d/%d random sets: loss strictly increased after +0.05 on a negative pair (min increase %.3g)",
                                    increased, kSets, smallest)};
}

Outcome criterion_memory_bank() {
    int failures = 0;
    std::vector<std::string> notes;
    auto row = [](std::initializer_list<double> ids) {
        std::vector<double> v(ids);
        return Tensor<double>({v.size(), 1}, v);
    };
    auto contents = [](const objective::MemoryBank<double>& b) {
        std::vector<double> out;
        for (const auto& e : b.entries()) out.push_back(e.embedding[0]);
        return out;
    };
    auto labels_of = [](std::size_t n) { return std::vector<Label>(n, Label::Fake); };
    {
        objective::MemoryBank<double> b(2, 1);
        for (double x : {1.0, 2.0, 3.0}) b.push(row({x}), labels_of(1));
        if (contents(b) != std::vector<double>{2, 3}) ++failures, notes.push_back("M=2 singles");
    }
    {
        objective::MemoryBank<double> b(3, 1);
        b.push(row({1, 2}), labels_of(2));
        b.push(row({3, 4}), labels_of(2));
        if (contents(b) != std::vector<double>{2, 3, 4}) ++failures, notes.push_back("M=3 batches");
    }
    {
        objective::MemoryBank<double> b(1, 1);
        b.push(row({1, 2, 3}), labels_of(3));
        if (contents(b) != std::vector<double>{3}) ++failures, notes.push_back("M=1 overflow");
    }
    // Random push sequences against a reference queue, including I > M.
    Rng rng(0xAD0004);
    double next_id = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t cap = 1 + rng.index(8);
        objective::MemoryBank<double> b(cap, 1);
        std::deque<std::pair<double, Label>> ref;
        for (int step = 0; step < 12; ++step) {
            const std::size_t n = 1 + rng.index(2 * cap + 1);
            std::vector<double> ids;
            std::vector<Label> labs;
            for (std::size_t k = 0; k < n; ++k) {
                ids.push_back(next_id++);
                labs.push_back(rng.bernoulli(0.5) ? Label::Fake : Label::Real);
                ref.emplace_back(ids.back(), labs.back());
            }
            while (ref.size() > cap) ref.pop_front();
            b.push(Tensor<double>({n, 1}, ids), labs);
            bool same = b.size() == ref.size() && b.size() <= cap;
            for (std::size_t k = 0; same && k < ref.size(); ++k)
                same = b.entries()[k].embedding[0] == ref[k].first && b.entries()[k].label == ref[k].second;
            if (!same) {
                ++failures;
                notes.push_back("random sequence");
                break;
            }
        }
    }

    // Gradient isolation: the pushed tensor and the bank snapshot never receive gradient,
    // and the gradient w.r.t. the batch matches finite differences with the bank held fixed.
    const std::size_t d = 6;
    oracle::Rows a_rows = {oracle::random_unit(rng, d), oracle::random_unit(rng, d)}, h_rows, old_rows;
    std::vector<Label> labels, old_labels;
    for (int k = 0; k < 5; ++k) {
        h_rows.push_back(oracle::random_unit(rng, d));
        labels.push_back(k % 2 ? Label::Fake : Label::Real);
        old_rows.push_back(oracle::random_unit(rng, d));
        old_labels.push_back(k % 3 ? Label::Fake : Label::Real);
    }
    objective::MemoryBank<double> bank(8, d);
    const Tensor<double> old_tracked = stack(old_rows, d).as_leaf();
    bank.push(old_tracked, old_labels);
    const Tensor<double> anchors = stack(a_rows, d).as_leaf();
    const Tensor<double> batch = stack(h_rows, d).as_leaf();
    Tape<double> tape;
    const auto set = objective::EmbeddingSet<double>::build(tape, anchors, batch, labels);
    const auto loss = objective::discriminative_loss_with_bank(tape, set, bank, 0.2);
    const auto grads = tape.backward(loss);
    const bool isolated = !grads.contains(old_tracked) && !bank.embeddings().tracked() && grads.contains(batch);
    if (!isolated) ++failures, notes.push_back("bank gradient present");
    const double fd = ad::grad_check(
        [&](Tape<double>& t, const Tensor<double>& x) {
            // Unit-normalize the probe so the set precondition holds; the bank stays constant.
            const auto s = objective::EmbeddingSet<double>::build(t, anchors.detach(), t.l2_normalize(x), labels);
            return objective::discriminative_loss_with_bank(t, s, bank, 0.2);
        },
        batch.detach(), 1e-6);
    if (!(fd < 1e-6)) ++failures, notes.push_back("finite-difference mismatch");
    std::string why;
    for (const auto& n : notes) why += " " + n;
    return {failures == 0, failures == 0 ? std::string("FIFO examples + 300 random push sequences (incl. I > M) match reference; "
                                                       "no gradient reaches bank entries; batch grad vs finite differences ") +
                                               fmt("%.2g", fd)
                                         : "failures:" + why};
}

Outcome criterion_metrics() {
    Rng rng(0xAD0005);
    double worst = 0;
    std::size_t lists = 0;
    for (std::size_t n = 1; n <= 10; ++n) {
        for (std::uint32_t pattern = 1; pattern < (1u << n); ++pattern) {
            std::vector<double> scores(n);
            for (std::size_t i = 0; i < n; ++i) scores[i] = (static_cast<double>(i) + 1.0) / (n + 1.0);
            for (std::size_t i = n; i > 1; --i) std::swap(scores[i - 1], scores[rng.index(i)]);
            std::vector<bool> pos(n);
            std::vector<eval::ScoredPrediction> preds;
            for (std::size_t i = 0; i < n; ++i) {
                pos[i] = (pattern >> i) & 1u;
                preds.push_back({scores[i], pos[i] ? Label::Fake : Label::Real, "s"});
            }
            worst = std::max(worst, std::abs(eval::average_precision(preds) - oracle::average_precision(scores, pos)));
            ++lists;
        }
    }
    const std::vector<eval::ScoredPrediction> worked = {{0.9, Label::Fake, ""}, {0.8, Label::Real, ""}, {0.3, Label::Fake, ""}};
    const double ap = eval::average_precision(worked);
    return {worst < 1e-9 && std::abs(ap - 0.833333) <= 1e-6,
            fmt("%zu exhaustive label patterns (n<=10), max |AP - enumeration| %.2g < 1e-9; worked example %.6f", lists, worst, ap)};
}

// ---------------------------------------------------------------------------

struct ExperimentOutcome {
    Outcome generalization, diagnostics;
};

ExperimentOutcome criteria_experiment(const std::string& report_dir) {
    config::RunConfig cfg;  // desk defaults: 500+500 F_CHECKER, 300 per class per test subset, seeds 0..4
    cfg.protocol.arms = {config::Arm::Full, config::Arm::CeOnly};
    cfg.validate();
    const auto t0 = Clock::now();
    const auto report = eval::run_protocol(cfg, [](const eval::RunResult& r) {
        std::printf("  seed %llu %-8s seen %.4f unseen %.4f  v_clip %.4f -> %.4f  sep %.4f -> %.4f  (%.1fs)\n",
                    static_cast<unsigned long long>(r.seed), config::arm_name(r.arm).c_str(), r.seen_accuracy,
                    r.unseen_accuracy, r.log.initial.v_clip, r.log.epochs.back().diagnostics.v_clip,
                    r.log.initial.separation, r.log.epochs.back().diagnostics.separation, r.seconds);
        std::fflush(stdout);
    });
    const double secs = seconds_since(t0);
    if (!report_dir.empty()) {
        std::filesystem::create_directories(report_dir);
        std::ofstream(report_dir + "/experiment_report.json") << report::format_json(report::protocol_json(cfg, report));
        std::ofstream(report_dir + "/experiment_table.txt") << report::protocol_table(cfg, report);
        std::ofstream(report_dir + "/experiment_timing.json") << report::format_json(report::timing_json(report));
    }

    std::map<config::Arm, std::vector<double>> seen, unseen;
    int direction_ok = 0, full_runs = 0;
    for (const auto& r : report.runs) {
        seen[r.arm].push_back(r.seen_accuracy);
        unseen[r.arm].push_back(r.unseen_accuracy);
        if (r.arm == config::Arm::Full) {
            ++full_runs;
            const auto& last = r.log.epochs.back().diagnostics;
            if (last.v_clip < r.log.initial.v_clip && last.separation > r.log.initial.separation) ++direction_ok;
        }
    }
    auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
    auto min_of = [](const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); };
    const double gap = 100.0 * (mean(unseen[config::Arm::Full]) - mean(unseen[config::Arm::CeOnly]));
    const double seen_full = min_of(seen[config::Arm::Full]), seen_ce = min_of(seen[config::Arm::CeOnly]);
    ExperimentOutcome out;
    out.generalization = {gap >= 5.0 && seen_full >= 0.95 && seen_ce >= 0.95 && secs < 900.0,
                          fmt("unseen mean full %.2f%% vs ce-only %.2f%% (gap %+.2f pts, need >= +5); min seen acc full %.4f, "
                              "ce-only %.4f (need >= 0.95); %.0fs < 900s",
                              100.0 * mean(unseen[config::Arm::Full]), 100.0 * mean(unseen[config::Arm::CeOnly]), gap,
                              seen_full, seen_ce, secs)};
    out.diagnostics = {direction_ok >= 4,
                       fmt("full arm: v_clip down and separation up (epoch 0 -> final) in %d/%d seeds (need >= 4)", direction_ok,
                           full_runs)};
    return out;
}

// ---------------------------------------------------------------------------

config::RunConfig small_config() {
    config::RunConfig cfg;
    cfg.data.train_real = cfg.data.train_fake = 96;
    cfg.data.holdout = 24;
    cfg.optim.epochs = 2;
    cfg.protocol.test_count = 40;
    cfg.protocol.seeds = {7};
    return cfg;
}

Outcome criterion_degradation() {
    using synth::DegradationKind;
    auto cfg = small_config();
    cfg.protocol.arms = {config::Arm::Full};
    cfg.protocol.degradations = {{DegradationKind::LowRes, 16},   {DegradationKind::LowRes, 8},
                                 {DegradationKind::GaussBlur, 1}, {DegradationKind::GaussBlur, 2},
                                 {DegradationKind::JpegLike, 65}, {DegradationKind::JpegLike, 30},
                                 {DegradationKind::GaussBlur, 0}, {DegradationKind::LowRes, 32}};
    cfg.validate();
    const auto data = eval::build_datasets(cfg, 7);
    const auto run = eval::run_single(cfg, 7, config::Arm::Full, data);
    const auto table = report::subsets_table(run.subsets, "full");
    const auto doc = report::format_json(report::eval_json(cfg, config::Arm::Full, run.subsets));

    std::map<std::string, const eval::SubsetResult*> by_id;
    for (const auto& s : run.subsets) by_id[s.id] = &s;
    bool complete = true, identity = true;
    for (const auto& deg : cfg.protocol.degradations) {
        const auto label = deg.label();
        complete = complete && table.find(label) != std::string::npos && doc.find(label) != std::string::npos;
        for (const auto fam : cfg.protocol.test_families) {
            const std::string name(generator_name(fam));
            const auto it = by_id.find(name + "@" + label);
            if (it == by_id.end() || !std::isfinite(it->second->accuracy) || !std::isfinite(it->second->ap)) {
                complete = false;
                continue;
            }
            const bool is_identity = (deg.kind == DegradationKind::GaussBlur && deg.parameter == 0) ||
                                     (deg.kind == DegradationKind::LowRes && deg.parameter == 32);
            if (is_identity)
                identity = identity && it->second->accuracy == by_id.at(name)->accuracy && it->second->ap == by_id.at(name)->ap;
        }
    }
    // Pixel level as well: the identity conditions must leave every test image untouched.
    for (std::size_t f = 0; f < cfg.protocol.test_families.size(); ++f) {
        const auto& clean = data.subsets[f];
        for (const auto& s : data.subsets)
            if (s.family == clean.family && (s.condition == "Blur(s=0)" || s.condition == "LR(32)"))
                for (std::size_t k = 0; k < s.images.size(); ++k) identity = identity && s.images[k].pixels == clean.images[k].pixels;
    }
    std::printf("%s", table.c_str());
    return {complete && identity, fmt("%zu degradation columns reported for %zu families (%s); Blur(s=0) and LR(32) %s the clean column",
                                      cfg.protocol.degradations.size(), cfg.protocol.test_families.size(),
                                      complete ? "complete" : "INCOMPLETE", identity ? "exactly equal" : "DIFFER from")};
}

Outcome criterion_determinism() {
    std::vector<std::string> problems;
    auto cfg = small_config();
    cfg.optim.epochs = 1;
    cfg.protocol.degradations = {{synth::DegradationKind::JpegLike, 65}};
    cfg.validate();
    auto render = [&] {
        const auto report = eval::run_protocol(cfg);
        return report::format_json(report::protocol_json(cfg, report)) + report::protocol_table(cfg, report);
    };
    if (render() != render()) problems.push_back("protocol report differs between runs");
    if (config::parse_config(config::serialize_config(cfg)) != cfg) problems.push_back("config round-trip");

    // Checkpoint: bit-exact round trip, every single-byte flip and every truncation rejected.
    auto model = eval::make_model(cfg, config::Arm::Full, 3);
    const auto bytes = io::encode_checkpoint(model.named_tensors());
    const auto decoded = io::decode_checkpoint(bytes);
    if (io::encode_checkpoint(decoded) != bytes) problems.push_back("checkpoint re-encode");
    const auto original = model.named_tensors();
    for (std::size_t t = 0; t < original.size(); ++t)
        if (decoded[t].first != original[t].first || decoded[t].second.shape() != original[t].second.shape() ||
            std::memcmp(decoded[t].second.data().data(), original[t].second.data().data(), 4 * original[t].second.numel()) != 0)
            problems.push_back("checkpoint tensor " + original[t].first);
    std::size_t flips = 0, flips_caught = 0, cuts = 0, cuts_caught = 0;
    auto rejects = [](auto&& decode, const io::Bytes& b) {
        try {
            decode(b);
        } catch (const io::CorruptArtifact&) {
            return true;
        }
        return false;
    };
    auto decode_ckpt = [](const io::Bytes& b) { return io::decode_checkpoint(b); };
    auto decode_data = [](const io::Bytes& b) { return io::decode_dataset(b); };
    Rng rng(0xAD0009);
    for (std::size_t pos = 0; pos < bytes.size(); pos += 1 + rng.index(97)) {
        auto bad = bytes;
        bad[pos] ^= static_cast<std::uint8_t>(1u << rng.index(8));
        ++flips;
        flips_caught += rejects(decode_ckpt, bad);
    }
    for (std::size_t len = 0; len < bytes.size(); len += 1 + rng.index(997)) {
        ++cuts;
        cuts_caught += rejects(decode_ckpt, io::Bytes(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len)));
    }
    if (flips_caught != flips || cuts_caught != cuts) problems.push_back("checkpoint corruption undetected");

    // Dataset: quantized samples round-trip bit-exactly; header damage, truncation and padding rejected.
    const auto samples = eval::build_holdout_set(cfg, 5);
    const auto dbytes = io::encode_dataset(samples);
    const auto back = io::decode_dataset(dbytes);
    bool exact = back.size() == samples.size() && io::encode_dataset(back) == dbytes;
    for (std::size_t k = 0; exact && k < samples.size(); ++k)
        exact = back[k].pixels == io::quantize_pixels(samples[k]).pixels && back[k].label == samples[k].label &&
                back[k].generator == samples[k].generator;
    if (!exact) problems.push_back("dataset round-trip");
    std::size_t dflips = 0, dcaught = 0;
    for (std::size_t pos = 0; pos < 15; ++pos)
        for (int bit = 0; bit < 8; ++bit) {
            auto bad = dbytes;
            bad[pos] ^= static_cast<std::uint8_t>(1u << bit);
            ++dflips;
            dcaught += rejects(decode_data, bad);
        }
    for (std::size_t len = 0; len < dbytes.size(); len += 1 + rng.index(211)) {
        ++dflips;
        dcaught += rejects(decode_data, io::Bytes(dbytes.begin(), dbytes.begin() + static_cast<std::ptrdiff_t>(len)));
    }
    auto padded = dbytes;
    padded.push_back(0);
    ++dflips;
    dcaught += rejects(decode_data, padded);
    if (dcaught != dflips) problems.push_back("dataset corruption undetected");

    std::string why;
    for (const auto& p : problems) why += " [" + p + "]";
    return {problems.empty(),
            fmt("protocol report + table byte-identical across runs; checkpoint %zu B round-trips bit-exactly, %zu/%zu byte flips and "
                "%zu/%zu truncations rejected; dataset round-trips, %zu/%zu header/length corruptions rejected",
                bytes.size(), flips_caught, flips, cuts_caught, cuts, dcaught, dflips) +
                why};
}

}  // namespace

int main(int argc, char** argv) {
    kernels::configure_threads_from_env();
    CLI::App app{"Acceptance criteria 1-9"};
    std::vector<int> selected = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::string report_dir;
    app.add_option("--criteria", selected, "Criteria to run")->delimiter(',')->check(CLI::Range(1, 9));
    app.add_option("--report-dir", report_dir, "Where to write the experiment report");
    CLI11_PARSE(app, argc, argv);

    const std::set<int> want(selected.begin(), selected.end());
    std::map<int, Outcome> results;
    const std::map<int, std::function<Outcome()>> single = {
        {1, criterion_autodiff}, {2, criterion_loss_oracles}, {3, criterion_separation_pressure}, {4, criterion_memory_bank},
        {5, criterion_metrics},  {8, criterion_degradation},  {9, criterion_determinism}};
    for (int c : want) {
        if (c == 6 || c == 7) {
            if (results.count(c)) continue;
            const auto e = criteria_experiment(report_dir);
            if (want.count(6)) results[6] = e.generalization;
            if (want.count(7)) results[7] = e.diagnostics;
            continue;
        }
        try {
            results[c] = single.at(c)();
        } catch (const std::exception& ex) {
            results[c] = {false, std::string("exception: ") + ex.what()};
        }
    }
    bool all = true;
    for (const auto& [c, r] : results) {
        std::printf("CRITERION %d %s  %s\n", c, r.pass ? "PASS" : "FAIL", r.detail.c_str());
        all = all && r.pass;
    }
    return all ? 0 : 1;
}
