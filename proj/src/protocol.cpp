#include "mirage/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>

#include "mirage/metrics.hpp"

namespace mirage::eval {
namespace {

// Stream tags so every dataset draws from its own seed.
enum : std::uint64_t {
    kTrainReal = 11,
    kTrainFake = 12,
    kHoldoutReal = 21,
    kHoldoutFake = 22,
    kTestReal = 100,
    kTestFake = 200,
    kPromptInit = 300,
    kTraining = 400,
};

std::vector<ImageSample> draw(const config::RunConfig& c, GeneratorId family, std::size_t count, std::uint64_t seed) {
    return synth::generate_dataset(c.data.generator(family), count, seed, c.encoder.image_side, c.encoder.channels);
}

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

std::vector<ImageSample> build_train_set(const config::RunConfig& c, std::uint64_t seed) {
    auto out = draw(c, GeneratorId::Natural, c.data.train_real, mix_seed(seed, kTrainReal));
    auto fake = draw(c, c.data.train_family, c.data.train_fake, mix_seed(seed, kTrainFake));
    out.insert(out.end(), fake.begin(), fake.end());
    return out;
}

std::vector<ImageSample> build_holdout_set(const config::RunConfig& c, std::uint64_t seed) {
    auto out = draw(c, GeneratorId::Natural, c.data.holdout, mix_seed(seed, kHoldoutReal));
    auto fake = draw(c, c.data.train_family, c.data.holdout, mix_seed(seed, kHoldoutFake));
    out.insert(out.end(), fake.begin(), fake.end());
    return out;
}

std::vector<TestSubset> build_test_subsets(const config::RunConfig& c, std::uint64_t seed) {
    std::vector<TestSubset> clean;
    for (GeneratorId f : c.protocol.test_families) {
        const auto tag = static_cast<std::uint64_t>(f);
        TestSubset s;
        s.id = std::string(generator_name(f));
        s.family = f;
        s.condition = kCleanCondition;
        s.seen = f == c.data.train_family;
        s.images = draw(c, GeneratorId::Natural, c.protocol.test_count, mix_seed(seed, kTestReal + tag));
        auto fake = draw(c, f, c.protocol.test_count, mix_seed(seed, kTestFake + tag));
        s.images.insert(s.images.end(), fake.begin(), fake.end());
        clean.push_back(std::move(s));
    }
    std::vector<TestSubset> out = clean;
    for (const auto& deg : c.protocol.degradations) {
        for (const auto& base : clean) {
            TestSubset s = base;
            s.condition = deg.label();
            s.id = base.id + "@" + s.condition;
            for (auto& img : s.images) img = synth::degrade(img, deg);
            out.push_back(std::move(s));
        }
    }
    return out;
}

Datasets build_datasets(const config::RunConfig& c, std::uint64_t seed) {
    return {build_train_set(c, seed), build_holdout_set(c, seed), build_test_subsets(c, seed)};
}

Model make_model(const config::RunConfig& c, config::Arm arm, std::uint64_t seed) {
    auto encoder = c.encoder;
    auto loss = c.loss;
    config::apply_arm(arm, encoder, loss);
    return Model::create(encoder, c.backbone_seed, mix_seed(seed, kPromptInit));
}

TrainOptions train_options(const config::RunConfig& c, config::Arm arm, std::uint64_t seed) {
    auto encoder = c.encoder;
    TrainOptions o;
    o.loss = c.loss;
    config::apply_arm(arm, encoder, o.loss);
    o.optim = c.optim;
    o.seed = mix_seed(seed, kTraining);
    o.augment = c.data.augment;
    o.augmentation = c.data.augmentation;
    return o;
}

std::vector<SubsetResult> evaluate_subsets(const Model& model, std::span<const TestSubset> subsets, double tau) {
    std::vector<SubsetResult> out;
    for (const auto& s : subsets) {
        const auto preds = model.predict_all(s.images, tau);
        std::vector<ScoredPrediction> scored;
        scored.reserve(preds.size());
        for (std::size_t i = 0; i < preds.size(); ++i) scored.push_back({preds[i].score, s.images[i].label, s.id});
        out.push_back({s.id, std::string(generator_name(s.family)), s.condition, s.seen, s.images.size(),
                       accuracy(scored), average_precision(scored)});
    }
    return out;
}

std::vector<std::pair<std::string, double>> condition_means(std::span<const SubsetResult> subsets) {
    std::vector<std::pair<std::string, std::vector<double>>> groups;
    for (const auto& s : subsets) {
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == s.condition; });
        if (it == groups.end()) {
            groups.push_back({s.condition, {}});
            it = groups.end() - 1;
        }
        it->second.push_back(s.accuracy);
    }
    std::vector<std::pair<std::string, double>> out;
    for (const auto& [name, accs] : groups) out.emplace_back(name, mean_of(accs));
    return out;
}

RunResult run_single(const config::RunConfig& c, std::uint64_t seed, config::Arm arm, const Datasets& data,
                     const std::function<void(const EpochRecord&)>& on_epoch) {
    const auto start = std::chrono::steady_clock::now();
    RunResult r;
    r.seed = seed;
    r.arm = arm;
    Model model = make_model(c, arm, seed);
    const auto options = train_options(c, arm, seed);
    r.log = train_model(model, data.train, data.holdout, options, on_epoch);
    r.subsets = evaluate_subsets(model, data.subsets, options.loss.temperature);

    std::vector<double> accs, aps, seen, unseen;
    for (const auto& s : r.subsets) {
        if (s.condition != kCleanCondition) continue;
        accs.push_back(s.accuracy);
        aps.push_back(s.ap);
        (s.seen ? seen : unseen).push_back(s.accuracy);
    }
    r.mean_accuracy = mean_of(accs);
    r.map = mean_average_precision(aps);
    r.seen_accuracy = mean_of(seen);
    r.unseen_accuracy = mean_of(unseen);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

ProtocolReport run_protocol(const config::RunConfig& c, const std::function<void(const RunResult&)>& on_run) {
    c.validate();
    ProtocolReport report;
    for (std::uint64_t seed : c.protocol.seeds) {
        const Datasets data = build_datasets(c, seed);
        for (config::Arm arm : c.protocol.arms) {
            report.runs.push_back(run_single(c, seed, arm, data));
            if (on_run) on_run(report.runs.back());
        }
    }
    return report;
}

std::string dump_embeddings(const Model& model, std::span<const ImageSample> samples,
                            std::span<const std::string> subset_ids) {
    if (subset_ids.size() != samples.size()) throw std::invalid_argument("dump_embeddings: one subset id per sample");
    const auto [emb, anchors] = model.embed_all(samples);
    const std::size_t d = anchors.dim(1);
    std::ostringstream out;
    out << "subset,label";
    for (std::size_t j = 0; j < d; ++j) out << ",e" << j;
    out << "\n";
    char buf[32];
    auto row = [&](const std::string& subset, Label label, const ad::Tensor<float>& m, std::size_t r) {
        out << subset << "," << label_name(label);
        for (std::size_t j = 0; j < d; ++j) {
            std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(m.at(r, j)));
            out << buf;
        }
        out << "\n";
    };
    row("anchor", Label::Real, anchors, 0);
    row("anchor", Label::Fake, anchors, 1);
    for (std::size_t i = 0; i < samples.size(); ++i) row(subset_ids[i], samples[i].label, emb, i);
    return out.str();
}

}  // namespace mirage::eval
