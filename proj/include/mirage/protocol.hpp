#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mirage/config.hpp"
#include "mirage/train.hpp"

namespace mirage::eval {

inline constexpr const char* kCleanCondition = "clean";

struct TestSubset {
    std::string id;         // family name, plus "@" and the degradation label when degraded
    GeneratorId family;
    std::string condition;  // "clean" or a degradation label
    bool seen = false;      // family used for training
    std::vector<ImageSample> images;  // balanced: test_count real then test_count fake
};

struct Datasets {
    std::vector<ImageSample> train;    // real then fake
    std::vector<ImageSample> holdout;  // fresh draws from the training distributions
    std::vector<TestSubset> subsets;   // every family clean, then every family per degradation
};

/// Everything is a pure function of (config, seed); arms share the data.
Datasets build_datasets(const config::RunConfig& config, std::uint64_t seed);
std::vector<ImageSample> build_train_set(const config::RunConfig& config, std::uint64_t seed);
std::vector<ImageSample> build_holdout_set(const config::RunConfig& config, std::uint64_t seed);
std::vector<TestSubset> build_test_subsets(const config::RunConfig& config, std::uint64_t seed);

/// Frozen backbone from config.backbone_seed; prompts seeded by `seed`.
Model make_model(const config::RunConfig& config, config::Arm arm, std::uint64_t seed);
TrainOptions train_options(const config::RunConfig& config, config::Arm arm, std::uint64_t seed);

struct SubsetResult {
    std::string id;
    std::string family;
    std::string condition;
    bool seen = false;
    std::size_t count = 0;
    double accuracy = 0;
    double ap = 0;
};

std::vector<SubsetResult> evaluate_subsets(const Model& model, std::span<const TestSubset> subsets, double tau);

struct RunResult {
    std::uint64_t seed = 0;
    config::Arm arm = config::Arm::Full;
    TrainLog log;
    std::vector<SubsetResult> subsets;
    double mean_accuracy = 0;    // clean subsets, unweighted
    double map = 0;              // clean subsets, unweighted
    double seen_accuracy = 0;    // clean seen subsets
    double unseen_accuracy = 0;  // clean unseen subsets (0 when none)
    double seconds = 0;
};

/// Mean accuracy per condition over all families, in subset order.
std::vector<std::pair<std::string, double>> condition_means(std::span<const SubsetResult> subsets);

RunResult run_single(const config::RunConfig& config, std::uint64_t seed, config::Arm arm, const Datasets& data,
                     const std::function<void(const EpochRecord&)>& on_epoch = {});

struct ProtocolReport {
    std::vector<RunResult> runs;  // seed-major, arms in config order
};

ProtocolReport run_protocol(const config::RunConfig& config,
                            const std::function<void(const RunResult&)>& on_run = {});

/// CSV with header "subset,label,e0..e{d-1}"; the two anchor rows come first
/// with subset "anchor".
std::string dump_embeddings(const Model& model, std::span<const ImageSample> samples,
                            std::span<const std::string> subset_ids);

}  // namespace mirage::eval
