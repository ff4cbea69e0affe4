#pragma once

#include <span>
#include <string>
#include <vector>

#include "mirage/common.hpp"

namespace mirage::eval {

struct ScoredPrediction {
    double score = 0.5;  // p(Fake)
    Label label = Label::Real;
    std::string subset;
};

/// Fraction with (score >= threshold) == (label == Fake). A score exactly at
/// the threshold counts as Fake.
double accuracy(std::span<const ScoredPrediction> preds, double threshold = 0.5);

/// Step-wise AP with Fake as the positive class: sum over ranks where recall
/// increases of (R_k - R_{k-1}) * P_k. Ties keep input order.
double average_precision(std::span<const ScoredPrediction> preds);

/// Unweighted mean.
double mean_average_precision(std::span<const double> per_subset_ap);

}  // namespace mirage::eval
