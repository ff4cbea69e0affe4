#include "mirage/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mirage::eval {
namespace {

void check_scores(std::span<const ScoredPrediction> preds) {
    for (const auto& p : preds)
        if (!(p.score >= 0.0 && p.score <= 1.0)) throw std::invalid_argument("prediction score outside [0,1]");
}

}  // namespace

double accuracy(std::span<const ScoredPrediction> preds, double threshold) {
    if (preds.empty()) throw std::invalid_argument("accuracy: empty prediction list");
    check_scores(preds);
    std::size_t correct = 0;
    for (const auto& p : preds)
        if ((p.score >= threshold) == (p.label == Label::Fake)) ++correct;
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

double average_precision(std::span<const ScoredPrediction> preds) {
    check_scores(preds);
    const auto positives = std::count_if(preds.begin(), preds.end(), [](const auto& p) { return p.label == Label::Fake; });
    if (positives == 0) throw std::invalid_argument("average_precision: no Fake samples");
    std::vector<std::size_t> order(preds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
    double ap = 0;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (preds[order[k]].label != Label::Fake) continue;
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
    return ap / static_cast<double>(positives);
}

double mean_average_precision(std::span<const double> per_subset_ap) {
    if (per_subset_ap.empty()) throw std::invalid_argument("mAP: no subsets");
    double s = 0;
    for (double v : per_subset_ap) s += v;
    return s / static_cast<double>(per_subset_ap.size());
}

}  // namespace mirage::eval
