#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mirage/common.hpp"

namespace mirage::diagnostics {

/// Unit-norm embeddings from a single source, stored row-major.
class EmpiricalDistribution {
public:
    EmpiricalDistribution(std::vector<double> rows, std::size_t dim, std::string source, Label label);

    std::size_t size() const { return rows_.size() / dim_; }
    std::size_t dim() const { return dim_; }
    const std::string& source() const { return source_; }
    Label label() const { return label_; }
    std::span<const double> row(std::size_t i) const { return {rows_.data() + i * dim_, dim_}; }
    const std::vector<double>& data() const { return rows_; }

    /// Unit-normalized sample mean; throws when the mean vanishes.
    std::vector<double> normalized_mean() const;

private:
    std::vector<double> rows_;
    std::size_t dim_;
    std::string source_;
    Label label_;
};

using DistributionFamily = std::vector<EmpiricalDistribution>;

enum class DistanceKind : std::uint8_t { CosineDistance, HistogramTotalVariation };

/// Mean of 1 - <h, anchor>.
double intra_class_variation(const EmpiricalDistribution& dist, std::span<const double> anchor);

/// max(variation(fake, e_Fake), variation(real, e_Real)); anchors is [2, d] Real then Fake.
double v_clip(const EmpiricalDistribution& fake, const EmpiricalDistribution& real, std::span<const double> anchors);

/// min over (P, Q) of 1 - cos(mean P, mean Q).
double inter_class_separation(const DistributionFamily& generated, const DistributionFamily& natural);

struct ProjectedTv {
    double tv;
    double anchor_bin_low;   // projected interval holding the anchor
    double anchor_bin_high;
};

/// 1-D total variation between the projection of `rows` onto `direction`
/// and the projected Dirac at `anchor`, on `bins` shared equal-width bins
/// spanning all projected values. Rows need not be unit-norm.
ProjectedTv projected_tv(std::span<const double> rows, std::size_t dim, std::span<const double> anchor,
                         std::span<const double> direction, std::size_t bins);

/// Directions used by sup_variation: the top two principal axes of the pooled
/// cloud, then uniform random unit vectors. A prefix of a longer list for the
/// same seed.
std::vector<std::vector<double>> probe_directions(const EmpiricalDistribution& fake, const EmpiricalDistribution& real,
                                                  std::size_t count, std::uint64_t seed);

/// Approximate sup over unit directions (a lower bound on the true value).
double sup_variation(const EmpiricalDistribution& fake, const EmpiricalDistribution& real,
                     std::span<const double> anchors, std::size_t num_directions, std::size_t bins = 32,
                     std::uint64_t seed = 0);

/// max_f (mean test-fake loss - mean train-fake loss) + max_r (same for real).
double generalization_error(std::span<const double> train_fake_losses, std::span<const double> train_real_losses,
                            const std::vector<std::vector<double>>& test_fake_losses,
                            const std::vector<std::vector<double>>& test_real_losses);

}  // namespace mirage::diagnostics
