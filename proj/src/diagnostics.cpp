#include "mirage/diagnostics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mirage::diagnostics {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void check_unit(std::span<const double> v, const char* what) {
    if (std::abs(std::sqrt(dot(v, v)) - 1.0) > 1e-4)
        throw std::invalid_argument(std::string(what) + " must be unit-norm");
}

double mean_of(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("generalization error: empty loss list");
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

EmpiricalDistribution::EmpiricalDistribution(std::vector<double> rows, std::size_t dim, std::string source, Label label)
    : rows_(std::move(rows)), dim_(dim), source_(std::move(source)), label_(label) {
    if (dim_ == 0 || rows_.empty()) throw std::invalid_argument("empirical distribution '" + source_ + "' is empty");
    if (rows_.size() % dim_ != 0) throw std::invalid_argument("empirical distribution: ragged rows");
    for (std::size_t i = 0; i < size(); ++i) check_unit(row(i), "distribution sample");
}

std::vector<double> EmpiricalDistribution::normalized_mean() const {
    std::vector<double> m(dim_, 0.0);
    for (std::size_t i = 0; i < size(); ++i)
        for (std::size_t j = 0; j < dim_; ++j) m[j] += rows_[i * dim_ + j];
    const double norm = std::sqrt(dot(m, m));
    if (norm < 1e-12 * static_cast<double>(size()))
        throw std::domain_error("distribution '" + source_ + "' has a zero mean vector");
    for (auto& v : m) v /= norm;
    return m;
}

double intra_class_variation(const EmpiricalDistribution& dist, std::span<const double> anchor) {
    if (anchor.size() != dist.dim()) throw std::invalid_argument("anchor dimension mismatch");
    check_unit(anchor, "anchor");
    double total = 0;
    for (std::size_t i = 0; i < dist.size(); ++i) total += 1.0 - dot(dist.row(i), anchor);
    return total / static_cast<double>(dist.size());
}

double v_clip(const EmpiricalDistribution& fake, const EmpiricalDistribution& real, std::span<const double> anchors) {
    const std::size_t d = fake.dim();
    if (anchors.size() != 2 * d || real.dim() != d) throw std::invalid_argument("v_clip: dimension mismatch");
    return std::max(intra_class_variation(fake, anchors.subspan(d, d)), intra_class_variation(real, anchors.subspan(0, d)));
}

double inter_class_separation(const DistributionFamily& generated, const DistributionFamily& natural) {
    if (generated.empty() || natural.empty()) throw std::invalid_argument("inter-class separation: empty family");
    for (const auto& p : generated)
        if (p.label() != Label::Fake) throw std::invalid_argument("generated family must hold Fake distributions");
    for (const auto& q : natural)
        if (q.label() != Label::Real) throw std::invalid_argument("natural family must hold Real distributions");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : generated) {
        const auto mp = p.normalized_mean();
        for (const auto& q : natural) {
            if (q.dim() != p.dim()) throw std::invalid_argument("inter-class separation: dimension mismatch");
            best = std::min(best, 1.0 - dot(mp, q.normalized_mean()));
        }
    }
    return best;
}

ProjectedTv projected_tv(std::span<const double> rows, std::size_t dim, std::span<const double> anchor,
                         std::span<const double> direction, std::size_t bins) {
    if (bins < 2) throw std::invalid_argument("projected_tv: bins must be >= 2");
    if (dim == 0 || rows.empty() || rows.size() % dim != 0) throw std::invalid_argument("projected_tv: bad rows");
    if (anchor.size() != dim || direction.size() != dim) throw std::invalid_argument("projected_tv: dimension mismatch");
    const std::size_t n = rows.size() / dim;
    std::vector<double> proj(n);
    const double a = dot(anchor, direction);
    double lo = a, hi = a;
    for (std::size_t i = 0; i < n; ++i) {
        proj[i] = dot(rows.subspan(i * dim, dim), direction);
        lo = std::min(lo, proj[i]);
        hi = std::max(hi, proj[i]);
    }
    const double width = (hi - lo) / static_cast<double>(bins);
    if (!(width > 0)) return {0.0, lo, hi};  // every projection coincides with the anchor
    auto bin_of = [&](double v) {
        return std::min(static_cast<std::size_t>((v - lo) / width), bins - 1);
    };
    const std::size_t anchor_bin = bin_of(a);
    std::size_t hits = 0;
    for (double v : proj)
        if (bin_of(v) == anchor_bin) ++hits;
    // Against a Dirac, 0.5 * sum |p - q| collapses to 1 - p[anchor bin].
    const double tv = 1.0 - static_cast<double>(hits) / static_cast<double>(n);
    return {tv, lo + width * static_cast<double>(anchor_bin), lo + width * static_cast<double>(anchor_bin + 1)};
}

std::vector<std::vector<double>> probe_directions(const EmpiricalDistribution& fake, const EmpiricalDistribution& real,
                                                  std::size_t count, std::uint64_t seed) {
    const std::size_t d = fake.dim();
    std::vector<std::vector<double>> out;
    if (count == 0) return out;

    const std::size_t n = fake.size() + real.size();
    Eigen::MatrixXd pooled(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = i < fake.size() ? fake.row(i) : real.row(i - fake.size());
        for (std::size_t j = 0; j < d; ++j) pooled(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[j];
    }
    const Eigen::MatrixXd centred = pooled.rowwise() - pooled.colwise().mean();
    const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(n);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    for (std::size_t k = 0; k < std::min<std::size_t>({2, count, d}); ++k) {
        const auto col = eig.eigenvectors().col(static_cast<Eigen::Index>(d - 1 - k));  // ascending order
        out.emplace_back(col.data(), col.data() + d);
    }

    Rng rng(seed);
    while (out.size() < count) {
        std::vector<double> v(d);
        double sq = 0;
        for (auto& x : v) {
            x = rng.normal();
            sq += x * x;
        }
        if (sq == 0) continue;
        for (auto& x : v) x /= std::sqrt(sq);
        out.push_back(std::move(v));
    }
    return out;
}

double sup_variation(const EmpiricalDistribution& fake, const EmpiricalDistribution& real,
                     std::span<const double> anchors, std::size_t num_directions, std::size_t bins, std::uint64_t seed) {
    if (num_directions < 1) throw std::invalid_argument("sup_variation: num_directions must be >= 1");
    if (bins < 2) throw std::invalid_argument("sup_variation: bins must be >= 2");
    const std::size_t d = fake.dim();
    if (anchors.size() != 2 * d || real.dim() != d) throw std::invalid_argument("sup_variation: dimension mismatch");
    double best = 0;
    for (const auto& beta : probe_directions(fake, real, num_directions, seed)) {
        best = std::max(best, projected_tv(fake.data(), d, anchors.subspan(d, d), beta, bins).tv);
        best = std::max(best, projected_tv(real.data(), d, anchors.subspan(0, d), beta, bins).tv);
    }
    return best;
}

double generalization_error(std::span<const double> train_fake_losses, std::span<const double> train_real_losses,
                            const std::vector<std::vector<double>>& test_fake_losses,
                            const std::vector<std::vector<double>>& test_real_losses) {
    if (test_fake_losses.empty() || test_real_losses.empty())
        throw std::invalid_argument("generalization error: empty test family");
    const double base_fake = mean_of(train_fake_losses);
    const double base_real = mean_of(train_real_losses);
    double worst_fake = -std::numeric_limits<double>::infinity();
    double worst_real = -std::numeric_limits<double>::infinity();
    for (const auto& l : test_fake_losses) worst_fake = std::max(worst_fake, mean_of(l) - base_fake);
    for (const auto& l : test_real_losses) worst_real = std::max(worst_real, mean_of(l) - base_real);
    return worst_fake + worst_real;
}

}  // namespace mirage::diagnostics
