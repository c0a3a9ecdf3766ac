// Cohort statistics: polynomial growth fits with confidence bands, the
// Wilcoxon rank-sum test and Bonferroni correction.
#pragma once

#include <span>
#include <stdexcept>
#include <vector>

namespace fsyn {

class DegenerateFit : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct GrowthFit {
    /// coefficients[d] multiplies x^d.
    std::vector<double> coefficients;
    std::size_t n = 0;
    double residual_std = 0.0;
    /// (X^T X)^{-1}, used for the band.
    std::vector<std::vector<double>> covariance_unscaled;
    double confidence = 0.95;

    double predict(double x) const;
    struct Band {
        double fit, lo, hi;
    };
    /// Confidence interval of the mean response at x (t with n - order - 1 dof).
    Band band(double x) const;
    std::size_t dof() const { return n - coefficients.size(); }
};

/// Ordinary least squares on the Vandermonde design via Householder QR.
/// Requires n >= order + 2 and a full-rank design.
GrowthFit polyfit_growth(std::span<const double> x, std::span<const double> y, int order = 2,
                         double confidence = 0.95);

enum class RankSumMethod { Auto, Exact, Normal };

struct RankSumResult {
    double statistic = 0.0; // rank sum of the first sample
    double p_value = 1.0;   // two-sided
    bool exact = false;
};

/// Two-sided Wilcoxon rank-sum test. Auto uses the exact permutation
/// distribution when n + m <= 12, else the normal approximation with tie and
/// continuity corrections.
RankSumResult wilcoxon_ranksum(std::span<const double> a, std::span<const double> b,
                               RankSumMethod method = RankSumMethod::Auto);

struct BonferroniResult {
    double threshold = 0.0;
    std::vector<bool> significant;
};

/// Significant iff p < alpha / m.
BonferroniResult bonferroni(std::span<const double> p_values, double alpha = 0.05);

} // namespace fsyn
