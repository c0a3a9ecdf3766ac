// One-dimensional Gaussian mixture fitting by expectation-maximisation, with
// BIC model-order selection.
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace fsyn {

struct GaussianComponent {
    double weight = 1.0;
    double mean = 0.0;
    double variance = 1.0;
};

struct GmmParams {
    std::vector<GaussianComponent> components;

    int k() const { return static_cast<int>(components.size()); }
    /// Posterior-maximising component for a value; ties go to the lower index.
    int classify(double x) const;
    double log_likelihood(std::span<const double> xs) const;
};

struct EmOptions {
    int max_iterations = 200;
    double relative_tolerance = 1e-6;
    /// Variance floor as a fraction of the sample variance.
    double variance_floor_ratio = 1e-6;
    /// Floor applied when the sample variance itself is (near) zero.
    double min_variance = 1e-12;
    double collapse_weight = 1e-6;
};

struct EmResult {
    GmmParams params;
    /// Log-likelihood after initialisation and after every EM step.
    std::vector<double> log_likelihood_trace;
    int iterations = 0;
    bool converged = false;
    int restarts = 0;

    double log_likelihood() const { return log_likelihood_trace.back(); }
};

/// A component's weight fell below EmOptions::collapse_weight even after one
/// re-initialised restart.
class ComponentCollapse : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Means start at the K evenly spaced quantiles (k + 1/2) / K, variances at
/// the sample variance and weights uniform. `seed` drives the restart
/// initialisation only, so a fit that does not collapse is seed independent.
EmResult em_fit(std::span<const double> xs, int k, std::uint64_t seed, const EmOptions &opt = {});

struct SubclassSelection {
    int k = 1;
    EmResult fit;
    /// BIC per candidate K (index K-1); +inf for a skipped candidate.
    std::vector<double> bic;
};

inline constexpr std::size_t kMinRegionForSplit = 50;

/// -2 log L + (3K - 1) ln n.
double bic_score(double log_likelihood, int k, std::size_t n);

/// Fits K = 1..k_max and keeps the lowest BIC. Regions with fewer than
/// kMinRegionForSplit samples, or with no intensity spread, get K = 1.
SubclassSelection select_subclass_count(std::span<const double> xs, int k_max, std::uint64_t seed,
                                        const EmOptions &opt = {});

} // namespace fsyn
