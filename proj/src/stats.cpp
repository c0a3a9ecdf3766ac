#include "fsyn/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "fsyn/volume.hpp"

namespace fsyn {

double GrowthFit::predict(double x) const {
    double acc = 0.0;
    for (std::size_t d = coefficients.size(); d-- > 0;) acc = acc * x + coefficients[d];
    return acc;
}

GrowthFit::Band GrowthFit::band(double x) const {
    const std::size_t p = coefficients.size();
    std::vector<double> basis(p);
    double xp = 1.0;
    for (std::size_t d = 0; d < p; ++d, xp *= x) basis[d] = xp;
    double q = 0.0;
    for (std::size_t r = 0; r < p; ++r)
        for (std::size_t c = 0; c < p; ++c) q += basis[r] * covariance_unscaled[r][c] * basis[c];
    const boost::math::students_t dist(static_cast<double>(dof()));
    const double t = boost::math::quantile(dist, 0.5 + 0.5 * confidence);
    const double half = t * residual_std * std::sqrt(std::max(q, 0.0));
    const double f = predict(x);
    return {f, f - half, f + half};
}

GrowthFit polyfit_growth(std::span<const double> x, std::span<const double> y, int order, double confidence) {
    if (order < 0) throw InvalidArgument("polynomial order must be >= 0");
    if (x.size() != y.size()) throw InvalidArgument("x and y differ in length");
    const auto p = static_cast<std::size_t>(order + 1);
    if (x.size() < p + 1) {
        throw DegenerateFit("polynomial fit of order " + std::to_string(order) + " needs at least " +
                            std::to_string(p + 1) + " points, got " + std::to_string(x.size()));
    }
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd design(n, static_cast<Eigen::Index>(p));
    Eigen::VectorXd rhs(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        double xp = 1.0;
        for (std::size_t d = 0; d < p; ++d, xp *= x[static_cast<std::size_t>(r)]) design(r, static_cast<Eigen::Index>(d)) = xp;
        rhs[r] = y[static_cast<std::size_t>(r)];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < static_cast<Eigen::Index>(p)) {
        throw DegenerateFit("rank-deficient design: the x values do not support an order-" + std::to_string(order) +
                            " fit");
    }
    const Eigen::VectorXd beta = qr.solve(rhs);
    const Eigen::VectorXd resid = rhs - design * beta;

    GrowthFit fit;
    fit.n = x.size();
    fit.confidence = confidence;
    fit.coefficients.assign(beta.data(), beta.data() + beta.size());
    fit.residual_std = std::sqrt(resid.squaredNorm() / double(fit.dof()));

    // (X^T X)^{-1} = P R^{-1} R^{-T} P^T from the pivoted QR.
    const auto pi = static_cast<Eigen::Index>(p);
    const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(pi, pi).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd rinv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(pi, pi));
    const Eigen::MatrixXd perm = qr.colsPermutation();
    const Eigen::MatrixXd cov = perm * (rinv * rinv.transpose()) * perm.transpose();
    fit.covariance_unscaled.assign(p, std::vector<double>(p));
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < p; ++b) fit.covariance_unscaled[a][b] = cov(Eigen::Index(a), Eigen::Index(b));
    return fit;
}

namespace {

// Mid-ranks of the pooled sample, plus the tie-group sizes.
std::vector<double> midranks(const std::vector<double> &pooled, std::vector<std::size_t> &ties) {
    const std::size_t n = pooled.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
    std::vector<double> ranks(n);
    ties.clear();
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
        const double r = 0.5 * double(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
        ties.push_back(j - i + 1);
        i = j + 1;
    }
    return ranks;
}

void enumerate_sums(const std::vector<double> &ranks, std::size_t start, std::size_t left, double acc,
                    std::vector<double> &sums) {
    if (left == 0) {
        sums.push_back(acc);
        return;
    }
    for (std::size_t i = start; i + left <= ranks.size(); ++i) enumerate_sums(ranks, i + 1, left - 1, acc + ranks[i], sums);
}

} // namespace

RankSumResult wilcoxon_ranksum(std::span<const double> a, std::span<const double> b, RankSumMethod method) {
    if (a.empty() || b.empty()) throw InvalidArgument("rank-sum test needs two nonempty samples");
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::vector<std::size_t> ties;
    const std::vector<double> ranks = midranks(pooled, ties);
    const double n = double(a.size()), m = double(b.size()), total = n + m;

    RankSumResult out;
    out.statistic = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(a.size()), 0.0);
    const double expected = n * (total + 1.0) / 2.0;
    const double observed_dev = std::abs(out.statistic - expected);

    const bool exact = method == RankSumMethod::Exact || (method == RankSumMethod::Auto && pooled.size() <= 12);
    if (exact) {
        if (pooled.size() > 28) throw InvalidArgument("exact rank-sum enumeration is limited to 28 observations");
        std::vector<double> sums;
        enumerate_sums(ranks, 0, a.size(), 0.0, sums);
        const double eps = 1e-9 * std::max(1.0, expected);
        const auto extreme = std::count_if(sums.begin(), sums.end(), [&](double w) {
            return std::abs(w - expected) >= observed_dev - eps;
        });
        out.p_value = std::min(1.0, double(extreme) / double(sums.size()));
        out.exact = true;
        return out;
    }

    double tie_term = 0.0;
    for (std::size_t t : ties) tie_term += double(t) * double(t) * double(t) - double(t);
    const double var = n * m / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    if (!(var > 0.0)) {
        out.p_value = 1.0;
        return out;
    }
    const double z = std::max(0.0, observed_dev - 0.5) / std::sqrt(var);
    const boost::math::normal std_normal;
    out.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(std_normal, z)));
    return out;
}

BonferroniResult bonferroni(std::span<const double> p_values, double alpha) {
    if (p_values.empty()) throw InvalidArgument("Bonferroni correction needs at least one p-value");
    BonferroniResult out;
    out.threshold = alpha / double(p_values.size());
    for (double p : p_values) out.significant.push_back(p < out.threshold);
    return out;
}

} // namespace fsyn
