#include "fsyn/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "fsyn/rng.hpp"
#include "fsyn/volume.hpp"

namespace fsyn {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112; // ln(2 pi)

double log_density(const GaussianComponent &c, double x) {
    const double d = x - c.mean;
    return std::log(c.weight) - 0.5 * (kLog2Pi + std::log(c.variance)) - 0.5 * d * d / c.variance;
}

struct SampleMoments {
    double mean = 0.0;
    double variance = 0.0;
};

SampleMoments moments(std::span<const double> xs) {
    SampleMoments m;
    double sum = 0.0;
    for (double x : xs) sum += x;
    m.mean = sum / double(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.variance = ss / double(xs.size());
    return m;
}

// E-step: fills responsibilities (row-major n x k) and returns the log-likelihood.
double expectation(std::span<const double> xs, const GmmParams &p, std::vector<double> &resp) {
    const std::size_t k = p.components.size();
    resp.resize(xs.size() * k);
    std::vector<double> lw(k), lv(k);
    for (std::size_t c = 0; c < k; ++c) {
        lw[c] = std::log(p.components[c].weight) - 0.5 * (kLog2Pi + std::log(p.components[c].variance));
        lv[c] = 0.5 / p.components[c].variance;
    }
    double ll = 0.0;
    for (std::size_t n = 0; n < xs.size(); ++n) {
        double *r = resp.data() + n * k;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            const double d = xs[n] - p.components[c].mean;
            r[c] = lw[c] - lv[c] * d * d;
            mx = std::max(mx, r[c]);
        }
        double s = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            r[c] = std::exp(r[c] - mx);
            s += r[c];
        }
        for (std::size_t c = 0; c < k; ++c) r[c] /= s;
        ll += mx + std::log(s);
    }
    return ll;
}

// M-step. Returns false when a component's weight drops below the collapse threshold.
bool maximization(std::span<const double> xs, const std::vector<double> &resp, double var_floor, double collapse,
                  GmmParams &p) {
    const std::size_t k = p.components.size();
    std::vector<double> nk(k, 0.0), sx(k, 0.0);
    for (std::size_t n = 0; n < xs.size(); ++n) {
        for (std::size_t c = 0; c < k; ++c) {
            nk[c] += resp[n * k + c];
            sx[c] += resp[n * k + c] * xs[n];
        }
    }
    const double total = double(xs.size());
    for (std::size_t c = 0; c < k; ++c) {
        if (nk[c] / total < collapse || nk[c] <= 0.0) return false;
        p.components[c].weight = nk[c] / total;
        p.components[c].mean = sx[c] / nk[c];
    }
    std::vector<double> ss(k, 0.0);
    for (std::size_t n = 0; n < xs.size(); ++n) {
        for (std::size_t c = 0; c < k; ++c) {
            const double d = xs[n] - p.components[c].mean;
            ss[c] += resp[n * k + c] * d * d;
        }
    }
    for (std::size_t c = 0; c < k; ++c) p.components[c].variance = std::max(ss[c] / nk[c], var_floor);
    return true;
}

GmmParams quantile_init(std::span<const double> xs, int k, double variance) {
    std::vector<double> sorted(xs.begin(), xs.end());
    std::sort(sorted.begin(), sorted.end());
    GmmParams p;
    for (int c = 0; c < k; ++c) {
        const auto idx = std::min<std::size_t>(
            sorted.size() - 1, static_cast<std::size_t>(std::floor((c + 0.5) / k * double(sorted.size()))));
        p.components.push_back({1.0 / k, sorted[idx], variance});
    }
    return p;
}

GmmParams random_init(std::span<const double> xs, int k, double variance, std::uint64_t seed) {
    Rng rng(splitmix64(seed ^ 0x5eed5eedULL));
    std::uniform_int_distribution<std::size_t> pick(0, xs.size() - 1);
    std::vector<double> means;
    for (int c = 0; c < k; ++c) means.push_back(xs[pick(rng)]);
    std::sort(means.begin(), means.end());
    GmmParams p;
    for (double m : means) p.components.push_back({1.0 / k, m, variance});
    return p;
}

} // namespace

int GmmParams::classify(double x) const {
    int best = 0;
    double best_lp = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < k(); ++c) {
        const double lp = log_density(components[c], x);
        if (lp > best_lp) {
            best_lp = lp;
            best = c;
        }
    }
    return best;
}

double GmmParams::log_likelihood(std::span<const double> xs) const {
    std::vector<double> resp;
    return expectation(xs, *this, resp);
}

EmResult em_fit(std::span<const double> xs, int k, std::uint64_t seed, const EmOptions &opt) {
    if (k < 1 || k > 4) throw InvalidArgument("component count must be in 1..4, got " + std::to_string(k));
    if (xs.size() < static_cast<std::size_t>(k)) {
        throw InvalidArgument("em_fit needs at least " + std::to_string(k) + " samples, got " +
                              std::to_string(xs.size()));
    }
    const SampleMoments m = moments(xs);
    const double floor = std::max(opt.variance_floor_ratio * m.variance, opt.min_variance);
    const double init_var = std::max(m.variance, floor);

    EmResult result;
    GmmParams params = quantile_init(xs, k, init_var);
    std::vector<double> resp;
    for (int attempt = 0; attempt < 2; ++attempt) {
        result.log_likelihood_trace.clear();
        result.iterations = 0;
        result.converged = false;
        double ll = expectation(xs, params, resp);
        result.log_likelihood_trace.push_back(ll);
        bool collapsed = false;
        for (int it = 0; it < opt.max_iterations; ++it) {
            if (!maximization(xs, resp, floor, opt.collapse_weight, params)) {
                collapsed = true;
                break;
            }
            const double next = expectation(xs, params, resp);
            result.log_likelihood_trace.push_back(next);
            ++result.iterations;
            const bool done = std::abs(next - ll) <= opt.relative_tolerance * std::abs(ll);
            ll = next;
            if (done) {
                result.converged = true;
                break;
            }
        }
        if (!collapsed) {
            result.params = params;
            return result;
        }
        if (attempt == 0) {
            ++result.restarts;
            params = random_init(xs, k, init_var, seed);
        }
    }
    throw ComponentCollapse("EM component collapsed (weight < " + std::to_string(opt.collapse_weight) +
                            ") for K=" + std::to_string(k) + " after a restart");
}

double bic_score(double log_likelihood, int k, std::size_t n) {
    return -2.0 * log_likelihood + double(3 * k - 1) * std::log(double(n));
}

SubclassSelection select_subclass_count(std::span<const double> xs, int k_max, std::uint64_t seed,
                                        const EmOptions &opt) {
    if (xs.empty()) throw InvalidArgument("select_subclass_count needs a nonempty sample");
    k_max = std::clamp(k_max, 1, 4);
    SubclassSelection out;
    out.bic.assign(static_cast<std::size_t>(k_max), std::numeric_limits<double>::infinity());

    const SampleMoments m = moments(xs);
    const bool flat = !(m.variance > opt.min_variance);
    if (xs.size() < kMinRegionForSplit || flat) {
        out.k = 1;
        out.fit = em_fit(xs, 1, seed, opt);
        out.bic[0] = bic_score(out.fit.log_likelihood(), 1, xs.size());
        return out;
    }
    bool have = false;
    for (int k = 1; k <= k_max; ++k) {
        if (xs.size() < static_cast<std::size_t>(k)) break;
        EmResult fit;
        try {
            fit = em_fit(xs, k, splitmix64(seed + static_cast<std::uint64_t>(k)), opt);
        } catch (const ComponentCollapse &) {
            continue;
        }
        const double b = bic_score(fit.log_likelihood(), k, xs.size());
        out.bic[static_cast<std::size_t>(k - 1)] = b;
        if (!have || b < out.bic[static_cast<std::size_t>(out.k - 1)]) {
            out.k = k;
            out.fit = std::move(fit);
            have = true;
        }
    }
    return out;
}

} // namespace fsyn
