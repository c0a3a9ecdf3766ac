#include "fsyn/distance.hpp"

#include <limits>

namespace fsyn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1-D lower envelope of parabolas f(q) + (w * (p - q))^2.
void envelope_1d(const std::vector<double> &f, double w, std::vector<double> &out, std::vector<std::int64_t> &v,
                 std::vector<double> &z) {
    const auto n = static_cast<std::int64_t>(f.size());
    const double w2 = w * w;
    std::int64_t k = -1;
    for (std::int64_t q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        const double fq = f[q] + w2 * double(q) * double(q);
        double s = -kInf;
        while (k >= 0) {
            const std::int64_t p = v[k];
            const double fp = f[p] + w2 * double(p) * double(p);
            s = (fq - fp) / (2.0 * w2 * double(q - p));
            if (s <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = k == 0 ? -kInf : s;
        z[k + 1] = kInf;
    }
    if (k < 0) {
        std::fill(out.begin(), out.end(), kInf);
        return;
    }
    std::int64_t j = 0;
    for (std::int64_t q = 0; q < n; ++q) {
        while (z[j + 1] < double(q)) ++j;
        const double d = w * double(q - v[j]);
        out[q] = d * d + f[v[j]];
    }
}

} // namespace

std::vector<double> squared_distance_transform(const std::vector<unsigned char> &feature, const Shape &shape,
                                               const Spacing &spacing) {
    const std::size_t total = static_cast<std::size_t>(shape[0] * shape[1] * shape[2]);
    std::vector<double> dist(total);
    for (std::size_t n = 0; n < total; ++n) dist[n] = feature[n] ? 0.0 : kInf;

    for (int axis = 0; axis < 3; ++axis) {
        const std::int64_t n = shape[axis];
        const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? shape[0] : shape[0] * shape[1]);
        const std::int64_t lines = static_cast<std::int64_t>(total) / n;
        std::vector<double> f(n), out(n), z(n + 1);
        std::vector<std::int64_t> v(n);
        for (std::int64_t l = 0; l < lines; ++l) {
            std::int64_t base;
            if (axis == 0) {
                base = l * shape[0];
            } else if (axis == 1) {
                base = (l % shape[0]) + (l / shape[0]) * shape[0] * shape[1];
            } else {
                base = l;
            }
            for (std::int64_t t = 0; t < n; ++t) f[t] = dist[static_cast<std::size_t>(base + t * stride)];
            envelope_1d(f, spacing[axis], out, v, z);
            for (std::int64_t t = 0; t < n; ++t) dist[static_cast<std::size_t>(base + t * stride)] = out[t];
        }
    }
    return dist;
}

} // namespace fsyn
