// Brute-force reference implementations used by the tests. Each one is
// written directly from the definition, without sharing code with the
// library routines it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "fsyn/seed.hpp"
#include "fsyn/volume.hpp"

namespace oracle {

using fsyn::Label;
using fsyn::LabelMap;
using fsyn::VoxelGrid;

/// Trilinear interpolation written as the explicit 8-corner weighted sum;
/// `outside` decides what out-of-grid corners contribute.
inline double trilinear(const VoxelGrid &v, double x, double y, double z, bool clamp_coords) {
    const auto s = v.shape();
    if (clamp_coords) {
        x = std::min(std::max(x, 0.0), double(s[0] - 1));
        y = std::min(std::max(y, 0.0), double(s[1] - 1));
        z = std::min(std::max(z, 0.0), double(s[2] - 1));
    }
    const double fx = std::floor(x), fy = std::floor(y), fz = std::floor(z);
    double sum = 0.0;
    for (int c = 0; c < 8; ++c) {
        const long ix = long(fx) + (c & 1), iy = long(fy) + ((c >> 1) & 1), iz = long(fz) + ((c >> 2) & 1);
        const double w = (1.0 - std::abs(x - double(ix))) * (1.0 - std::abs(y - double(iy))) *
                         (1.0 - std::abs(z - double(iz)));
        if (w <= 0.0) continue;
        long cx = ix, cy = iy, cz = iz;
        if (clamp_coords) {
            cx = std::min<long>(cx, s[0] - 1);
            cy = std::min<long>(cy, s[1] - 1);
            cz = std::min<long>(cz, s[2] - 1);
        } else if (cx < 0 || cy < 0 || cz < 0 || cx >= s[0] || cy >= s[1] || cz >= s[2]) {
            continue;
        }
        sum += w * double(v(cx, cy, cz));
    }
    return sum;
}

/// Input voxel coordinate sampled by output voxel (i, j, k) of a backward
/// warp: inv(A_in) * inv(T) * (A_out * [i j k 1] + d).
inline Eigen::Vector3d warp_source(const fsyn::Geometry &in, const fsyn::Geometry &out, const fsyn::Affine &t,
                                   double i, double j, double k, const std::array<float, 3> &d = {}) {
    Eigen::Vector4d w = out.affine * Eigen::Vector4d(i, j, k, 1.0);
    for (int a = 0; a < 3; ++a) w[a] += d[a];
    const Eigen::Vector4d p = in.affine.inverse() * (t.inverse() * w);
    return p.head<3>();
}

inline VoxelGrid warp_trilinear(const VoxelGrid &v, const fsyn::Affine &t) {
    VoxelGrid out(v.geometry());
    const auto s = v.shape();
    for (long k = 0; k < s[2]; ++k)
        for (long j = 0; j < s[1]; ++j)
            for (long i = 0; i < s[0]; ++i) {
                const auto p = warp_source(v.geometry(), v.geometry(), t, double(i), double(j), double(k));
                out(i, j, k) = float(trilinear(v, p[0], p[1], p[2], false));
            }
    return out;
}

/// Min over every feature voxel of the squared world distance.
inline std::vector<double> squared_distances(const std::vector<unsigned char> &feature, const fsyn::Shape &s,
                                             const fsyn::Spacing &sp) {
    std::vector<std::array<long, 3>> pts;
    for (long k = 0; k < s[2]; ++k)
        for (long j = 0; j < s[1]; ++j)
            for (long i = 0; i < s[0]; ++i)
                if (feature[std::size_t(i + s[0] * (j + s[1] * k))]) pts.push_back({i, j, k});
    std::vector<double> out(feature.size(), std::numeric_limits<double>::infinity());
    for (long k = 0; k < s[2]; ++k)
        for (long j = 0; j < s[1]; ++j)
            for (long i = 0; i < s[0]; ++i) {
                double best = std::numeric_limits<double>::infinity();
                for (const auto &p : pts) {
                    const double dx = double(i - p[0]) * sp[0], dy = double(j - p[1]) * sp[1],
                                 dz = double(k - p[2]) * sp[2];
                    best = std::min(best, dx * dx + dy * dy + dz * dz);
                }
                out[std::size_t(i + s[0] * (j + s[1] * k))] = best;
            }
    return out;
}

/// Background voxels within ring_mm of any brain voxel become meta 4.
inline LabelMap skull_ring(const LabelMap &meta, double ring_mm) {
    LabelMap out = meta;
    std::vector<unsigned char> brain(meta.size());
    for (std::size_t n = 0; n < meta.size(); ++n) brain[n] = meta[n] >= 1 && meta[n] <= 3;
    const auto d2 = squared_distances(brain, meta.shape(), meta.spacing());
    for (std::size_t n = 0; n < meta.size(); ++n) {
        if (meta[n] == 0 && std::sqrt(d2[n]) <= ring_mm) out[n] = fsyn::kMetaSkull;
    }
    return out;
}

inline double dice(const LabelMap &p, const LabelMap &g, Label l) {
    double inter = 0, np = 0, ng = 0;
    for (std::size_t n = 0; n < p.size(); ++n) {
        inter += (p[n] == l && g[n] == l);
        np += p[n] == l;
        ng += g[n] == l;
    }
    if (np + ng == 0) return 1.0;
    return 2.0 * inter / (np + ng);
}

/// Surface points by 6-neighbour test, then all-pairs distances.
inline std::vector<std::array<long, 3>> surface_points(const LabelMap &m, Label l) {
    const auto s = m.shape();
    std::vector<std::array<long, 3>> pts;
    for (long k = 0; k < s[2]; ++k)
        for (long j = 0; j < s[1]; ++j)
            for (long i = 0; i < s[0]; ++i) {
                if (m(i, j, k) != l) continue;
                bool surf = false;
                const long nb[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
                for (const auto &d : nb) {
                    const long a = i + d[0], b = j + d[1], c = k + d[2];
                    if (a < 0 || b < 0 || c < 0 || a >= s[0] || b >= s[1] || c >= s[2] || m(a, b, c) != l) {
                        surf = true;
                        break;
                    }
                }
                if (surf) pts.push_back({i, j, k});
            }
    return pts;
}

inline double percentile95(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto rank = std::size_t(std::ceil(0.95 * double(v.size()) - 1e-9));
    return v[std::max<std::size_t>(rank, 1) - 1];
}

inline double hd95(const LabelMap &p, const LabelMap &g, Label l) {
    const auto sp = p.spacing();
    const auto a = surface_points(p, l), b = surface_points(g, l);
    auto directed = [&](const auto &from, const auto &to) {
        std::vector<double> d;
        for (const auto &x : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto &y : to) {
                const double dx = double(x[0] - y[0]) * sp[0], dy = double(x[1] - y[1]) * sp[1],
                             dz = double(x[2] - y[2]) * sp[2];
                best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
            }
            d.push_back(best);
        }
        return percentile95(d);
    };
    return std::max(directed(a, b), directed(b, a));
}

/// Least squares through the normal equations X^T X c = X^T y solved by
/// Gaussian elimination with partial pivoting in long double. x is centred
/// first to keep the system well conditioned, then the coefficients are
/// expanded back.
inline std::vector<double> polyfit_normal(const std::vector<double> &x, const std::vector<double> &y, int order) {
    const int p = order + 1;
    long double mean = 0;
    for (double v : x) mean += v;
    mean /= (long double)x.size();
    std::vector<std::vector<long double>> a(p, std::vector<long double>(p + 1, 0));
    for (std::size_t n = 0; n < x.size(); ++n) {
        std::vector<long double> pw(p);
        pw[0] = 1;
        for (int d = 1; d < p; ++d) pw[d] = pw[d - 1] * ((long double)x[n] - mean);
        for (int r = 0; r < p; ++r) {
            for (int c = 0; c < p; ++c) a[r][c] += pw[r] * pw[c];
            a[r][p] += pw[r] * (long double)y[n];
        }
    }
    for (int c = 0; c < p; ++c) {
        int piv = c;
        for (int r = c + 1; r < p; ++r)
            if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
        std::swap(a[c], a[piv]);
        for (int r = 0; r < p; ++r) {
            if (r == c) continue;
            const long double f = a[r][c] / a[c][c];
            for (int q = c; q <= p; ++q) a[r][q] -= f * a[c][q];
        }
    }
    std::vector<long double> cc(p);
    for (int c = 0; c < p; ++c) cc[c] = a[c][p] / a[c][c];
    // Expand sum_d cc[d] (x - mean)^d into powers of x.
    std::vector<long double> out(p, 0);
    for (int d = 0; d < p; ++d) {
        long double binom = 1;
        for (int e = 0; e <= d; ++e) {
            // term: cc[d] * C(d, e) * x^e * (-mean)^(d-e)
            out[e] += cc[d] * binom * std::pow(-mean, (long double)(d - e));
            binom = binom * (long double)(d - e) / (long double)(e + 1);
        }
    }
    return {out.begin(), out.end()};
}

/// Two-sided exact rank-sum p-value by enumerating every split of the
/// pooled sample, with mid-ranks for ties. A split counts as extreme when
/// its rank sum is at least as far from the null mean as the observed one.
inline double ranksum_exact(const std::vector<double> &a, const std::vector<double> &b) {
    std::vector<double> all(a);
    all.insert(all.end(), b.begin(), b.end());
    const std::size_t n = all.size(), m = a.size();
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        double less = 0, equal = 0;
        for (std::size_t j = 0; j < n; ++j) {
            less += all[j] < all[i];
            equal += all[j] == all[i];
        }
        rank[i] = less + (equal + 1.0) / 2.0;
    }
    double observed = 0;
    for (std::size_t i = 0; i < m; ++i) observed += rank[i];
    const double centre = double(m) * double(n + 1) / 2.0;
    const double dev = std::abs(observed - centre);
    std::size_t extreme = 0, total = 0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (std::size_t(__builtin_popcount(mask)) != m) continue;
        double s = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask & (1u << i)) s += rank[i];
        ++total;
        if (std::abs(s - centre) >= dev - 1e-9) ++extreme;
    }
    return double(extreme) / double(total);
}

/// 32^3-style phantom: nested spheres of FeTA labels around the centre.
inline LabelMap phantom(long n, double spacing) {
    LabelMap l(fsyn::Geometry({n, n, n}, {spacing, spacing, spacing}));
    const double c = (double(n) - 1.0) / 2.0;
    for (long k = 0; k < n; ++k)
        for (long j = 0; j < n; ++j)
            for (long i = 0; i < n; ++i) {
                const double r = std::sqrt((i - c) * (i - c) + (j - c) * (j - c) + (k - c) * (k - c)) / double(n);
                Label v = 0;
                if (r < 0.08) v = fsyn::kVentricles;
                else if (r < 0.16) v = i < c ? fsyn::kWhiteMatter : fsyn::kDeepGreyMatter;
                else if (r < 0.24) v = k < c * 0.7 ? fsyn::kCerebellum : fsyn::kWhiteMatter;
                else if (r < 0.30) v = j < c * 0.6 ? fsyn::kBrainstem : fsyn::kGreyMatter;
                else if (r < 0.34) v = fsyn::kExternalCsf;
                l(i, j, k) = v;
            }
    return l;
}

/// Image whose intensity depends on the label, plus Gaussian noise.
inline VoxelGrid phantom_image(const LabelMap &l, std::uint64_t seed, double noise = 3.0) {
    static const double level[8] = {10, 220, 90, 140, 230, 150, 100, 160};
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, noise);
    VoxelGrid img(l.geometry());
    for (std::size_t n = 0; n < l.size(); ++n) img[n] = float(level[l[n]] + nd(rng));
    return img;
}

} // namespace oracle
