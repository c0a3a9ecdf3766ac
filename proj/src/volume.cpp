#include "fsyn/volume.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fsyn {

Affine scaling_affine(const Spacing &spacing, const Eigen::Vector3d &origin) {
    Affine a = Affine::Identity();
    for (int d = 0; d < 3; ++d) {
        a(d, d) = spacing[d];
        a(d, 3) = origin[d];
    }
    return a;
}

Geometry::Geometry(Shape s, Spacing sp) : shape(s), spacing(sp), affine(scaling_affine(sp)) {}

Geometry::Geometry(Shape s, Spacing sp, Affine a) : shape(s), spacing(sp), affine(std::move(a)) {}

Eigen::Vector3d Geometry::world(double i, double j, double k) const {
    return (affine * Eigen::Vector4d(i, j, k, 1.0)).head<3>();
}

Eigen::Vector3d Geometry::world_center() const {
    return world(0.5 * static_cast<double>(shape[0] - 1), 0.5 * static_cast<double>(shape[1] - 1),
                 0.5 * static_cast<double>(shape[2] - 1));
}

void Geometry::validate() const {
    for (int d = 0; d < 3; ++d) {
        if (shape[d] < 1) {
            throw InvalidArgument("shape component " + std::to_string(d) + " must be >= 1, got " +
                                  std::to_string(shape[d]));
        }
        if (!(spacing[d] > 0.0) || !std::isfinite(spacing[d])) {
            throw InvalidArgument("spacing component " + std::to_string(d) + " must be > 0");
        }
    }
    const double det = affine.topLeftCorner<3, 3>().determinant();
    if (!std::isfinite(det) || std::abs(det) < 1e-12) {
        throw InvalidArgument("voxel-to-world affine is singular");
    }
}

bool Geometry::same_as(const Geometry &other, double tol) const {
    return shape == other.shape && (affine - other.affine).cwiseAbs().maxCoeff() <= tol;
}

const char *tissue_name(Label l) {
    switch (l) {
    case kBackground: return "background";
    case kExternalCsf: return "ecsf";
    case kGreyMatter: return "gm";
    case kWhiteMatter: return "wm";
    case kVentricles: return "ventricles";
    case kCerebellum: return "cerebellum";
    case kDeepGreyMatter: return "deep_gm";
    case kBrainstem: return "brainstem";
    default: return "unknown";
    }
}

std::set<Label> label_set(const LabelMap &labels) {
    std::array<bool, 256> seen{};
    for (Label l : labels.data()) seen[l] = true;
    std::set<Label> out;
    for (int l = 0; l < 256; ++l) {
        if (seen[l]) out.insert(static_cast<Label>(l));
    }
    return out;
}

void require_labels_in(const LabelMap &labels, const std::set<Label> &allowed) {
    for (Label l : label_set(labels)) {
        if (!allowed.contains(l)) {
            throw InvalidInput("label " + std::to_string(int(l)) + " is not in the admissible label set");
        }
    }
}

std::set<Label> feta_label_set() { return {0, 1, 2, 3, 4, 5, 6, 7}; }

DisplacementField::DisplacementField(Geometry g) : geometry(std::move(g)) {
    geometry.validate();
    vectors.assign(geometry.voxel_count(), {0.0f, 0.0f, 0.0f});
}

bool DisplacementField::all_finite() const {
    return std::all_of(vectors.begin(), vectors.end(), [](const auto &v) {
        return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
    });
}

VoxelGrid to_float(const LabelMap &labels) {
    std::vector<float> out(labels.data().begin(), labels.data().end());
    return VoxelGrid(labels.geometry(), std::move(out));
}

LabelMap to_labels(const VoxelGrid &v) {
    std::vector<Label> out(v.size());
    for (std::size_t n = 0; n < v.size(); ++n) {
        const double r = std::nearbyint(v[n]);
        if (!(r >= 0.0 && r <= 255.0)) {
            throw InvalidInput("voxel value " + std::to_string(v[n]) + " is not a valid label");
        }
        out[n] = static_cast<Label>(r);
    }
    return LabelMap(v.geometry(), std::move(out));
}

namespace {

// Round half toward the lower index.
std::int64_t nearest_index(double x) { return static_cast<std::int64_t>(std::ceil(x - 0.5)); }

struct Corner {
    std::int64_t i0;
    double t;
};

Corner split(double x) {
    const double f = std::floor(x);
    return {static_cast<std::int64_t>(f), x - f};
}

Geometry resampled_geometry(const Geometry &g, const Spacing &target, Eigen::Matrix4d &new_to_old) {
    Shape shape{};
    new_to_old = Eigen::Matrix4d::Identity();
    for (int d = 0; d < 3; ++d) {
        if (!(target[d] > 0.0) || !std::isfinite(target[d])) {
            throw InvalidArgument("target spacing must be positive on every axis");
        }
        const double extent = static_cast<double>(g.shape[d]) * g.spacing[d];
        // Snap away round-off so identical spacing keeps the same shape.
        const double n = extent / target[d];
        const double rn = std::round(n);
        shape[d] = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::abs(n - rn) < 1e-9 * std::max(1.0, rn) ? rn : std::ceil(n)));
        const double r = target[d] / g.spacing[d];
        new_to_old(d, d) = r;
        new_to_old(d, 3) = 0.5 * r - 0.5;
    }
    return Geometry(shape, target, g.affine * new_to_old);
}

template <class T>
Volume<T> crop_pad_impl(const Volume<T> &v, const Shape &target, T fill) {
    for (int d = 0; d < 3; ++d) {
        if (target[d] < 1) throw InvalidArgument("crop_pad target shape must be >= 1 per axis");
    }
    const Shape &in = v.shape();
    // out index i maps to input index i + offset[d].
    std::array<std::int64_t, 3> offset{};
    Affine shift = Affine::Identity();
    for (int d = 0; d < 3; ++d) {
        const std::int64_t diff = in[d] - target[d];
        offset[d] = diff >= 0 ? diff / 2 : -((-diff) / 2);
        shift(d, 3) = static_cast<double>(offset[d]);
    }
    Volume<T> out(Geometry(target, v.spacing(), v.affine() * shift), fill);
    const auto &og = out.geometry();
    for (std::int64_t k = 0; k < target[2]; ++k) {
        const std::int64_t sk = k + offset[2];
        if (sk < 0 || sk >= in[2]) continue;
        for (std::int64_t j = 0; j < target[1]; ++j) {
            const std::int64_t sj = j + offset[1];
            if (sj < 0 || sj >= in[1]) continue;
            for (std::int64_t i = 0; i < target[0]; ++i) {
                const std::int64_t si = i + offset[0];
                if (si < 0 || si >= in[0]) continue;
                out[og.index(i, j, k)] = v(si, sj, sk);
            }
        }
    }
    return out;
}

// Per-output-voxel map into continuous input index space.
struct WarpMap {
    Eigen::Matrix4d out_to_world;
    Eigen::Matrix4d world_to_in; // includes the inverse spatial transform
    const DisplacementField *elastic;

    Eigen::Vector3d operator()(std::int64_t i, std::int64_t j, std::int64_t k, std::size_t n) const {
        Eigen::Vector4d x = out_to_world * Eigen::Vector4d(double(i), double(j), double(k), 1.0);
        if (elastic != nullptr) {
            const auto &d = elastic->vectors[n];
            x[0] += d[0];
            x[1] += d[1];
            x[2] += d[2];
        }
        return (world_to_in * x).head<3>();
    }
};

WarpMap make_warp_map(const Geometry &in, const Affine &transform, const DisplacementField *elastic,
                      Geometry &out) {
    const double det = transform.topLeftCorner<3, 3>().determinant();
    if (!std::isfinite(det) || std::abs(det) < 1e-12) {
        throw InvalidArgument("warp transform is singular");
    }
    out = in;
    if (elastic != nullptr) {
        out = elastic->geometry;
        if (elastic->vectors.size() != out.voxel_count()) {
            throw InvalidArgument("displacement field size does not match its grid");
        }
    }
    return WarpMap{out.affine, in.affine.inverse() * transform.inverse(), elastic};
}

template <class T, class Fn>
void for_each_voxel(const Geometry &g, Fn &&fn) {
    std::size_t n = 0;
    for (std::int64_t k = 0; k < g.shape[2]; ++k)
        for (std::int64_t j = 0; j < g.shape[1]; ++j)
            for (std::int64_t i = 0; i < g.shape[0]; ++i, ++n) fn(i, j, k, n);
}

template <class T>
T sample_nearest_zero(const Volume<T> &v, const Eigen::Vector3d &p) {
    const std::int64_t i = nearest_index(p[0]);
    const std::int64_t j = nearest_index(p[1]);
    const std::int64_t k = nearest_index(p[2]);
    if (!v.geometry().contains(i, j, k)) return T{};
    return v(i, j, k);
}

void blur_axis(std::vector<float> &data, const Shape &shape, int axis, double sigma) {
    if (sigma <= 0.0) return;
    const auto radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (std::int64_t t = -radius; t <= radius; ++t) {
        const double w = std::exp(-0.5 * double(t * t) / (sigma * sigma));
        kernel[static_cast<std::size_t>(t + radius)] = w;
        sum += w;
    }
    for (double &w : kernel) w /= sum;

    const std::int64_t n = shape[axis];
    const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? shape[0] : shape[0] * shape[1]);
    const std::int64_t lines = (shape[0] * shape[1] * shape[2]) / n;
    std::vector<double> line(static_cast<std::size_t>(n));
    for (std::int64_t l = 0; l < lines; ++l) {
        // base offset of line l: decompose over the two non-blurred axes
        std::int64_t base;
        if (axis == 0) {
            base = l * shape[0];
        } else if (axis == 1) {
            base = (l % shape[0]) + (l / shape[0]) * shape[0] * shape[1];
        } else {
            base = l;
        }
        for (std::int64_t t = 0; t < n; ++t) line[t] = data[static_cast<std::size_t>(base + t * stride)];
        for (std::int64_t t = 0; t < n; ++t) {
            double acc = 0.0;
            for (std::int64_t q = -radius; q <= radius; ++q) {
                const std::int64_t s = std::clamp<std::int64_t>(t + q, 0, n - 1);
                acc += kernel[static_cast<std::size_t>(q + radius)] * line[static_cast<std::size_t>(s)];
            }
            data[static_cast<std::size_t>(base + t * stride)] = static_cast<float>(acc);
        }
    }
}

} // namespace

double sample_clamped(const VoxelGrid &v, double x, double y, double z) {
    const Shape &s = v.shape();
    x = std::clamp(x, 0.0, double(s[0] - 1));
    y = std::clamp(y, 0.0, double(s[1] - 1));
    z = std::clamp(z, 0.0, double(s[2] - 1));
    const Corner cx = split(x), cy = split(y), cz = split(z);
    const std::int64_t x1 = std::min(cx.i0 + 1, s[0] - 1);
    const std::int64_t y1 = std::min(cy.i0 + 1, s[1] - 1);
    const std::int64_t z1 = std::min(cz.i0 + 1, s[2] - 1);
    auto at = [&](std::int64_t i, std::int64_t j, std::int64_t k) { return double(v(i, j, k)); };
    const double c00 = at(cx.i0, cy.i0, cz.i0) * (1 - cx.t) + at(x1, cy.i0, cz.i0) * cx.t;
    const double c10 = at(cx.i0, y1, cz.i0) * (1 - cx.t) + at(x1, y1, cz.i0) * cx.t;
    const double c01 = at(cx.i0, cy.i0, z1) * (1 - cx.t) + at(x1, cy.i0, z1) * cx.t;
    const double c11 = at(cx.i0, y1, z1) * (1 - cx.t) + at(x1, y1, z1) * cx.t;
    const double c0 = c00 * (1 - cy.t) + c10 * cy.t;
    const double c1 = c01 * (1 - cy.t) + c11 * cy.t;
    return c0 * (1 - cz.t) + c1 * cz.t;
}

double sample_zero(const VoxelGrid &v, double x, double y, double z) {
    const auto &g = v.geometry();
    const Corner cx = split(x), cy = split(y), cz = split(z);
    if (cx.i0 < -1 || cy.i0 < -1 || cz.i0 < -1 || cx.i0 >= g.shape[0] || cy.i0 >= g.shape[1] ||
        cz.i0 >= g.shape[2]) {
        return 0.0;
    }
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz) {
        const double wz = dz ? cz.t : 1 - cz.t;
        if (wz == 0.0) continue;
        for (int dy = 0; dy < 2; ++dy) {
            const double wy = dy ? cy.t : 1 - cy.t;
            if (wy == 0.0) continue;
            for (int dx = 0; dx < 2; ++dx) {
                const double wx = dx ? cx.t : 1 - cx.t;
                if (wx == 0.0) continue;
                const std::int64_t i = cx.i0 + dx, j = cy.i0 + dy, k = cz.i0 + dz;
                if (g.contains(i, j, k)) acc += wx * wy * wz * double(v(i, j, k));
            }
        }
    }
    return acc;
}

VoxelGrid resample(const VoxelGrid &v, const Spacing &target_spacing, Interp mode) {
    Eigen::Matrix4d new_to_old;
    Geometry g = resampled_geometry(v.geometry(), target_spacing, new_to_old);
    if (g.shape == v.shape() && new_to_old.isIdentity(0.0)) {
        return VoxelGrid(g, v.data());
    }
    VoxelGrid out(g);
    for_each_voxel<float>(g, [&](std::int64_t i, std::int64_t j, std::int64_t k, std::size_t n) {
        const double x = new_to_old(0, 0) * double(i) + new_to_old(0, 3);
        const double y = new_to_old(1, 1) * double(j) + new_to_old(1, 3);
        const double z = new_to_old(2, 2) * double(k) + new_to_old(2, 3);
        if (mode == Interp::Trilinear) {
            out[n] = static_cast<float>(sample_clamped(v, x, y, z));
        } else {
            const auto &s = v.shape();
            out[n] = v(std::clamp<std::int64_t>(nearest_index(x), 0, s[0] - 1),
                       std::clamp<std::int64_t>(nearest_index(y), 0, s[1] - 1),
                       std::clamp<std::int64_t>(nearest_index(z), 0, s[2] - 1));
        }
    });
    return out;
}

LabelMap resample(const LabelMap &v, const Spacing &target_spacing) {
    Eigen::Matrix4d new_to_old;
    Geometry g = resampled_geometry(v.geometry(), target_spacing, new_to_old);
    LabelMap out(g);
    const auto &s = v.shape();
    for_each_voxel<Label>(g, [&](std::int64_t i, std::int64_t j, std::int64_t k, std::size_t n) {
        out[n] = v(std::clamp<std::int64_t>(nearest_index(new_to_old(0, 0) * double(i) + new_to_old(0, 3)), 0,
                                            s[0] - 1),
                   std::clamp<std::int64_t>(nearest_index(new_to_old(1, 1) * double(j) + new_to_old(1, 3)), 0,
                                            s[1] - 1),
                   std::clamp<std::int64_t>(nearest_index(new_to_old(2, 2) * double(k) + new_to_old(2, 3)), 0,
                                            s[2] - 1));
    });
    return out;
}

VoxelGrid crop_pad(const VoxelGrid &v, const Shape &target, float fill) { return crop_pad_impl(v, target, fill); }

LabelMap crop_pad(const LabelMap &v, const Shape &target, Label fill) { return crop_pad_impl(v, target, fill); }

VoxelGrid warp(const VoxelGrid &v, const Affine &transform, const DisplacementField *elastic, Interp mode) {
    Geometry og;
    const WarpMap map = make_warp_map(v.geometry(), transform, elastic, og);
    if (elastic == nullptr && transform.isIdentity(0.0) && og.same_as(v.geometry(), 0.0)) return v;
    VoxelGrid out(og);
    for_each_voxel<float>(og, [&](std::int64_t i, std::int64_t j, std::int64_t k, std::size_t n) {
        const Eigen::Vector3d p = map(i, j, k, n);
        out[n] = mode == Interp::Trilinear ? static_cast<float>(sample_zero(v, p[0], p[1], p[2]))
                                           : sample_nearest_zero(v, p);
    });
    return out;
}

LabelMap warp(const LabelMap &v, const Affine &transform, const DisplacementField *elastic) {
    Geometry og;
    const WarpMap map = make_warp_map(v.geometry(), transform, elastic, og);
    if (elastic == nullptr && transform.isIdentity(0.0) && og.same_as(v.geometry(), 0.0)) return v;
    LabelMap out(og);
    for_each_voxel<Label>(og, [&](std::int64_t i, std::int64_t j, std::int64_t k, std::size_t n) {
        out[n] = sample_nearest_zero(v, map(i, j, k, n));
    });
    return out;
}

VoxelGrid minmax_normalize(const VoxelGrid &v) {
    const auto [lo_it, hi_it] = std::minmax_element(v.data().begin(), v.data().end());
    const double lo = *lo_it, hi = *hi_it;
    VoxelGrid out(v.geometry(), 0.0f);
    if (!(hi > lo)) return out;
    const double range = hi - lo;
    for (std::size_t n = 0; n < v.size(); ++n) {
        out[n] = static_cast<float>(std::clamp((double(v[n]) - lo) / range, 0.0, 1.0));
    }
    return out;
}

VoxelGrid gaussian_blur(const VoxelGrid &v, const std::array<double, 3> &sigma_vox) {
    VoxelGrid out = v;
    for (int axis = 0; axis < 3; ++axis) {
        if (sigma_vox[axis] < 0.0) throw InvalidArgument("blur sigma must be >= 0");
        blur_axis(out.data(), out.shape(), axis, sigma_vox[axis]);
    }
    return out;
}

VoxelGrid upsample_control_grid(const VoxelGrid &control, const Geometry &out) {
    VoxelGrid result(out);
    const Shape &cs = control.shape();
    std::array<double, 3> scale{};
    for (int d = 0; d < 3; ++d) {
        scale[d] = out.shape[d] > 1 ? double(cs[d] - 1) / double(out.shape[d] - 1) : 0.0;
    }
    for_each_voxel<float>(out, [&](std::int64_t i, std::int64_t j, std::int64_t k, std::size_t n) {
        result[n] = static_cast<float>(
            sample_clamped(control, scale[0] * double(i), scale[1] * double(j), scale[2] * double(k)));
    });
    return result;
}

} // namespace fsyn
