#include "fsyn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <sstream>

namespace fsyn {

void GenConfig::validate() const {
    auto need = [](bool ok, const char *what) {
        if (!ok) throw InvalidArgument(std::string("generator config: ") + what);
    };
    need(intensity_lo < intensity_hi, "intensity_lo must be < intensity_hi");
    need(mean_lo <= mean_hi, "mean_lo must be <= mean_hi");
    need(std_max >= 0.0, "std_max must be >= 0");
    need(scale_lo <= scale_hi, "scale_lo must be <= scale_hi");
    need(scale_lo > 0.0, "scale_lo must be > 0");
    need(translation_lo <= translation_hi, "translation_lo must be <= translation_hi");
    need(rotation_deg >= 0.0, "rotation_deg must be >= 0");
    need(shear >= 0.0, "shear must be >= 0");
    need(elastic_grid >= 2, "elastic_grid must be >= 2");
    need(elastic_std_max >= 0.0, "elastic_std_max must be >= 0");
    need(bias_grid >= 2, "bias_grid must be >= 2");
    need(bias_std_max >= 0.0, "bias_std_max must be >= 0");
    need(resolution_lo > 0.0, "resolution_lo must be > 0");
    need(resolution_lo <= resolution_hi, "resolution_lo must be <= resolution_hi");
    need(extra_blur_max >= 0.0, "extra_blur_max must be >= 0");
    need(noise_std_max >= 0.0, "noise_std_max must be >= 0");
}

GenConfig GenConfig::deterministic() {
    GenConfig c;
    c.std_max = 0.0;
    c.scale_lo = c.scale_hi = 1.0;
    c.translation_lo = c.translation_hi = 0.0;
    c.rotation_deg = 0.0;
    c.shear = 0.0;
    c.elastic_std_max = 0.0;
    c.bias_std_max = 0.0;
    c.extra_blur_max = 0.0;
    c.noise_std_max = 0.0;
    return c;
}

std::string GenConfig::canonical() const {
    std::ostringstream s;
    s.precision(17);
    s << "intensity_lo=" << intensity_lo << ";intensity_hi=" << intensity_hi << ";mean_lo=" << mean_lo
      << ";mean_hi=" << mean_hi << ";std_max=" << std_max << ";scale_lo=" << scale_lo << ";scale_hi=" << scale_hi
      << ";translation_lo=" << translation_lo << ";translation_hi=" << translation_hi
      << ";rotation_deg=" << rotation_deg << ";shear=" << shear << ";elastic_grid=" << elastic_grid
      << ";elastic_std_max=" << elastic_std_max << ";bias_grid=" << bias_grid << ";bias_std_max=" << bias_std_max
      << ";resolution_lo=" << resolution_lo << ";resolution_hi=" << resolution_hi
      << ";extra_blur_max=" << extra_blur_max << ";noise_std_max=" << noise_std_max
      << ";samples_per_image=" << samples_per_image << ";master_seed=" << master_seed;
    return s.str();
}

std::string SpatialTransform::digest() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void *p, std::size_t n) {
        h = fnv1a(std::string_view(static_cast<const char *>(p), n), h);
    };
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            const double v = affine(r, c);
            mix(&v, sizeof v);
        }
    if (elastic) mix(elastic->vectors.data(), elastic->vectors.size() * sizeof(elastic->vectors[0]));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Affine compose_affine(const AffineDraw &d, const Eigen::Vector3d &centre) {
    using Eigen::AngleAxisd;
    using Eigen::Vector3d;
    const Eigen::Matrix3d rot = (AngleAxisd(d.rotation_rad[2], Vector3d::UnitZ()) *
                                 AngleAxisd(d.rotation_rad[1], Vector3d::UnitY()) *
                                 AngleAxisd(d.rotation_rad[0], Vector3d::UnitX()))
                                    .toRotationMatrix();
    Eigen::Matrix3d shear = Eigen::Matrix3d::Identity();
    shear(0, 1) = d.shear[0];
    shear(0, 2) = d.shear[1];
    shear(1, 0) = d.shear[2];
    shear(1, 2) = d.shear[3];
    shear(2, 0) = d.shear[4];
    shear(2, 1) = d.shear[5];
    const Eigen::Matrix3d scale = Vector3d(d.scale[0], d.scale[1], d.scale[2]).asDiagonal();
    const Eigen::Matrix3d m = rot * shear * scale;
    Affine a = Affine::Identity();
    a.topLeftCorner<3, 3>() = m;
    const Vector3d t(d.translation[0], d.translation[1], d.translation[2]);
    a.block<3, 1>(0, 3) = centre + t - m * centre;
    return a;
}

namespace {

VoxelGrid random_control_field(int n, double stddev, Rng &rng) {
    VoxelGrid control(Geometry({n, n, n}, {1.0, 1.0, 1.0}));
    for (auto &v : control.data()) v = static_cast<float>(normal(rng, 0.0, stddev));
    return control;
}

} // namespace

SpatialTransform sample_transform(const Geometry &grid, const GenConfig &cfg, Rng &rng, AffineDraw *draw_out) {
    AffineDraw d;
    const double rot = cfg.rotation_deg * std::numbers::pi / 180.0;
    for (auto &s : d.scale) s = uniform(rng, cfg.scale_lo, cfg.scale_hi);
    for (auto &r : d.rotation_rad) r = uniform(rng, -rot, rot);
    for (auto &s : d.shear) s = uniform(rng, -cfg.shear, cfg.shear);
    for (auto &t : d.translation) t = uniform(rng, cfg.translation_lo, cfg.translation_hi);
    d.elastic_std = uniform(rng, 0.0, cfg.elastic_std_max);

    SpatialTransform t;
    t.affine = compose_affine(d, grid.world_center());
    if (t.affine.topLeftCorner<3, 3>().determinant() <= 0.0) {
        throw InvalidArgument("sampled affine has non-positive determinant; shear bounds are too wide");
    }
    if (d.elastic_std > 0.0) {
        DisplacementField field(grid);
        for (int c = 0; c < 3; ++c) {
            const VoxelGrid dense = upsample_control_grid(random_control_field(cfg.elastic_grid, d.elastic_std, rng), grid);
            for (std::size_t n = 0; n < dense.size(); ++n) field.vectors[n][c] = dense[n];
        }
        t.elastic = std::move(field);
    }
    if (draw_out != nullptr) *draw_out = d;
    return t;
}

VoxelGrid synthesize_intensities(const LabelMap &subclasses, const std::vector<SubclassIntensity> &params, Rng &rng,
                                 std::optional<std::pair<double, double>> clamp) {
    VoxelGrid out(subclasses.geometry(), 0.0f);
    std::vector<std::normal_distribution<double>> dists;
    dists.reserve(params.size());
    for (const auto &p : params) dists.emplace_back(p.mean, p.stddev > 0.0 ? p.stddev : 1.0);
    for (std::size_t n = 0; n < subclasses.size(); ++n) {
        const Label s = subclasses[n];
        if (s == 0) continue;
        if (s > params.size()) throw InvalidInput("subclass " + std::to_string(int(s)) + " has no intensity parameters");
        const auto &p = params[s - 1];
        double v = p.stddev > 0.0 ? dists[s - 1](rng) : p.mean;
        if (clamp) v = std::clamp(v, clamp->first, clamp->second);
        out[n] = static_cast<float>(v);
    }
    return out;
}

VoxelGrid sample_gmm_intensities(const LabelMap &subclasses, int subclass_count, const GenConfig &cfg, Rng &rng,
                                 std::vector<SubclassIntensity> *drawn) {
    std::vector<SubclassIntensity> params(static_cast<std::size_t>(std::max(subclass_count, 0)));
    for (auto &p : params) {
        p.mean = uniform(rng, cfg.mean_lo, cfg.mean_hi);
        p.stddev = uniform(rng, 0.0, cfg.std_max);
    }
    if (drawn != nullptr) *drawn = params;
    return synthesize_intensities(subclasses, params, rng, std::make_pair(cfg.intensity_lo, cfg.intensity_hi));
}

VoxelGrid sample_bias_field(const Geometry &grid, const GenConfig &cfg, Rng &rng) {
    const double s = uniform(rng, 0.0, cfg.bias_std_max);
    if (!(s > 0.0)) return VoxelGrid(grid, 1.0f);
    VoxelGrid field = upsample_control_grid(random_control_field(cfg.bias_grid, s, rng), grid);
    for (auto &v : field.data()) v = std::exp(v);
    return field;
}

VoxelGrid simulate_resolution_at(const VoxelGrid &img, const Spacing &acquisition) {
    const Spacing &native = img.spacing();
    std::array<double, 3> ratio{};
    bool noop = true;
    for (int d = 0; d < 3; ++d) {
        if (acquisition[d] < native[d] * (1.0 - 1e-9)) {
            throw InvalidArgument("simulated acquisition spacing " + std::to_string(acquisition[d]) +
                                  " mm is finer than the native " + std::to_string(native[d]) + " mm");
        }
        ratio[d] = std::max(1.0, acquisition[d] / native[d]);
        if (std::abs(ratio[d] - 1.0) > 1e-12) noop = false;
    }
    if (noop) return img;
    std::array<double, 3> sigma{};
    for (int d = 0; d < 3; ++d) sigma[d] = 0.42 * (ratio[d] - 1.0);
    const VoxelGrid blurred = gaussian_blur(img, sigma);
    const VoxelGrid low = resample(blurred, acquisition, Interp::Trilinear);

    VoxelGrid out(img.geometry());
    const Shape &s = img.shape();
    std::size_t n = 0;
    for (std::int64_t k = 0; k < s[2]; ++k) {
        const double z = (double(k) + 0.5) / ratio[2] - 0.5;
        for (std::int64_t j = 0; j < s[1]; ++j) {
            const double y = (double(j) + 0.5) / ratio[1] - 0.5;
            for (std::int64_t i = 0; i < s[0]; ++i, ++n) {
                const double x = (double(i) + 0.5) / ratio[0] - 0.5;
                out[n] = static_cast<float>(sample_clamped(low, x, y, z));
            }
        }
    }
    return out;
}

VoxelGrid simulate_resolution(const VoxelGrid &img, const GenConfig &cfg, Rng &rng) {
    Spacing acquisition{};
    for (auto &s : acquisition) s = uniform(rng, cfg.resolution_lo, cfg.resolution_hi);
    VoxelGrid out = simulate_resolution_at(img, acquisition);
    if (cfg.extra_blur_max > 0.0) {
        const double sigma = uniform(rng, 0.0, cfg.extra_blur_max);
        out = gaussian_blur(out, {sigma, sigma, sigma});
    }
    return out;
}

SynthSample generate_sample_with(const SeedMap &seed, const GenConfig &cfg, Rng &rng, VoxelGrid *pre_noise) {
    cfg.validate();
    const Geometry &grid = seed.subclasses.geometry();
    SynthSample out;

    const SpatialTransform t = sample_transform(grid, cfg, rng);
    out.transform_digest = t.digest();
    const DisplacementField *elastic = t.elastic ? &*t.elastic : nullptr;
    out.subclasses = warp(seed.subclasses, t.affine, elastic);
    out.target = warp(seed.fine, t.affine, elastic);

    VoxelGrid img = sample_gmm_intensities(out.subclasses, seed.subclass_count(), cfg, rng);
    const VoxelGrid bias = sample_bias_field(grid, cfg, rng);
    for (std::size_t n = 0; n < img.size(); ++n) img[n] *= bias[n];
    img = simulate_resolution(img, cfg, rng);
    if (pre_noise != nullptr) *pre_noise = img;

    const double noise = uniform(rng, 0.0, cfg.noise_std_max);
    if (noise > 0.0) {
        std::normal_distribution<double> dist(0.0, noise);
        for (auto &v : img.data()) v = static_cast<float>(double(v) + dist(rng));
    }
    for (auto &v : img.data()) v = static_cast<float>(std::clamp<double>(v, cfg.intensity_lo, cfg.intensity_hi));
    out.image = std::move(img);
    return out;
}

SynthSample generate_sample(const SeedMap &seed, const GenConfig &cfg, std::uint64_t sample_index) {
    const std::uint64_t key = derive_seed(cfg.master_seed, seed.source_id, sample_index);
    Rng rng(key);
    SynthSample s = generate_sample_with(seed, cfg, rng, nullptr);
    s.seed = key;
    return s;
}

} // namespace fsyn
