#include "fsyn/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "fsyn/synth.hpp"

namespace fsyn {

void AugmentConfig::validate() const {
    auto prob = [](double p, const char *name) {
        if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument(std::string("augment config: ") + name + " must be in [0,1]");
    };
    auto ordered = [](const Range &r, const char *name) {
        if (!(r.lo <= r.hi)) throw InvalidArgument(std::string("augment config: ") + name + " range is not ordered");
    };
    prob(gamma_p, "gamma_p");
    prob(affine_p, "affine_p");
    prob(noise_p, "noise_p");
    prob(smooth_p, "smooth_p");
    ordered(gamma, "gamma");
    ordered(scale, "scale");
    ordered(rotation_deg, "rotation");
    ordered(shear, "shear");
    ordered(translation_mm, "translation");
    ordered(smooth_sigma, "smooth_sigma");
    if (!(gamma.lo > 0.0)) throw InvalidArgument("augment config: gamma must be positive");
    if (!(scale.lo > -1.0)) throw InvalidArgument("augment config: scale must stay above -1");
    if (noise_std < 0.0 || smooth_sigma.lo < 0.0) throw InvalidArgument("augment config: negative spread");
    for (int d = 0; d < 3; ++d) {
        if (!(target_spacing[d] > 0.0)) throw InvalidArgument("augment config: target spacing must be positive");
        if (target_shape[d] < 1) throw InvalidArgument("augment config: target shape must be >= 1");
    }
}

std::string AugmentConfig::canonical() const {
    std::ostringstream s;
    s.precision(17);
    s << "gamma=" << gamma.lo << ":" << gamma.hi << ";gamma_p=" << gamma_p << ";scale=" << scale.lo << ":"
      << scale.hi << ";rotation_deg=" << rotation_deg.lo << ":" << rotation_deg.hi << ";shear=" << shear.lo << ":"
      << shear.hi << ";translation_mm=" << translation_mm.lo << ":" << translation_mm.hi
      << ";affine_p=" << affine_p << ";noise_mean=" << noise_mean << ";noise_std=" << noise_std
      << ";noise_p=" << noise_p << ";smooth_sigma=" << smooth_sigma.lo << ":" << smooth_sigma.hi
      << ";smooth_p=" << smooth_p << ";target_spacing=" << target_spacing[0] << "," << target_spacing[1] << ","
      << target_spacing[2] << ";target_shape=" << target_shape[0] << "," << target_shape[1] << ","
      << target_shape[2];
    return s.str();
}

namespace {

bool fires(Rng &rng, double p) {
    // Always consume one draw so the stream layout does not depend on p.
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return u < p;
}

double draw(Rng &rng, const Range &r) { return uniform(rng, r.lo, r.hi); }

} // namespace

AugmentParams sample_augment_params(const AugmentConfig &cfg, Rng &rng) {
    AugmentParams p;
    if (fires(rng, cfg.gamma_p)) p.gamma = draw(rng, cfg.gamma);
    if (fires(rng, cfg.affine_p)) {
        AugmentParams::AffineParams a;
        for (auto &s : a.scale) s = 1.0 + draw(rng, cfg.scale);
        for (auto &r : a.rotation_deg) r = draw(rng, cfg.rotation_deg);
        for (auto &s : a.shear) s = draw(rng, cfg.shear);
        for (auto &t : a.translation_mm) t = draw(rng, cfg.translation_mm);
        p.affine = a;
    }
    if (fires(rng, cfg.noise_p)) p.noise_std = cfg.noise_std;
    if (fires(rng, cfg.smooth_p)) p.smooth_sigma = draw(rng, cfg.smooth_sigma);
    return p;
}

VoxelGrid augment_gamma(const VoxelGrid &v, double gamma) {
    if (!(gamma > 0.0)) throw InvalidArgument("gamma must be > 0");
    VoxelGrid out = v;
    if (gamma == 1.0) return out;
    for (auto &x : out.data()) x = static_cast<float>(std::pow(std::clamp<double>(x, 0.0, 1.0), gamma));
    return out;
}

namespace {

std::pair<VoxelGrid, std::optional<LabelMap>> spatial_stages(const VoxelGrid &image, const LabelMap *labels,
                                                             const AugmentConfig &cfg) {
    if (labels != nullptr && !labels->geometry().same_as(image.geometry(), 1e-4)) {
        throw InvalidInput("image and labels do not share grid geometry");
    }
    VoxelGrid img = crop_pad(resample(image, cfg.target_spacing, Interp::Trilinear), cfg.target_shape, 0.0f);
    std::optional<LabelMap> lab;
    if (labels != nullptr) lab = crop_pad(resample(*labels, cfg.target_spacing), cfg.target_shape, Label{0});
    return {std::move(img), std::move(lab)};
}

} // namespace

std::pair<VoxelGrid, std::optional<LabelMap>> preprocess_with(const VoxelGrid &image, const LabelMap *labels,
                                                              const AugmentConfig &cfg, const AugmentParams &params,
                                                              Rng &noise_rng) {
    cfg.validate();
    auto [img, lab] = spatial_stages(image, labels, cfg);

    if (params.gamma) {
        const auto [lo_it, hi_it] = std::minmax_element(img.data().begin(), img.data().end());
        const double lo = *lo_it, hi = *hi_it;
        if (hi > lo) {
            const VoxelGrid g = augment_gamma(minmax_normalize(img), *params.gamma);
            for (std::size_t n = 0; n < img.size(); ++n) img[n] = static_cast<float>(lo + (hi - lo) * g[n]);
        }
    }
    if (params.affine) {
        AffineDraw d;
        d.scale = params.affine->scale;
        for (int a = 0; a < 3; ++a) d.rotation_rad[a] = params.affine->rotation_deg[a] * std::numbers::pi / 180.0;
        d.shear = params.affine->shear;
        d.translation = params.affine->translation_mm;
        const Affine t = compose_affine(d, img.geometry().world_center());
        img = warp(img, t, nullptr, Interp::Trilinear);
        if (lab) lab = warp(*lab, t, nullptr);
    }
    if (params.noise_std) {
        const auto [lo_it, hi_it] = std::minmax_element(img.data().begin(), img.data().end());
        const double range = std::max(double(*hi_it) - double(*lo_it), 0.0);
        const double sd = *params.noise_std * range;
        if (sd > 0.0) {
            std::normal_distribution<double> dist(cfg.noise_mean * range, sd);
            for (auto &v : img.data()) v = static_cast<float>(double(v) + dist(noise_rng));
        }
    }
    if (params.smooth_sigma) {
        const double s = *params.smooth_sigma;
        img = gaussian_blur(img, {s, s, s});
    }
    return {minmax_normalize(img), std::move(lab)};
}

std::pair<VoxelGrid, std::optional<LabelMap>> preprocess(const VoxelGrid &image, const LabelMap *labels,
                                                         const AugmentConfig &cfg, Rng &rng, bool train_mode) {
    cfg.validate();
    if (!train_mode) {
        auto [img, lab] = spatial_stages(image, labels, cfg);
        return {minmax_normalize(img), std::move(lab)};
    }
    const AugmentParams params = sample_augment_params(cfg, rng);
    return preprocess_with(image, labels, cfg, params, rng);
}

} // namespace fsyn
