// Training-time pre-processing and augmentation applied to real and
// synthetic images alike.
#pragma once

#include <optional>
#include <utility>

#include "fsyn/rng.hpp"
#include "fsyn/volume.hpp"

namespace fsyn {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct AugmentConfig {
    Range gamma{0.5, 1.5};
    double gamma_p = 0.5;

    Range scale{-0.1, 0.1}; // factor 1 + u
    Range rotation_deg{-0.2, 0.2};
    Range shear{-0.1, 0.1};
    Range translation_mm{0.0, 0.0};
    double affine_p = 0.5;

    double noise_mean = 0.0;
    double noise_std = 0.1; // in units of the image intensity range
    double noise_p = 0.5;

    Range smooth_sigma{0.5, 1.5}; // voxels
    double smooth_p = 0.7;

    Spacing target_spacing{0.5, 0.5, 0.5};
    Shape target_shape{256, 256, 256};

    void validate() const;
    std::string canonical() const;
};

/// One draw of every augmentation; unfired stages are disengaged.
struct AugmentParams {
    std::optional<double> gamma;
    struct AffineParams {
        std::array<double, 3> scale{1.0, 1.0, 1.0};
        std::array<double, 3> rotation_deg{};
        std::array<double, 6> shear{};
        std::array<double, 3> translation_mm{};
    };
    std::optional<AffineParams> affine;
    std::optional<double> noise_std;
    std::optional<double> smooth_sigma;
};

AugmentParams sample_augment_params(const AugmentConfig &cfg, Rng &rng);

/// Voxelwise v^gamma for v in [0, 1].
VoxelGrid augment_gamma(const VoxelGrid &v, double gamma);

/// Resample -> crop/pad -> (train mode: gamma, affine, noise, smoothing) ->
/// min-max normalisation. Labels follow the spatial stages with nearest
/// neighbour interpolation.
std::pair<VoxelGrid, std::optional<LabelMap>> preprocess(const VoxelGrid &image, const LabelMap *labels,
                                                         const AugmentConfig &cfg, Rng &rng, bool train_mode);

/// Same as preprocess() in train mode, with the augmentation draw given.
std::pair<VoxelGrid, std::optional<LabelMap>> preprocess_with(const VoxelGrid &image, const LabelMap *labels,
                                                              const AugmentConfig &cfg, const AugmentParams &params,
                                                              Rng &noise_rng);

} // namespace fsyn
