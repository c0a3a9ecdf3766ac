// Domain-randomised image synthesis from seed maps.
//
// One sample: random affine + elastic transform, nearest-neighbour warp of
// the subclass and target maps, per-subclass Gaussian intensities, a
// multiplicative bias field, simulated acquisition resolution, additive
// noise and a final clamp to the intensity range.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fsyn/rng.hpp"
#include "fsyn/seed.hpp"
#include "fsyn/volume.hpp"

namespace fsyn {

struct GenConfig {
    double intensity_lo = 0.0;
    double intensity_hi = 255.0;
    // Per-subclass mean ~ U[mean_lo, mean_hi], std ~ U[0, std_max].
    double mean_lo = 0.0;
    double mean_hi = 255.0;
    double std_max = 35.0;

    double scale_lo = 0.9; // a_sc
    double scale_hi = 1.1; // b_sc
    double translation_lo = -10.0; // a_tr, mm
    double translation_hi = 10.0;  // b_tr, mm
    double rotation_deg = 15.0;
    double shear = 0.012;

    int elastic_grid = 5;
    double elastic_std_max = 3.0; // mm

    int bias_grid = 4;
    double bias_std_max = 0.3; // std of the log field

    double resolution_lo = 0.5; // r_HR, mm
    double resolution_hi = 0.5; // b_res, mm
    double extra_blur_max = 0.0; // voxels; 0 disables the isotropic blur stage

    double noise_std_max = 10.0;

    std::size_t samples_per_image = 200;
    std::uint64_t master_seed = 0;

    /// Throws InvalidArgument on unordered bounds or negative spreads.
    void validate() const;
    /// Every random stage switched off: identity transform, zero spreads,
    /// flat bias, no noise. Resolution bounds are left at their values.
    static GenConfig deterministic();
    /// Stable text rendering of every field, used for provenance digests.
    std::string canonical() const;
};

struct SpatialTransform {
    /// World-space affine about the volume centre.
    Affine affine = Affine::Identity();
    /// Absent when the sampled elastic magnitude is zero.
    std::optional<DisplacementField> elastic;

    bool is_identity() const { return !elastic && affine.isIdentity(0.0); }
    std::string digest() const;
};

/// The per-axis parameters behind a SpatialTransform, kept for inspection.
struct AffineDraw {
    std::array<double, 3> scale{1.0, 1.0, 1.0};
    std::array<double, 3> rotation_rad{};
    std::array<double, 6> shear{};
    std::array<double, 3> translation{};
    double elastic_std = 0.0;
};

/// R = Rz Ry Rx; A = T(centre + t) R Sh S T(-centre).
Affine compose_affine(const AffineDraw &d, const Eigen::Vector3d &centre);

SpatialTransform sample_transform(const Geometry &grid, const GenConfig &cfg, Rng &rng, AffineDraw *draw = nullptr);

struct SubclassIntensity {
    double mean = 0.0;
    double stddev = 0.0;
};

/// Voxels of subclass c draw N(mean_c, std_c^2); subclass 0 is 0. Clamped to
/// [lo, hi] when `clamp` is set.
VoxelGrid synthesize_intensities(const LabelMap &subclasses, const std::vector<SubclassIntensity> &params, Rng &rng,
                                 std::optional<std::pair<double, double>> clamp);

/// Draws (mean, std) per subclass 1..subclass_count from the priors, then
/// synthesises and clamps to the intensity range.
VoxelGrid sample_gmm_intensities(const LabelMap &subclasses, int subclass_count, const GenConfig &cfg, Rng &rng,
                                 std::vector<SubclassIntensity> *drawn = nullptr);

/// exp of a trilinearly upsampled control lattice of N(0, s^2) values,
/// s ~ U[0, bias_std_max].
VoxelGrid sample_bias_field(const Geometry &grid, const GenConfig &cfg, Rng &rng);

/// Blur by 0.42 (s / native - 1) voxels per axis, resample to spacing s, then
/// trilinearly back onto the input grid.
VoxelGrid simulate_resolution_at(const VoxelGrid &img, const Spacing &acquisition);
/// Draws s ~ U[resolution_lo, resolution_hi] per axis and applies
/// simulate_resolution_at (plus the optional extra blur).
VoxelGrid simulate_resolution(const VoxelGrid &img, const GenConfig &cfg, Rng &rng);

struct SynthSample {
    VoxelGrid image;
    LabelMap target;
    /// Warped subclass map the intensities were drawn on.
    LabelMap subclasses;
    std::uint64_t seed = 0;
    std::string transform_digest;
};

/// Deterministic in (cfg.master_seed, seed.source_id, sample_index).
SynthSample generate_sample(const SeedMap &seed, const GenConfig &cfg, std::uint64_t sample_index);

/// The same pipeline with an explicit stream; used to inspect intermediate
/// stages. `pre_noise` receives the image before noise and clamping.
SynthSample generate_sample_with(const SeedMap &seed, const GenConfig &cfg, Rng &rng, VoxelGrid *pre_noise);

} // namespace fsyn
