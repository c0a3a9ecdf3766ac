// Voxel grids, label maps, displacement fields and the resampling / warping
// primitives shared by the synthesis and evaluation code.
//
// Index convention: voxel (i, j, k) lives at linear offset i + nx * (j + ny * k);
// the world position of its centre is affine * [i, j, k, 1]^T (mm).
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fsyn {

using Shape = std::array<std::int64_t, 3>;
using Spacing = std::array<double, 3>;
using Affine = Eigen::Matrix4d;
using Label = std::uint8_t;

/// Thrown for bad arguments to a volume operation (non-positive spacing,
/// singular matrices, malformed shapes).
class InvalidArgument : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when inputs are individually valid but inconsistent with each other
/// (geometry mismatch, empty regions).
class InvalidInput : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class Interp { Trilinear, Nearest };

/// Diagonal voxel-to-world affine with the given spacing and origin.
Affine scaling_affine(const Spacing &spacing, const Eigen::Vector3d &origin = Eigen::Vector3d::Zero());

struct Geometry {
    Shape shape{1, 1, 1};
    Spacing spacing{1.0, 1.0, 1.0};
    Affine affine = Affine::Identity();

    Geometry() = default;
    Geometry(Shape s, Spacing sp);
    Geometry(Shape s, Spacing sp, Affine a);

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(shape[0] * shape[1] * shape[2]);
    }
    std::size_t index(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return static_cast<std::size_t>(i + shape[0] * (j + shape[1] * k));
    }
    bool contains(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return i >= 0 && j >= 0 && k >= 0 && i < shape[0] && j < shape[1] && k < shape[2];
    }
    Eigen::Vector3d world(double i, double j, double k) const;
    Eigen::Vector3d world_center() const;

    /// Throws InvalidArgument if shape/spacing/affine break the grid invariants.
    void validate() const;
    /// Same shape and voxel-to-world mapping (affine within `tol`).
    bool same_as(const Geometry &other, double tol = 1e-6) const;
};

template <class T>
class Volume {
  public:
    using value_type = T;

    Volume() : data_(1, T{}) {}
    explicit Volume(Geometry g, T fill = T{}) : geom_(std::move(g)) {
        geom_.validate();
        data_.assign(geom_.voxel_count(), fill);
    }
    Volume(Geometry g, std::vector<T> data) : geom_(std::move(g)), data_(std::move(data)) {
        geom_.validate();
        if (data_.size() != geom_.voxel_count()) {
            throw InvalidArgument("volume data length " + std::to_string(data_.size()) +
                                  " does not match shape product " + std::to_string(geom_.voxel_count()));
        }
    }

    const Geometry &geometry() const { return geom_; }
    const Shape &shape() const { return geom_.shape; }
    const Spacing &spacing() const { return geom_.spacing; }
    const Affine &affine() const { return geom_.affine; }
    std::size_t size() const { return data_.size(); }

    T &operator()(std::int64_t i, std::int64_t j, std::int64_t k) { return data_[geom_.index(i, j, k)]; }
    const T &operator()(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return data_[geom_.index(i, j, k)];
    }
    T &operator[](std::size_t n) { return data_[n]; }
    const T &operator[](std::size_t n) const { return data_[n]; }

    std::vector<T> &data() { return data_; }
    const std::vector<T> &data() const { return data_; }

    /// Exact comparison of geometry and payload.
    bool operator==(const Volume &o) const {
        return geom_.shape == o.geom_.shape && geom_.spacing == o.geom_.spacing && geom_.affine == o.geom_.affine &&
               data_ == o.data_;
    }

  private:
    Geometry geom_;
    std::vector<T> data_;
};

using VoxelGrid = Volume<float>;
using LabelMap = Volume<Label>;

/// FeTA tissue labels.
enum Tissue : Label {
    kBackground = 0,
    kExternalCsf = 1,
    kGreyMatter = 2,
    kWhiteMatter = 3,
    kVentricles = 4,
    kCerebellum = 5,
    kDeepGreyMatter = 6,
    kBrainstem = 7,
};
inline constexpr int kTissueCount = 7;
const char *tissue_name(Label l);

std::set<Label> label_set(const LabelMap &labels);
/// Throws InvalidInput naming the first voxel value outside `allowed`.
void require_labels_in(const LabelMap &labels, const std::set<Label> &allowed);
std::set<Label> feta_label_set();

/// Per-voxel world-space displacement (mm) defined on a grid.
struct DisplacementField {
    Geometry geometry;
    std::vector<std::array<float, 3>> vectors;

    DisplacementField() = default;
    explicit DisplacementField(Geometry g);
    bool all_finite() const;
};

VoxelGrid to_float(const LabelMap &labels);
/// Rounds to the nearest integer; throws InvalidInput for values outside [0, 255].
LabelMap to_labels(const VoxelGrid &v);

VoxelGrid resample(const VoxelGrid &v, const Spacing &target_spacing, Interp mode = Interp::Trilinear);
LabelMap resample(const LabelMap &v, const Spacing &target_spacing);

/// Centred crop/pad; the odd voxel of an uneven split goes to the high side.
VoxelGrid crop_pad(const VoxelGrid &v, const Shape &target, float fill = 0.0f);
LabelMap crop_pad(const LabelMap &v, const Shape &target, Label fill = 0);

/// Backward warp: the output voxel at world x samples the input at
/// transform^-1(x + elastic(x)). Output shares the input geometry unless the
/// elastic field dictates another grid. Out-of-bounds samples read as zero.
VoxelGrid warp(const VoxelGrid &v, const Affine &transform, const DisplacementField *elastic,
               Interp mode = Interp::Trilinear);
LabelMap warp(const LabelMap &v, const Affine &transform, const DisplacementField *elastic);

/// (v - min) / (max - min); a constant volume maps to zeros.
VoxelGrid minmax_normalize(const VoxelGrid &v);

/// Separable Gaussian blur, per-axis sigma in voxels, edge-replicated borders.
VoxelGrid gaussian_blur(const VoxelGrid &v, const std::array<double, 3> &sigma_vox);

/// Trilinear sample at continuous index (x, y, z); coordinates are clamped
/// into the grid.
double sample_clamped(const VoxelGrid &v, double x, double y, double z);
/// Trilinear sample treating voxels outside the grid as zero.
double sample_zero(const VoxelGrid &v, double x, double y, double z);

/// Trilinear upsampling of a small control lattice onto `out`, corner aligned:
/// control node 0 sits on voxel 0 and the last node on the last voxel.
VoxelGrid upsample_control_grid(const VoxelGrid &control, const Geometry &out);

} // namespace fsyn
