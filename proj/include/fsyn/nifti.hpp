// NIfTI-1 single-file (.nii / .nii.gz) reader and writer.
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "fsyn/volume.hpp"

namespace fsyn {

/// Malformed or unsupported file content. The message names the offending
/// header field.
class NiftiParseError : public std::runtime_error {
  public:
    NiftiParseError(std::string field, const std::string &what)
        : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
    const std::string &field() const { return field_; }

  private:
    std::string field_;
};

/// Filesystem failure; the message contains the path.
class NiftiIoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace nifti_dt {
inline constexpr std::int16_t kUint8 = 2;
inline constexpr std::int16_t kInt16 = 4;
inline constexpr std::int16_t kInt32 = 8;
inline constexpr std::int16_t kFloat32 = 16;
inline constexpr std::int16_t kFloat64 = 64;
inline constexpr std::int16_t kInt8 = 256;
inline constexpr std::int16_t kUint16 = 512;
inline constexpr std::int16_t kUint32 = 768;
inline constexpr std::int16_t kInt64 = 1024;
inline constexpr std::int16_t kUint64 = 1280;
} // namespace nifti_dt

struct NiftiMeta {
    std::int16_t datatype = nifti_dt::kFloat32;
    std::int16_t bitpix = 32;
    std::array<std::int16_t, 8> dim{};
    std::array<float, 8> pixdim{};
    float vox_offset = 352.0f;
    float scl_slope = 0.0f;
    float scl_inter = 0.0f;
    std::int16_t qform_code = 0;
    std::int16_t sform_code = 0;
    Affine qform = Affine::Identity();
    Affine sform = Affine::Identity();
    bool byte_swapped = false;
};

/// Decodes to float with scl_slope/scl_inter applied (slope 0 means "no
/// scaling"). The affine comes from the sform when sform_code > 0, else the
/// qform, else a diagonal pixdim affine.
VoxelGrid read_nifti(const std::filesystem::path &path, NiftiMeta *meta = nullptr);
LabelMap read_nifti_labels(const std::filesystem::path &path, NiftiMeta *meta = nullptr);

/// Images are stored as float32, label maps as uint8. The file is gzipped
/// when the path ends in ".gz". sform and qform carry the same affine.
void write_nifti(const VoxelGrid &v, const std::filesystem::path &path, bool integer_labels = false);
void write_nifti(const LabelMap &v, const std::filesystem::path &path);

/// Low-level entry point used by the reader; exposed for testing headers
/// built in memory.
VoxelGrid decode_nifti(const std::string &bytes, NiftiMeta *meta = nullptr);

/// Quaternion parameters (b, c, d, qoffset, qfac) round trip of the rigid
/// part of an affine, as stored in a NIfTI-1 qform.
Affine qform_to_affine(float qb, float qc, float qd, const std::array<float, 3> &offset,
                       const std::array<float, 3> &pixdim, float qfac);

/// True when the path names a .nii or .nii.gz file.
bool is_nifti_path(const std::filesystem::path &path);
/// File name without the .nii / .nii.gz extension.
std::string nifti_stem(const std::filesystem::path &path);

} // namespace fsyn
