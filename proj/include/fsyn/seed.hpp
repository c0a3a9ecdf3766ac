// Seed maps: fine tissue labels merged into four generation meta-labels,
// each split into intensity subclasses by a 1-D Gaussian mixture.
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fsyn/gmm.hpp"
#include "fsyn/volume.hpp"

namespace fsyn {

enum MetaLabel : Label {
    kMetaNone = 0,
    kMetaCsf = 1,
    kMetaGm = 2,
    kMetaWm = 3,
    kMetaSkull = 4,
};
inline constexpr int kMetaLabelCount = 4;
const char *meta_label_name(Label meta);

/// Fine label -> meta-label (1..3). Background is implicit and maps to 0;
/// the skull meta-label is never produced from a fine label.
class MetaLabelMapping {
  public:
    /// CSF = {eCSF, ventricles}, GM = {GM, deep GM}, WM = {WM, cerebellum, brainstem}.
    static MetaLabelMapping feta_default();

    void set(Label fine, Label meta);
    std::optional<Label> meta_of(Label fine) const;
    const std::map<Label, Label> &table() const { return table_; }

  private:
    std::map<Label, Label> table_;
};

/// Voxelwise mapping; background stays 0.
LabelMap merge_to_meta_labels(const LabelMap &labels, const MetaLabelMapping &mapping);

/// Marks background voxels within `ring_mm` (Euclidean, inclusive) of the
/// brain (meta 1..3) as kMetaSkull.
LabelMap derive_skull_region(const LabelMap &meta, double ring_mm);

struct SeedConfig {
    MetaLabelMapping mapping = MetaLabelMapping::feta_default();
    double skull_ring_mm = 5.0;
    int max_subclasses = 4;
    std::uint64_t seed = 0;
    EmOptions em{};
};

struct MetaFit {
    Label meta = kMetaNone;
    std::size_t voxels = 0;
    int k = 0;
    GmmParams params;
    std::vector<double> bic;
    /// Subclass ids assigned to this meta-label, in component (mean) order.
    std::vector<Label> subclass_ids;
};

struct SeedMap {
    /// Subclass id per voxel; 0 outside every meta-label.
    LabelMap subclasses;
    /// subclass id -> meta-label; entry 0 is kMetaNone.
    std::vector<Label> subclass_meta{kMetaNone};
    /// The untouched fine label map used as the training target.
    LabelMap fine;
    std::string source_id;
    std::string image_id;
    std::string label_id;
    std::vector<MetaFit> fits;

    int subclass_count() const { return static_cast<int>(subclass_meta.size()) - 1; }
    Label meta_of(Label subclass) const { return subclass < subclass_meta.size() ? subclass_meta[subclass] : 0; }
};

/// Merges, derives the skull ring and splits each meta-label region by the
/// BIC-selected mixture fitted to `image` intensities. Without an image every
/// meta-label becomes a single subclass.
SeedMap build_seed_map(const VoxelGrid *image, const LabelMap &labels, const SeedConfig &cfg,
                       std::string source_id = "subject");

/// Throws InvalidInput if the seed map breaks its structural invariants.
void validate_seed_map(const SeedMap &seed);

struct SeedFiles {
    std::filesystem::path subclasses;
    std::filesystem::path target;
    std::filesystem::path sidecar;
};
SeedFiles seed_files(const std::filesystem::path &dir, const std::string &source_id);

/// Writes `<id>_seed.nii.gz`, `<id>_target.nii.gz` and `<id>_seed.json`.
SeedFiles save_seed_map(const SeedMap &seed, const std::filesystem::path &dir, const std::string &config_digest);
SeedMap load_seed_map(const std::filesystem::path &dir, const std::string &source_id);
/// Source ids of every seed sidecar in `dir`, sorted.
std::vector<std::string> list_seed_ids(const std::filesystem::path &dir);

} // namespace fsyn
