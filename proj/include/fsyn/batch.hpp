// Offline corpus generation: samples_per_image synthetic pairs per seed map,
// written as NIfTI files under <out>/<source_id>/ plus a CSV manifest.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fsyn/synth.hpp"

namespace fsyn {

inline constexpr const char *kManifestHeader = "source_id,sample_index,seed,img_path,seg_path,status";
inline constexpr const char *kManifestName = "manifest.csv";

struct ManifestRow {
    std::string source_id;
    std::uint64_t sample_index = 0;
    std::uint64_t seed = 0;
    std::string img_path; // relative to the output directory
    std::string seg_path;
    std::string status;   // "complete" or "incomplete"

    bool operator==(const ManifestRow &) const = default;
};

void write_manifest(const std::filesystem::path &path, const std::vector<ManifestRow> &rows);
std::vector<ManifestRow> read_manifest(const std::filesystem::path &path);

/// Seeds are loaded lazily, one source at a time.
struct SeedSource {
    std::string source_id;
    std::function<SeedMap()> load;
};

struct BatchOptions {
    int workers = 1;
    /// Stop after this many newly generated samples; the remaining rows are
    /// recorded as incomplete (an interrupted run).
    std::optional<std::size_t> stop_after;
};

struct BatchResult {
    std::vector<ManifestRow> rows;
    std::size_t generated = 0;
    std::size_t skipped = 0;
    std::size_t failed = 0;
    std::vector<std::string> errors;
};

/// Resumable: a sample whose image and label files both exist is kept.
/// Files are written to a temporary name and renamed into place, so an
/// existing final file is always complete.
BatchResult generate_batch(const std::vector<SeedSource> &seeds, const GenConfig &cfg,
                           const std::filesystem::path &out_dir, const BatchOptions &opt = {});
BatchResult generate_batch(const std::vector<SeedMap> &seeds, const GenConfig &cfg,
                           const std::filesystem::path &out_dir, const BatchOptions &opt = {});

std::string sample_image_path(const std::string &source_id, std::uint64_t index);
std::string sample_label_path(const std::string &source_id, std::uint64_t index);

} // namespace fsyn
