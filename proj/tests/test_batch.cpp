#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "fsyn/batch.hpp"
#include "fsyn/nifti.hpp"
#include "oracles.hpp"

using namespace fsyn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("fsyn_batch_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string read_all(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<SeedMap> toy_seeds(int count, long n = 12) {
    std::vector<SeedMap> seeds;
    for (int s = 0; s < count; ++s) {
        const LabelMap l = oracle::phantom(n, 0.5);
        const VoxelGrid img = oracle::phantom_image(l, std::uint64_t(s));
        SeedConfig cfg;
        cfg.skull_ring_mm = 1.0;
        seeds.push_back(build_seed_map(&img, l, cfg, "sub-" + std::to_string(s)));
    }
    return seeds;
}

std::size_t count_files(const fs::path &dir, const std::string &suffix) {
    std::size_t n = 0;
    for (const auto &e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().filename().string().ends_with(suffix)) ++n;
    }
    return n;
}

} // namespace

TEST_CASE("manifest round trip") {
    TempDir tmp;
    std::vector<ManifestRow> rows = {
        {"a", 0, 123, "a/sample_0000_img.nii.gz", "a/sample_0000_seg.nii.gz", "complete"},
        {"b", 7, 18446744073709551615ULL, "b/x_img.nii.gz", "b/x_seg.nii.gz", "incomplete"},
    };
    write_manifest(tmp.path / "m.csv", rows);
    const std::string text = read_all(tmp.path / "m.csv");
    CHECK(text.rfind(std::string(kManifestHeader) + "\n", 0) == 0);
    CHECK(read_manifest(tmp.path / "m.csv") == rows);
}

TEST_CASE("row count and file layout") {
    TempDir tmp;
    const auto seeds = toy_seeds(3);
    GenConfig cfg;
    cfg.samples_per_image = 4;
    cfg.master_seed = 5;
    const BatchResult r = generate_batch(seeds, cfg, tmp.path);
    CHECK(r.rows.size() == 12);
    CHECK(r.generated == 12);
    CHECK(r.failed == 0);
    for (const auto &row : r.rows) {
        CHECK(row.status == "complete");
        CHECK(fs::exists(tmp.path / row.img_path));
        CHECK(fs::exists(tmp.path / row.seg_path));
        CHECK(row.seed == derive_seed(5, row.source_id, row.sample_index));
    }
    CHECK(read_manifest(tmp.path / kManifestName) == r.rows);
    CHECK(r.rows[5].img_path == sample_image_path("sub-1", 1));
    CHECK(count_files(tmp.path, ".nii.gz") == 24);

    // Stored pairs are what generate_sample produces.
    const SynthSample s = generate_sample(seeds[2], cfg, 3);
    const VoxelGrid img = read_nifti(tmp.path / sample_image_path("sub-2", 3));
    const LabelMap seg = read_nifti_labels(tmp.path / sample_label_path("sub-2", 3));
    CHECK(img.data() == s.image.data());
    CHECK(seg.data() == s.target.data());
}

TEST_CASE("zero samples per image") {
    TempDir tmp;
    GenConfig cfg;
    cfg.samples_per_image = 0;
    const BatchResult r = generate_batch(toy_seeds(2), cfg, tmp.path);
    CHECK(r.rows.empty());
    CHECK(read_manifest(tmp.path / kManifestName).empty());
    CHECK(count_files(tmp.path, ".nii.gz") == 0);
}

TEST_CASE("worker count does not change the output") {
    TempDir a, b;
    const auto seeds = toy_seeds(2);
    GenConfig cfg;
    cfg.samples_per_image = 6;
    cfg.master_seed = 9;
    generate_batch(seeds, cfg, a.path, {1, std::nullopt});
    generate_batch(seeds, cfg, b.path, {4, std::nullopt});
    CHECK(read_all(a.path / kManifestName) == read_all(b.path / kManifestName));
    for (const auto &row : read_manifest(a.path / kManifestName)) {
        CHECK(read_all(a.path / row.img_path) == read_all(b.path / row.img_path));
        CHECK(read_all(a.path / row.seg_path) == read_all(b.path / row.seg_path));
    }
}

TEST_CASE("interrupted run resumes") {
    TempDir full, cut;
    const auto seeds = toy_seeds(1);
    GenConfig cfg;
    cfg.samples_per_image = 16;
    cfg.master_seed = 21;
    generate_batch(seeds, cfg, full.path);

    const BatchResult first = generate_batch(seeds, cfg, cut.path, {1, 10});
    CHECK(first.generated == 10);
    std::size_t incomplete = 0;
    for (const auto &row : read_manifest(cut.path / kManifestName)) incomplete += row.status == "incomplete";
    CHECK(incomplete == 6);
    std::vector<std::string> before;
    for (std::uint64_t i = 0; i < 10; ++i) before.push_back(read_all(cut.path / sample_image_path("sub-0", i)));

    const BatchResult second = generate_batch(seeds, cfg, cut.path, {3, std::nullopt});
    CHECK(second.skipped == 10);
    CHECK(second.generated == 6);
    CHECK(count_files(cut.path, "_img.nii.gz") == 16);
    for (std::uint64_t i = 0; i < 10; ++i) CHECK(read_all(cut.path / sample_image_path("sub-0", i)) == before[i]);
    CHECK(read_all(cut.path / kManifestName) == read_all(full.path / kManifestName));
    for (std::uint64_t i = 0; i < 16; ++i) {
        CHECK(read_all(cut.path / sample_label_path("sub-0", i)) == read_all(full.path / sample_label_path("sub-0", i)));
    }
}

TEST_CASE("a half-written sample is regenerated") {
    TempDir tmp;
    const auto seeds = toy_seeds(1);
    GenConfig cfg;
    cfg.samples_per_image = 3;
    generate_batch(seeds, cfg, tmp.path);
    const std::string img = read_all(tmp.path / sample_image_path("sub-0", 1));
    fs::remove(tmp.path / sample_label_path("sub-0", 1));
    const BatchResult r = generate_batch(seeds, cfg, tmp.path);
    CHECK(r.generated == 1);
    CHECK(r.skipped == 2);
    CHECK(read_all(tmp.path / sample_image_path("sub-0", 1)) == img);
}

TEST_CASE("source ids must be path safe") {
    TempDir tmp;
    auto seeds = toy_seeds(1, 8);
    seeds[0].source_id = "a/b";
    GenConfig cfg;
    cfg.samples_per_image = 1;
    CHECK_THROWS_AS(generate_batch(seeds, cfg, tmp.path), InvalidArgument);
}

TEST_CASE("lazy sources are loaded only when needed") {
    TempDir tmp;
    const auto seeds = toy_seeds(2, 8);
    int loads = 0;
    std::vector<SeedSource> src;
    for (const auto &s : seeds) src.push_back({s.source_id, [&loads, s] { ++loads; return s; }});
    GenConfig cfg;
    cfg.samples_per_image = 2;
    generate_batch(src, cfg, tmp.path);
    CHECK(loads == 2);
    generate_batch(src, cfg, tmp.path);
    CHECK(loads == 2);
}
