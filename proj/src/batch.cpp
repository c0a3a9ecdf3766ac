#include "fsyn/batch.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "fsyn/nifti.hpp"

namespace fsyn {

namespace fs = std::filesystem;

std::string sample_image_path(const std::string &source_id, std::uint64_t index) {
    return source_id + "/sample_" + std::to_string(index) + "_img.nii.gz";
}

std::string sample_label_path(const std::string &source_id, std::uint64_t index) {
    return source_id + "/sample_" + std::to_string(index) + "_seg.nii.gz";
}

void write_manifest(const fs::path &path, const std::vector<ManifestRow> &rows) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write manifest " + tmp.string());
        out << kManifestHeader << '\n';
        for (const auto &r : rows) {
            out << r.source_id << ',' << r.sample_index << ',' << r.seed << ',' << r.img_path << ',' << r.seg_path
                << ',' << r.status << '\n';
        }
        if (!out) throw std::runtime_error("failed writing manifest " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::vector<ManifestRow> read_manifest(const fs::path &path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read manifest " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kManifestHeader) {
        throw std::runtime_error("manifest " + path.string() + " has an unexpected header");
    }
    std::vector<ManifestRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 6) throw std::runtime_error("malformed manifest row: " + line);
        rows.push_back({f[0], std::stoull(f[1]), std::stoull(f[2]), f[3], f[4], f[5]});
    }
    return rows;
}

namespace {

void write_atomic(const VoxelGrid &img, const fs::path &final_path) {
    const fs::path tmp = final_path.parent_path() / (".tmp_" + final_path.filename().string());
    write_nifti(img, tmp);
    fs::rename(tmp, final_path);
}

void write_atomic(const LabelMap &seg, const fs::path &final_path) {
    const fs::path tmp = final_path.parent_path() / (".tmp_" + final_path.filename().string());
    write_nifti(seg, tmp);
    fs::rename(tmp, final_path);
}

} // namespace

BatchResult generate_batch(const std::vector<SeedSource> &seeds, const GenConfig &cfg, const fs::path &out_dir,
                           const BatchOptions &opt) {
    cfg.validate();
    BatchResult result;
    fs::create_directories(out_dir);
    const std::size_t per_image = cfg.samples_per_image;
    std::atomic<std::size_t> budget_used{0};
    std::mutex mu;

    for (const auto &src : seeds) {
        if (per_image == 0) break;
        if (src.source_id.find_first_of(",/\\") != std::string::npos) {
            throw InvalidArgument("source id '" + src.source_id + "' may not contain ',', '/' or '\\'");
        }
        std::vector<ManifestRow> rows(per_image);
        std::vector<std::size_t> todo;
        for (std::size_t i = 0; i < per_image; ++i) {
            ManifestRow &r = rows[i];
            r.source_id = src.source_id;
            r.sample_index = i;
            r.seed = derive_seed(cfg.master_seed, src.source_id, i);
            r.img_path = sample_image_path(src.source_id, i);
            r.seg_path = sample_label_path(src.source_id, i);
            if (fs::exists(out_dir / r.img_path) && fs::exists(out_dir / r.seg_path)) {
                r.status = "complete";
                ++result.skipped;
            } else {
                r.status = "incomplete";
                todo.push_back(i);
            }
        }

        if (!todo.empty() && (!opt.stop_after || budget_used.load() < *opt.stop_after)) {
            fs::create_directories(out_dir / src.source_id);
            const SeedMap seed = src.load();
            validate_seed_map(seed);
            std::atomic<std::size_t> next{0};
            auto worker = [&] {
                for (;;) {
                    const std::size_t t = next.fetch_add(1);
                    if (t >= todo.size()) return;
                    if (opt.stop_after && budget_used.fetch_add(1) >= *opt.stop_after) return;
                    ManifestRow &r = rows[todo[t]];
                    try {
                        const SynthSample s = generate_sample(seed, cfg, r.sample_index);
                        write_atomic(s.image, out_dir / r.img_path);
                        write_atomic(s.target, out_dir / r.seg_path);
                        r.status = "complete";
                        std::lock_guard lock(mu);
                        ++result.generated;
                    } catch (const std::exception &e) {
                        std::lock_guard lock(mu);
                        ++result.failed;
                        result.errors.push_back(r.source_id + " sample " + std::to_string(r.sample_index) + ": " +
                                                e.what());
                    }
                }
            };
            const int n_workers = std::max(1, std::min<int>(opt.workers, static_cast<int>(todo.size())));
            if (n_workers == 1) {
                worker();
            } else {
                std::vector<std::jthread> pool;
                for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
            }
        }
        result.rows.insert(result.rows.end(), rows.begin(), rows.end());
    }
    write_manifest(out_dir / kManifestName, result.rows);
    return result;
}

BatchResult generate_batch(const std::vector<SeedMap> &seeds, const GenConfig &cfg, const fs::path &out_dir,
                           const BatchOptions &opt) {
    std::vector<SeedSource> sources;
    sources.reserve(seeds.size());
    for (const auto &s : seeds) sources.push_back({s.source_id, [&s] { return s; }});
    return generate_batch(sources, cfg, out_dir, opt);
}

} // namespace fsyn
