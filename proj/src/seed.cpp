#include "fsyn/seed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "fsyn/distance.hpp"
#include "fsyn/nifti.hpp"
#include "fsyn/rng.hpp"
#include "json.hpp"

namespace fsyn {

const char *meta_label_name(Label meta) {
    switch (meta) {
    case kMetaCsf: return "csf";
    case kMetaGm: return "gm";
    case kMetaWm: return "wm";
    case kMetaSkull: return "skull";
    default: return "none";
    }
}

MetaLabelMapping MetaLabelMapping::feta_default() {
    MetaLabelMapping m;
    m.set(kExternalCsf, kMetaCsf);
    m.set(kVentricles, kMetaCsf);
    m.set(kGreyMatter, kMetaGm);
    m.set(kDeepGreyMatter, kMetaGm);
    m.set(kWhiteMatter, kMetaWm);
    m.set(kCerebellum, kMetaWm);
    m.set(kBrainstem, kMetaWm);
    return m;
}

void MetaLabelMapping::set(Label fine, Label meta) {
    if (fine == 0) throw InvalidArgument("background cannot be remapped");
    if (meta < kMetaCsf || meta > kMetaWm) {
        throw InvalidArgument("fine label " + std::to_string(int(fine)) + " must map to meta-label 1..3, got " +
                              std::to_string(int(meta)));
    }
    table_[fine] = meta;
}

std::optional<Label> MetaLabelMapping::meta_of(Label fine) const {
    if (fine == 0) return Label{0};
    const auto it = table_.find(fine);
    if (it == table_.end()) return std::nullopt;
    return it->second;
}

LabelMap merge_to_meta_labels(const LabelMap &labels, const MetaLabelMapping &mapping) {
    std::array<int, 256> lut;
    lut.fill(-1);
    for (Label l : label_set(labels)) {
        const auto meta = mapping.meta_of(l);
        if (!meta) throw InvalidArgument("fine label " + std::to_string(int(l)) + " has no meta-label mapping");
        lut[l] = *meta;
    }
    LabelMap out(labels.geometry());
    for (std::size_t n = 0; n < labels.size(); ++n) out[n] = static_cast<Label>(lut[labels[n]]);
    return out;
}

LabelMap derive_skull_region(const LabelMap &meta, double ring_mm) {
    std::vector<unsigned char> brain(meta.size());
    bool any = false;
    for (std::size_t n = 0; n < meta.size(); ++n) {
        brain[n] = meta[n] >= kMetaCsf && meta[n] <= kMetaWm;
        any = any || brain[n];
    }
    if (!any) throw InvalidInput("cannot derive a skull region: the brain region is empty");
    LabelMap out = meta;
    if (!(ring_mm > 0.0)) return out;
    const std::vector<double> d2 = squared_distance_transform(brain, meta.shape(), meta.spacing());
    const double limit = ring_mm * ring_mm * (1.0 + 1e-12);
    for (std::size_t n = 0; n < meta.size(); ++n) {
        if (out[n] == kMetaNone && d2[n] <= limit) out[n] = kMetaSkull;
    }
    return out;
}

SeedMap build_seed_map(const VoxelGrid *image, const LabelMap &labels, const SeedConfig &cfg,
                       std::string source_id) {
    if (image != nullptr && !image->geometry().same_as(labels.geometry(), 1e-4)) {
        throw InvalidInput("image and label map of '" + source_id + "' do not share grid geometry");
    }
    const LabelMap meta = derive_skull_region(merge_to_meta_labels(labels, cfg.mapping), cfg.skull_ring_mm);

    SeedMap seed;
    seed.source_id = std::move(source_id);
    seed.fine = labels;
    seed.subclasses = LabelMap(labels.geometry());

    std::array<std::vector<std::size_t>, kMetaLabelCount + 1> regions;
    for (std::size_t n = 0; n < meta.size(); ++n) {
        if (meta[n] >= kMetaCsf && meta[n] <= kMetaSkull) regions[meta[n]].push_back(n);
    }

    for (Label m = kMetaCsf; m <= kMetaSkull; ++m) {
        const auto &voxels = regions[m];
        if (voxels.empty()) continue;
        MetaFit fit;
        fit.meta = m;
        fit.voxels = voxels.size();

        std::vector<int> component(voxels.size(), 0);
        if (image != nullptr) {
            std::vector<double> xs(voxels.size());
            for (std::size_t v = 0; v < voxels.size(); ++v) xs[v] = (*image)[voxels[v]];
            SubclassSelection sel = select_subclass_count(
                xs, cfg.max_subclasses, splitmix64(cfg.seed ^ (0x1000ULL * m)), cfg.em);
            // Order components by mean so subclass ids rise with intensity.
            auto comps = sel.fit.params.components;
            std::sort(comps.begin(), comps.end(),
                      [](const GaussianComponent &a, const GaussianComponent &b) { return a.mean < b.mean; });
            fit.params.components = comps;
            fit.bic = sel.bic;
            for (std::size_t v = 0; v < voxels.size(); ++v) component[v] = fit.params.classify(xs[v]);
        } else {
            fit.params.components = {{1.0, 0.0, 1.0}};
        }

        // Drop components that win no voxel, then number the rest.
        std::vector<std::size_t> count(fit.params.components.size(), 0);
        for (int c : component) ++count[static_cast<std::size_t>(c)];
        std::vector<int> remap(count.size(), -1);
        GmmParams kept;
        for (std::size_t c = 0; c < count.size(); ++c) {
            if (count[c] == 0) continue;
            remap[c] = kept.k();
            kept.components.push_back(fit.params.components[c]);
            const auto id = static_cast<Label>(seed.subclass_meta.size());
            seed.subclass_meta.push_back(m);
            fit.subclass_ids.push_back(id);
        }
        fit.params = std::move(kept);
        fit.k = fit.params.k();
        for (std::size_t v = 0; v < voxels.size(); ++v) {
            seed.subclasses[voxels[v]] = fit.subclass_ids[static_cast<std::size_t>(remap[component[v]])];
        }
        seed.fits.push_back(std::move(fit));
    }
    return seed;
}

void validate_seed_map(const SeedMap &seed) {
    if (!seed.subclasses.geometry().same_as(seed.fine.geometry())) {
        throw InvalidInput("seed subclass map and target map differ in geometry");
    }
    if (seed.subclass_meta.empty() || seed.subclass_meta[0] != kMetaNone) {
        throw InvalidInput("subclass table must start with the background entry");
    }
    for (std::size_t s = 1; s < seed.subclass_meta.size(); ++s) {
        if (seed.subclass_meta[s] < kMetaCsf || seed.subclass_meta[s] > kMetaSkull) {
            throw InvalidInput("subclass " + std::to_string(s) + " maps to an invalid meta-label");
        }
    }
    for (std::size_t n = 0; n < seed.subclasses.size(); ++n) {
        const Label s = seed.subclasses[n];
        if (s >= seed.subclass_meta.size()) {
            throw InvalidInput("voxel carries unknown subclass " + std::to_string(int(s)));
        }
        const Label fine = seed.fine[n];
        const Label meta = seed.subclass_meta[s];
        // Brain voxels carry a brain subclass, everything else is skull or empty.
        const bool brain_fine = fine != 0;
        const bool brain_meta = meta >= kMetaCsf && meta <= kMetaWm;
        if (brain_fine != brain_meta) {
            throw InvalidInput("subclass map disagrees with target support at voxel " + std::to_string(n));
        }
    }
}

SeedFiles seed_files(const std::filesystem::path &dir, const std::string &source_id) {
    return {dir / (source_id + "_seed.nii.gz"), dir / (source_id + "_target.nii.gz"),
            dir / (source_id + "_seed.json")};
}

namespace {

nlohmann::json params_json(const GmmParams &p) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto &c : p.components) {
        arr.push_back({{"weight", c.weight}, {"mean", c.mean}, {"variance", c.variance}});
    }
    return arr;
}

} // namespace

SeedFiles save_seed_map(const SeedMap &seed, const std::filesystem::path &dir, const std::string &config_digest) {
    std::filesystem::create_directories(dir);
    const SeedFiles files = seed_files(dir, seed.source_id);
    write_nifti(seed.subclasses, files.subclasses);
    write_nifti(seed.fine, files.target);

    nlohmann::json j;
    j["source_id"] = seed.source_id;
    j["image_id"] = seed.image_id;
    j["label_id"] = seed.label_id;
    j["config_digest"] = config_digest;
    j["subclass_meta"] = seed.subclass_meta;
    nlohmann::json fits = nlohmann::json::array();
    for (const auto &f : seed.fits) {
        nlohmann::json bic = nlohmann::json::array();
        for (double b : f.bic) bic.push_back(std::isfinite(b) ? nlohmann::json(b) : nlohmann::json(nullptr));
        fits.push_back({{"meta_label", f.meta},
                        {"meta_name", meta_label_name(f.meta)},
                        {"voxels", f.voxels},
                        {"k", f.k},
                        {"subclass_ids", f.subclass_ids},
                        {"components", params_json(f.params)},
                        {"bic", bic}});
    }
    j["fits"] = fits;
    std::ofstream out(files.sidecar, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + files.sidecar.string());
    out << j.dump(2) << '\n';
    return files;
}

SeedMap load_seed_map(const std::filesystem::path &dir, const std::string &source_id) {
    const SeedFiles files = seed_files(dir, source_id);
    std::ifstream in(files.sidecar);
    if (!in) throw std::runtime_error("cannot read seed sidecar " + files.sidecar.string());
    const nlohmann::json j = nlohmann::json::parse(in);
    SeedMap seed;
    seed.source_id = j.at("source_id").get<std::string>();
    seed.image_id = j.value("image_id", "");
    seed.label_id = j.value("label_id", "");
    seed.subclass_meta = j.at("subclass_meta").get<std::vector<Label>>();
    for (const auto &f : j.at("fits")) {
        MetaFit fit;
        fit.meta = f.at("meta_label").get<Label>();
        fit.voxels = f.at("voxels").get<std::size_t>();
        fit.k = f.at("k").get<int>();
        fit.subclass_ids = f.at("subclass_ids").get<std::vector<Label>>();
        for (const auto &c : f.at("components")) {
            fit.params.components.push_back(
                {c.at("weight").get<double>(), c.at("mean").get<double>(), c.at("variance").get<double>()});
        }
        if (f.contains("bic")) {
            for (const auto &b : f.at("bic")) {
                fit.bic.push_back(b.is_null() ? std::numeric_limits<double>::infinity() : b.get<double>());
            }
        }
        seed.fits.push_back(std::move(fit));
    }
    seed.subclasses = read_nifti_labels(files.subclasses);
    seed.fine = read_nifti_labels(files.target);
    validate_seed_map(seed);
    return seed;
}

std::vector<std::string> list_seed_ids(const std::filesystem::path &dir) {
    std::vector<std::string> ids;
    if (!std::filesystem::is_directory(dir)) return ids;
    const std::string suffix = "_seed.json";
    for (const auto &e : std::filesystem::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (e.is_regular_file() && name.ends_with(suffix)) ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

} // namespace fsyn
