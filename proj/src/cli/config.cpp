#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "fsyn/cli.hpp"
#include "fsyn/rng.hpp"

namespace fsyn::cli {

namespace {

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string &key, const std::string &v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception &) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

std::uint64_t to_u64(const std::string &key, const std::string &v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

int to_int(const std::string &key, const std::string &v) {
    const std::uint64_t u = to_u64(key, v);
    if (u > 1'000'000'000ULL) throw ConfigError("config key '" + key + "': value out of range");
    return static_cast<int>(u);
}

std::array<double, 3> to_triple(const std::string &key, const std::string &v) {
    std::vector<double> parts;
    std::stringstream ss(v);
    std::string cell;
    while (std::getline(ss, cell, ',')) parts.push_back(to_double(key, trim(cell)));
    if (parts.size() == 1) return {parts[0], parts[0], parts[0]};
    if (parts.size() != 3) throw ConfigError("config key '" + key + "': expected 1 or 3 comma-separated values");
    return {parts[0], parts[1], parts[2]};
}

using Setter = std::function<void(RunConfig &, const std::string &, const std::string &)>;
using Getter = std::function<std::string(const RunConfig &)>;

struct Field {
    Setter set;
    Getter get;
};

std::string fmt(double d) {
    std::ostringstream s;
    s.precision(17);
    s << d;
    return s.str();
}

Field real(double GenConfig::*m) {
    return {[m](RunConfig &c, const std::string &k, const std::string &v) { c.gen.*m = to_double(k, v); },
            [m](const RunConfig &c) { return fmt(c.gen.*m); }};
}

Field aug_real(double AugmentConfig::*m) {
    return {[m](RunConfig &c, const std::string &k, const std::string &v) { c.augment.*m = to_double(k, v); },
            [m](const RunConfig &c) { return fmt(c.augment.*m); }};
}

Field aug_bound(Range AugmentConfig::*m, bool hi) {
    return {[m, hi](RunConfig &c, const std::string &k, const std::string &v) {
                (hi ? (c.augment.*m).hi : (c.augment.*m).lo) = to_double(k, v);
            },
            [m, hi](const RunConfig &c) { return fmt(hi ? (c.augment.*m).hi : (c.augment.*m).lo); }};
}

Field path_field(std::filesystem::path RunConfig::*m) {
    return {[m](RunConfig &c, const std::string &, const std::string &v) { c.*m = v; },
            [m](const RunConfig &c) { return (c.*m).string(); }};
}

Field opt_path_field(std::optional<std::filesystem::path> RunConfig::*m) {
    return {[m](RunConfig &c, const std::string &, const std::string &v) { c.*m = v; },
            [m](const RunConfig &c) { return (c.*m) ? (c.*m)->string() : std::string(); }};
}

const std::map<std::string, Field> &fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> t;
        t["paths.images"] = path_field(&RunConfig::images_dir);
        t["paths.labels"] = path_field(&RunConfig::labels_dir);
        t["paths.output"] = path_field(&RunConfig::output_dir);
        t["paths.seeds"] = opt_path_field(&RunConfig::seeds_dir);
        t["paths.synth"] = opt_path_field(&RunConfig::synth_dir);
        t["match.image_suffix"] = {[](RunConfig &c, const std::string &, const std::string &v) { c.image_suffix = v; },
                                   [](const RunConfig &c) { return c.image_suffix; }};
        t["match.label_suffix"] = {[](RunConfig &c, const std::string &, const std::string &v) { c.label_suffix = v; },
                                   [](const RunConfig &c) { return c.label_suffix; }};
        t["run.seed"] = {[](RunConfig &c, const std::string &k, const std::string &v) { c.master_seed = to_u64(k, v); },
                         [](const RunConfig &c) {
                             return c.master_seed ? std::to_string(*c.master_seed) : std::string();
                         }};
        t["run.workers"] = {[](RunConfig &c, const std::string &k, const std::string &v) {
                                c.workers = std::max(1, to_int(k, v));
                            },
                            [](const RunConfig &c) { return std::to_string(c.workers); }};

        t["seed.skull_ring_mm"] = {[](RunConfig &c, const std::string &k, const std::string &v) {
                                       c.seed.skull_ring_mm = to_double(k, v);
                                   },
                                   [](const RunConfig &c) { return fmt(c.seed.skull_ring_mm); }};
        t["seed.max_subclasses"] = {[](RunConfig &c, const std::string &k, const std::string &v) {
                                        const int n = to_int(k, v);
                                        if (n < 1 || n > 4) throw ConfigError("seed.max_subclasses must be in 1..4");
                                        c.seed.max_subclasses = n;
                                    },
                                    [](const RunConfig &c) { return std::to_string(c.seed.max_subclasses); }};

        t["gen.intensity_lo"] = real(&GenConfig::intensity_lo);
        t["gen.intensity_hi"] = real(&GenConfig::intensity_hi);
        t["gen.mean_lo"] = real(&GenConfig::mean_lo);
        t["gen.mean_hi"] = real(&GenConfig::mean_hi);
        t["gen.std_max"] = real(&GenConfig::std_max);
        t["gen.scale_lo"] = real(&GenConfig::scale_lo);
        t["gen.scale_hi"] = real(&GenConfig::scale_hi);
        t["gen.translation_lo"] = real(&GenConfig::translation_lo);
        t["gen.translation_hi"] = real(&GenConfig::translation_hi);
        t["gen.rotation_deg"] = real(&GenConfig::rotation_deg);
        t["gen.shear"] = real(&GenConfig::shear);
        t["gen.elastic_std_max"] = real(&GenConfig::elastic_std_max);
        t["gen.bias_std_max"] = real(&GenConfig::bias_std_max);
        t["gen.resolution_lo"] = real(&GenConfig::resolution_lo);
        t["gen.resolution_hi"] = real(&GenConfig::resolution_hi);
        t["gen.extra_blur_max"] = real(&GenConfig::extra_blur_max);
        t["gen.noise_std_max"] = real(&GenConfig::noise_std_max);
        t["gen.elastic_grid"] = {[](RunConfig &c, const std::string &k, const std::string &v) {
                                     c.gen.elastic_grid = to_int(k, v);
                                 },
                                 [](const RunConfig &c) { return std::to_string(c.gen.elastic_grid); }};
        t["gen.bias_grid"] = {[](RunConfig &c, const std::string &k, const std::string &v) {
                                  c.gen.bias_grid = to_int(k, v);
                              },
                              [](const RunConfig &c) { return std::to_string(c.gen.bias_grid); }};
        t["gen.samples_per_image"] = {[](RunConfig &c, const std::string &k, const std::string &v) {
                                          c.gen.samples_per_image = to_u64(k, v);
                                      },
                                      [](const RunConfig &c) { return std::to_string(c.gen.samples_per_image); }};

        t["augment.gamma_lo"] = aug_bound(&AugmentConfig::gamma, false);
        t["augment.gamma_hi"] = aug_bound(&AugmentConfig::gamma, true);
        t["augment.gamma_p"] = aug_real(&AugmentConfig::gamma_p);
        t["augment.scale_lo"] = aug_bound(&AugmentConfig::scale, false);
        t["augment.scale_hi"] = aug_bound(&AugmentConfig::scale, true);
        t["augment.rotation_lo"] = aug_bound(&AugmentConfig::rotation_deg, false);
        t["augment.rotation_hi"] = aug_bound(&AugmentConfig::rotation_deg, true);
        t["augment.shear_lo"] = aug_bound(&AugmentConfig::shear, false);
        t["augment.shear_hi"] = aug_bound(&AugmentConfig::shear, true);
        t["augment.translation_lo"] = aug_bound(&AugmentConfig::translation_mm, false);
        t["augment.translation_hi"] = aug_bound(&AugmentConfig::translation_mm, true);
        t["augment.affine_p"] = aug_real(&AugmentConfig::affine_p);
        t["augment.noise_mean"] = aug_real(&AugmentConfig::noise_mean);
        t["augment.noise_std"] = aug_real(&AugmentConfig::noise_std);
        t["augment.noise_p"] = aug_real(&AugmentConfig::noise_p);
        t["augment.smooth_lo"] = aug_bound(&AugmentConfig::smooth_sigma, false);
        t["augment.smooth_hi"] = aug_bound(&AugmentConfig::smooth_sigma, true);
        t["augment.smooth_p"] = aug_real(&AugmentConfig::smooth_p);
        t["augment.spacing"] = {[](RunConfig &c, const std::string &k, const std::string &v) {
                                    c.augment.target_spacing = to_triple(k, v);
                                },
                                [](const RunConfig &c) {
                                    const auto &s = c.augment.target_spacing;
                                    return fmt(s[0]) + "," + fmt(s[1]) + "," + fmt(s[2]);
                                }};
        t["augment.shape"] = {[](RunConfig &c, const std::string &k, const std::string &v) {
                                  const auto s = to_triple(k, v);
                                  for (int d = 0; d < 3; ++d) {
                                      if (s[d] < 1 || s[d] != std::floor(s[d])) {
                                          throw ConfigError("augment.shape must hold positive integers");
                                      }
                                      c.augment.target_shape[d] = static_cast<std::int64_t>(s[d]);
                                  }
                              },
                              [](const RunConfig &c) {
                                  const auto &s = c.augment.target_shape;
                                  return std::to_string(s[0]) + "," + std::to_string(s[1]) + "," +
                                         std::to_string(s[2]);
                              }};
        return t;
    }();
    return table;
}

} // namespace

void RunConfig::set(const std::string &key, const std::string &value) {
    if (key.starts_with("mapping.")) {
        const int fine = to_int(key, key.substr(8));
        const int meta = to_int(key, value);
        if (fine < 1 || fine > 255) throw ConfigError("mapping key must name a fine label 1..255");
        try {
            seed.mapping.set(static_cast<Label>(fine), static_cast<Label>(meta));
        } catch (const InvalidArgument &e) {
            throw ConfigError(e.what());
        }
        return;
    }
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(*this, key, value);
    if (key == "run.seed") {
        gen.master_seed = *master_seed;
        seed.seed = *master_seed;
    }
}

std::string dump_config(const RunConfig &cfg) {
    std::string out;
    for (const auto &[key, f] : fields()) {
        const std::string v = f.get(cfg);
        if (!v.empty()) out += key + " = " + v + "\n"; // unset optional keys stay unset
    }
    for (const auto &[fine, meta] : cfg.seed.mapping.table()) {
        out += "mapping." + std::to_string(int(fine)) + " = " + std::to_string(int(meta)) + "\n";
    }
    return out;
}

std::string RunConfig::digest() const {
    // Paths, worker count and output locations do not change file contents.
    std::string canon;
    for (const auto &[key, f] : fields()) {
        if (key.starts_with("paths.") || key == "run.workers") continue;
        canon += key + "=" + f.get(*this) + ";";
    }
    for (const auto &[fine, meta] : seed.mapping.table()) {
        canon += "mapping." + std::to_string(int(fine)) + "=" + std::to_string(int(meta)) + ";";
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canon)));
    return buf;
}

RunConfig parse_config(const std::string &text, const std::filesystem::path &base_dir) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
        try {
            cfg.set(key, value);
        } catch (const ConfigError &e) {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    // Relative paths are taken relative to the config file.
    if (!base_dir.empty()) {
        auto fix = [&](std::filesystem::path &p) {
            if (!p.empty() && p.is_relative()) p = base_dir / p;
        };
        fix(cfg.images_dir);
        fix(cfg.labels_dir);
        fix(cfg.output_dir);
        if (cfg.seeds_dir) fix(*cfg.seeds_dir);
        if (cfg.synth_dir) fix(*cfg.synth_dir);
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

} // namespace fsyn::cli
