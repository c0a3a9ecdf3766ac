// Command-line front end: configuration loading and the seed / generate /
// preprocess / evaluate / volumes subcommands.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsyn/augment.hpp"
#include "fsyn/seed.hpp"
#include "fsyn/synth.hpp"

namespace fsyn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitConfig = 2;

/// Environment variable naming the default config file.
inline constexpr const char *kConfigEnv = "FSYN_CONFIG";

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::filesystem::path images_dir;
    std::filesystem::path labels_dir;
    std::filesystem::path output_dir = "out";
    std::optional<std::filesystem::path> seeds_dir; // default: <output>/seeds
    std::optional<std::filesystem::path> synth_dir; // default: <output>/synth
    std::string image_suffix = "_T2w";
    std::string label_suffix = "_dseg";

    GenConfig gen;
    AugmentConfig augment;
    SeedConfig seed;
    int workers = 1;
    std::optional<std::uint64_t> master_seed;

    std::filesystem::path seeds_path() const { return seeds_dir.value_or(output_dir / "seeds"); }
    std::filesystem::path synth_path() const { return synth_dir.value_or(output_dir / "synth"); }

    /// Applies one `key = value` setting; throws ConfigError for unknown keys
    /// or unparsable values.
    void set(const std::string &key, const std::string &value);
    /// Hex digest over every setting that can change an output file.
    std::string digest() const;
};

/// Parses the key/value config format:
///
///     # comment
///     [paths]
///     labels = data/labels
///     [gen]
///     std_max = 35
///
/// Section headers prefix the following keys ("gen.std_max"); dotted keys
/// may also be written out in full.
RunConfig parse_config(const std::string &text, const std::filesystem::path &base_dir = {});
RunConfig load_config(const std::filesystem::path &path);

/// Lists every recognised key with its current value, one `key = value` per
/// line.
std::string dump_config(const RunConfig &cfg);

int cmd_seed(const RunConfig &cfg, std::ostream &out, std::ostream &err);
int cmd_generate(const RunConfig &cfg, std::ostream &out, std::ostream &err);
int cmd_preprocess(const RunConfig &cfg, const std::filesystem::path &input_dir,
                   const std::optional<std::filesystem::path> &labels_dir, const std::filesystem::path &out_dir,
                   bool train_mode, std::ostream &out, std::ostream &err);
int cmd_evaluate(const std::vector<std::filesystem::path> &pred_dirs, const std::filesystem::path &gt_dir,
                 const std::filesystem::path &out_dir, const std::string &label_suffix, std::ostream &out,
                 std::ostream &err);
int cmd_volumes(const std::filesystem::path &seg_dir, const std::filesystem::path &ga_table,
                const std::filesystem::path &out_dir, const std::string &label_suffix, std::ostream &out,
                std::ostream &err);

/// Full command-line entry point (argv[0] is the program name).
int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace fsyn::cli
