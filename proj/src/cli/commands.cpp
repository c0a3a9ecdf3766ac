#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "fsyn/batch.hpp"
#include "fsyn/cli.hpp"
#include "fsyn/metrics.hpp"
#include "fsyn/nifti.hpp"
#include "fsyn/stats.hpp"
#include "json.hpp"

namespace fsyn::cli {

namespace fs = std::filesystem;

namespace {

/// NIfTI files in `dir` keyed by stem, sorted.
std::map<std::string, fs::path> nifti_files(const fs::path &dir) {
    std::map<std::string, fs::path> out;
    for (const auto &e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && is_nifti_path(e.path())) out[nifti_stem(e.path())] = e.path();
    }
    return out;
}

std::string strip_suffix(const std::string &stem, const std::string &suffix) {
    if (!suffix.empty() && stem.size() > suffix.size() && stem.ends_with(suffix)) {
        return stem.substr(0, stem.size() - suffix.size());
    }
    return stem;
}

void require_dir(const fs::path &p, const char *what) {
    if (p.empty()) throw ConfigError(std::string(what) + " is not set");
    if (!fs::is_directory(p)) throw ConfigError(std::string(what) + " '" + p.string() + "' is not a directory");
}

void require_seed(const RunConfig &cfg) {
    if (!cfg.master_seed) throw ConfigError("no seed given: set run.seed in the config or pass --seed");
}

template <class Fn>
void parallel_for(std::size_t count, int workers, Fn &&fn) {
    std::atomic<std::size_t> next{0};
    auto body = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) fn(i);
    };
    const int n = std::max(1, std::min<int>(workers, static_cast<int>(count)));
    if (n == 1) {
        body();
        return;
    }
    std::vector<std::jthread> pool;
    for (int w = 0; w < n; ++w) pool.emplace_back(body);
}

std::string fmt_num(double v) {
    if (!std::isfinite(v)) return "nan";
    std::ostringstream s;
    s.precision(10);
    s << v;
    return s.str();
}

void write_text(const fs::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

} // namespace

int cmd_seed(const RunConfig &cfg, std::ostream &out, std::ostream &err) {
    require_seed(cfg);
    require_dir(cfg.labels_dir, "paths.labels");
    if (!cfg.images_dir.empty()) require_dir(cfg.images_dir, "paths.images");

    struct Subject {
        std::string id;
        fs::path labels;
        std::optional<fs::path> image;
    };
    std::vector<Subject> subjects;
    const auto images = cfg.images_dir.empty() ? std::map<std::string, fs::path>{} : nifti_files(cfg.images_dir);
    for (const auto &[stem, path] : nifti_files(cfg.labels_dir)) {
        if (!stem.ends_with(cfg.label_suffix)) continue;
        Subject s{strip_suffix(stem, cfg.label_suffix), path, std::nullopt};
        if (const auto it = images.find(s.id + cfg.image_suffix); it != images.end()) s.image = it->second;
        subjects.push_back(std::move(s));
    }
    if (subjects.empty()) {
        err << "error: no label maps matching *" << cfg.label_suffix << ".nii[.gz] in " << cfg.labels_dir << "\n";
        return kExitPartial;
    }

    const fs::path seeds_dir = cfg.seeds_path();
    fs::create_directories(seeds_dir);
    const std::string digest = cfg.digest();
    std::vector<std::optional<SeedMap>> built(subjects.size());
    std::vector<std::string> messages(subjects.size());

    parallel_for(subjects.size(), cfg.workers, [&](std::size_t i) {
        const Subject &s = subjects[i];
        try {
            const LabelMap labels = read_nifti_labels(s.labels);
            std::optional<VoxelGrid> image;
            if (s.image) {
                image = read_nifti(*s.image);
            } else {
                messages[i] = "warning: " + s.id + ": no image found, using one subclass per meta-label";
            }
            SeedConfig sc = cfg.seed;
            sc.seed = derive_seed(*cfg.master_seed, s.id, 0);
            SeedMap seed = build_seed_map(image ? &*image : nullptr, labels, sc, s.id);
            seed.label_id = s.labels.filename().string();
            seed.image_id = s.image ? s.image->filename().string() : "";
            save_seed_map(seed, seeds_dir, digest);
            seed.subclasses = LabelMap();
            seed.fine = LabelMap();
            built[i] = std::move(seed);
        } catch (const std::exception &e) {
            messages[i] = "error: " + s.id + ": " + e.what();
        }
    });

    int failures = 0;
    std::ostringstream summary;
    summary << "subject,meta_label,k,component,weight,mean,variance\n";
    out << "subject        csf gm wm skull\n";
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        if (!messages[i].empty()) err << messages[i] << "\n";
        if (!built[i]) {
            ++failures;
            continue;
        }
        std::array<int, kMetaLabelCount + 1> ks{};
        for (const auto &f : built[i]->fits) {
            ks[f.meta] = f.k;
            for (int c = 0; c < f.k; ++c) {
                const auto &comp = f.params.components[static_cast<std::size_t>(c)];
                summary << subjects[i].id << ',' << meta_label_name(f.meta) << ',' << f.k << ',' << c << ','
                        << fmt_num(comp.weight) << ',' << fmt_num(comp.mean) << ',' << fmt_num(comp.variance) << "\n";
            }
        }
        out << subjects[i].id << "  " << ks[1] << " " << ks[2] << " " << ks[3] << " " << ks[4] << "\n";
    }
    write_text(seeds_dir / "summary.csv", summary.str());
    out << (subjects.size() - static_cast<std::size_t>(failures)) << " seed maps written to " << seeds_dir.string()
        << "\n";
    return failures == 0 ? kExitOk : kExitPartial;
}

int cmd_generate(const RunConfig &cfg, std::ostream &out, std::ostream &err) {
    require_seed(cfg);
    const fs::path seeds_dir = cfg.seeds_path();
    require_dir(seeds_dir, "seed directory");
    const auto ids = list_seed_ids(seeds_dir);
    if (ids.empty()) {
        err << "error: no seed maps in " << seeds_dir << "\n";
        return kExitPartial;
    }
    std::vector<SeedSource> sources;
    for (const auto &id : ids) sources.push_back({id, [seeds_dir, id] { return load_seed_map(seeds_dir, id); }});

    const fs::path synth_dir = cfg.synth_path();
    const auto start = std::chrono::steady_clock::now();
    const BatchResult r = generate_batch(sources, cfg.gen, synth_dir, BatchOptions{cfg.workers, std::nullopt});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    nlohmann::json run;
    run["config_digest"] = cfg.digest();
    run["generator"] = cfg.gen.canonical();
    run["sources"] = ids;
    run["samples_per_image"] = cfg.gen.samples_per_image;
    write_text(synth_dir / "run.json", run.dump(2) + "\n");

    for (const auto &e : r.errors) err << "error: " << e << "\n";
    out << r.rows.size() << " manifest rows (" << r.generated << " generated, " << r.skipped << " kept, " << r.failed
        << " failed) in " << fmt_num(secs) << " s";
    if (r.generated > 0 && secs > 0) out << ", " << fmt_num(double(r.generated) / secs) << " volumes/s";
    out << "\n";
    return r.failed == 0 ? kExitOk : kExitPartial;
}

int cmd_preprocess(const RunConfig &cfg, const fs::path &input_dir, const std::optional<fs::path> &labels_dir,
                   const fs::path &out_dir, bool train_mode, std::ostream &out, std::ostream &err) {
    require_seed(cfg);
    require_dir(input_dir, "input directory");
    if (labels_dir) require_dir(*labels_dir, "label directory");
    cfg.augment.validate();
    fs::create_directories(out_dir);
    const auto images = nifti_files(input_dir);
    const auto labels = labels_dir ? nifti_files(*labels_dir) : std::map<std::string, fs::path>{};
    std::vector<std::pair<std::string, fs::path>> work(images.begin(), images.end());
    std::vector<std::string> messages(work.size());
    std::atomic<int> failures{0};

    parallel_for(work.size(), cfg.workers, [&](std::size_t i) {
        const auto &[stem, path] = work[i];
        try {
            const VoxelGrid img = read_nifti(path);
            const std::string subject = strip_suffix(stem, cfg.image_suffix);
            std::optional<LabelMap> lab;
            if (labels_dir) {
                const auto it = labels.find(subject + cfg.label_suffix);
                if (it != labels.end()) {
                    lab = read_nifti_labels(it->second);
                } else {
                    messages[i] = "warning: " + stem + ": no label map, image only";
                }
            }
            Rng rng(derive_seed(*cfg.master_seed, stem, 0));
            auto [pimg, plab] = preprocess(img, lab ? &*lab : nullptr, cfg.augment, rng, train_mode);
            write_nifti(pimg, out_dir / (stem + ".nii.gz"));
            if (plab) write_nifti(*plab, out_dir / (subject + cfg.label_suffix + ".nii.gz"));
        } catch (const std::exception &e) {
            messages[i] = "error: " + stem + ": " + e.what();
            ++failures;
        }
    });
    for (const auto &m : messages) {
        if (!m.empty()) err << m << "\n";
    }
    out << (work.size() - static_cast<std::size_t>(failures.load())) << " volumes preprocessed ("
        << (train_mode ? "train" : "eval") << " mode)\n";
    return failures == 0 ? kExitOk : kExitPartial;
}

int cmd_evaluate(const std::vector<fs::path> &pred_dirs, const fs::path &gt_dir, const fs::path &out_dir,
                 const std::string &label_suffix, std::ostream &out, std::ostream &err) {
    if (pred_dirs.empty()) throw ConfigError("at least one prediction directory is required");
    require_dir(gt_dir, "ground-truth directory");
    for (const auto &p : pred_dirs) require_dir(p, "prediction directory");
    fs::create_directories(out_dir);

    const auto gt_files = nifti_files(gt_dir);
    std::vector<std::string> skipped;
    bool failed = false;

    struct Variant {
        std::string name;
        std::vector<SubjectMetrics> subjects;
    };
    std::vector<Variant> variants;
    std::set<std::string> names;
    for (std::size_t v = 0; v < pred_dirs.size(); ++v) {
        std::string name = fs::absolute(pred_dirs[v]).lexically_normal().filename().string();
        if (name.empty()) name = fs::absolute(pred_dirs[v]).lexically_normal().parent_path().filename().string();
        if (name.empty() || names.contains(name)) name = "variant" + std::to_string(v);
        names.insert(name);

        Variant var{name, {}};
        const auto preds = nifti_files(pred_dirs[v]);
        for (const auto &[stem, path] : preds) {
            const auto it = gt_files.find(stem);
            if (it == gt_files.end()) {
                skipped.push_back(name + ": " + path.filename().string() + " has no ground truth");
                continue;
            }
            try {
                const LabelMap pred = read_nifti_labels(path);
                const LabelMap gt = read_nifti_labels(it->second);
                var.subjects.push_back(evaluate_subject(strip_suffix(stem, label_suffix), pred, gt));
            } catch (const std::exception &e) {
                err << "error: " << name << ": " << stem << ": " << e.what() << "\n";
                failed = true;
            }
        }
        for (const auto &[stem, path] : gt_files) {
            if (!preds.contains(stem)) skipped.push_back(name + ": " + path.filename().string() + " has no prediction");
        }
        std::sort(var.subjects.begin(), var.subjects.end(),
                  [](const SubjectMetrics &a, const SubjectMetrics &b) { return a.subject < b.subject; });
        variants.push_back(std::move(var));
    }

    nlohmann::json agg;
    for (const auto &var : variants) {
        std::ostringstream csv;
        csv << "subject,tissue,dice,hd95_mm,volume_cm3\n";
        nlohmann::json jv;
        nlohmann::json per_subject = nlohmann::json::object();
        std::vector<double> mdsc;
        for (const auto &s : var.subjects) {
            for (const auto &t : s.tissues) {
                csv << s.subject << ',' << tissue_name(t.tissue) << ',' << fmt_num(t.dice) << ','
                    << (t.hd95_mm ? fmt_num(*t.hd95_mm) : "nan") << ',' << fmt_num(t.volume_cm3) << "\n";
            }
            per_subject[s.subject] = s.mdsc;
            mdsc.push_back(s.mdsc);
        }
        const std::string file = variants.size() == 1 ? "metrics.csv" : "metrics_" + var.name + ".csv";
        write_text(out_dir / file, csv.str());

        jv["subjects"] = var.subjects.size();
        jv["mdsc_per_subject"] = per_subject;
        if (!mdsc.empty()) {
            double mean = 0.0;
            for (double d : mdsc) mean += d;
            mean /= double(mdsc.size());
            double var_sum = 0.0;
            for (double d : mdsc) var_sum += (d - mean) * (d - mean);
            jv["mdsc_mean"] = mean;
            jv["mdsc_std"] = mdsc.size() > 1 ? std::sqrt(var_sum / double(mdsc.size() - 1)) : 0.0;
        }
        nlohmann::json tissues = nlohmann::json::object();
        for (Label t = 1; t <= kTissueCount; ++t) {
            double dsum = 0.0, hsum = 0.0;
            std::size_t hn = 0, undefined = 0;
            for (const auto &s : var.subjects) {
                const auto &m = s.tissues[t - 1];
                dsum += m.dice;
                if (m.hd95_mm) {
                    hsum += *m.hd95_mm;
                    ++hn;
                } else {
                    ++undefined;
                }
            }
            nlohmann::json jt;
            jt["dice_mean"] = var.subjects.empty() ? 0.0 : dsum / double(var.subjects.size());
            jt["hd95_mean_mm"] = hn == 0 ? nlohmann::json(nullptr) : nlohmann::json(hsum / double(hn));
            jt["hd95_undefined"] = undefined;
            tissues[tissue_name(t)] = jt;
        }
        jv["tissues"] = tissues;
        agg["variants"][var.name] = jv;
    }
    agg["skipped"] = skipped;

    if (variants.size() > 1) {
        struct Row {
            std::string a, b, tissue;
            double p;
        };
        std::vector<Row> rows;
        for (std::size_t i = 0; i < variants.size(); ++i) {
            for (std::size_t j = i + 1; j < variants.size(); ++j) {
                for (int t = 0; t <= kTissueCount; ++t) {
                    std::vector<double> xa, xb;
                    auto pick = [t](const SubjectMetrics &s) {
                        return t == 0 ? s.mdsc : s.tissues[static_cast<std::size_t>(t - 1)].dice;
                    };
                    for (const auto &s : variants[i].subjects) xa.push_back(pick(s));
                    for (const auto &s : variants[j].subjects) xb.push_back(pick(s));
                    if (xa.empty() || xb.empty()) continue;
                    rows.push_back({variants[i].name, variants[j].name, t == 0 ? "mdsc" : tissue_name(Label(t)),
                                    wilcoxon_ranksum(xa, xb).p_value});
                }
            }
        }
        if (!rows.empty()) {
            std::vector<double> ps;
            for (const auto &r : rows) ps.push_back(r.p);
            const BonferroniResult bf = bonferroni(ps);
            std::ostringstream csv;
            csv << "variant_a,variant_b,tissue,p_value,threshold,significant\n";
            for (std::size_t r = 0; r < rows.size(); ++r) {
                csv << rows[r].a << ',' << rows[r].b << ',' << rows[r].tissue << ',' << fmt_num(rows[r].p) << ','
                    << fmt_num(bf.threshold) << ',' << (bf.significant[r] ? "yes" : "no") << "\n";
            }
            write_text(out_dir / "comparisons.csv", csv.str());
            agg["bonferroni_threshold"] = bf.threshold;
        }
    }
    write_text(out_dir / "aggregate.json", agg.dump(2) + "\n");

    if (!skipped.empty()) {
        std::ostringstream rep;
        for (const auto &s : skipped) rep << s << "\n";
        write_text(out_dir / "skipped.txt", rep.str());
        err << "skipped " << skipped.size() << " unmatched file(s):\n" << rep.str();
    }
    for (const auto &var : variants) {
        out << var.name << ": " << var.subjects.size() << " subjects evaluated\n";
    }
    return (skipped.empty() && !failed) ? kExitOk : kExitPartial;
}

int cmd_volumes(const fs::path &seg_dir, const fs::path &ga_table, const fs::path &out_dir,
                const std::string &label_suffix, std::ostream &out, std::ostream &err) {
    require_dir(seg_dir, "segmentation directory");
    std::ifstream ga_in(ga_table);
    if (!ga_in) throw ConfigError("cannot read GA table " + ga_table.string());
    std::map<std::string, double> ga;
    std::string line;
    int lineno = 0;
    while (std::getline(ga_in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ConfigError("GA table line " + std::to_string(lineno) + ": expected subject,ga_weeks");
        const std::string subject = line.substr(0, comma);
        const std::string value = line.substr(comma + 1);
        try {
            ga[subject] = std::stod(value);
        } catch (const std::exception &) {
            if (lineno == 1) continue; // header
            throw ConfigError("GA table line " + std::to_string(lineno) + ": bad GA value '" + value + "'");
        }
    }
    fs::create_directories(out_dir);

    struct Entry {
        std::string subject;
        double ga;
        VolumeGroups groups;
        std::map<Label, double> labels;
    };
    std::vector<Entry> entries;
    std::vector<std::string> excluded;
    bool partial = false;
    for (const auto &[stem, path] : nifti_files(seg_dir)) {
        const std::string subject = strip_suffix(stem, label_suffix);
        const auto it = ga.find(subject);
        if (it == ga.end()) {
            excluded.push_back(subject);
            continue;
        }
        try {
            const auto vols = tissue_volumes(read_nifti_labels(path));
            entries.push_back({subject, it->second, group_volumes(vols), vols});
        } catch (const std::exception &e) {
            err << "error: " << subject << ": " << e.what() << "\n";
            partial = true;
        }
    }
    for (const auto &s : excluded) err << "warning: " << s << ": no GA entry, excluded\n";
    if (!excluded.empty()) partial = true;

    std::ostringstream csv;
    csv << "subject,ga_weeks,total_brain,csf,gm,wm";
    for (Label t = 1; t <= kTissueCount; ++t) csv << ",l" << int(t) << '_' << tissue_name(t);
    csv << "\n";
    for (const auto &e : entries) {
        csv << e.subject << ',' << fmt_num(e.ga) << ',' << fmt_num(e.groups.total_brain) << ','
            << fmt_num(e.groups.csf) << ',' << fmt_num(e.groups.gm) << ',' << fmt_num(e.groups.wm);
        for (Label t = 1; t <= kTissueCount; ++t) {
            const auto it = e.labels.find(t);
            csv << ',' << fmt_num(it == e.labels.end() ? 0.0 : it->second);
        }
        csv << "\n";
    }
    write_text(out_dir / "volumes.csv", csv.str());

    std::vector<std::pair<std::string, std::function<double(const Entry &)>>> series = {
        {"total_brain", [](const Entry &e) { return e.groups.total_brain; }},
        {"csf", [](const Entry &e) { return e.groups.csf; }},
        {"gm", [](const Entry &e) { return e.groups.gm; }},
        {"wm", [](const Entry &e) { return e.groups.wm; }},
    };
    for (Label t = 1; t <= kTissueCount; ++t) {
        series.emplace_back("l" + std::to_string(int(t)) + "_" + tissue_name(t), [t](const Entry &e) {
            const auto it = e.labels.find(t);
            return it == e.labels.end() ? 0.0 : it->second;
        });
    }

    nlohmann::json fits = nlohmann::json::object();
    std::vector<double> xs;
    for (const auto &e : entries) xs.push_back(e.ga);
    for (const auto &[name, get] : series) {
        std::vector<double> ys;
        for (const auto &e : entries) ys.push_back(get(e));
        try {
            const GrowthFit fit = polyfit_growth(xs, ys, 2);
            const double lo = std::floor(*std::min_element(xs.begin(), xs.end()) * 2.0) / 2.0;
            const double hi = std::ceil(*std::max_element(xs.begin(), xs.end()) * 2.0) / 2.0;
            std::ostringstream band;
            band << "ga_week,fit,ci_lo,ci_hi\n";
            for (double g = lo; g <= hi + 1e-9; g += 0.5) {
                const auto b = fit.band(g);
                band << fmt_num(g) << ',' << fmt_num(b.fit) << ',' << fmt_num(b.lo) << ',' << fmt_num(b.hi) << "\n";
            }
            write_text(out_dir / ("growth_" + name + ".csv"), band.str());
            fits[name] = {{"coefficients", fit.coefficients},
                          {"n", fit.n},
                          {"residual_std", fit.residual_std},
                          {"dof", fit.dof()}};
        } catch (const DegenerateFit &e) {
            err << "warning: " << name << ": fit refused: " << e.what() << "\n";
            fits[name] = {{"error", e.what()}};
            partial = true;
        }
    }
    nlohmann::json summary;
    summary["fits"] = fits;
    summary["excluded"] = excluded;
    summary["subjects"] = entries.size();
    write_text(out_dir / "growth_fits.json", summary.dump(2) + "\n");
    out << entries.size() << " segmentations measured, " << excluded.size() << " excluded\n";
    return partial ? kExitPartial : kExitOk;
}

int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
    CLI::App app{"Synthetic fetal brain MRI generation and segmentation evaluation"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed_flag;
    std::optional<int> workers_flag;
    std::optional<std::size_t> samples_flag;
    std::vector<std::string> overrides;
    auto add_common = [&](CLI::App *sub) {
        sub->add_option("--config", config_path, "Config file (default: $" + std::string(kConfigEnv) + ")");
        sub->add_option("--seed", seed_flag, "Master seed");
        sub->add_option("--workers", workers_flag, "Worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--set", overrides, "Override a config key (key=value), repeatable");
    };

    auto *seed_cmd = app.add_subcommand("seed", "Build seed maps from label maps (and images)");
    add_common(seed_cmd);
    auto *gen_cmd = app.add_subcommand("generate", "Generate the synthetic corpus from seed maps");
    add_common(gen_cmd);
    gen_cmd->add_option("--samples-per-image", samples_flag, "Synthetic samples per seed map");

    auto *pre_cmd = app.add_subcommand("preprocess", "Resample, crop/pad, augment and normalise images");
    add_common(pre_cmd);
    std::string pre_in, pre_out, pre_labels;
    bool pre_train = false;
    pre_cmd->add_option("--input", pre_in, "Image directory")->required();
    pre_cmd->add_option("--labels", pre_labels, "Label directory");
    pre_cmd->add_option("--out", pre_out, "Output directory")->required();
    pre_cmd->add_flag("--train", pre_train, "Apply random augmentations");

    auto *eval_cmd = app.add_subcommand("evaluate", "Dice / HD95 / volume evaluation against ground truth");
    add_common(eval_cmd);
    std::vector<std::string> eval_pred;
    std::string eval_gt, eval_out;
    eval_cmd->add_option("--pred", eval_pred, "Prediction directory (repeat for several model variants)")->required();
    eval_cmd->add_option("--gt", eval_gt, "Ground-truth directory")->required();
    eval_cmd->add_option("--out", eval_out, "Output directory")->required();

    auto *vol_cmd = app.add_subcommand("volumes", "Tissue volumes and growth curves against GA");
    add_common(vol_cmd);
    std::string vol_seg, vol_ga, vol_out;
    vol_cmd->add_option("--seg", vol_seg, "Segmentation directory")->required();
    vol_cmd->add_option("--ga", vol_ga, "CSV table subject,ga_weeks")->required();
    vol_cmd->add_option("--out", vol_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError &e) {
        err << e.what() << "\n";
        return kExitConfig;
    }

    try {
        RunConfig cfg;
        if (config_path.empty()) {
            if (const char *env = std::getenv(kConfigEnv); env != nullptr && *env != '\0') config_path = env;
        }
        if (!config_path.empty()) cfg = load_config(config_path);
        for (const auto &kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed_flag) cfg.set("run.seed", std::to_string(*seed_flag));
        if (workers_flag) cfg.workers = *workers_flag;
        if (samples_flag) cfg.gen.samples_per_image = *samples_flag;
        try {
            cfg.gen.validate();
            cfg.augment.validate();
        } catch (const InvalidArgument &e) {
            throw ConfigError(e.what());
        }

        if (seed_cmd->parsed()) return cmd_seed(cfg, out, err);
        if (gen_cmd->parsed()) return cmd_generate(cfg, out, err);
        if (pre_cmd->parsed()) {
            return cmd_preprocess(cfg, pre_in, pre_labels.empty() ? std::nullopt : std::optional<fs::path>(pre_labels),
                                  pre_out, pre_train, out, err);
        }
        if (eval_cmd->parsed()) {
            std::vector<fs::path> preds(eval_pred.begin(), eval_pred.end());
            return cmd_evaluate(preds, eval_gt, eval_out, cfg.label_suffix, out, err);
        }
        if (vol_cmd->parsed()) return cmd_volumes(vol_seg, vol_ga, vol_out, cfg.label_suffix, out, err);
    } catch (const ConfigError &e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << "\n";
        return kExitPartial;
    }
    return kExitConfig;
}

} // namespace fsyn::cli
