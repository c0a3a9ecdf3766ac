#include "fsyn/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "fsyn/distance.hpp"

namespace fsyn {

namespace {

void require_same_grid(const LabelMap &pred, const LabelMap &gt) {
    if (!pred.geometry().same_as(gt.geometry(), 1e-4)) {
        throw InvalidInput("prediction and ground truth do not share grid geometry");
    }
}

std::vector<double> directed_distances(const std::vector<unsigned char> &from, const std::vector<unsigned char> &to,
                                       const LabelMap &grid) {
    const std::vector<double> d2 = squared_distance_transform(to, grid.shape(), grid.spacing());
    std::vector<double> out;
    for (std::size_t n = 0; n < from.size(); ++n) {
        if (from[n]) out.push_back(std::sqrt(d2[n]));
    }
    return out;
}

} // namespace

double dice(const LabelMap &pred, const LabelMap &gt, Label label) {
    require_same_grid(pred, gt);
    std::size_t p = 0, g = 0, both = 0;
    for (std::size_t n = 0; n < pred.size(); ++n) {
        const bool a = pred[n] == label, b = gt[n] == label;
        p += a;
        g += b;
        both += a && b;
    }
    if (p + g == 0) return 1.0;
    return 2.0 * double(both) / double(p + g);
}

std::vector<unsigned char> surface_mask(const LabelMap &labels, Label label) {
    const Geometry &g = labels.geometry();
    const Shape &s = g.shape;
    std::vector<unsigned char> out(labels.size(), 0);
    static constexpr int kOffsets[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    std::size_t n = 0;
    for (std::int64_t k = 0; k < s[2]; ++k)
        for (std::int64_t j = 0; j < s[1]; ++j)
            for (std::int64_t i = 0; i < s[0]; ++i, ++n) {
                if (labels[n] != label) continue;
                for (const auto &o : kOffsets) {
                    const std::int64_t a = i + o[0], b = j + o[1], c = k + o[2];
                    if (!g.contains(a, b, c) || labels(a, b, c) != label) {
                        out[n] = 1;
                        break;
                    }
                }
            }
    return out;
}

double nearest_rank_percentile(std::vector<double> &values, double q) {
    if (values.empty()) throw UndefinedMetric("percentile of an empty sample");
    const double n = double(values.size());
    auto rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
    return values[rank - 1];
}

double hausdorff95(const LabelMap &pred, const LabelMap &gt, Label label) {
    require_same_grid(pred, gt);
    const auto sp = surface_mask(pred, label);
    const auto sg = surface_mask(gt, label);
    const bool empty_p = std::none_of(sp.begin(), sp.end(), [](unsigned char c) { return c != 0; });
    const bool empty_g = std::none_of(sg.begin(), sg.end(), [](unsigned char c) { return c != 0; });
    if (empty_p || empty_g) {
        throw UndefinedMetric("HD95 undefined for label " + std::to_string(int(label)) + ": empty mask");
    }
    std::vector<double> pg = directed_distances(sp, sg, pred);
    std::vector<double> gp = directed_distances(sg, sp, pred);
    return std::max(nearest_rank_percentile(pg, 0.95), nearest_rank_percentile(gp, 0.95));
}

std::map<Label, double> tissue_volumes(const LabelMap &seg) {
    std::array<std::size_t, 256> count{};
    for (Label l : seg.data()) ++count[l];
    const auto &s = seg.spacing();
    const double voxel_cm3 = s[0] * s[1] * s[2] / 1000.0;
    std::map<Label, double> out;
    for (int l = 0; l < 256; ++l) {
        if (count[l] > 0) out[static_cast<Label>(l)] = double(count[l]) * voxel_cm3;
    }
    return out;
}

VolumeGroups group_volumes(const std::map<Label, double> &volumes, const MetaLabelMapping &mapping) {
    VolumeGroups g;
    for (const auto &[label, v] : volumes) {
        if (label < 1 || label > kTissueCount) continue;
        g.total_brain += v;
        const auto meta = mapping.meta_of(label);
        if (!meta) continue;
        if (*meta == kMetaCsf) g.csf += v;
        if (*meta == kMetaGm) g.gm += v;
        if (*meta == kMetaWm) g.wm += v;
    }
    return g;
}

SubjectMetrics evaluate_subject(const std::string &subject, const LabelMap &pred, const LabelMap &gt) {
    require_same_grid(pred, gt);
    SubjectMetrics out;
    out.subject = subject;
    const auto volumes = tissue_volumes(pred);
    double sum = 0.0;
    for (Label t = 1; t <= kTissueCount; ++t) {
        TissueMetrics m;
        m.tissue = t;
        m.dice = dice(pred, gt, t);
        try {
            m.hd95_mm = hausdorff95(pred, gt, t);
        } catch (const UndefinedMetric &) {
            m.hd95_mm.reset();
        }
        const auto it = volumes.find(t);
        m.volume_cm3 = it == volumes.end() ? 0.0 : it->second;
        sum += m.dice;
        out.tissues.push_back(m);
    }
    out.mdsc = sum / kTissueCount;
    return out;
}

} // namespace fsyn
