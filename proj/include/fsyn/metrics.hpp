// Segmentation overlap, surface distance and tissue volume measurements.
#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsyn/seed.hpp"
#include "fsyn/volume.hpp"

namespace fsyn {

/// A metric is not defined for the given inputs (e.g. HD95 of an empty mask).
class UndefinedMetric : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// 2|P & G| / (|P| + |G|); 1.0 when both masks are empty.
double dice(const LabelMap &pred, const LabelMap &gt, Label label);

/// Surface voxels: labelled voxels with an unlabelled 6-neighbour or on the
/// grid boundary.
std::vector<unsigned char> surface_mask(const LabelMap &labels, Label label);

/// Nearest-rank 95th percentile of nearest-surface distances, max over both
/// directions, in mm (spacing taken from `pred`).
double hausdorff95(const LabelMap &pred, const LabelMap &gt, Label label);
/// Nearest-rank percentile (q in (0, 1]) of a sample; the input is reordered.
double nearest_rank_percentile(std::vector<double> &values, double q);

/// cm^3 per label present in the map.
std::map<Label, double> tissue_volumes(const LabelMap &seg);

struct VolumeGroups {
    double total_brain = 0.0;
    double csf = 0.0;
    double gm = 0.0;
    double wm = 0.0;
};
/// Total brain = labels 1..7; CSF/GM/WM follow the meta-label mapping.
VolumeGroups group_volumes(const std::map<Label, double> &volumes,
                           const MetaLabelMapping &mapping = MetaLabelMapping::feta_default());

struct TissueMetrics {
    Label tissue = 0;
    double dice = 0.0;
    std::optional<double> hd95_mm;
    double volume_cm3 = 0.0;
};

struct SubjectMetrics {
    std::string subject;
    std::vector<TissueMetrics> tissues; // labels 1..7
    double mdsc = 0.0;
};

SubjectMetrics evaluate_subject(const std::string &subject, const LabelMap &pred, const LabelMap &gt);

} // namespace fsyn
