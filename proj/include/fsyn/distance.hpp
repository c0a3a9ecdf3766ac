// Exact Euclidean distance transform on anisotropic voxel grids.
#pragma once

#include <vector>

#include "fsyn/volume.hpp"

namespace fsyn {

/// Squared distance (mm^2) from every voxel centre to the nearest voxel with
/// `feature[n] != 0`. Voxels are separable-parabola processed per axis
/// (Felzenszwalb & Huttenlocher lower envelope). Returns +inf everywhere
/// when there is no feature voxel.
std::vector<double> squared_distance_transform(const std::vector<unsigned char> &feature, const Shape &shape,
                                               const Spacing &spacing);

} // namespace fsyn
