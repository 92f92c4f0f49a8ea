#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stcnn/volume.hpp"

namespace stcnn {

// How a scalar map is turned into a voxel set before overlap scoring.
//   z_threshold: voxel is in iff |value| > z * stddev(nonzero values).
//   nonzero:     voxel is in iff value != 0.
enum class BinarizeMode { z_threshold, nonzero };

struct BinarizeRule {
    BinarizeMode mode = BinarizeMode::z_threshold;
    double z = 2.0;
};

std::vector<std::uint8_t> binarize(std::span<const double> values, const BinarizeRule& rule);

struct JaccardResult {
    double score = 0.0;
    bool empty_union = false;  // both supports empty; score defined as 0

    operator double() const { return score; }
};

// |A n B| / |A u B| over binarized voxel sets. Symmetric, invariant under
// positive rescaling of either map.
JaccardResult jaccard(const NetworkMap& a, const NetworkMap& b, const BinarizeRule& rule = {});
JaccardResult jaccard_binary(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

// Pearson correlation
//   r = (N*Sxy - Sx*Sy) / sqrt((N*Sxx - Sx^2)(N*Syy - Sy^2) + eps),
// the plain (non-differentiable) evaluation used for reporting. degenerate is
// set when either series is numerically constant.
double pearson(std::span<const double> x, std::span<const double> y,
               bool* degenerate = nullptr);

}  // namespace stcnn
