#include "stcnn/metrics.hpp"

#include <cmath>

#include "stcnn/errors.hpp"

namespace stcnn {

std::vector<std::uint8_t> binarize(std::span<const double> values, const BinarizeRule& rule) {
    std::vector<std::uint8_t> out(values.size(), 0);
    if (rule.mode == BinarizeMode::nonzero) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            out[i] = values[i] != 0.0 ? 1 : 0;
        }
        return out;
    }
    // threshold = z * stddev of the nonzero values (about their mean)
    double sum = 0.0, sumsq = 0.0;
    std::int64_t n = 0;
    for (const double v : values) {
        if (v != 0.0) {
            sum += v;
            sumsq += v * v;
            ++n;
        }
    }
    if (n == 0) {
        return out;  // empty support
    }
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, sumsq / static_cast<double>(n) - mean * mean);
    const double thr = rule.z * std::sqrt(var);
    for (std::size_t i = 0; i < values.size(); ++i) {
        out[i] = std::abs(values[i]) > thr ? 1 : 0;
    }
    return out;
}

JaccardResult jaccard_binary(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    if (a.size() != b.size()) {
        throw DimensionError("jaccard: voxel counts differ: " + std::to_string(a.size()) +
                             " vs " + std::to_string(b.size()));
    }
    std::int64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool ia = a[i] != 0;
        const bool ib = b[i] != 0;
        inter += (ia && ib) ? 1 : 0;
        uni += (ia || ib) ? 1 : 0;
    }
    JaccardResult res;
    if (uni == 0) {
        res.empty_union = true;
        res.score = 0.0;
    } else {
        res.score = static_cast<double>(inter) / static_cast<double>(uni);
    }
    return res;
}

JaccardResult jaccard(const NetworkMap& a, const NetworkMap& b, const BinarizeRule& rule) {
    if (a.d != b.d || a.h != b.h || a.w != b.w) {
        throw DimensionError("jaccard: map dims differ");
    }
    const auto ba = binarize(a.values, rule);
    const auto bb = binarize(b.values, rule);
    return jaccard_binary(ba, bb);
}

double pearson(std::span<const double> x, std::span<const double> y, bool* degenerate) {
    if (x.size() != y.size()) {
        throw DimensionError("pearson: lengths differ: " + std::to_string(x.size()) + " vs " +
                             std::to_string(y.size()));
    }
    if (x.size() < 2) {
        throw DimensionError("pearson: need at least 2 samples");
    }
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxy += x[i] * y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
    }
    const double num = n * sxy - sx * sy;
    const double dx = n * sxx - sx * sx;
    const double dy = n * syy - sy * sy;
    if (degenerate != nullptr) {
        *degenerate = dx <= 1e-12 * std::max(1.0, n * sxx) || dy <= 1e-12 * std::max(1.0, n * syy);
    }
    return num / std::sqrt(std::max(dx * dy, 0.0) + 1e-12);
}

}  // namespace stcnn
