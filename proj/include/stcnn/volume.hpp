#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stcnn/errors.hpp"

namespace stcnn {

// Length-N scalar sequence (a temporal course).
using TimeSeries = std::vector<double>;

// Single 3-D scalar map of a functional network.
struct NetworkMap {
    std::int64_t d = 0, h = 0, w = 0;
    std::vector<double> values;  // d*h*w, row-major
    std::string label;

    std::int64_t numel() const { return d * h * w; }
    double& at(std::int64_t z, std::int64_t y, std::int64_t x) {
        return values[static_cast<std::size_t>((z * h + y) * w + x)];
    }
    double at(std::int64_t z, std::int64_t y, std::int64_t x) const {
        return values[static_cast<std::size_t>((z * h + y) * w + x)];
    }
};

// T-frame sequence of 3-D scalar volumes. Data is stored frame-major
// (t, z, y, x) in doubles; files store the payload as little-endian f32.
struct Volume4D {
    std::int64_t t = 0, d = 0, h = 0, w = 0;
    std::vector<double> data;    // t*d*h*w
    std::vector<std::uint8_t> mask;  // d*h*w voxel mask; empty = all in-mask
    double repetition_time = 1.0;    // seconds, metadata only

    std::int64_t frame_size() const { return d * h * w; }
    std::int64_t numel() const { return t * frame_size(); }
    double& at(std::int64_t ti, std::int64_t z, std::int64_t y, std::int64_t x) {
        return data[static_cast<std::size_t>(((ti * d + z) * h + y) * w + x)];
    }
    double at(std::int64_t ti, std::int64_t z, std::int64_t y, std::int64_t x) const {
        return data[static_cast<std::size_t>(((ti * d + z) * h + y) * w + x)];
    }
    bool in_mask(std::int64_t voxel) const {
        return mask.empty() || mask[static_cast<std::size_t>(voxel)] != 0;
    }

    // Throws unless dims are positive, T >= 2, buffers sized and finite.
    void validate() const;
};

// Raw little-endian f32 payload `<name>.vol4` plus a plain-text sidecar
// `<name>.vol4.hdr`. Layout is documented in docs/formats.md.
void write_volume4d(const Volume4D& vol, const std::filesystem::path& path);
Volume4D read_volume4d(const std::filesystem::path& path);

// Single-frame .vol4 convenience wrappers for 3-D maps.
void write_network_map(const NetworkMap& map, const std::filesystem::path& path);
NetworkMap read_network_map(const std::filesystem::path& path);

// One column per series, CSV with header row.
void write_series_csv(const std::filesystem::path& path,
                      const std::vector<std::string>& names,
                      const std::vector<TimeSeries>& columns);
std::vector<TimeSeries> read_series_csv(const std::filesystem::path& path,
                                        std::vector<std::string>* names = nullptr);

struct NormalizeResult {
    Volume4D volume;
    // d*h*w flags: voxel series was constant and has been zeroed.
    std::vector<std::uint8_t> constant_voxels;
    std::int64_t constant_count = 0;
};

// Per-voxel temporal z-scoring inside the mask (sigma with N divisor).
// Constant voxels become all-zero and are flagged; out-of-mask voxels are
// zeroed.
NormalizeResult normalize(const Volume4D& vol);

}  // namespace stcnn
