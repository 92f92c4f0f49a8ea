#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "stcnn/volume.hpp"

namespace stcnn {

// Spherical bump max(0, 1 - (d/radius)^2) centred at (cz, cy, cx).
struct Blob {
    double cz = 0, cy = 0, cx = 0;
    double radius = 1;
};

// Task block: frames [onset, onset+duration).
struct Boxcar {
    std::int64_t onset = 0;
    std::int64_t duration = 1;
};

struct PlantedNetwork {
    std::string label;
    std::vector<Blob> blobs;
    std::vector<Boxcar> boxcars;
};

struct SyntheticSpec {
    std::int64_t t = 64, d = 16, h = 16, w = 16;
    std::vector<PlantedNetwork> networks;
    double noise_sigma = 0.2;
    std::uint64_t seed = 0;
    double repetition_time = 1.0;
    // Causal exponential smoothing constant (frames), the cheap hemodynamic
    // stand-in applied to every boxcar course.
    double smoothing_tau = 2.0;

    void validate() const;
};

struct SynthesisResult {
    Volume4D volume;
    std::vector<NetworkMap> maps;      // one per planted network
    std::vector<TimeSeries> courses;   // matching temporal courses
};

// data = sum_g map_g (x) course_g + sigma * N(0,1). Deterministic for a fixed
// seed (the gaussian source is an internal Box-Muller over mt19937_64, so the
// bytes do not depend on the standard library).
SynthesisResult synthesize(const SyntheticSpec& spec);

// Rasterizes blob bumps onto a d*h*w map; overlaps keep the stronger value.
NetworkMap render_blobs(std::int64_t d, std::int64_t h, std::int64_t w,
                        const std::vector<Blob>& blobs);

// Boxcar indicator smoothed by the causal exponential kernel.
TimeSeries render_course(std::int64_t t, const std::vector<Boxcar>& boxcars, double tau);

// Line-oriented spec file, see docs/formats.md.
SyntheticSpec parse_synthetic_spec(const std::filesystem::path& path);
void write_synthetic_spec(const SyntheticSpec& spec, const std::filesystem::path& path);

}  // namespace stcnn
