#pragma once

#include <cstdint>
#include <vector>

#include "stcnn/metrics.hpp"
#include "stcnn/volume.hpp"

namespace stcnn {

struct DictLearnConfig {
    std::int64_t k = 20;
    double lambda = 0.15;
    std::int64_t outer_iters = 30;
    std::int64_t max_code_iters = 400;  // ISTA budget per voxel per round
    double kkt_tol = 1e-6;
    std::uint64_t seed = 0;
    int threads = 1;  // voxel coding fans out; results are thread-count independent
};

struct SparseCodeStats {
    bool converged = true;   // every voxel reached the KKT tolerance
    double max_kkt = 0.0;
    std::int64_t voxels_unconverged = 0;
};

// X ~ D * A with unit-norm temporal atoms D and L1-sparse spatial
// coefficients A, fitted by alternating ISTA coding and per-atom sphere
// updates on ||X - D*A||_F^2 + lambda*||A||_1.
struct DictionaryModel {
    std::vector<TimeSeries> atoms;         // K atoms, each length T, unit norm
    std::vector<NetworkMap> coefficients;  // K maps (zeros outside the mask)
    double lambda = 0.0;
    std::int64_t k = 0;
    std::vector<double> objective_trace;   // value after each outer iteration
    SparseCodeStats final_code_stats;
};

struct TemplateMatch {
    std::int64_t best_index = 0;
    double jaccard = 0.0;
    std::vector<double> all_scores;
    bool no_match = false;  // every score was zero; best_index is still the argmax
};

DictionaryModel dict_learn(const Volume4D& data, const DictLearnConfig& cfg);

// Lasso coding of every in-mask voxel series against fixed unit-norm atoms.
// Non-convergence within the iteration budget is reported through stats and
// the best iterate is returned.
std::vector<NetworkMap> sparse_code(const Volume4D& data, const std::vector<TimeSeries>& atoms,
                                    double lambda, SparseCodeStats* stats = nullptr,
                                    int threads = 1, std::int64_t max_iters = 1000,
                                    double kkt_tol = 1e-6);

// Binarizes each coefficient map and the template, scores Jaccard overlap and
// returns the argmax (lowest index on ties). Stands in for the manual
// selection step.
TemplateMatch select_target(const DictionaryModel& model, const NetworkMap& tmpl,
                            const BinarizeRule& rule = {});

// As dict_learn, but atoms[0..fixed_atoms.size()) are pinned to the given
// courses (centered and unit-normalized internally, matching the z-scored
// coding space) and never updated. The coefficient map of a fixed atom is the
// spatial network reconstructed from its course.
DictionaryModel supervised_dict_learn(const Volume4D& data,
                                      const std::vector<TimeSeries>& fixed_atoms,
                                      const DictLearnConfig& cfg);

// One row per atom, comma-separated values.
void write_atoms_csv(const std::vector<TimeSeries>& atoms, const std::filesystem::path& path);
std::vector<TimeSeries> read_atoms_csv(const std::filesystem::path& path);

}  // namespace stcnn
