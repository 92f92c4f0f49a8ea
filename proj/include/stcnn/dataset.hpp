#pragma once

#include <cstdint>
#include <vector>

#include "stcnn/dictionary.hpp"
#include "stcnn/pipeline.hpp"
#include "stcnn/synth.hpp"

namespace stcnn {

// A population of synthetic subjects sharing one target network (anatomically
// consistent up to per-subject jitter) plus per-subject distractor networks
// and noise. Subject i is a pure function of (seed, i).
struct CohortConfig {
    std::int64_t t = 64, d = 16, h = 16, w = 16;
    double noise_sigma = 0.25;
    std::int64_t distractors = 2;
    double target_jitter = 1.0;    // voxels, uniform per axis
    std::int64_t onset_jitter = 2;  // frames
    std::uint64_t seed = 0;
};

// Per-subject planted layout.
SyntheticSpec subject_spec(const CohortConfig& cohort, std::int64_t subject);

// The canonical (jitter-free) target map, the stand-in for a population-level
// network template.
NetworkMap cohort_template(const CohortConfig& cohort);

struct DatasetBuildConfig {
    CohortConfig cohort;
    DictLearnConfig dict;  // label decomposition settings
    BinarizeRule rule;
    // Subjects whose best template overlap stays below this floor get
    // label_ok = false (callers typically exclude them from training).
    double label_floor = 0.02;
    // Scale label maps to unit max-abs; overlap and correlation metrics are
    // scale-free, and unit-scale regression targets condition training.
    bool normalize_label_map = true;
};

// Synthesizes subjects [first, first+count), normalizes them and attaches
// dictionary-learned labels (atom chosen by template overlap) plus the
// planted truth. The target network is index 0 in every subject spec.
std::vector<Subject> build_synthetic_dataset(const DatasetBuildConfig& cfg, std::int64_t first,
                                             std::int64_t count);

// Normalization + planted truth only (no label decomposition); used for
// held-out evaluation subjects.
Subject build_synthetic_subject(const CohortConfig& cohort, std::int64_t subject);

}  // namespace stcnn
