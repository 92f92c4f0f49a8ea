#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stcnn/dictionary.hpp"
#include "stcnn/metrics.hpp"
#include "stcnn/pipeline.hpp"

namespace stcnn {

struct EvalRow {
    std::string subject;
    double jaccard_stcnn = 0.0;     // predicted map vs template
    double jaccard_baseline = 0.0;  // best baseline map vs template
    double temporal_pearson = 0.0;  // refined series vs ground-truth course
    double supervised_sr_jaccard = std::numeric_limits<double>::quiet_NaN();
    bool baseline_failed = false;
    // only meaningful on synthetic data
    double jaccard_stcnn_planted = std::numeric_limits<double>::quiet_NaN();
    double temporal_pearson_planted = std::numeric_limits<double>::quiet_NaN();
};

struct EvalAggregates {
    double jaccard_stcnn = 0.0;
    double jaccard_baseline = 0.0;
    double temporal_pearson = 0.0;
    double supervised_sr_jaccard = 0.0;
    double jaccard_stcnn_planted = 0.0;
    double temporal_pearson_planted = 0.0;
    std::int64_t baseline_failures = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    // Means over finite entries; always recomputable from rows.
    EvalAggregates aggregates() const;
};

// Pearson r per the temporal-loss formula, without the negation.
double temporal_similarity(const TimeSeries& pred, const TimeSeries& truth,
                           bool* degenerate = nullptr);

// Scores one subject's ST-CNN output against the dictionary baseline. The
// baseline fails the subject when no atom overlaps the template above
// failure_floor. truth_series is the course the temporal output is graded
// against (the selected baseline atom on real data, the planted course on
// synthetic data when no baseline atom matches).
EvalRow compare_baseline(const std::string& subject_id, const InferResult& stcnn_out,
                         const DictionaryModel& baseline, const NetworkMap& tmpl,
                         const TimeSeries& truth_series, const BinarizeRule& rule = {},
                         double failure_floor = 0.02, const NetworkMap* planted_map = nullptr,
                         const TimeSeries* planted_series = nullptr);

// Supervised-decomposition consistency check: rebuilds the spatial map from
// the ST-CNN temporal output (pinned as a dictionary atom) and scores its
// overlap with the ST-CNN spatial output.
double validate_supervised(const InferResult& stcnn_out, const Volume4D& data,
                           const DictLearnConfig& cfg, const BinarizeRule& rule = {});

struct SubjectArtifacts {
    std::string id;
    NetworkMap predicted_map;
    NetworkMap reference_map;
    TimeSeries predicted_series;
    TimeSeries reference_series;
};

// Writes the report CSV (one row per subject plus a trailing mean row) and,
// per artifact, a series CSV and PGM slice mosaics of both maps into
// <csv stem>_plots/. Idempotent; re-verifies the aggregates before writing.
void emit_report(const EvalReport& report, const std::filesystem::path& csv_path,
                 std::span<const SubjectArtifacts> artifacts = {});

EvalReport read_report_csv(const std::filesystem::path& csv_path);

// 8-bit P5 mosaic of axial slices, values min-max scaled.
void write_map_pgm(const NetworkMap& map, const std::filesystem::path& path);

}  // namespace stcnn
