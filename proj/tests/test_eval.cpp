#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "stcnn/dataset.hpp"
#include "stcnn/eval.hpp"

using namespace stcnn;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& leaf) {
    const fs::path dir = fs::temp_directory_path() / "stcnn_eval_tests" / leaf;
    fs::create_directories(dir);
    return dir;
}

NetworkMap make_map(std::vector<double> values) {
    NetworkMap m;
    m.d = 1;
    m.h = 1;
    m.w = static_cast<std::int64_t>(values.size());
    m.values = std::move(values);
    return m;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("jaccard: identical, disjoint and 1/3 overlap") {
    const BinarizeRule nz{BinarizeMode::nonzero, 0.0};
    const NetworkMap a = make_map({1, 1, 0, 0});
    const NetworkMap b = make_map({0, 0, 1, 0});
    const NetworkMap c = make_map({1, 0, 1, 0});
    CHECK(jaccard(a, a, nz).score == doctest::Approx(1.0));
    CHECK(jaccard(a, b, nz).score == doctest::Approx(0.0));
    // intersection {0}, union {0,1,2} -> 1/3
    CHECK(jaccard(a, c, nz).score == doctest::Approx(1.0 / 3.0));
    // symmetry, scale invariance, empty-union flag
    CHECK(jaccard(c, a, nz).score == doctest::Approx(1.0 / 3.0));
    NetworkMap scaled = c;
    for (auto& v : scaled.values) {
        v *= 123.0;
    }
    CHECK(jaccard(a, scaled, nz).score == doctest::Approx(1.0 / 3.0));
    const NetworkMap zero = make_map({0, 0, 0, 0});
    const JaccardResult empty = jaccard(zero, zero, nz);
    CHECK(empty.score == 0.0);
    CHECK(empty.empty_union);
    CHECK_THROWS_AS(jaccard(a, make_map({1, 1}), nz), DimensionError);
}

TEST_CASE("z-threshold binarization keeps strong voxels") {
    // nonzeros: two strong (4, -4), many weak 0.1 -> threshold 2*std keeps the strong
    std::vector<double> values(20, 0.1);
    values[3] = 4.0;
    values[11] = -4.0;
    values[0] = 0.0;
    const auto bin = binarize(values, BinarizeRule{});
    CHECK(bin[3] == 1);
    CHECK(bin[11] == 1);
    CHECK(bin[5] == 0);
    CHECK(bin[0] == 0);
}

TEST_CASE("temporal similarity mirrors the loss with a flipped sign") {
    const TimeSeries x{1, 2, 3, 4};
    const TimeSeries y{1, 3, 2, 4};
    CHECK(temporal_similarity(x, x) == doctest::Approx(1.0).epsilon(1e-9));
    TimeSeries neg = x;
    for (auto& v : neg) {
        v = -v;
    }
    CHECK(temporal_similarity(x, neg) == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(temporal_similarity(x, y) == doctest::Approx(0.8).epsilon(1e-12));
    bool degenerate = false;
    temporal_similarity(TimeSeries{2, 2, 2, 2}, y, &degenerate);
    CHECK(degenerate);
}

TEST_CASE("compare_baseline flags a constructed baseline failure") {
    CohortConfig cohort;
    cohort.t = 16;
    cohort.d = cohort.h = cohort.w = 8;
    cohort.noise_sigma = 0.15;
    cohort.distractors = 1;
    cohort.seed = 55;
    const Subject subject = build_synthetic_subject(cohort, 0);
    const NetworkMap tmpl = cohort_template(cohort);

    // lambda far above the null threshold zeroes every map: guaranteed failure
    DictLearnConfig cfg;
    cfg.k = 3;
    cfg.lambda = 1e7;
    cfg.outer_iters = 2;
    const DictionaryModel broken = dict_learn(subject.data, cfg);

    InferResult out;
    out.map = subject.planted_map;
    out.refined_series = subject.planted_series;
    out.raw_series = subject.planted_series;
    const EvalRow row = compare_baseline(subject.id, out, broken, tmpl,
                                         subject.planted_series, BinarizeRule{}, 0.02,
                                         &subject.planted_map, &subject.planted_series);
    CHECK(row.baseline_failed);
    CHECK(row.jaccard_baseline == 0.0);
    // the ST-CNN side is still scored
    CHECK(row.jaccard_stcnn > 0.0);
    CHECK(row.temporal_pearson == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(row.jaccard_stcnn_planted == doctest::Approx(1.0));
}

TEST_CASE("identical outputs produce identical rows") {
    CohortConfig cohort;
    cohort.t = 16;
    cohort.d = cohort.h = cohort.w = 8;
    cohort.seed = 77;
    cohort.distractors = 1;
    const Subject subject = build_synthetic_subject(cohort, 2);
    const NetworkMap tmpl = cohort_template(cohort);
    DictLearnConfig cfg;
    cfg.k = 3;
    cfg.outer_iters = 4;
    const DictionaryModel model = dict_learn(subject.data, cfg);
    InferResult out;
    out.map = subject.planted_map;
    out.refined_series = subject.planted_series;
    const EvalRow r1 = compare_baseline(subject.id, out, model, tmpl, subject.planted_series);
    const EvalRow r2 = compare_baseline(subject.id, out, model, tmpl, subject.planted_series);
    CHECK(r1.jaccard_stcnn == r2.jaccard_stcnn);
    CHECK(r1.jaccard_baseline == r2.jaccard_baseline);
    CHECK(r1.temporal_pearson == r2.temporal_pearson);
}

TEST_CASE("report aggregates match hand-computed means over 3 subjects") {
    EvalReport report;
    EvalRow a;
    a.subject = "s0";
    a.jaccard_stcnn = 0.6;
    a.jaccard_baseline = 0.2;
    a.temporal_pearson = 0.9;
    a.supervised_sr_jaccard = 0.5;
    EvalRow b = a;
    b.subject = "s1";
    b.jaccard_stcnn = 0.4;
    b.jaccard_baseline = 0.1;
    b.temporal_pearson = 0.7;
    b.baseline_failed = true;
    EvalRow c = a;
    c.subject = "s2";
    c.jaccard_stcnn = 0.5;
    c.jaccard_baseline = 0.0;
    c.temporal_pearson = 0.8;
    c.supervised_sr_jaccard = std::numeric_limits<double>::quiet_NaN();
    report.rows = {a, b, c};
    const EvalAggregates agg = report.aggregates();
    CHECK(agg.jaccard_stcnn == doctest::Approx(0.5));
    CHECK(agg.jaccard_baseline == doctest::Approx(0.1));
    CHECK(agg.temporal_pearson == doctest::Approx(0.8));
    CHECK(agg.supervised_sr_jaccard == doctest::Approx(0.5));  // nan-skipping mean
    CHECK(agg.baseline_failures == 1);
}

TEST_CASE("emit_report writes a fixed schema, is idempotent and round trips") {
    const fs::path dir = temp_dir("report");
    EvalReport report;
    EvalRow r;
    r.subject = "sub000";
    r.jaccard_stcnn = 0.625;
    r.jaccard_baseline = 0.25;
    r.temporal_pearson = 0.875;
    r.supervised_sr_jaccard = 0.75;
    report.rows = {r};

    SubjectArtifacts art;
    art.id = "sub000";
    art.predicted_map = make_map({0, 1, 2, 3});
    art.reference_map = make_map({3, 2, 1, 0});
    art.predicted_series = {1, 2, 3};
    art.reference_series = {3, 2, 1};
    const std::vector<SubjectArtifacts> artifacts{art};

    emit_report(report, dir / "report.csv", artifacts);
    std::ifstream in(dir / "report.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header ==
          "subject,jaccard_stcnn,jaccard_baseline,temporal_pearson,supervised_sr_jaccard,"
          "baseline_failed,jaccard_stcnn_planted,temporal_pearson_planted");
    std::string row_line, mean_line;
    std::getline(in, row_line);
    std::getline(in, mean_line);
    CHECK(row_line.rfind("sub000,0.625,0.25,0.875,0.75,0,", 0) == 0);
    CHECK(mean_line.rfind("mean,0.625,0.25,0.875,0.75,0,", 0) == 0);

    // idempotent: emitting twice leaves identical bytes
    std::ifstream first(dir / "report.csv", std::ios::binary);
    const std::string bytes1{std::istreambuf_iterator<char>(first), {}};
    emit_report(report, dir / "report.csv", artifacts);
    std::ifstream second(dir / "report.csv", std::ios::binary);
    const std::string bytes2{std::istreambuf_iterator<char>(second), {}};
    CHECK(bytes1 == bytes2);

    CHECK(fs::exists(dir / "report_plots" / "sub000_series.csv"));
    CHECK(fs::exists(dir / "report_plots" / "sub000_map_pred.pgm"));
    CHECK(fs::exists(dir / "report_plots" / "sub000_map_ref.pgm"));

    const EvalReport back = read_report_csv(dir / "report.csv");
    REQUIRE(back.rows.size() == 1);
    CHECK(back.rows[0].jaccard_stcnn == 0.625);
    CHECK(back.rows[0].temporal_pearson == 0.875);
    const EvalAggregates agg = back.aggregates();
    CHECK(agg.jaccard_stcnn == 0.625);
}

TEST_CASE("pgm mosaics are valid P5 files") {
    const fs::path dir = temp_dir("pgm");
    NetworkMap map;
    map.d = 3;
    map.h = 4;
    map.w = 5;
    map.values.resize(60);
    for (std::size_t i = 0; i < 60; ++i) {
        map.values[i] = static_cast<double>(i);
    }
    write_map_pgm(map, dir / "m.pgm");
    std::ifstream in(dir / "m.pgm", std::ios::binary);
    std::string magic;
    in >> magic;
    int w = 0, h = 0, maxv = 0;
    in >> w >> h >> maxv;
    CHECK(magic == "P5");
    CHECK(w == 10);  // 2 columns of width-5 tiles
    CHECK(h == 8);   // 2 rows of height-4 tiles
    CHECK(maxv == 255);
}

}  // TEST_SUITE
