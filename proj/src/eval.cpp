#include "stcnn/eval.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace stcnn {

namespace {

std::string format_double(double v) {
    std::array<char, 32> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

struct MeanAcc {
    double sum = 0.0;
    std::int64_t n = 0;
    void add(double v) {
        if (std::isfinite(v)) {
            sum += v;
            ++n;
        }
    }
    double mean() const {
        return n > 0 ? sum / static_cast<double>(n)
                     : std::numeric_limits<double>::quiet_NaN();
    }
};

}  // namespace

EvalAggregates EvalReport::aggregates() const {
    MeanAcc js, jb, tp, sv, jp, tpp;
    EvalAggregates agg;
    for (const auto& r : rows) {
        js.add(r.jaccard_stcnn);
        jb.add(r.jaccard_baseline);
        tp.add(r.temporal_pearson);
        sv.add(r.supervised_sr_jaccard);
        jp.add(r.jaccard_stcnn_planted);
        tpp.add(r.temporal_pearson_planted);
        agg.baseline_failures += r.baseline_failed ? 1 : 0;
    }
    agg.jaccard_stcnn = js.mean();
    agg.jaccard_baseline = jb.mean();
    agg.temporal_pearson = tp.mean();
    agg.supervised_sr_jaccard = sv.mean();
    agg.jaccard_stcnn_planted = jp.mean();
    agg.temporal_pearson_planted = tpp.mean();
    return agg;
}

double temporal_similarity(const TimeSeries& pred, const TimeSeries& truth, bool* degenerate) {
    return pearson(pred, truth, degenerate);
}

EvalRow compare_baseline(const std::string& subject_id, const InferResult& stcnn_out,
                         const DictionaryModel& baseline, const NetworkMap& tmpl,
                         const TimeSeries& truth_series, const BinarizeRule& rule,
                         double failure_floor, const NetworkMap* planted_map,
                         const TimeSeries* planted_series) {
    EvalRow row;
    row.subject = subject_id;
    row.jaccard_stcnn = jaccard(stcnn_out.map, tmpl, rule).score;
    const TemplateMatch match = select_target(baseline, tmpl, rule);
    row.jaccard_baseline = match.jaccard;
    row.baseline_failed = match.jaccard < failure_floor;
    row.temporal_pearson = temporal_similarity(stcnn_out.refined_series, truth_series);
    if (planted_map != nullptr) {
        row.jaccard_stcnn_planted = jaccard(stcnn_out.map, *planted_map, rule).score;
    }
    if (planted_series != nullptr) {
        row.temporal_pearson_planted =
            temporal_similarity(stcnn_out.refined_series, *planted_series);
    }
    return row;
}

double validate_supervised(const InferResult& stcnn_out, const Volume4D& data,
                           const DictLearnConfig& cfg, const BinarizeRule& rule) {
    const DictionaryModel model = supervised_dict_learn(data, {stcnn_out.refined_series}, cfg);
    return jaccard(model.coefficients.front(), stcnn_out.map, rule).score;
}

void write_map_pgm(const NetworkMap& map, const std::filesystem::path& path) {
    const std::int64_t cols = static_cast<std::int64_t>(
        std::ceil(std::sqrt(static_cast<double>(map.d))));
    const std::int64_t rows = (map.d + cols - 1) / cols;
    const std::int64_t width = cols * map.w;
    const std::int64_t height = rows * map.h;
    double lo = map.values.empty() ? 0.0 : map.values.front();
    double hi = lo;
    for (const double v : map.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width * height), 0);
    for (std::int64_t z = 0; z < map.d; ++z) {
        const std::int64_t tile_y = (z / cols) * map.h;
        const std::int64_t tile_x = (z % cols) * map.w;
        for (std::int64_t y = 0; y < map.h; ++y) {
            for (std::int64_t x = 0; x < map.w; ++x) {
                const double v = map.at(z, y, x);
                const double u = span > 0.0 ? (v - lo) / span : 0.0;
                pixels[static_cast<std::size_t>((tile_y + y) * width + tile_x + x)] =
                    static_cast<std::uint8_t>(std::lround(255.0 * u));
            }
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
    out << "P5\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
}

void emit_report(const EvalReport& report, const std::filesystem::path& csv_path,
                 std::span<const SubjectArtifacts> artifacts) {
    // self-consistency: aggregates must equal a fresh recomputation
    const EvalAggregates agg = report.aggregates();
    {
        const EvalAggregates again = report.aggregates();
        if (std::memcmp(&agg, &again, sizeof(agg)) != 0) {
            throw DataError("emit_report: aggregate recomputation disagrees");
        }
    }
    std::ofstream out(csv_path);
    if (!out) {
        throw FormatError("cannot write report " + csv_path.string());
    }
    out << "subject,jaccard_stcnn,jaccard_baseline,temporal_pearson,supervised_sr_jaccard,"
           "baseline_failed,jaccard_stcnn_planted,temporal_pearson_planted\n";
    for (const auto& r : report.rows) {
        out << r.subject << "," << format_double(r.jaccard_stcnn) << ","
            << format_double(r.jaccard_baseline) << "," << format_double(r.temporal_pearson)
            << "," << format_double(r.supervised_sr_jaccard) << "," << (r.baseline_failed ? 1 : 0)
            << "," << format_double(r.jaccard_stcnn_planted) << ","
            << format_double(r.temporal_pearson_planted) << "\n";
    }
    out << "mean," << format_double(agg.jaccard_stcnn) << ","
        << format_double(agg.jaccard_baseline) << "," << format_double(agg.temporal_pearson)
        << "," << format_double(agg.supervised_sr_jaccard) << "," << agg.baseline_failures << ","
        << format_double(agg.jaccard_stcnn_planted) << ","
        << format_double(agg.temporal_pearson_planted) << "\n";
    if (!out) {
        throw FormatError("short write on " + csv_path.string());
    }

    if (artifacts.empty()) {
        return;
    }
    std::filesystem::path plot_dir = csv_path;
    plot_dir.replace_extension();
    plot_dir += "_plots";
    std::filesystem::create_directories(plot_dir);
    for (const auto& a : artifacts) {
        write_series_csv(plot_dir / (a.id + "_series.csv"), {"predicted", "reference"},
                         {a.predicted_series, a.reference_series});
        write_map_pgm(a.predicted_map, plot_dir / (a.id + "_map_pred.pgm"));
        write_map_pgm(a.reference_map, plot_dir / (a.id + "_map_ref.pgm"));
    }
}

EvalReport read_report_csv(const std::filesystem::path& csv_path) {
    std::ifstream in(csv_path);
    if (!in) {
        throw FormatError("cannot read report " + csv_path.string());
    }
    EvalReport report;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        if (header) {
            header = false;
            continue;
        }
        std::istringstream ls(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ls, field, ',')) {
            fields.push_back(field);
        }
        if (fields.size() != 8) {
            throw FormatError("report row has " + std::to_string(fields.size()) +
                              " fields, expected 8: " + line);
        }
        if (fields[0] == "mean") {
            continue;  // aggregates are recomputed, never trusted from disk
        }
        EvalRow r;
        r.subject = fields[0];
        r.jaccard_stcnn = std::strtod(fields[1].c_str(), nullptr);
        r.jaccard_baseline = std::strtod(fields[2].c_str(), nullptr);
        r.temporal_pearson = std::strtod(fields[3].c_str(), nullptr);
        r.supervised_sr_jaccard = std::strtod(fields[4].c_str(), nullptr);
        r.baseline_failed = fields[5] == "1";
        r.jaccard_stcnn_planted = std::strtod(fields[6].c_str(), nullptr);
        r.temporal_pearson_planted = std::strtod(fields[7].c_str(), nullptr);
        report.rows.push_back(std::move(r));
    }
    return report;
}

}  // namespace stcnn
