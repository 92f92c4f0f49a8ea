// stcnn: synth | dictlearn | train | infer | eval | gradcheck
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "stcnn/dataset.hpp"
#include "stcnn/dictionary.hpp"
#include "stcnn/eval.hpp"
#include "stcnn/gradcheck.hpp"
#include "stcnn/pipeline.hpp"
#include "stcnn/synth.hpp"

namespace fs = std::filesystem;
using namespace stcnn;

namespace {

// plain-text key-value config (one `key value` pair per line, # comments)
std::map<std::string, std::string> read_kv_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot read config " + path.string());
    }
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key) || key.empty() || key[0] == '#') {
            continue;
        }
        std::string value;
        std::getline(ls >> std::ws, value);
        while (!value.empty() && (value.back() == ' ' || value.back() == '\r')) {
            value.pop_back();
        }
        kv[key] = value;
    }
    return kv;
}

template <class T>
T kv_get(const std::map<std::string, std::string>& kv, const std::string& key, T fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) {
        return fallback;
    }
    if constexpr (std::is_same_v<T, bool>) {
        return it->second == "1" || it->second == "true" || it->second == "yes";
    } else if constexpr (std::is_integral_v<T>) {
        return static_cast<T>(std::stoll(it->second));
    } else if constexpr (std::is_floating_point_v<T>) {
        return static_cast<T>(std::stod(it->second));
    } else {
        return it->second;
    }
}

struct LabeledVolume {
    std::string id;
    Volume4D data;
    NetworkMap label_map;
    TimeSeries label_series;
};

std::vector<fs::path> sorted_vol4_files(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".vol4") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

int cmd_synth(const fs::path& spec_path, const fs::path& out_dir) {
    const SyntheticSpec spec = parse_synthetic_spec(spec_path);
    const SynthesisResult res = synthesize(spec);
    fs::create_directories(out_dir);
    write_volume4d(res.volume, out_dir / "data.vol4");
    std::vector<std::string> names;
    for (std::size_t g = 0; g < res.maps.size(); ++g) {
        const std::string label =
            res.maps[g].label.empty() ? "network" + std::to_string(g) : res.maps[g].label;
        write_network_map(res.maps[g], out_dir / ("planted_" + label + ".vol4"));
        names.push_back(label);
    }
    write_series_csv(out_dir / "planted_courses.csv", names, res.courses);
    std::cout << "wrote " << (out_dir / "data.vol4").string() << " (" << spec.t << "x" << spec.d
              << "x" << spec.h << "x" << spec.w << "), " << res.maps.size()
              << " planted networks\n";
    return 0;
}

int cmd_dictlearn(const fs::path& data_path, const fs::path& template_path, std::int64_t k,
                  double lambda, std::int64_t iters, std::uint64_t seed, int threads,
                  const fs::path& out_dir) {
    const Volume4D raw = read_volume4d(data_path);
    const Volume4D data = normalize(raw).volume;
    const NetworkMap tmpl = read_network_map(template_path);
    DictLearnConfig cfg;
    cfg.k = k;
    cfg.lambda = lambda;
    cfg.outer_iters = iters;
    cfg.seed = seed;
    cfg.threads = threads;
    const DictionaryModel model = dict_learn(data, cfg);
    const TemplateMatch match = select_target(model, tmpl);

    fs::create_directories(out_dir);
    write_atoms_csv(model.atoms, out_dir / "atoms.csv");
    for (std::int64_t ki = 0; ki < model.k; ++ki) {
        char name[32];
        std::snprintf(name, sizeof(name), "atom%02lld.vol4", static_cast<long long>(ki));
        write_network_map(model.coefficients[static_cast<std::size_t>(ki)], out_dir / name);
    }
    {
        std::ofstream rep(out_dir / "match.txt");
        rep << "best_index " << match.best_index << "\n";
        rep << "jaccard " << match.jaccard << "\n";
        rep << "no_match " << (match.no_match ? 1 : 0) << "\n";
        for (std::size_t i = 0; i < match.all_scores.size(); ++i) {
            rep << "score_" << i << " " << match.all_scores[i] << "\n";
        }
        rep << "objective_final " << model.objective_trace.back() << "\n";
        rep << "code_converged " << (model.final_code_stats.converged ? 1 : 0) << "\n";
    }
    std::cout << "selected atom " << match.best_index << " (jaccard " << match.jaccard << ")"
              << (match.no_match ? " [no-match warning]" : "") << "\n";
    return 0;
}

std::vector<Subject> load_labeled_subjects(const fs::path& data_dir, const fs::path& labels_dir,
                                           bool do_normalize) {
    std::vector<Subject> subjects;
    for (const auto& file : sorted_vol4_files(data_dir)) {
        Subject s;
        s.id = file.stem().string();
        const Volume4D raw = read_volume4d(file);
        s.data = do_normalize ? normalize(raw).volume : raw;
        const fs::path map_path = labels_dir / (s.id + "_map.vol4");
        const fs::path series_path = labels_dir / (s.id + "_series.csv");
        if (!fs::exists(map_path) || !fs::exists(series_path)) {
            throw FormatError("labels for subject '" + s.id + "' not found (" +
                              map_path.string() + ", " + series_path.string() + ")");
        }
        s.label_map = read_network_map(map_path);
        const auto cols = read_series_csv(series_path);
        if (cols.empty()) {
            throw FormatError("empty label series " + series_path.string());
        }
        s.label_series = cols.front();
        subjects.push_back(std::move(s));
    }
    if (subjects.empty()) {
        throw ConfigError("no .vol4 subjects under " + data_dir.string());
    }
    return subjects;
}

int cmd_train(const fs::path& data_dir, const fs::path& labels_dir, const fs::path& config_path,
              const fs::path& out_dir, int stage, bool do_normalize) {
    const auto kv = config_path.empty() ? std::map<std::string, std::string>{}
                                        : read_kv_config(config_path);
    TrainConfig cfg;
    cfg.stage1_steps = kv_get(kv, "stage1_steps", cfg.stage1_steps);
    cfg.stage2_steps = kv_get(kv, "stage2_steps", cfg.stage2_steps);
    cfg.stage3_steps = kv_get(kv, "stage3_steps", cfg.stage3_steps);
    cfg.stage1_lr = kv_get(kv, "stage1_lr", cfg.stage1_lr);
    cfg.stage2_lr = kv_get(kv, "stage2_lr", cfg.stage2_lr);
    cfg.stage3_lr = kv_get(kv, "stage3_lr", cfg.stage3_lr);
    cfg.w_spatial = kv_get(kv, "w_spatial", cfg.w_spatial);
    cfg.w_temporal = kv_get(kv, "w_temporal", cfg.w_temporal);
    cfg.seed = kv_get(kv, "seed", cfg.seed);
    cfg.checkpoint_every = kv_get(kv, "checkpoint_every", cfg.checkpoint_every);
    cfg.record_walltime = kv_get(kv, "record_walltime", cfg.record_walltime);

    const auto subjects = load_labeled_subjects(data_dir, labels_dir, do_normalize);
    fs::create_directories(out_dir);

    UNetConfig ucfg;
    ucfg.in_channels = subjects.front().data.t;
    ucfg.levels = kv_get<std::int64_t>(kv, "unet_levels", 3);
    ucfg.base_channels = kv_get<std::int64_t>(kv, "unet_base_channels", 8);
    ucfg.kernel = kv_get<std::int64_t>(kv, "unet_kernel", 3);
    ucfg.dtype = kv_get<std::string>(kv, "dtype", "f64") == "f32" ? DType::f32 : DType::f64;
    ucfg.seed = cfg.seed;
    CAEConfig ccfg;
    ccfg.dtype = ucfg.dtype;
    ccfg.seed = cfg.seed + 1;

    UNetModel unet = UNetModel::init(ucfg);
    CAEModel cae = CAEModel::init(ccfg);

    const bool all = stage == 0;
    if (!all) {
        // resume from the previous stage's final checkpoint
        if (stage >= 2) {
            const fs::path prev = out_dir / ("stage" + std::to_string(stage - 1) + "_final.ckpt");
            const Checkpoint ckpt = load_checkpoint(prev);
            load_state(unet.named_parameters(), ckpt, "unet.");
            if (stage == 3) {
                load_state(cae.named_parameters(), ckpt, "cae.");
            }
        }
    }

    TrainTrace combined;
    combined.w_spatial = cfg.w_spatial;
    combined.w_temporal = cfg.w_temporal;
    auto append = [&](const TrainTrace& t) {
        combined.rows.insert(combined.rows.end(), t.rows.begin(), t.rows.end());
    };
    if (all || stage == 1) {
        std::cout << "stage 1: " << cfg.stage1_steps << " steps over " << subjects.size()
                  << " subjects\n";
        append(train_stage1(unet, subjects, cfg, out_dir));
    }
    if (all || stage == 2) {
        std::cout << "stage 2: " << cfg.stage2_steps << " steps\n";
        append(train_stage2(cae, unet, subjects, cfg, out_dir));
    }
    if (all || stage == 3) {
        std::cout << "stage 3: " << cfg.stage3_steps << " steps (weights " << cfg.w_spatial
                  << ":" << cfg.w_temporal << ")\n";
        append(train_stage3(unet, cae, subjects, cfg, out_dir));
    }
    write_trace_csv(combined, out_dir / "trace.csv");
    save_checkpoint(make_checkpoint(&unet, &cae,
                                    {{"stage", all ? "3" : std::to_string(stage)},
                                     {"seed", std::to_string(cfg.seed)}}),
                    out_dir / "final.ckpt");
    std::cout << "wrote " << (out_dir / "trace.csv").string() << " and "
              << (out_dir / "final.ckpt").string() << "\n";
    return 0;
}

int cmd_infer(const fs::path& ckpt_path, const fs::path& data_path, const fs::path& out_dir,
              bool do_normalize) {
    fs::path file = ckpt_path;
    if (fs::is_directory(file)) {
        file = fs::exists(file / "final.ckpt") ? file / "final.ckpt"
                                               : file / "stage3_final.ckpt";
    }
    const Checkpoint ckpt = load_checkpoint(file);
    UNetModel unet = UNetModel::init(unet_config_from_meta(ckpt));
    CAEModel cae = CAEModel::init(CAEConfig{.dtype = unet.config().dtype});
    load_state(unet.named_parameters(), ckpt, "unet.");
    load_state(cae.named_parameters(), ckpt, "cae.");

    const Volume4D raw = read_volume4d(data_path);
    const Volume4D data = do_normalize ? normalize(raw).volume : raw;
    const InferResult res = infer(unet, cae, data);

    fs::create_directories(out_dir);
    const std::string id = data_path.stem().string();
    NetworkMap map = res.map;
    map.label = id + "_predicted";
    write_network_map(map, out_dir / (id + "_map.vol4"));
    write_series_csv(out_dir / (id + "_series.csv"), {"refined", "raw"},
                     {res.refined_series, res.raw_series});
    std::cout << "wrote " << (out_dir / (id + "_map.vol4")).string() << " and "
              << (out_dir / (id + "_series.csv")).string() << "\n";
    return 0;
}

int cmd_eval(const fs::path& pred_dir, const fs::path& truth_dir, const fs::path& template_path,
             const fs::path& out_csv, const fs::path& data_dir, std::int64_t k, double lambda,
             int threads) {
    const NetworkMap tmpl = read_network_map(template_path);
    EvalReport report;
    std::vector<SubjectArtifacts> artifacts;
    for (const auto& file : sorted_vol4_files(pred_dir)) {
        const std::string name = file.stem().string();
        if (name.size() < 4 || name.substr(name.size() - 4) != "_map") {
            continue;
        }
        const std::string id = name.substr(0, name.size() - 4);
        InferResult out;
        out.map = read_network_map(file);
        const auto pred_series = read_series_csv(pred_dir / (id + "_series.csv"));
        out.refined_series = pred_series.front();
        const NetworkMap truth_map = read_network_map(truth_dir / (id + "_map.vol4"));
        const auto truth_series_cols = read_series_csv(truth_dir / (id + "_series.csv"));
        const TimeSeries& truth_series = truth_series_cols.front();

        EvalRow row;
        row.subject = id;
        row.jaccard_stcnn = jaccard(out.map, tmpl).score;
        row.temporal_pearson = temporal_similarity(out.refined_series, truth_series);
        row.jaccard_stcnn_planted = jaccard(out.map, truth_map).score;
        row.temporal_pearson_planted = row.temporal_pearson;
        if (!data_dir.empty()) {
            const Volume4D data = normalize(read_volume4d(data_dir / (id + ".vol4"))).volume;
            DictLearnConfig cfg;
            cfg.k = k;
            cfg.lambda = lambda;
            cfg.threads = threads;
            const DictionaryModel baseline = dict_learn(data, cfg);
            const TemplateMatch match = select_target(baseline, tmpl);
            row.jaccard_baseline = match.jaccard;
            row.baseline_failed = match.jaccard < 0.02;
            DictLearnConfig sup = cfg;
            sup.k = std::max<std::int64_t>(4, k / 4);
            row.supervised_sr_jaccard = validate_supervised(out, data, sup);
        } else {
            row.jaccard_baseline = std::numeric_limits<double>::quiet_NaN();
            row.supervised_sr_jaccard = std::numeric_limits<double>::quiet_NaN();
        }
        report.rows.push_back(row);

        SubjectArtifacts art;
        art.id = id;
        art.predicted_map = out.map;
        art.reference_map = truth_map;
        art.predicted_series = out.refined_series;
        art.reference_series = truth_series;
        artifacts.push_back(std::move(art));
    }
    if (report.rows.empty()) {
        throw ConfigError("no *_map.vol4 predictions under " + pred_dir.string());
    }
    emit_report(report, out_csv, artifacts);
    const EvalAggregates agg = report.aggregates();
    std::cout << "wrote " << out_csv.string() << " (" << report.rows.size()
              << " subjects, mean jaccard " << agg.jaccard_stcnn << ", mean pearson "
              << agg.temporal_pearson << ")\n";
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    const auto checks = run_gradcheck_suite(seed);
    bool all_ok = true;
    for (const auto& c : checks) {
        std::cout << (c.ok ? "[ok]   " : "[FAIL] ") << c.name << "  (" << c.checked
                  << " elements, max rel err " << c.max_rel_err << ")\n";
        all_ok = all_ok && c.ok;
    }
    std::cout << (all_ok ? "gradcheck passed" : "gradcheck FAILED") << "\n";
    return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ST-CNN: joint spatio-temporal functional network identification"};
    app.require_subcommand(1);

    std::string spec_path, out_dir, data_path, template_path, labels_dir, config_path;
    std::string ckpt_path, pred_dir, truth_dir, out_csv, eval_data_dir;
    std::int64_t k = 20, iters = 30;
    double lambda = 0.15;
    std::uint64_t seed = 0;
    int threads = 2, stage = 0;
    bool no_normalize = false;

    auto* synth = app.add_subcommand("synth", "generate a synthetic 4D dataset");
    synth->add_option("--spec", spec_path, "synthetic spec file")->required();
    synth->add_option("--out", out_dir, "output directory")->required();

    auto* dict = app.add_subcommand("dictlearn", "sparse dictionary decomposition");
    dict->add_option("--data", data_path, ".vol4 volume")->required();
    dict->add_option("--template", template_path, "target template (single-frame .vol4)")
        ->required();
    dict->add_option("--k", k, "atom count");
    dict->add_option("--lambda", lambda, "sparsity weight");
    dict->add_option("--iters", iters, "outer iterations");
    dict->add_option("--seed", seed, "rng seed");
    dict->add_option("--threads", threads, "coding worker threads");
    dict->add_option("--out", out_dir, "output directory")->required();

    auto* train = app.add_subcommand("train", "three-stage ST-CNN training");
    train->add_option("--data", data_path, "directory of subject .vol4 files")->required();
    train->add_option("--labels", labels_dir, "directory of <id>_map.vol4 / <id>_series.csv")
        ->required();
    train->add_option("--config", config_path, "key-value training config");
    train->add_option("--out", out_dir, "output directory")->required();
    train->add_option("--stage", stage, "run a single stage (1..3) instead of all");
    train->add_flag("--no-normalize", no_normalize, "skip per-voxel z-scoring of the input");

    auto* infer_cmd = app.add_subcommand("infer", "run a trained model on one subject");
    infer_cmd->add_option("--ckpt", ckpt_path, "checkpoint file or training output dir")
        ->required();
    infer_cmd->add_option("--data", data_path, ".vol4 volume")->required();
    infer_cmd->add_option("--out", out_dir, "output directory")->required();
    infer_cmd->add_flag("--no-normalize", no_normalize,
                        "skip per-voxel z-scoring of the input");

    auto* eval_cmd = app.add_subcommand("eval", "score predictions against references");
    eval_cmd->add_option("--pred", pred_dir, "directory of <id>_map.vol4 / <id>_series.csv")
        ->required();
    eval_cmd->add_option("--truth", truth_dir, "directory of reference maps/series")->required();
    eval_cmd->add_option("--template", template_path, "target template")->required();
    eval_cmd->add_option("--out", out_csv, "report CSV path")->required();
    eval_cmd->add_option("--data", eval_data_dir,
                         "subject .vol4 directory; enables baseline + supervised columns");
    eval_cmd->add_option("--k", k, "baseline atom count");
    eval_cmd->add_option("--lambda", lambda, "baseline sparsity weight");
    eval_cmd->add_option("--threads", threads, "coding worker threads");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gradcheck->add_option("--seed", seed, "rng seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            return cmd_synth(spec_path, out_dir);
        }
        if (dict->parsed()) {
            return cmd_dictlearn(data_path, template_path, k, lambda, iters, seed, threads,
                                 out_dir);
        }
        if (train->parsed()) {
            return cmd_train(data_path, labels_dir, config_path, out_dir, stage, !no_normalize);
        }
        if (infer_cmd->parsed()) {
            return cmd_infer(ckpt_path, data_path, out_dir, !no_normalize);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(pred_dir, truth_dir, template_path, out_csv, eval_data_dir, k,
                            lambda, threads);
        }
        if (gradcheck->parsed()) {
            return cmd_gradcheck(seed);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
