#include "stcnn/pipeline.hpp"

#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "stcnn/optim.hpp"

namespace stcnn {

namespace {

using Clock = std::chrono::steady_clock;

std::string format_double(double v) {
    std::array<char, 32> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

std::int64_t elapsed_ms(Clock::time_point from) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - from).count();
}

void maybe_checkpoint(const std::filesystem::path& dir, int stage, std::int64_t step,
                      std::int64_t cadence, std::int64_t total, const UNetModel* unet,
                      const CAEModel* cae, const TrainConfig& cfg) {
    if (dir.empty()) {
        return;
    }
    const bool boundary = step == total;
    if (!boundary && (cadence <= 0 || step % cadence != 0)) {
        return;
    }
    std::map<std::string, std::string> meta{
        {"stage", std::to_string(stage)},
        {"step", std::to_string(step)},
        {"w_spatial", format_double(cfg.w_spatial)},
        {"w_temporal", format_double(cfg.w_temporal)},
        {"seed", std::to_string(cfg.seed)},
    };
    const Checkpoint ckpt = make_checkpoint(unet, cae, std::move(meta));
    char name[64];
    if (boundary) {
        std::snprintf(name, sizeof(name), "stage%d_final.ckpt", stage);
    } else {
        std::snprintf(name, sizeof(name), "stage%d_step%06lld.ckpt", stage,
                      static_cast<long long>(step));
    }
    save_checkpoint(ckpt, dir / name);
}

bool is_constant_series(const std::vector<double>& v) {
    for (const double e : v) {
        if (e != v.front()) {
            return false;
        }
    }
    return true;
}

std::vector<Tensor> cached_inputs(std::span<const Subject> data, DType dtype) {
    if (data.empty()) {
        throw ConfigError("training requires at least one subject");
    }
    std::vector<Tensor> inputs;
    inputs.reserve(data.size());
    for (const auto& s : data) {
        inputs.push_back(volume_to_tensor(s.data, dtype));
    }
    return inputs;
}

}  // namespace

void TrainConfig::validate() const {
    if (stage1_steps < 0 || stage2_steps < 0 || stage3_steps < 0) {
        throw ConfigError("TrainConfig: step counts must be >= 0");
    }
    if (w_spatial <= 0.0 || w_temporal < 0.0) {
        throw ConfigError("TrainConfig: loss weights must be positive (w_temporal may be 0)");
    }
    if (stage1_lr <= 0.0 || stage2_lr <= 0.0 || stage3_lr <= 0.0) {
        throw ConfigError("TrainConfig: learning rates must be positive");
    }
}

Tensor joint_operator(const Tensor& volume, const Tensor& map) {
    if (volume.rank() != 4) {
        throw DimensionError("joint_operator: volume must be [T,D,H,W], got " +
                             shape_str(volume.shape()));
    }
    Tensor kernel = map;
    if (map.rank() == 4 && map.shape()[0] == 1) {
        kernel = reshape(map, {map.shape()[1], map.shape()[2], map.shape()[3]});
    } else if (map.rank() != 3) {
        throw DimensionError("joint_operator: map must be [D,H,W] or [1,D,H,W], got " +
                             shape_str(map.shape()));
    }
    for (int a = 0; a < 3; ++a) {
        if (kernel.shape()[static_cast<std::size_t>(a)] !=
            volume.shape()[static_cast<std::size_t>(a + 1)]) {
            static const char* names[3] = {"D", "H", "W"};
            throw DimensionError(std::string("joint_operator: map extent ") +
                                 std::to_string(kernel.shape()[static_cast<std::size_t>(a)]) +
                                 " != frame extent " +
                                 std::to_string(volume.shape()[static_cast<std::size_t>(a + 1)]) +
                                 " on axis " + names[a]);
        }
    }
    return frame_inner_products(volume, kernel);
}

TimeSeries joint_operator(const Volume4D& vol, const NetworkMap& map) {
    const Tensor out = joint_operator(volume_to_tensor(vol), map_to_tensor(map));
    return out.values();
}

ForwardFull forward_full(const UNetModel& unet, const CAEModel& cae, const Tensor& volume) {
    ForwardFull out;
    out.map = unet.forward(volume);
    out.raw_series = joint_operator(volume, out.map);
    out.refined_series = cae.forward(reshape(out.raw_series, {1, out.raw_series.numel()}));
    out.refined_constant = is_constant_series(out.refined_series.values());
    return out;
}

TrainTrace train_stage1(UNetModel& unet, std::span<const Subject> data, const TrainConfig& cfg,
                        const std::filesystem::path& checkpoint_dir) {
    cfg.validate();
    TrainTrace trace;
    trace.w_spatial = cfg.w_spatial;
    trace.w_temporal = cfg.w_temporal;
    const DType dtype = unet.config().dtype;
    const auto inputs = cached_inputs(data, dtype);
    std::vector<Tensor> labels;
    labels.reserve(data.size());
    for (const auto& s : data) {
        labels.push_back(map_to_tensor(s.label_map, dtype));
    }
    Adam opt(unet.parameters(), AdamConfig{.lr = cfg.stage1_lr});
    const auto t0 = Clock::now();
    for (std::int64_t step = 1; step <= cfg.stage1_steps; ++step) {
        const std::size_t si = static_cast<std::size_t>((step - 1) %
                                                        static_cast<std::int64_t>(data.size()));
        opt.zero_grad();
        Tensor pred = unet.forward(inputs[si]);
        Tensor loss = spatial_loss(pred, labels[si]);
        const double lv = loss.item();
        if (!std::isfinite(lv)) {
            write_trace_csv(trace, checkpoint_dir.empty()
                                       ? std::filesystem::path("stage1_abort_trace.csv")
                                       : checkpoint_dir / "stage1_abort_trace.csv");
            throw ConvergenceError("stage 1: non-finite spatial loss at step " +
                                   std::to_string(step));
        }
        loss.backward();
        opt.step();
        trace.rows.push_back(TraceRow{1, step, lv, std::nan(""), std::nan(""),
                                      cfg.record_walltime ? elapsed_ms(t0) : 0});
        maybe_checkpoint(checkpoint_dir, 1, step, cfg.checkpoint_every, cfg.stage1_steps, &unet,
                         nullptr, cfg);
    }
    return trace;
}

TrainTrace train_stage2(CAEModel& cae, const UNetModel& frozen_unet,
                        std::span<const Subject> data, const TrainConfig& cfg,
                        const std::filesystem::path& checkpoint_dir) {
    cfg.validate();
    TrainTrace trace;
    trace.w_spatial = cfg.w_spatial;
    trace.w_temporal = cfg.w_temporal;
    const DType dtype = cae.config().dtype;
    const auto inputs = cached_inputs(data, dtype);

    // The spatial network is frozen, so its map and joint-operator series are
    // fixed per subject; compute them once and train the CAE on the cached
    // series.
    std::vector<Tensor> series;
    std::vector<Tensor> labels;
    std::vector<double> spatial_losses;
    series.reserve(data.size());
    labels.reserve(data.size());
    for (std::size_t si = 0; si < data.size(); ++si) {
        Tensor map = frozen_unet.forward(inputs[si]).detach();
        Tensor raw = joint_operator(inputs[si], map).detach();
        series.push_back(reshape(raw, {1, raw.numel()}));
        labels.push_back(Tensor::vector(data[si].label_series, dtype));
        Tensor sp = spatial_loss(map, map_to_tensor(data[si].label_map, dtype));
        spatial_losses.push_back(sp.item());
    }

    Adam opt(cae.parameters(), AdamConfig{.lr = cfg.stage2_lr});
    const auto t0 = Clock::now();
    for (std::int64_t step = 1; step <= cfg.stage2_steps; ++step) {
        const std::size_t si = static_cast<std::size_t>((step - 1) %
                                                        static_cast<std::int64_t>(data.size()));
        opt.zero_grad();
        Tensor pred = cae.forward(series[si]);
        Tensor loss = temporal_loss(pred, labels[si]);
        const double lv = loss.item();
        if (!std::isfinite(lv)) {
            write_trace_csv(trace, checkpoint_dir.empty()
                                       ? std::filesystem::path("stage2_abort_trace.csv")
                                       : checkpoint_dir / "stage2_abort_trace.csv");
            throw ConvergenceError("stage 2: non-finite temporal loss at step " +
                                   std::to_string(step));
        }
        loss.backward();
        opt.step();
        const double sp = spatial_losses[si];
        trace.rows.push_back(TraceRow{2, step, sp, lv,
                                      cfg.w_spatial * sp + cfg.w_temporal * lv,
                                      cfg.record_walltime ? elapsed_ms(t0) : 0});
        maybe_checkpoint(checkpoint_dir, 2, step, cfg.checkpoint_every, cfg.stage2_steps,
                         &frozen_unet, &cae, cfg);
    }
    return trace;
}

TrainTrace train_stage3(UNetModel& unet, CAEModel& cae, std::span<const Subject> data,
                        const TrainConfig& cfg, const std::filesystem::path& checkpoint_dir) {
    cfg.validate();
    TrainTrace trace;
    trace.w_spatial = cfg.w_spatial;
    trace.w_temporal = cfg.w_temporal;
    const DType dtype = unet.config().dtype;
    const auto inputs = cached_inputs(data, dtype);
    std::vector<Tensor> map_labels;
    std::vector<Tensor> series_labels;
    for (const auto& s : data) {
        map_labels.push_back(map_to_tensor(s.label_map, dtype));
        series_labels.push_back(Tensor::vector(s.label_series, dtype));
    }

    std::vector<Tensor> params = unet.parameters();
    for (const auto& p : cae.parameters()) {
        params.push_back(p);
    }
    Adam opt(std::move(params), AdamConfig{.lr = cfg.stage3_lr});
    const auto t0 = Clock::now();
    for (std::int64_t step = 1; step <= cfg.stage3_steps; ++step) {
        const std::size_t si = static_cast<std::size_t>((step - 1) %
                                                        static_cast<std::int64_t>(data.size()));
        opt.zero_grad();
        ForwardFull fwd = forward_full(unet, cae, inputs[si]);
        Tensor sp = spatial_loss(fwd.map, map_labels[si]);
        Tensor tp = temporal_loss(fwd.refined_series, series_labels[si]);
        Tensor joint = add(scale(sp, cfg.w_spatial), scale(tp, cfg.w_temporal));
        const double jv = joint.item();
        if (!std::isfinite(jv)) {
            write_trace_csv(trace, checkpoint_dir.empty()
                                       ? std::filesystem::path("stage3_abort_trace.csv")
                                       : checkpoint_dir / "stage3_abort_trace.csv");
            throw ConvergenceError("stage 3: non-finite joint loss at step " +
                                   std::to_string(step));
        }
        joint.backward();
        opt.step();
        trace.rows.push_back(TraceRow{3, step, sp.item(), tp.item(), jv,
                                      cfg.record_walltime ? elapsed_ms(t0) : 0});
        maybe_checkpoint(checkpoint_dir, 3, step, cfg.checkpoint_every, cfg.stage3_steps, &unet,
                         &cae, cfg);
    }
    return trace;
}

InferResult infer(const UNetModel& unet, const CAEModel& cae, const Volume4D& vol) {
    const Tensor input = volume_to_tensor(vol, unet.config().dtype);
    const ForwardFull fwd = forward_full(unet, cae, input);
    InferResult res;
    res.map = tensor_to_map(fwd.map, vol.d, vol.h, vol.w);
    res.raw_series = fwd.raw_series.values();
    res.refined_series = fwd.refined_series.values();
    return res;
}

void write_trace_csv(const TrainTrace& trace, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write trace " + path.string());
    }
    out << "# w_spatial=" << format_double(trace.w_spatial)
        << ",w_temporal=" << format_double(trace.w_temporal) << "\n";
    out << "stage,step,spatial_loss,temporal_loss,joint_loss,wall_ms\n";
    for (const auto& r : trace.rows) {
        out << r.stage << "," << r.step << "," << format_double(r.spatial_loss) << ","
            << format_double(r.temporal_loss) << "," << format_double(r.joint_loss) << ","
            << r.wall_ms << "\n";
    }
}

TrainTrace read_trace_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot read trace " + path.string());
    }
    TrainTrace trace;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        if (line[0] == '#') {
            std::sscanf(line.c_str(), "# w_spatial=%lf,w_temporal=%lf", &trace.w_spatial,
                        &trace.w_temporal);
            continue;
        }
        if (line.rfind("stage,", 0) == 0) {
            continue;
        }
        TraceRow r;
        char sp[32], tp[32], jp[32];
        long long step = 0, wall = 0;
        if (std::sscanf(line.c_str(), "%d,%lld,%31[^,],%31[^,],%31[^,],%lld", &r.stage, &step, sp,
                        tp, jp, &wall) != 6) {
            throw FormatError("malformed trace row: " + line);
        }
        r.step = step;
        r.wall_ms = wall;
        r.spatial_loss = std::strtod(sp, nullptr);
        r.temporal_loss = std::strtod(tp, nullptr);
        r.joint_loss = std::strtod(jp, nullptr);
        trace.rows.push_back(r);
    }
    return trace;
}

Checkpoint make_checkpoint(const UNetModel* unet, const CAEModel* cae,
                           std::map<std::string, std::string> extra_meta) {
    Checkpoint ckpt;
    ckpt.meta = std::move(extra_meta);
    ckpt.meta["format"] = "stcnn";
    if (unet != nullptr) {
        const auto& cfg = unet->config();
        ckpt.meta["unet.in_channels"] = std::to_string(cfg.in_channels);
        ckpt.meta["unet.levels"] = std::to_string(cfg.levels);
        ckpt.meta["unet.base_channels"] = std::to_string(cfg.base_channels);
        ckpt.meta["unet.kernel"] = std::to_string(cfg.kernel);
        ckpt.meta["unet.dtype"] = dtype_name(cfg.dtype);
        for (const auto& [name, t] : unet->named_parameters()) {
            ckpt.tensors.emplace_back("unet." + name, t);
        }
    }
    if (cae != nullptr) {
        ckpt.meta["cae.dtype"] = dtype_name(cae->config().dtype);
        for (const auto& [name, t] : cae->named_parameters()) {
            ckpt.tensors.emplace_back("cae." + name, t);
        }
    }
    return ckpt;
}

UNetConfig unet_config_from_meta(const Checkpoint& ckpt) {
    UNetConfig cfg;
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = ckpt.meta.find(key);
        if (it == ckpt.meta.end()) {
            throw FormatError("checkpoint meta lacks '" + key + "'");
        }
        return it->second;
    };
    cfg.in_channels = std::stoll(need("unet.in_channels"));
    cfg.levels = std::stoll(need("unet.levels"));
    cfg.base_channels = std::stoll(need("unet.base_channels"));
    cfg.kernel = std::stoll(need("unet.kernel"));
    cfg.dtype = need("unet.dtype") == "f32" ? DType::f32 : DType::f64;
    return cfg;
}

}  // namespace stcnn
