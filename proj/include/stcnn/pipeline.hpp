#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stcnn/cae.hpp"
#include "stcnn/checkpoint.hpp"
#include "stcnn/unet.hpp"
#include "stcnn/volume.hpp"

namespace stcnn {

// One training/evaluation unit: a subject volume with its dictionary-learned
// labels and, for synthetic cohorts, the planted ground truth.
struct Subject {
    std::string id;
    Volume4D data;  // normalized
    NetworkMap label_map;
    TimeSeries label_series;
    NetworkMap planted_map;
    TimeSeries planted_series;
    double label_match_jaccard = 0.0;
    bool label_ok = true;
};

enum class TrainStage { spatial_only = 1, temporal_only = 2, joint_finetune = 3 };

struct TrainConfig {
    std::int64_t stage1_steps = 300;
    std::int64_t stage2_steps = 200;
    std::int64_t stage3_steps = 100;
    double stage1_lr = 1e-3;
    double stage2_lr = 1e-3;
    double stage3_lr = 2e-4;
    // Fine-tuning loss = w_spatial * spatial + w_temporal * temporal. The
    // slower-converging spatial term carries the 10.
    double w_spatial = 10.0;
    double w_temporal = 1.0;
    std::uint64_t seed = 0;
    std::int64_t checkpoint_every = 50;
    // When false the wall_ms column is written as 0 so traces are
    // byte-reproducible across runs.
    bool record_walltime = true;

    void validate() const;
};

struct TraceRow {
    int stage = 0;
    std::int64_t step = 0;  // 1-based within the stage
    double spatial_loss = 0.0;
    double temporal_loss = 0.0;
    double joint_loss = 0.0;
    std::int64_t wall_ms = 0;
};

struct TrainTrace {
    double w_spatial = 10.0;
    double w_temporal = 1.0;
    std::vector<TraceRow> rows;
};

// t_i = <V_i, map>: the predicted 3-D map applied as a full-extent valid
// convolution kernel over each frame, one scalar per frame. Differentiable in
// the map (and the volume), so temporal losses reach the spatial network.
Tensor joint_operator(const Tensor& volume, const Tensor& map);
TimeSeries joint_operator(const Volume4D& vol, const NetworkMap& map);

struct ForwardFull {
    Tensor map;             // [1,D,H,W]
    Tensor raw_series;      // [T] straight from the joint operator
    Tensor refined_series;  // [1,T] CAE output
    bool refined_constant = false;
};

// One connected compute graph through U-Net, joint operator and CAE.
ForwardFull forward_full(const UNetModel& unet, const CAEModel& cae, const Tensor& volume);

// Stage 1: spatial network alone against the label maps.
TrainTrace train_stage1(UNetModel& unet, std::span<const Subject> data, const TrainConfig& cfg,
                        const std::filesystem::path& checkpoint_dir = {});

// Stage 2: temporal network against the label courses, spatial network
// frozen (its per-subject series are computed once up front).
TrainTrace train_stage2(CAEModel& cae, const UNetModel& frozen_unet,
                        std::span<const Subject> data, const TrainConfig& cfg,
                        const std::filesystem::path& checkpoint_dir = {});

// Stage 3: both networks against the weighted joint loss.
TrainTrace train_stage3(UNetModel& unet, CAEModel& cae, std::span<const Subject> data,
                        const TrainConfig& cfg,
                        const std::filesystem::path& checkpoint_dir = {});

struct InferResult {
    NetworkMap map;
    TimeSeries raw_series;
    TimeSeries refined_series;
};

// Forward pass on an unseen (normalized) subject; no parameter mutation.
InferResult infer(const UNetModel& unet, const CAEModel& cae, const Volume4D& vol);

void write_trace_csv(const TrainTrace& trace, const std::filesystem::path& path);
TrainTrace read_trace_csv(const std::filesystem::path& path);

// Checkpoint assembly shared by the stages and the CLI.
Checkpoint make_checkpoint(const UNetModel* unet, const CAEModel* cae,
                           std::map<std::string, std::string> extra_meta = {});
UNetConfig unet_config_from_meta(const Checkpoint& ckpt);

}  // namespace stcnn
