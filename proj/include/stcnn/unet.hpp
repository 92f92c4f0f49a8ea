#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stcnn/ops.hpp"
#include "stcnn/tensor.hpp"
#include "stcnn/volume.hpp"

namespace stcnn {

struct UNetConfig {
    std::int64_t in_channels = 64;   // one channel per time frame
    std::int64_t levels = 3;
    std::int64_t base_channels = 8;  // doubles per contracting level
    std::int64_t kernel = 3;
    DType dtype = DType::f64;
    std::uint64_t seed = 0;
};

// 3-D regression U-Net: contracting conv/pool levels, expanding
// upsample/concat levels, linear single-channel output. Two conv+relu blocks
// per level, channel counts double on the way down and halve on the way up.
class UNetModel {
  public:
    static UNetModel init(const UNetConfig& cfg);

    // input [in_channels, D, H, W] -> [1, D, H, W]
    Tensor forward(const Tensor& input) const;

    std::vector<Tensor> parameters() const;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    const UNetConfig& config() const { return cfg_; }

    // Channel width at each contracting level, for introspection tests.
    std::vector<std::int64_t> level_channels() const;

  private:
    struct ConvLayer {
        std::string name;
        Tensor weight;  // [C_out, C_in, k, k, k]
        Tensor bias;    // [C_out]
    };
    Tensor apply(const ConvLayer& layer, const Tensor& x, bool activate) const;

    UNetConfig cfg_;
    std::vector<ConvLayer> enc_;  // two per level
    std::vector<ConvLayer> dec_;  // two per level below the top
    ConvLayer out_;
};

// Builds the [T,D,H,W] input tensor from a (normalized) volume, frame i on
// channel i.
Tensor volume_to_tensor(const Volume4D& vol, DType dtype = DType::f64);

Tensor map_to_tensor(const NetworkMap& map, DType dtype = DType::f64);
NetworkMap tensor_to_map(const Tensor& t, std::int64_t d, std::int64_t h, std::int64_t w);

// Non-training forward pass over a volume.
NetworkMap unet_infer(const UNetModel& model, const Volume4D& vol);

// MSE between a predicted map and its label.
Tensor spatial_loss(const Tensor& pred, const Tensor& label);

}  // namespace stcnn
