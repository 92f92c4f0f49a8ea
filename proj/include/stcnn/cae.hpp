#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "stcnn/ops.hpp"
#include "stcnn/tensor.hpp"
#include "stcnn/volume.hpp"

namespace stcnn {

struct CAEConfig {
    DType dtype = DType::f64;
    std::uint64_t seed = 0;
};

// 1-D convolutional autoencoder, depth 3 on both sides. Encoder stages use
// kernel sizes 3/5/8 with 8/16/32 output channels and pooling after the first
// two; the decoder mirrors them (kernels 8/5/3, channels 16/8/1) with nearest
// upsampling. Same padding everywhere, so only pooling changes the length.
class CAEModel {
  public:
    static constexpr std::array<std::int64_t, 3> kEncoderKernels{3, 5, 8};
    static constexpr std::array<std::int64_t, 3> kEncoderChannels{8, 16, 32};
    static constexpr std::array<std::int64_t, 3> kDecoderKernels{8, 5, 3};
    static constexpr std::array<std::int64_t, 3> kDecoderChannels{16, 8, 1};
    static constexpr std::int64_t kMinLength = 8;

    static CAEModel init(const CAEConfig& cfg);

    // input [1, N] -> [1, N]; N >= 8, non-multiples of 4 are replicate-padded
    // through the pools and cropped back.
    Tensor forward(const Tensor& input) const;

    // TimeSeries convenience wrapper around forward().
    Tensor forward_series(const TimeSeries& series) const;

    std::vector<Tensor> parameters() const;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    const CAEConfig& config() const { return cfg_; }

    // Architecture introspection for conformance checks.
    std::vector<std::int64_t> encoder_kernel_sizes() const;
    std::vector<std::int64_t> encoder_channel_counts() const;

  private:
    struct ConvLayer {
        std::string name;
        Tensor weight;  // [C_out, C_in, k]
        Tensor bias;    // [C_out]
    };

    CAEConfig cfg_;
    std::vector<ConvLayer> enc_;
    std::vector<ConvLayer> dec_;
};

// Negative Pearson correlation against the ground-truth course.
Tensor temporal_loss(const Tensor& pred, const Tensor& label, bool* degenerate = nullptr);

Tensor series_to_tensor(const TimeSeries& series, DType dtype = DType::f64);
TimeSeries tensor_to_series(const Tensor& t);

}  // namespace stcnn
