#include "stcnn/cae.hpp"

#include <cmath>

namespace stcnn {

namespace {

Tensor make_conv_weight(std::int64_t c_out, std::int64_t c_in, std::int64_t k,
                        std::mt19937_64& rng, DType dtype) {
    const double fan_in = static_cast<double>(c_in * k);
    const double bound = 1.0 / std::sqrt(fan_in);
    return Tensor::uniform({c_out, c_in, k}, -bound, bound, rng, dtype, true);
}

}  // namespace

CAEModel CAEModel::init(const CAEConfig& cfg) {
    CAEModel model;
    model.cfg_ = cfg;
    std::mt19937_64 rng(cfg.seed);
    std::int64_t in_ch = 1;
    for (std::size_t s = 0; s < kEncoderKernels.size(); ++s) {
        const std::int64_t ch = kEncoderChannels[s];
        const std::int64_t k = kEncoderKernels[s];
        model.enc_.push_back(ConvLayer{"enc" + std::to_string(s + 1),
                                       make_conv_weight(ch, in_ch, k, rng, cfg.dtype),
                                       Tensor::zeros({ch}, cfg.dtype, true)});
        in_ch = ch;
    }
    for (std::size_t s = 0; s < kDecoderKernels.size(); ++s) {
        const std::int64_t ch = kDecoderChannels[s];
        const std::int64_t k = kDecoderKernels[s];
        model.dec_.push_back(ConvLayer{"dec" + std::to_string(s + 1),
                                       make_conv_weight(ch, in_ch, k, rng, cfg.dtype),
                                       Tensor::zeros({ch}, cfg.dtype, true)});
        in_ch = ch;
    }
    return model;
}

Tensor CAEModel::forward(const Tensor& input) const {
    if (input.rank() != 2 || input.shape()[0] != 1) {
        throw DimensionError("cae: input must be [1,N], got " + shape_str(input.shape()));
    }
    const std::int64_t n = input.shape()[1];
    if (n < kMinLength) {
        throw ConfigError("cae: series length " + std::to_string(n) +
                          " too short; kernel size 8 cannot fit after pooling (need N >= " +
                          std::to_string(kMinLength) + ")");
    }
    auto conv = [&](const ConvLayer& layer, const Tensor& x, bool activate) {
        Tensor y = add_channel_bias(conv1d(x, layer.weight, Padding::same), layer.bias);
        return activate ? relu(y) : y;
    };

    // encoder: conv3 -> pool -> conv5 -> pool -> conv8
    Tensor x = conv(enc_[0], input, true);
    const std::int64_t len1 = x.shape()[1];
    x = maxpool(x, 2);
    x = conv(enc_[1], x, true);
    const std::int64_t len2 = x.shape()[1];
    x = maxpool(x, 2);
    x = conv(enc_[2], x, true);

    // decoder: conv8 -> up -> conv5 -> up -> conv3 (linear)
    x = conv(dec_[0], x, true);
    x = upsample(x, 2);
    if (x.shape()[1] != len2) {
        x = crop(x, {len2});
    }
    x = conv(dec_[1], x, true);
    x = upsample(x, 2);
    if (x.shape()[1] != len1) {
        x = crop(x, {len1});
    }
    return conv(dec_[2], x, false);
}

Tensor CAEModel::forward_series(const TimeSeries& series) const {
    return forward(series_to_tensor(series, cfg_.dtype));
}

std::vector<Tensor> CAEModel::parameters() const {
    std::vector<Tensor> out;
    for (const auto& [name, t] : named_parameters()) {
        out.push_back(t);
    }
    return out;
}

std::vector<std::pair<std::string, Tensor>> CAEModel::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    auto push = [&](const ConvLayer& layer) {
        out.emplace_back(layer.name + ".weight", layer.weight);
        out.emplace_back(layer.name + ".bias", layer.bias);
    };
    for (const auto& layer : enc_) {
        push(layer);
    }
    for (const auto& layer : dec_) {
        push(layer);
    }
    return out;
}

std::vector<std::int64_t> CAEModel::encoder_kernel_sizes() const {
    std::vector<std::int64_t> out;
    for (const auto& layer : enc_) {
        out.push_back(layer.weight.shape()[2]);
    }
    return out;
}

std::vector<std::int64_t> CAEModel::encoder_channel_counts() const {
    std::vector<std::int64_t> out;
    for (const auto& layer : enc_) {
        out.push_back(layer.weight.shape()[0]);
    }
    return out;
}

namespace {

Tensor as_series(const Tensor& t, const char* what) {
    if (t.rank() == 1) {
        return t;
    }
    if (t.rank() == 2 && t.shape()[0] == 1) {
        return reshape(t, {t.shape()[1]});
    }
    throw DimensionError(std::string("temporal_loss: ") + what + " must be [N] or [1,N], got " +
                         shape_str(t.shape()));
}

}  // namespace

Tensor temporal_loss(const Tensor& pred, const Tensor& label, bool* degenerate) {
    return neg_pearson_loss(as_series(pred, "pred"), as_series(label, "label"), degenerate);
}

Tensor series_to_tensor(const TimeSeries& series, DType dtype) {
    return Tensor::from_values({1, static_cast<std::int64_t>(series.size())}, series, dtype,
                               false);
}

TimeSeries tensor_to_series(const Tensor& t) {
    return t.values();
}

}  // namespace stcnn
