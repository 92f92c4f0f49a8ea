#include "stcnn/unet.hpp"

#include <cmath>

namespace stcnn {

namespace {

Tensor make_conv_weight(std::int64_t c_out, std::int64_t c_in, std::int64_t k,
                        std::mt19937_64& rng, DType dtype) {
    const double fan_in = static_cast<double>(c_in * k * k * k);
    const double bound = 1.0 / std::sqrt(fan_in);
    return Tensor::uniform({c_out, c_in, k, k, k}, -bound, bound, rng, dtype, true);
}

}  // namespace

UNetModel UNetModel::init(const UNetConfig& cfg) {
    if (cfg.levels < 2) {
        throw ConfigError("UNetConfig: levels must be >= 2, got " + std::to_string(cfg.levels));
    }
    if (cfg.in_channels < 1 || cfg.base_channels < 1 || cfg.kernel < 1) {
        throw ConfigError("UNetConfig: channels and kernel must be positive");
    }
    UNetModel model;
    model.cfg_ = cfg;
    std::mt19937_64 rng(cfg.seed);
    const std::int64_t k = cfg.kernel;

    auto channels_at = [&](std::int64_t level) { return cfg.base_channels << level; };

    for (std::int64_t l = 0; l < cfg.levels; ++l) {
        const std::int64_t ch = channels_at(l);
        const std::int64_t in_a = l == 0 ? cfg.in_channels : channels_at(l - 1);
        ConvLayer a{"enc" + std::to_string(l) + "a", make_conv_weight(ch, in_a, k, rng, cfg.dtype),
                    Tensor::zeros({ch}, cfg.dtype, true)};
        ConvLayer b{"enc" + std::to_string(l) + "b", make_conv_weight(ch, ch, k, rng, cfg.dtype),
                    Tensor::zeros({ch}, cfg.dtype, true)};
        model.enc_.push_back(std::move(a));
        model.enc_.push_back(std::move(b));
    }
    for (std::int64_t l = cfg.levels - 2; l >= 0; --l) {
        const std::int64_t ch = channels_at(l);
        const std::int64_t in_a = ch + channels_at(l + 1);  // skip + upsampled path
        ConvLayer a{"dec" + std::to_string(l) + "a", make_conv_weight(ch, in_a, k, rng, cfg.dtype),
                    Tensor::zeros({ch}, cfg.dtype, true)};
        ConvLayer b{"dec" + std::to_string(l) + "b", make_conv_weight(ch, ch, k, rng, cfg.dtype),
                    Tensor::zeros({ch}, cfg.dtype, true)};
        model.dec_.push_back(std::move(a));
        model.dec_.push_back(std::move(b));
    }
    model.out_ = ConvLayer{"out", make_conv_weight(1, cfg.base_channels, k, rng, cfg.dtype),
                           Tensor::zeros({1}, cfg.dtype, true)};
    return model;
}

Tensor UNetModel::apply(const ConvLayer& layer, const Tensor& x, bool activate) const {
    Tensor y = add_channel_bias(conv3d(x, layer.weight, Padding::same), layer.bias);
    return activate ? relu(y) : y;
}

Tensor UNetModel::forward(const Tensor& input) const {
    if (input.rank() != 4) {
        throw DimensionError("unet: input must be [C,D,H,W], got " + shape_str(input.shape()));
    }
    if (input.shape()[0] != cfg_.in_channels) {
        throw DimensionError("unet: expected " + std::to_string(cfg_.in_channels) +
                             " input channels, got " + std::to_string(input.shape()[0]) +
                             " on axis C");
    }
    Tensor x = input;
    std::vector<Tensor> skips;
    for (std::int64_t l = 0; l < cfg_.levels; ++l) {
        x = apply(enc_[static_cast<std::size_t>(2 * l)], x, true);
        x = apply(enc_[static_cast<std::size_t>(2 * l + 1)], x, true);
        if (l < cfg_.levels - 1) {
            skips.push_back(x);
            x = maxpool(x, 2);
        }
    }
    for (std::int64_t l = cfg_.levels - 2; l >= 0; --l) {
        const Tensor& skip = skips[static_cast<std::size_t>(l)];
        x = upsample(x, 2);
        // ceil-mode pooling can overshoot odd extents on the way back up
        if (x.shape() != skip.shape()) {
            x = crop(x, {skip.shape()[1], skip.shape()[2], skip.shape()[3]});
        }
        const std::size_t base = static_cast<std::size_t>(2 * (cfg_.levels - 2 - l));
        x = concat_channels(skip, x);
        x = apply(dec_[base], x, true);
        x = apply(dec_[base + 1], x, true);
    }
    return apply(out_, x, false);
}

std::vector<Tensor> UNetModel::parameters() const {
    std::vector<Tensor> out;
    for (const auto& [name, t] : named_parameters()) {
        out.push_back(t);
    }
    return out;
}

std::vector<std::pair<std::string, Tensor>> UNetModel::named_parameters() const {
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
    push(out_);
    return out;
}

std::vector<std::int64_t> UNetModel::level_channels() const {
    std::vector<std::int64_t> out;
    for (std::int64_t l = 0; l < cfg_.levels; ++l) {
        out.push_back(cfg_.base_channels << l);
    }
    return out;
}

Tensor volume_to_tensor(const Volume4D& vol, DType dtype) {
    return Tensor::from_values({vol.t, vol.d, vol.h, vol.w}, vol.data, dtype, false);
}

Tensor map_to_tensor(const NetworkMap& map, DType dtype) {
    return Tensor::from_values({1, map.d, map.h, map.w}, map.values, dtype, false);
}

NetworkMap tensor_to_map(const Tensor& t, std::int64_t d, std::int64_t h, std::int64_t w) {
    if (t.numel() != d * h * w) {
        throw DimensionError("tensor_to_map: tensor " + shape_str(t.shape()) +
                             " does not hold " + std::to_string(d * h * w) + " values");
    }
    NetworkMap map;
    map.d = d;
    map.h = h;
    map.w = w;
    map.values = t.values();
    return map;
}

NetworkMap unet_infer(const UNetModel& model, const Volume4D& vol) {
    const Tensor input = volume_to_tensor(vol, model.config().dtype);
    const Tensor out = model.forward(input);
    return tensor_to_map(out, vol.d, vol.h, vol.w);
}

Tensor spatial_loss(const Tensor& pred, const Tensor& label) {
    return mse_loss(pred, label);
}

}  // namespace stcnn
