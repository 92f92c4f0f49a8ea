#pragma once

#include "stcnn/tensor.hpp"

namespace stcnn {

enum class Padding { same, valid };

// Channelled cross-correlation. input [C_in,D,H,W], kernel [C_out,C_in,kd,kh,kw].
// same keeps the spatial extents (zero padding, low side gets (k-1)/2);
// valid gives D' = D-kd+1 etc. Differentiable w.r.t. input and kernel.
Tensor conv3d(const Tensor& input, const Tensor& kernel, Padding padding);

// 1-D analogue. input [C_in,L], kernel [C_out,C_in,k].
Tensor conv1d(const Tensor& input, const Tensor& kernel, Padding padding);

// out[c,...] = input[c,...] + bias[c]; bias shape [C].
Tensor add_channel_bias(const Tensor& input, const Tensor& bias);

// Window max over every axis except the channel axis 0 (rank-1 tensors pool
// axis 0). Odd extents are handled in ceil mode, i.e. the trailing window is
// clamped, which equals replicate-padding the trailing face. Gradient routes
// to the argmax cell, first index winning ties.
Tensor maxpool(const Tensor& input, std::int64_t window = 2);

// Nearest-neighbour replication along the pooled axes; gradient sums replicas.
Tensor upsample(const Tensor& input, std::int64_t factor = 2);

// Keeps the leading region of the non-channel axes. extents has one entry per
// pooled axis. Gradient scatters into the kept region.
Tensor crop(const Tensor& input, const Shape& extents);

Tensor relu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

// Same element count, new extents; row-major layout is unchanged.
Tensor reshape(const Tensor& x, Shape new_shape);

// Concatenation along axis 0; trailing extents must match.
Tensor concat_channels(const Tensor& a, const Tensor& b);

// Mean over all cells of the squared difference. Scalar output.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// Negative Pearson correlation between two equal-length rank-1 tensors,
//   -r = -(N*Sxy - Sx*Sy) / sqrt((N*Sxx - Sx^2)(N*Syy - Sy^2) + eps),
// with eps = 1e-12 inside the square root so constant inputs stay finite.
// When a series is (numerically) constant the result is meaningless; the
// optional flag reports it.
Tensor neg_pearson_loss(const Tensor& x, const Tensor& y, bool* degenerate = nullptr);

// out[t] = <frames[t], weights> for frames [T,rest...] and weights [rest...].
// This is a full-extent valid correlation per frame: one scalar per frame.
Tensor frame_inner_products(const Tensor& frames, const Tensor& weights);

}  // namespace stcnn
