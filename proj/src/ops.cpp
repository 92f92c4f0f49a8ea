#include "stcnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace stcnn {

namespace {

using detail::Buffer;
using detail::dispatch;
using detail::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr make_op(Shape shape, DType dtype, std::vector<NodePtr> parents, const char* op) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = Buffer(dtype, shape_numel(n->shape));
    n->op = op;
    for (const auto& p : parents) {
        if (p->requires_grad) {
            n->requires_grad = true;
        }
    }
    n->parents = std::move(parents);
    return n;
}

void require_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
    if (a.dtype() != b.dtype()) {
        throw UsageError(std::string(op) + ": mixed dtypes " + dtype_name(a.dtype()) + " vs " +
                         dtype_name(b.dtype()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
}

// First axis that pooling / upsampling / cropping applies to: everything but
// the channel axis, or the whole tensor when rank 1.
std::size_t pooled_axis_begin(const Shape& s) {
    return s.size() >= 2 ? 1 : 0;
}

std::vector<std::int64_t> row_major_strides(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) {
        st[i - 1] = st[i] * s[i];
    }
    return st;
}

// ---------------------------------------------------------------------------
// Convolution kernels. Cross-correlation (no kernel flip), zero padding.
// ---------------------------------------------------------------------------

struct ConvDims {
    std::int64_t cin, d, h, w;
    std::int64_t cout, kd, kh, kw;
    std::int64_t pd, ph, pw;  // low-side padding
    std::int64_t od, oh, ow;
};

template <class T>
void conv3d_forward(const ConvDims& m, const T* in, const T* ker, T* out) {
    const std::int64_t in_sp = m.d * m.h * m.w;
    const std::int64_t out_sp = m.od * m.oh * m.ow;
    std::fill(out, out + m.cout * out_sp, T(0));
    for (std::int64_t co = 0; co < m.cout; ++co) {
        T* outc = out + co * out_sp;
        for (std::int64_t ci = 0; ci < m.cin; ++ci) {
            const T* inc = in + ci * in_sp;
            const T* kerc = ker + (co * m.cin + ci) * m.kd * m.kh * m.kw;
            for (std::int64_t kz = 0; kz < m.kd; ++kz) {
                const std::int64_t z0 = std::max<std::int64_t>(0, m.pd - kz);
                const std::int64_t z1 = std::min(m.od, m.d + m.pd - kz);
                for (std::int64_t ky = 0; ky < m.kh; ++ky) {
                    const std::int64_t y0 = std::max<std::int64_t>(0, m.ph - ky);
                    const std::int64_t y1 = std::min(m.oh, m.h + m.ph - ky);
                    for (std::int64_t kx = 0; kx < m.kw; ++kx) {
                        const std::int64_t x0 = std::max<std::int64_t>(0, m.pw - kx);
                        const std::int64_t x1 = std::min(m.ow, m.w + m.pw - kx);
                        const T wgt = kerc[(kz * m.kh + ky) * m.kw + kx];
                        for (std::int64_t z = z0; z < z1; ++z) {
                            const T* ir = inc + ((z + kz - m.pd) * m.h + (0 + ky - m.ph)) * m.w +
                                          (kx - m.pw);
                            T* oplane = outc + z * m.oh * m.ow;
                            for (std::int64_t y = y0; y < y1; ++y) {
                                const T* irow = ir + y * m.w;
                                T* orow = oplane + y * m.ow;
                                for (std::int64_t x = x0; x < x1; ++x) {
                                    orow[x] += wgt * irow[x];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

template <class T>
void conv3d_backward_input(const ConvDims& m, const T* ker, const T* gout, T* din) {
    const std::int64_t in_sp = m.d * m.h * m.w;
    const std::int64_t out_sp = m.od * m.oh * m.ow;
    for (std::int64_t co = 0; co < m.cout; ++co) {
        const T* goutc = gout + co * out_sp;
        for (std::int64_t ci = 0; ci < m.cin; ++ci) {
            T* dinc = din + ci * in_sp;
            const T* kerc = ker + (co * m.cin + ci) * m.kd * m.kh * m.kw;
            for (std::int64_t kz = 0; kz < m.kd; ++kz) {
                const std::int64_t z0 = std::max<std::int64_t>(0, m.pd - kz);
                const std::int64_t z1 = std::min(m.od, m.d + m.pd - kz);
                for (std::int64_t ky = 0; ky < m.kh; ++ky) {
                    const std::int64_t y0 = std::max<std::int64_t>(0, m.ph - ky);
                    const std::int64_t y1 = std::min(m.oh, m.h + m.ph - ky);
                    for (std::int64_t kx = 0; kx < m.kw; ++kx) {
                        const std::int64_t x0 = std::max<std::int64_t>(0, m.pw - kx);
                        const std::int64_t x1 = std::min(m.ow, m.w + m.pw - kx);
                        const T wgt = kerc[(kz * m.kh + ky) * m.kw + kx];
                        if (wgt == T(0)) {
                            continue;
                        }
                        for (std::int64_t z = z0; z < z1; ++z) {
                            T* dr = dinc + ((z + kz - m.pd) * m.h + (ky - m.ph)) * m.w +
                                    (kx - m.pw);
                            const T* gorow = goutc + z * m.oh * m.ow;
                            for (std::int64_t y = y0; y < y1; ++y) {
                                T* drow = dr + y * m.w;
                                const T* go = gorow + y * m.ow;
                                for (std::int64_t x = x0; x < x1; ++x) {
                                    drow[x] += wgt * go[x];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

template <class T>
void conv3d_backward_kernel(const ConvDims& m, const T* in, const T* gout, T* dker) {
    const std::int64_t in_sp = m.d * m.h * m.w;
    const std::int64_t out_sp = m.od * m.oh * m.ow;
    for (std::int64_t co = 0; co < m.cout; ++co) {
        const T* goutc = gout + co * out_sp;
        for (std::int64_t ci = 0; ci < m.cin; ++ci) {
            const T* inc = in + ci * in_sp;
            T* dkerc = dker + (co * m.cin + ci) * m.kd * m.kh * m.kw;
            for (std::int64_t kz = 0; kz < m.kd; ++kz) {
                const std::int64_t z0 = std::max<std::int64_t>(0, m.pd - kz);
                const std::int64_t z1 = std::min(m.od, m.d + m.pd - kz);
                for (std::int64_t ky = 0; ky < m.kh; ++ky) {
                    const std::int64_t y0 = std::max<std::int64_t>(0, m.ph - ky);
                    const std::int64_t y1 = std::min(m.oh, m.h + m.ph - ky);
                    for (std::int64_t kx = 0; kx < m.kw; ++kx) {
                        const std::int64_t x0 = std::max<std::int64_t>(0, m.pw - kx);
                        const std::int64_t x1 = std::min(m.ow, m.w + m.pw - kx);
                        T acc = T(0);
                        for (std::int64_t z = z0; z < z1; ++z) {
                            const T* irow = inc + ((z + kz - m.pd) * m.h + (ky - m.ph)) * m.w +
                                            (kx - m.pw);
                            const T* gorow = goutc + z * m.oh * m.ow;
                            for (std::int64_t y = y0; y < y1; ++y) {
                                const T* ir = irow + y * m.w;
                                const T* go = gorow + y * m.ow;
                                for (std::int64_t x = x0; x < x1; ++x) {
                                    acc += go[x] * ir[x];
                                }
                            }
                        }
                        dkerc[(kz * m.kh + ky) * m.kw + kx] += acc;
                    }
                }
            }
        }
    }
}

Tensor conv_common(const Tensor& input, const Tensor& kernel, Padding padding, ConvDims m,
                   Shape out_shape, const char* op) {
    require_same_dtype(input, kernel, op);
    static const char* axis_names[3] = {"D", "H", "W"};
    const std::int64_t in_ext[3] = {m.d, m.h, m.w};
    const std::int64_t k_ext[3] = {m.kd, m.kh, m.kw};
    for (int a = 0; a < 3; ++a) {
        if (padding == Padding::valid && k_ext[a] > in_ext[a]) {
            throw DimensionError(std::string(op) + ": kernel extent " + std::to_string(k_ext[a]) +
                                 " exceeds input extent " + std::to_string(in_ext[a]) +
                                 " on axis " + axis_names[a]);
        }
    }
    if (padding == Padding::same) {
        m.pd = (m.kd - 1) / 2;
        m.ph = (m.kh - 1) / 2;
        m.pw = (m.kw - 1) / 2;
        m.od = m.d;
        m.oh = m.h;
        m.ow = m.w;
    } else {
        m.pd = m.ph = m.pw = 0;
        m.od = m.d - m.kd + 1;
        m.oh = m.h - m.kh + 1;
        m.ow = m.w - m.kw + 1;
    }

    auto node = make_op(std::move(out_shape), input.dtype(), {input.node_ptr(), kernel.node_ptr()},
                        op);
    dispatch(node->value.dtype(), [&](auto tag) {
        using T = decltype(tag);
        conv3d_forward<T>(m, input.node()->value.as<T>().data(),
                          kernel.node()->value.as<T>().data(), node->value.as<T>().data());
    });
    if (node->requires_grad) {
        node->backprop = [m](Node& self) {
            Node* in = self.parents[0].get();
            Node* ker = self.parents[1].get();
            dispatch(self.value.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const T* gout = self.grad.as<T>().data();
                if (in->requires_grad) {
                    in->ensure_grad();
                    conv3d_backward_input<T>(m, ker->value.as<T>().data(), gout,
                                             in->grad.as<T>().data());
                }
                if (ker->requires_grad) {
                    ker->ensure_grad();
                    conv3d_backward_kernel<T>(m, in->value.as<T>().data(), gout,
                                              ker->grad.as<T>().data());
                }
            });
        };
    }
    return Tensor::adopt(std::move(node));
}

}  // namespace

Tensor conv3d(const Tensor& input, const Tensor& kernel, Padding padding) {
    if (input.rank() != 4) {
        throw DimensionError("conv3d: input must be [C_in,D,H,W], got " +
                             shape_str(input.shape()));
    }
    if (kernel.rank() != 5) {
        throw DimensionError("conv3d: kernel must be [C_out,C_in,kd,kh,kw], got " +
                             shape_str(kernel.shape()));
    }
    if (kernel.shape()[1] != input.shape()[0]) {
        throw DimensionError("conv3d: kernel C_in " + std::to_string(kernel.shape()[1]) +
                             " does not match input C_in " + std::to_string(input.shape()[0]) +
                             " on axis C");
    }
    ConvDims m{};
    m.cin = input.shape()[0];
    m.d = input.shape()[1];
    m.h = input.shape()[2];
    m.w = input.shape()[3];
    m.cout = kernel.shape()[0];
    m.kd = kernel.shape()[2];
    m.kh = kernel.shape()[3];
    m.kw = kernel.shape()[4];
    Shape out_shape;
    if (padding == Padding::same) {
        out_shape = {m.cout, m.d, m.h, m.w};
    } else {
        out_shape = {m.cout, m.d - m.kd + 1, m.h - m.kh + 1, m.w - m.kw + 1};
    }
    return conv_common(input, kernel, padding, m, std::move(out_shape), "conv3d");
}

Tensor conv1d(const Tensor& input, const Tensor& kernel, Padding padding) {
    if (input.rank() != 2) {
        throw DimensionError("conv1d: input must be [C_in,L], got " + shape_str(input.shape()));
    }
    if (kernel.rank() != 3) {
        throw DimensionError("conv1d: kernel must be [C_out,C_in,k], got " +
                             shape_str(kernel.shape()));
    }
    if (kernel.shape()[1] != input.shape()[0]) {
        throw DimensionError("conv1d: kernel C_in " + std::to_string(kernel.shape()[1]) +
                             " does not match input C_in " + std::to_string(input.shape()[0]) +
                             " on axis C");
    }
    // Same memory layout as a depth-1, height-1 3-D problem.
    ConvDims m{};
    m.cin = input.shape()[0];
    m.d = 1;
    m.h = 1;
    m.w = input.shape()[1];
    m.cout = kernel.shape()[0];
    m.kd = 1;
    m.kh = 1;
    m.kw = kernel.shape()[2];
    Shape out_shape;
    if (padding == Padding::same) {
        out_shape = {m.cout, m.w};
    } else {
        if (m.kw > m.w) {
            throw DimensionError("conv1d: kernel extent " + std::to_string(m.kw) +
                                 " exceeds input extent " + std::to_string(m.w) + " on axis L");
        }
        out_shape = {m.cout, m.w - m.kw + 1};
    }
    return conv_common(input, kernel, padding, m, std::move(out_shape), "conv1d");
}

Tensor add_channel_bias(const Tensor& input, const Tensor& bias) {
    require_same_dtype(input, bias, "add_channel_bias");
    if (input.rank() < 1 || bias.rank() != 1 || bias.shape()[0] != input.shape()[0]) {
        throw DimensionError("add_channel_bias: bias " + shape_str(bias.shape()) +
                             " does not match input channels of " + shape_str(input.shape()));
    }
    const std::int64_t channels = input.shape()[0];
    const std::int64_t per_ch = input.numel() / channels;
    auto node = make_op(input.shape(), input.dtype(), {input.node_ptr(), bias.node_ptr()},
                        "add_channel_bias");
    dispatch(node->value.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& in = input.node()->value.as<T>();
        const auto& b = bias.node()->value.as<T>();
        auto& out = node->value.as<T>();
        for (std::int64_t c = 0; c < channels; ++c) {
            for (std::int64_t i = 0; i < per_ch; ++i) {
                out[static_cast<std::size_t>(c * per_ch + i)] =
                    in[static_cast<std::size_t>(c * per_ch + i)] + b[static_cast<std::size_t>(c)];
            }
        }
    });
    if (node->requires_grad) {
        node->backprop = [channels, per_ch](Node& self) {
            Node* in = self.parents[0].get();
            Node* b = self.parents[1].get();
            dispatch(self.value.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const auto& g = self.grad.as<T>();
                if (in->requires_grad) {
                    in->ensure_grad();
                    auto& din = in->grad.as<T>();
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        din[i] += g[i];
                    }
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    auto& db = b->grad.as<T>();
                    for (std::int64_t c = 0; c < channels; ++c) {
                        T acc = T(0);
                        for (std::int64_t i = 0; i < per_ch; ++i) {
                            acc += g[static_cast<std::size_t>(c * per_ch + i)];
                        }
                        db[static_cast<std::size_t>(c)] += acc;
                    }
                }
            });
        };
    }
    return Tensor::adopt(std::move(node));
}

Tensor maxpool(const Tensor& input, std::int64_t window) {
    if (input.rank() < 1) {
        throw UsageError("maxpool: scalar input");
    }
    if (window < 1) {
        throw UsageError("maxpool: window must be >= 1");
    }
    const Shape& ishape = input.shape();
    const std::size_t begin = pooled_axis_begin(ishape);
    Shape oshape = ishape;
    for (std::size_t a = begin; a < ishape.size(); ++a) {
        if (ishape[a] < window) {
            throw DimensionError("maxpool: window " + std::to_string(window) +
                                 " larger than extent " + std::to_string(ishape[a]) + " on axis " +
                                 std::to_string(a));
        }
        oshape[a] = (ishape[a] + window - 1) / window;  // ceil: trailing window clamps
    }
    auto node = make_op(oshape, input.dtype(), {input.node_ptr()}, "maxpool");
    const auto istrides = row_major_strides(ishape);
    const std::int64_t onum = node->numel();
    auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(onum));
    dispatch(node->value.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& in = input.node()->value.as<T>();
        auto& out = node->value.as<T>();
        const std::size_t rank = ishape.size();
        std::vector<std::int64_t> oidx(rank, 0);
        std::vector<std::int64_t> lo(rank), hi(rank), cur(rank);
        for (std::int64_t o = 0; o < onum; ++o) {
            for (std::size_t a = 0; a < rank; ++a) {
                if (a < begin) {
                    lo[a] = oidx[a];
                    hi[a] = oidx[a] + 1;
                } else {
                    lo[a] = oidx[a] * window;
                    hi[a] = std::min(lo[a] + window, ishape[a]);
                }
                cur[a] = lo[a];
            }
            T best = -std::numeric_limits<T>::infinity();
            std::int64_t best_i = -1;
            bool done = false;
            while (!done) {
                std::int64_t flat = 0;
                for (std::size_t a = 0; a < rank; ++a) {
                    flat += cur[a] * istrides[a];
                }
                const T v = in[static_cast<std::size_t>(flat)];
                if (v > best) {  // strict: first index in scan order wins ties
                    best = v;
                    best_i = flat;
                }
                done = true;
                for (std::size_t a = rank; a-- > 0;) {
                    if (++cur[a] < hi[a]) {
                        done = false;
                        break;
                    }
                    cur[a] = lo[a];
                }
            }
            out[static_cast<std::size_t>(o)] = best;
            (*argmax)[static_cast<std::size_t>(o)] = best_i;
            std::size_t a = rank;
            while (a-- > 0) {
                if (++oidx[a] < node->shape[a]) {
                    break;
                }
                oidx[a] = 0;
            }
        }
    });
    if (node->requires_grad) {
        node->backprop = [argmax](Node& self) {
            Node* in = self.parents[0].get();
            if (!in->requires_grad) {
                return;
            }
            in->ensure_grad();
            for (std::int64_t o = 0; o < self.numel(); ++o) {
                in->grad.add((*argmax)[static_cast<std::size_t>(o)], self.grad.get(o));
            }
        };
    }
    return Tensor::adopt(std::move(node));
}

Tensor upsample(const Tensor& input, std::int64_t factor) {
    if (input.rank() < 1) {
        throw UsageError("upsample: scalar input");
    }
    if (factor < 1) {
        throw UsageError("upsample: factor must be >= 1");
    }
    const Shape& ishape = input.shape();
    const std::size_t begin = pooled_axis_begin(ishape);
    Shape oshape = ishape;
    for (std::size_t a = begin; a < ishape.size(); ++a) {
        oshape[a] = ishape[a] * factor;
    }
    auto node = make_op(oshape, input.dtype(), {input.node_ptr()}, "upsample");
    const auto istrides = row_major_strides(ishape);
    const std::int64_t onum = node->numel();
    // Source input cell per output cell, shared by forward and backward.
    auto src = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(onum));
    {
        const std::size_t rank = ishape.size();
        std::vector<std::int64_t> oidx(rank, 0);
        for (std::int64_t o = 0; o < onum; ++o) {
            std::int64_t flat = 0;
            for (std::size_t a = 0; a < rank; ++a) {
                const std::int64_t ia = a < begin ? oidx[a] : oidx[a] / factor;
                flat += ia * istrides[a];
            }
            (*src)[static_cast<std::size_t>(o)] = flat;
            std::size_t a = rank;
            while (a-- > 0) {
                if (++oidx[a] < oshape[a]) {
                    break;
                }
                oidx[a] = 0;
            }
        }
    }
    dispatch(node->value.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& in = input.node()->value.as<T>();
        auto& out = node->value.as<T>();
        for (std::int64_t o = 0; o < onum; ++o) {
            out[static_cast<std::size_t>(o)] = in[static_cast<std::size_t>((*src)[o])];
        }
    });
    if (node->requires_grad) {
        node->backprop = [src](Node& self) {
            Node* in = self.parents[0].get();
            if (!in->requires_grad) {
                return;
            }
            in->ensure_grad();
            for (std::int64_t o = 0; o < self.numel(); ++o) {
                in->grad.add((*src)[static_cast<std::size_t>(o)], self.grad.get(o));
            }
        };
    }
    return Tensor::adopt(std::move(node));
}

Tensor crop(const Tensor& input, const Shape& extents) {
    const Shape& ishape = input.shape();
    const std::size_t begin = pooled_axis_begin(ishape);
    if (extents.size() != ishape.size() - begin) {
        throw DimensionError("crop: expected " + std::to_string(ishape.size() - begin) +
                             " extents, got " + std::to_string(extents.size()));
    }
    Shape oshape = ishape;
    for (std::size_t a = begin; a < ishape.size(); ++a) {
        const std::int64_t e = extents[a - begin];
        if (e < 1 || e > ishape[a]) {
            throw DimensionError("crop: extent " + std::to_string(e) + " out of range on axis " +
                                 std::to_string(a));
        }
        oshape[a] = e;
    }
    auto node = make_op(oshape, input.dtype(), {input.node_ptr()}, "crop");
    const auto istrides = row_major_strides(ishape);
    const std::int64_t onum = node->numel();
    auto src = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(onum));
    {
        const std::size_t rank = ishape.size();
        std::vector<std::int64_t> oidx(rank, 0);
        for (std::int64_t o = 0; o < onum; ++o) {
            std::int64_t flat = 0;
            for (std::size_t a = 0; a < rank; ++a) {
                flat += oidx[a] * istrides[a];
            }
            (*src)[static_cast<std::size_t>(o)] = flat;
            std::size_t a = rank;
            while (a-- > 0) {
                if (++oidx[a] < oshape[a]) {
                    break;
                }
                oidx[a] = 0;
            }
        }
    }
    dispatch(node->value.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& in = input.node()->value.as<T>();
        auto& out = node->value.as<T>();
        for (std::int64_t o = 0; o < onum; ++o) {
            out[static_cast<std::size_t>(o)] = in[static_cast<std::size_t>((*src)[o])];
        }
    });
    if (node->requires_grad) {
        node->backprop = [src](Node& self) {
            Node* in = self.parents[0].get();
            if (!in->requires_grad) {
                return;
            }
            in->ensure_grad();
            for (std::int64_t o = 0; o < self.numel(); ++o) {
                in->grad.add((*src)[static_cast<std::size_t>(o)], self.grad.get(o));
            }
        };
    }
    return Tensor::adopt(std::move(node));
}

Tensor relu(const Tensor& x) {
    auto node = make_op(x.shape(), x.dtype(), {x.node_ptr()}, "relu");
    dispatch(node->value.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& in = x.node()->value.as<T>();
        auto& out = node->value.as<T>();
        for (std::size_t i = 0; i < in.size(); ++i) {
            out[i] = in[i] > T(0) ? in[i] : T(0);
        }
    });
    if (node->requires_grad) {
        node->backprop = [](Node& self) {
            Node* in = self.parents[0].get();
            if (!in->requires_grad) {
                return;
            }
            in->ensure_grad();
            dispatch(self.value.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const auto& g = self.grad.as<T>();
                const auto& v = in->value.as<T>();
                auto& din = in->grad.as<T>();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (v[i] > T(0)) {
                        din[i] += g[i];
                    }
                }
            });
        };
    }
    return Tensor::adopt(std::move(node));
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_dtype(a, b, "add");
    require_same_shape(a, b, "add");
    auto node = make_op(a.shape(), a.dtype(), {a.node_ptr(), b.node_ptr()}, "add");
    dispatch(node->value.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& va = a.node()->value.as<T>();
        const auto& vb = b.node()->value.as<T>();
        auto& out = node->value.as<T>();
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = va[i] + vb[i];
        }
    });
    if (node->requires_grad) {
        node->backprop = [](Node& self) {
            for (auto& p : self.parents) {
                if (!p->requires_grad) {
                    continue;
                }
                p->ensure_grad();
                dispatch(self.value.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    const auto& g = self.grad.as<T>();
                    auto& dp = p->grad.as<T>();
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        dp[i] += g[i];
                    }
                });
            }
        };
    }
    return Tensor::adopt(std::move(node));
}

Tensor scale(const Tensor& x, double factor) {
    auto node = make_op(x.shape(), x.dtype(), {x.node_ptr()}, "scale");
    dispatch(node->value.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& in = x.node()->value.as<T>();
        auto& out = node->value.as<T>();
        const T f = static_cast<T>(factor);
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = f * in[i];
        }
    });
    if (node->requires_grad) {
        node->backprop = [factor](Node& self) {
            Node* in = self.parents[0].get();
            if (!in->requires_grad) {
                return;
            }
            in->ensure_grad();
            dispatch(self.value.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const auto& g = self.grad.as<T>();
                auto& din = in->grad.as<T>();
                const T f = static_cast<T>(factor);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    din[i] += f * g[i];
                }
            });
        };
    }
    return Tensor::adopt(std::move(node));
}

Tensor reshape(const Tensor& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.numel()) {
        throw DimensionError("reshape: " + shape_str(x.shape()) + " has " +
                             std::to_string(x.numel()) + " elements, target " +
                             shape_str(new_shape) + " wants " +
                             std::to_string(shape_numel(new_shape)));
    }
    auto node = make_op(std::move(new_shape), x.dtype(), {x.node_ptr()}, "reshape");
    node->value = x.node()->value;
    if (node->requires_grad) {
        node->backprop = [](Node& self) {
            Node* in = self.parents[0].get();
            if (!in->requires_grad) {
                return;
            }
            in->ensure_grad();
            for (std::int64_t i = 0; i < self.numel(); ++i) {
                in->grad.add(i, self.grad.get(i));
            }
        };
    }
    return Tensor::adopt(std::move(node));
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_same_dtype(a, b, "concat_channels");
    if (a.rank() != b.rank() || a.rank() < 1) {
        throw DimensionError("concat_channels: rank mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    for (std::int64_t i = 1; i < a.rank(); ++i) {
        if (a.shape()[i] != b.shape()[i]) {
            throw DimensionError("concat_channels: extents differ on axis " + std::to_string(i) +
                                 ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
        }
    }
    Shape oshape = a.shape();
    oshape[0] += b.shape()[0];
    auto node = make_op(oshape, a.dtype(), {a.node_ptr(), b.node_ptr()}, "concat_channels");
    const std::int64_t na = a.numel();
    dispatch(node->value.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& va = a.node()->value.as<T>();
        const auto& vb = b.node()->value.as<T>();
        auto& out = node->value.as<T>();
        std::copy(va.begin(), va.end(), out.begin());
        std::copy(vb.begin(), vb.end(), out.begin() + static_cast<std::ptrdiff_t>(na));
    });
    if (node->requires_grad) {
        node->backprop = [na](Node& self) {
            Node* pa = self.parents[0].get();
            Node* pb = self.parents[1].get();
            dispatch(self.value.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const auto& g = self.grad.as<T>();
                if (pa->requires_grad) {
                    pa->ensure_grad();
                    auto& da = pa->grad.as<T>();
                    for (std::int64_t i = 0; i < na; ++i) {
                        da[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(i)];
                    }
                }
                if (pb->requires_grad) {
                    pb->ensure_grad();
                    auto& db = pb->grad.as<T>();
                    for (std::size_t i = 0; i < db.size(); ++i) {
                        db[i] += g[static_cast<std::size_t>(na) + i];
                    }
                }
            });
        };
    }
    return Tensor::adopt(std::move(node));
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    require_same_dtype(pred, target, "mse_loss");
    require_same_shape(pred, target, "mse_loss");
    auto node = make_op(Shape{}, pred.dtype(), {pred.node_ptr(), target.node_ptr()}, "mse_loss");
    const std::int64_t n = pred.numel();
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = pred.at(i) - target.at(i);
        acc += d * d;
    }
    node->value.set(0, acc / static_cast<double>(n));
    if (node->requires_grad) {
        node->backprop = [n](Node& self) {
            Node* p = self.parents[0].get();
            Node* t = self.parents[1].get();
            const double g = self.grad.get(0);
            const double c = 2.0 * g / static_cast<double>(n);
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::int64_t i = 0; i < n; ++i) {
                    p->grad.add(i, c * (p->value.get(i) - t->value.get(i)));
                }
            }
            if (t->requires_grad) {
                t->ensure_grad();
                for (std::int64_t i = 0; i < n; ++i) {
                    t->grad.add(i, -c * (p->value.get(i) - t->value.get(i)));
                }
            }
        };
    }
    return Tensor::adopt(std::move(node));
}

namespace {

constexpr double kPearsonEps = 1e-12;

struct PearsonStats {
    double n, sx, sy, sxy, sxx, syy;
    double num, dx, dy, den;
};

PearsonStats pearson_stats(const detail::Buffer& x, const detail::Buffer& y) {
    PearsonStats s{};
    const std::int64_t n = x.size();
    s.n = static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i) {
        const double xv = x.get(i);
        const double yv = y.get(i);
        s.sx += xv;
        s.sy += yv;
        s.sxy += xv * yv;
        s.sxx += xv * xv;
        s.syy += yv * yv;
    }
    s.num = s.n * s.sxy - s.sx * s.sy;
    s.dx = s.n * s.sxx - s.sx * s.sx;
    s.dy = s.n * s.syy - s.sy * s.sy;
    s.den = std::sqrt(std::max(s.dx * s.dy, 0.0) + kPearsonEps);
    return s;
}

}  // namespace

Tensor neg_pearson_loss(const Tensor& x, const Tensor& y, bool* degenerate) {
    require_same_dtype(x, y, "neg_pearson_loss");
    if (x.rank() != 1 || y.rank() != 1) {
        throw DimensionError("neg_pearson_loss: rank-1 series expected, got " +
                             shape_str(x.shape()) + " and " + shape_str(y.shape()));
    }
    require_same_shape(x, y, "neg_pearson_loss");
    if (x.numel() < 2) {
        throw DimensionError("neg_pearson_loss: series length must be >= 2, got " +
                             std::to_string(x.numel()));
    }
    const auto s = pearson_stats(x.node()->value, y.node()->value);
    const bool degen = s.dx <= 1e-12 * std::max(1.0, s.n * s.sxx) ||
                       s.dy <= 1e-12 * std::max(1.0, s.n * s.syy);
    if (degenerate != nullptr) {
        *degenerate = degen;
    }
    auto node = make_op(Shape{}, x.dtype(), {x.node_ptr(), y.node_ptr()}, "neg_pearson_loss");
    node->value.set(0, -s.num / s.den);
    if (node->requires_grad) {
        node->backprop = [](Node& self) {
            Node* px = self.parents[0].get();
            Node* py = self.parents[1].get();
            const auto s = pearson_stats(px->value, py->value);
            const double g = self.grad.get(0);
            const double den3 = s.den * s.den * s.den;
            const std::int64_t n = px->numel();
            if (px->requires_grad) {
                px->ensure_grad();
                for (std::int64_t i = 0; i < n; ++i) {
                    const double dnum = s.n * py->value.get(i) - s.sy;
                    const double ddx = s.dy * (s.n * px->value.get(i) - s.sx);
                    px->grad.add(i, g * (-dnum / s.den + s.num * ddx / den3));
                }
            }
            if (py->requires_grad) {
                py->ensure_grad();
                for (std::int64_t i = 0; i < n; ++i) {
                    const double dnum = s.n * px->value.get(i) - s.sx;
                    const double ddy = s.dx * (s.n * py->value.get(i) - s.sy);
                    py->grad.add(i, g * (-dnum / s.den + s.num * ddy / den3));
                }
            }
        };
    }
    return Tensor::adopt(std::move(node));
}

Tensor frame_inner_products(const Tensor& frames, const Tensor& weights) {
    require_same_dtype(frames, weights, "frame_inner_products");
    if (frames.rank() < 2) {
        throw DimensionError("frame_inner_products: frames must be [T,...], got " +
                             shape_str(frames.shape()));
    }
    Shape rest(frames.shape().begin() + 1, frames.shape().end());
    if (weights.shape() != rest) {
        throw DimensionError("frame_inner_products: weights " + shape_str(weights.shape()) +
                             " do not match frame extents " + shape_str(rest));
    }
    const std::int64_t t_n = frames.shape()[0];
    const std::int64_t sp = shape_numel(rest);
    auto node = make_op(Shape{t_n}, frames.dtype(), {frames.node_ptr(), weights.node_ptr()},
                        "frame_inner_products");
    dispatch(node->value.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& f = frames.node()->value.as<T>();
        const auto& w = weights.node()->value.as<T>();
        auto& out = node->value.as<T>();
        for (std::int64_t t = 0; t < t_n; ++t) {
            T acc = T(0);
            const T* fr = f.data() + t * sp;
            for (std::int64_t j = 0; j < sp; ++j) {
                acc += fr[j] * w[static_cast<std::size_t>(j)];
            }
            out[static_cast<std::size_t>(t)] = acc;
        }
    });
    if (node->requires_grad) {
        node->backprop = [t_n, sp](Node& self) {
            Node* f = self.parents[0].get();
            Node* w = self.parents[1].get();
            dispatch(self.value.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const auto& g = self.grad.as<T>();
                if (w->requires_grad) {
                    w->ensure_grad();
                    auto& dw = w->grad.as<T>();
                    const auto& fv = f->value.as<T>();
                    for (std::int64_t t = 0; t < t_n; ++t) {
                        const T gt = g[static_cast<std::size_t>(t)];
                        const T* fr = fv.data() + t * sp;
                        for (std::int64_t j = 0; j < sp; ++j) {
                            dw[static_cast<std::size_t>(j)] += gt * fr[j];
                        }
                    }
                }
                if (f->requires_grad) {
                    f->ensure_grad();
                    auto& df = f->grad.as<T>();
                    const auto& wv = w->value.as<T>();
                    for (std::int64_t t = 0; t < t_n; ++t) {
                        const T gt = g[static_cast<std::size_t>(t)];
                        T* dfr = df.data() + t * sp;
                        for (std::int64_t j = 0; j < sp; ++j) {
                            dfr[j] += gt * wv[static_cast<std::size_t>(j)];
                        }
                    }
                }
            });
        };
    }
    return Tensor::adopt(std::move(node));
}

}  // namespace stcnn
