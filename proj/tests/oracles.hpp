// Independent reference implementations used as test oracles. Everything here
// recomputes results with direct index-by-index formulas, deliberately not
// sharing code with the library kernels.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

// Direct gather cross-correlation, zero padding. Shapes follow the library
// convention: input [cin,d,h,w], kernel [cout,cin,kd,kh,kw].
inline std::vector<double> conv3d_ref(const std::vector<double>& in, std::int64_t cin,
                                      std::int64_t d, std::int64_t h, std::int64_t w,
                                      const std::vector<double>& ker, std::int64_t cout,
                                      std::int64_t kd, std::int64_t kh, std::int64_t kw,
                                      bool same) {
    const std::int64_t od = same ? d : d - kd + 1;
    const std::int64_t oh = same ? h : h - kh + 1;
    const std::int64_t ow = same ? w : w - kw + 1;
    const std::int64_t pd = same ? (kd - 1) / 2 : 0;
    const std::int64_t ph = same ? (kh - 1) / 2 : 0;
    const std::int64_t pw = same ? (kw - 1) / 2 : 0;
    std::vector<double> out(static_cast<std::size_t>(cout * od * oh * ow), 0.0);
    for (std::int64_t co = 0; co < cout; ++co)
        for (std::int64_t z = 0; z < od; ++z)
            for (std::int64_t y = 0; y < oh; ++y)
                for (std::int64_t x = 0; x < ow; ++x) {
                    double acc = 0.0;
                    for (std::int64_t ci = 0; ci < cin; ++ci)
                        for (std::int64_t kz = 0; kz < kd; ++kz)
                            for (std::int64_t ky = 0; ky < kh; ++ky)
                                for (std::int64_t kx = 0; kx < kw; ++kx) {
                                    const std::int64_t iz = z + kz - pd;
                                    const std::int64_t iy = y + ky - ph;
                                    const std::int64_t ix = x + kx - pw;
                                    if (iz < 0 || iz >= d || iy < 0 || iy >= h || ix < 0 ||
                                        ix >= w) {
                                        continue;
                                    }
                                    acc += in[static_cast<std::size_t>(
                                               ((ci * d + iz) * h + iy) * w + ix)] *
                                           ker[static_cast<std::size_t>(
                                               (((co * cin + ci) * kd + kz) * kh + ky) * kw +
                                               kx)];
                                }
                    out[static_cast<std::size_t>(((co * od + z) * oh + y) * ow + x)] = acc;
                }
    return out;
}

inline std::vector<double> conv1d_ref(const std::vector<double>& in, std::int64_t cin,
                                      std::int64_t len, const std::vector<double>& ker,
                                      std::int64_t cout, std::int64_t k, bool same) {
    return conv3d_ref(in, cin, 1, 1, len, ker, cout, 1, 1, k, same);
}

// Ceil-mode window max over the trailing axes (axis 0 is channels when rank
// >= 2); windows clamp at the boundary.
inline std::vector<double> maxpool_ref(const std::vector<double>& in,
                                       const std::vector<std::int64_t>& shape,
                                       std::int64_t window,
                                       std::vector<std::int64_t>* out_shape = nullptr) {
    const std::size_t rank = shape.size();
    const std::size_t begin = rank >= 2 ? 1 : 0;
    std::vector<std::int64_t> oshape = shape;
    for (std::size_t a = begin; a < rank; ++a) {
        oshape[a] = (shape[a] + window - 1) / window;
    }
    std::vector<std::int64_t> istr(rank, 1), ostr(rank, 1);
    for (std::size_t a = rank; a-- > 1;) {
        istr[a - 1] = istr[a] * shape[a];
        ostr[a - 1] = ostr[a] * oshape[a];
    }
    std::int64_t onum = 1;
    for (const auto e : oshape) {
        onum *= e;
    }
    std::vector<double> out(static_cast<std::size_t>(onum));
    for (std::int64_t o = 0; o < onum; ++o) {
        std::vector<std::int64_t> oi(rank);
        std::int64_t rem = o;
        for (std::size_t a = 0; a < rank; ++a) {
            oi[a] = rem / ostr[a];
            rem %= ostr[a];
        }
        double best = -1e300;
        std::vector<std::int64_t> lo(rank), hi(rank);
        for (std::size_t a = 0; a < rank; ++a) {
            lo[a] = a < begin ? oi[a] : oi[a] * window;
            hi[a] = a < begin ? oi[a] + 1 : std::min(lo[a] + window, shape[a]);
        }
        std::vector<std::int64_t> ci = lo;
        while (true) {
            std::int64_t flat = 0;
            for (std::size_t a = 0; a < rank; ++a) {
                flat += ci[a] * istr[a];
            }
            best = std::max(best, in[static_cast<std::size_t>(flat)]);
            std::size_t a = rank;
            bool carry = true;
            while (a-- > 0 && carry) {
                if (++ci[a] < hi[a]) {
                    carry = false;
                } else {
                    ci[a] = lo[a];
                }
            }
            if (carry) {
                break;
            }
        }
        out[static_cast<std::size_t>(o)] = best;
    }
    if (out_shape != nullptr) {
        *out_shape = oshape;
    }
    return out;
}

// Nearest-neighbour upsample over the trailing axes via explicit index maps.
inline std::vector<double> upsample_ref(const std::vector<double>& in,
                                        const std::vector<std::int64_t>& shape,
                                        std::int64_t factor) {
    const std::size_t rank = shape.size();
    const std::size_t begin = rank >= 2 ? 1 : 0;
    std::vector<std::int64_t> oshape = shape;
    for (std::size_t a = begin; a < rank; ++a) {
        oshape[a] = shape[a] * factor;
    }
    std::vector<std::int64_t> istr(rank, 1), ostr(rank, 1);
    for (std::size_t a = rank; a-- > 1;) {
        istr[a - 1] = istr[a] * shape[a];
        ostr[a - 1] = ostr[a] * oshape[a];
    }
    std::int64_t onum = 1;
    for (const auto e : oshape) {
        onum *= e;
    }
    std::vector<double> out(static_cast<std::size_t>(onum));
    for (std::int64_t o = 0; o < onum; ++o) {
        std::int64_t rem = o, flat = 0;
        for (std::size_t a = 0; a < rank; ++a) {
            const std::int64_t oi = rem / ostr[a];
            rem %= ostr[a];
            flat += (a < begin ? oi : oi / factor) * istr[a];
        }
        out[static_cast<std::size_t>(o)] = in[static_cast<std::size_t>(flat)];
    }
    return out;
}

// Pearson correlation straight from the summation formula.
inline double pearson_ref(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxy += x[i] * y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
    }
    return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

inline double mse_ref(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += (a[i] - b[i]) * (a[i] - b[i]);
    }
    return acc / static_cast<double>(a.size());
}

// Cyclic coordinate descent for min ||x - D a||^2 + lambda ||a||_1 with
// unit-norm atoms (columns of D given atom-major: atoms[k][t]).
inline std::vector<double> lasso_cd_ref(const std::vector<std::vector<double>>& atoms,
                                        const std::vector<double>& x, double lambda,
                                        std::int64_t iters = 4000) {
    const std::size_t k = atoms.size();
    const std::size_t t = x.size();
    std::vector<double> a(k, 0.0);
    for (std::int64_t it = 0; it < iters; ++it) {
        double delta = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            // rho_j = d_j^T (x - sum_{i != j} a_i d_i)
            double rho = 0.0;
            for (std::size_t ti = 0; ti < t; ++ti) {
                double resid = x[ti];
                for (std::size_t i = 0; i < k; ++i) {
                    if (i != j) {
                        resid -= a[i] * atoms[i][ti];
                    }
                }
                rho += atoms[j][ti] * resid;
            }
            double gjj = 0.0;
            for (std::size_t ti = 0; ti < t; ++ti) {
                gjj += atoms[j][ti] * atoms[j][ti];
            }
            // subgradient optimum: a_j = soft(rho, lambda/2) / ||d_j||^2
            double next = 0.0;
            const double thr = lambda / 2.0;
            if (rho > thr) {
                next = (rho - thr) / gjj;
            } else if (rho < -thr) {
                next = (rho + thr) / gjj;
            }
            delta = std::max(delta, std::abs(next - a[j]));
            a[j] = next;
        }
        if (delta < 1e-14) {
            break;
        }
    }
    return a;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0,
                                         double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> out(n);
    for (auto& v : out) {
        v = dist(rng);
    }
    return out;
}

}  // namespace oracle
