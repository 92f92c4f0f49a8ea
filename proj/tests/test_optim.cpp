#include <doctest.h>

#include <cmath>

#include "stcnn/ops.hpp"
#include "stcnn/optim.hpp"

using namespace stcnn;

namespace {

// scalar loss <p, w>; gradient w.r.t. p is exactly w
Tensor dot_loss(const Tensor& p, const Tensor& w) {
    return reshape(frame_inner_products(reshape(p, {1, p.numel()}), w), Shape{});
}

}  // namespace

TEST_SUITE("optim") {

TEST_CASE("sgd: lr 0.1 on grad 1 moves param from 0 to -0.1") {
    Tensor p = Tensor::zeros({1}, DType::f64, true);
    dot_loss(p, Tensor::full({1}, 1.0)).backward();
    CHECK(p.grad_at(0) == doctest::Approx(1.0));
    Sgd opt({p}, SgdConfig{.lr = 0.1});
    opt.step();
    CHECK(p.at(0) == doctest::Approx(-0.1).epsilon(1e-15));
}

TEST_CASE("sgd/adam: no gradient means no change") {
    Tensor p = Tensor::full({3}, 0.5, DType::f64, true);
    Sgd sgd({p}, SgdConfig{.lr = 0.1});
    sgd.step();
    CHECK(p.values() == std::vector<double>{0.5, 0.5, 0.5});

    Adam adam({p}, AdamConfig{});
    adam.step();
    CHECK(p.values() == std::vector<double>{0.5, 0.5, 0.5});
}

TEST_CASE("adam first step with unit gradient is about -lr") {
    Tensor p = Tensor::zeros({1}, DType::f64, true);
    dot_loss(p, Tensor::full({1}, 1.0)).backward();
    AdamConfig cfg;
    Adam opt({p}, cfg);
    opt.step();
    // m_hat = 1, v_hat = 1 -> step = -lr / (1 + eps)
    const double expected = -cfg.lr / (1.0 + cfg.eps);
    CHECK(p.at(0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(p.at(0) == doctest::Approx(-cfg.lr).epsilon(1e-6));
}

TEST_CASE("adam matches a hand-stepped reference over several steps") {
    Tensor p = Tensor::from_values({1}, std::vector<double>{0.3}, DType::f64, true);
    AdamConfig cfg;
    Adam opt({p}, cfg);
    double ref = 0.3, m = 0.0, v = 0.0;
    for (int t = 1; t <= 5; ++t) {
        p.zero_grad();
        dot_loss(p, p).backward();  // loss = p^2, grad = 2p via fan-out
        const double g = 2.0 * ref;
        opt.step();
        m = cfg.beta1 * m + (1 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
        const double mh = m / (1 - std::pow(cfg.beta1, t));
        const double vh = v / (1 - std::pow(cfg.beta2, t));
        ref -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
        CHECK(p.at(0) == doctest::Approx(ref).epsilon(1e-12));
    }
}

}  // TEST_SUITE
