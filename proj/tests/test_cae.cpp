#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "stcnn/cae.hpp"
#include "stcnn/gradcheck.hpp"

using namespace stcnn;

TEST_SUITE("cae") {

TEST_CASE("architecture conformance: kernels 3/5/8, channels 8/16/32") {
    const CAEModel model = CAEModel::init(CAEConfig{});
    CHECK(model.encoder_kernel_sizes() == std::vector<std::int64_t>{3, 5, 8});
    CHECK(model.encoder_channel_counts() == std::vector<std::int64_t>{8, 16, 32});
}

TEST_CASE("length preservation for N=64 and other multiples of 4") {
    const CAEModel model = CAEModel::init(CAEConfig{});
    std::mt19937_64 rng(3);
    for (const std::int64_t n : {8, 12, 64, 100}) {
        Tensor in = Tensor::uniform({1, n}, -1, 1, rng);
        CHECK(model.forward(in).shape() == Shape{1, n});
    }
}

TEST_CASE("non-multiples of 4 are padded through pooling and cropped back") {
    const CAEModel model = CAEModel::init(CAEConfig{});
    std::mt19937_64 rng(4);
    for (const std::int64_t n : {9, 14, 27, 65}) {
        Tensor in = Tensor::uniform({1, n}, -1, 1, rng);
        CHECK(model.forward(in).shape() == Shape{1, n});
    }
}

TEST_CASE("series shorter than 8 is a configuration error") {
    const CAEModel model = CAEModel::init(CAEConfig{});
    CHECK_THROWS_AS(model.forward(Tensor::zeros({1, 7})), ConfigError);
}

TEST_CASE("zero input with zero biases gives zero output") {
    const CAEModel model = CAEModel::init(CAEConfig{});
    const auto out = model.forward(Tensor::zeros({1, 16})).values();
    for (const double v : out) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("sampled-parameter finite differences match within 1e-5") {
    const CAEModel model = CAEModel::init(CAEConfig{.dtype = DType::f64, .seed = 8});
    std::mt19937_64 rng(11);
    Tensor in = Tensor::uniform({1, 16}, -1, 1, rng);
    Tensor label = Tensor::uniform({16}, -1, 1, rng);
    auto fwd = [&] { return temporal_loss(model.forward(in), label); };
    const auto params = model.parameters();
    std::vector<Tensor> sampled{params[0], params[2], params[6], params.back()};
    const auto rep = check_gradients(fwd, sampled, 1e-5, 1e-5, 3, &rng);
    CAPTURE(rep.worst);
    CHECK(rep.ok);
}

TEST_CASE("temporal_loss trivial values and the -0.8 case") {
    Tensor pred = Tensor::from_values({1, 4}, std::vector<double>{1, 2, 3, 4});
    Tensor same = Tensor::from_values({4}, std::vector<double>{1, 2, 3, 4});
    CHECK(temporal_loss(pred, same).item() == doctest::Approx(-1.0).epsilon(1e-9));
    Tensor anti = Tensor::from_values({4}, std::vector<double>{-1, -2, -3, -4});
    CHECK(temporal_loss(pred, anti).item() == doctest::Approx(1.0).epsilon(1e-9));
    Tensor label = Tensor::from_values({4}, std::vector<double>{1, 3, 2, 4});
    CHECK(temporal_loss(pred, label).item() == doctest::Approx(-0.8).epsilon(1e-13));
}

TEST_CASE("temporal_loss is shift and positive-scale invariant in pred") {
    std::mt19937_64 rng(12);
    const auto pv = oracle::random_vector(24, rng);
    const auto lv = oracle::random_vector(24, rng);
    Tensor label = Tensor::from_values({24}, lv);
    const double base = temporal_loss(Tensor::from_values({1, 24}, pv), label).item();
    std::vector<double> scaled(24);
    for (std::size_t i = 0; i < 24; ++i) {
        scaled[i] = 2.5 * pv[i] - 0.7;
    }
    const double moved = temporal_loss(Tensor::from_values({1, 24}, scaled), label).item();
    CHECK(std::abs(base - moved) < 1e-9);
}

}  // TEST_SUITE
