#include <doctest.h>

#include "stcnn/ops.hpp"
#include "stcnn/tensor.hpp"

using namespace stcnn;

TEST_SUITE("tensor") {

TEST_CASE("shape and data invariants") {
    Tensor t = Tensor::zeros({2, 3, 4});
    CHECK(t.numel() == 24);
    CHECK(t.rank() == 3);
    CHECK(t.dtype() == DType::f64);
    CHECK_FALSE(t.requires_grad());
    CHECK_THROWS_AS(Tensor::zeros({2, 0, 4}), DimensionError);
    CHECK_THROWS_AS(Tensor::from_values({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST_CASE("f32 storage is selectable") {
    Tensor t = Tensor::full({4}, 0.1, DType::f32);
    CHECK(t.dtype() == DType::f32);
    // stored at f32 precision, not f64
    CHECK(t.at(0) == doctest::Approx(0.1f).epsilon(1e-9));
    CHECK(t.at(0) != 0.1);
}

TEST_CASE("graph intermediates are immutable") {
    Tensor x = Tensor::full({2}, 1.0);
    Tensor y = relu(x);
    CHECK_THROWS_AS(y.set(0, 3.0), UsageError);
}

TEST_CASE("backward requires scalar loss") {
    Tensor x = Tensor::full({2}, 1.0, DType::f64, true);
    Tensor y = relu(x);
    CHECK_THROWS_AS(y.backward(), UsageError);
}

TEST_CASE("d/dx mse(x, 0) at x=[2] is [4]") {
    Tensor x = Tensor::from_values({1}, std::vector<double>{2.0}, DType::f64, true);
    Tensor zero = Tensor::zeros({1});
    Tensor loss = mse_loss(x, zero);
    loss.backward();
    CHECK(x.grad_at(0) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("fan-out accumulates: y = x + x gives grad 2") {
    Tensor x = Tensor::from_values({3}, std::vector<double>{1, 2, 3}, DType::f64, true);
    Tensor y = add(x, x);
    Tensor loss = mse_loss(y, Tensor::zeros({3}));
    loss.backward();
    // d/dx mean((2x)^2) = 8x/3
    for (int i = 0; i < 3; ++i) {
        CHECK(x.grad_at(i) == doctest::Approx(8.0 * x.at(i) / 3.0).epsilon(1e-12));
    }
}

TEST_CASE("grad accumulation is order independent across permuted graphs") {
    const std::vector<double> vals{0.3, -0.7, 1.1};
    auto run = [&](int permutation) {
        Tensor a = Tensor::from_values({3}, vals, DType::f64, true);
        Tensor b = Tensor::from_values({3}, vals, DType::f64, true);
        Tensor c = Tensor::from_values({3}, vals, DType::f64, true);
        Tensor sum;
        switch (permutation) {
            case 0: sum = add(add(a, b), c); break;
            case 1: sum = add(a, add(b, c)); break;
            default: sum = add(add(c, a), b); break;
        }
        Tensor loss = mse_loss(sum, Tensor::zeros({3}));
        loss.backward();
        return std::tuple{a.grad_values(), b.grad_values(), c.grad_values()};
    };
    const auto g0 = run(0);
    const auto g1 = run(1);
    const auto g2 = run(2);
    for (int i = 0; i < 3; ++i) {
        CHECK(std::get<0>(g0)[i] == doctest::Approx(std::get<0>(g1)[i]).epsilon(1e-12));
        CHECK(std::get<0>(g0)[i] == doctest::Approx(std::get<0>(g2)[i]).epsilon(1e-12));
        CHECK(std::get<1>(g0)[i] == doctest::Approx(std::get<1>(g1)[i]).epsilon(1e-12));
        CHECK(std::get<2>(g0)[i] == doctest::Approx(std::get<2>(g2)[i]).epsilon(1e-12));
    }
}

TEST_CASE("backward twice accumulates into leaves") {
    Tensor x = Tensor::from_values({1}, std::vector<double>{2.0}, DType::f64, true);
    Tensor loss = mse_loss(x, Tensor::zeros({1}));
    loss.backward();
    loss.backward();
    CHECK(x.grad_at(0) == doctest::Approx(8.0));
    x.zero_grad();
    CHECK(x.grad_at(0) == 0.0);
}

TEST_CASE("detach cuts the graph") {
    Tensor x = Tensor::full({2}, 3.0, DType::f64, true);
    Tensor y = scale(x, 2.0).detach();
    CHECK(y.is_leaf());
    CHECK(y.at(0) == 6.0);
    Tensor loss = mse_loss(y, Tensor::zeros({2}));
    CHECK_FALSE(loss.requires_grad());
}

}  // TEST_SUITE
