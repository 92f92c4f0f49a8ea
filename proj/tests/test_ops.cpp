#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "stcnn/ops.hpp"

using namespace stcnn;

TEST_SUITE("ops") {

TEST_CASE("conv3d: all-ones 3x3x3 valid sums to 27") {
    Tensor in = Tensor::full({1, 3, 3, 3}, 1.0);
    Tensor ker = Tensor::full({1, 1, 3, 3, 3}, 1.0);
    Tensor out = conv3d(in, ker, Padding::valid);
    CHECK(out.shape() == Shape{1, 1, 1, 1});
    CHECK(out.at(0) == doctest::Approx(27.0).epsilon(1e-15));
}

TEST_CASE("conv3d: Dirac kernel under same padding is the identity") {
    std::mt19937_64 rng(7);
    const auto vals = oracle::random_vector(2 * 4 * 4 * 4, rng);
    Tensor in = Tensor::from_values({2, 4, 4, 4}, vals);
    Tensor ker = Tensor::zeros({2, 2, 3, 3, 3});
    // kernel[c][c] center = 1
    for (std::int64_t c = 0; c < 2; ++c) {
        const std::int64_t center = ((c * 2 + c) * 3 + 1) * 9 + 1 * 3 + 1;
        ker.set(center, 1.0);
    }
    Tensor out = conv3d(in, ker, Padding::same);
    const auto got = out.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
        CHECK(got[i] == doctest::Approx(vals[i]).epsilon(1e-15));
    }
}

TEST_CASE("conv3d matches the nested-loop oracle on random instances") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 8; ++rep) {
        const std::int64_t cin = 1 + rep % 2;
        const std::int64_t cout = 1 + (rep / 2) % 3;
        const bool same = rep % 2 == 0;
        const auto iv = oracle::random_vector(static_cast<std::size_t>(cin) * 4 * 4 * 4, rng);
        const auto kv =
            oracle::random_vector(static_cast<std::size_t>(cout * cin) * 2 * 2 * 2, rng);
        Tensor in = Tensor::from_values({cin, 4, 4, 4}, iv);
        Tensor ker = Tensor::from_values({cout, cin, 2, 2, 2}, kv);
        Tensor out = conv3d(in, ker, same ? Padding::same : Padding::valid);
        const auto ref = oracle::conv3d_ref(iv, cin, 4, 4, 4, kv, cout, 2, 2, 2, same);
        const auto got = out.values();
        REQUIRE(got.size() == ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) {
            CHECK(std::abs(got[i] - ref[i]) < 1e-12);
        }
    }
}

TEST_CASE("conv3d rejects oversize kernels naming the axis") {
    Tensor in = Tensor::full({1, 3, 3, 3}, 1.0);
    Tensor ker = Tensor::full({1, 1, 5, 3, 3}, 1.0);
    CHECK_THROWS_WITH_AS(conv3d(in, ker, Padding::valid),
                         doctest::Contains("axis D"), DimensionError);
    Tensor bad_ch = Tensor::full({1, 2, 3, 3, 3}, 1.0);
    CHECK_THROWS_WITH_AS(conv3d(in, bad_ch, Padding::valid),
                         doctest::Contains("axis C"), DimensionError);
}

TEST_CASE("conv1d: identity kernel, box kernel and oracle") {
    Tensor in = Tensor::from_values({1, 3}, std::vector<double>{1, 2, 3});
    Tensor ident = Tensor::from_values({1, 1, 3}, std::vector<double>{0, 1, 0});
    const auto same = conv1d(in, ident, Padding::same).values();
    CHECK(same == std::vector<double>{1, 2, 3});

    Tensor ones = Tensor::from_values({1, 4}, std::vector<double>{1, 1, 1, 1});
    Tensor box = Tensor::from_values({1, 1, 2}, std::vector<double>{1, 1});
    const auto valid = conv1d(ones, box, Padding::valid).values();
    CHECK(valid == std::vector<double>{2, 2, 2});

    std::mt19937_64 rng(3);
    const auto iv = oracle::random_vector(16, rng);
    const auto kv = oracle::random_vector(5, rng);
    Tensor rin = Tensor::from_values({1, 16}, iv);
    Tensor rker = Tensor::from_values({1, 1, 5}, kv);
    for (const bool s : {true, false}) {
        const auto got = conv1d(rin, rker, s ? Padding::same : Padding::valid).values();
        const auto ref = oracle::conv1d_ref(iv, 1, 16, kv, 1, 5, s);
        REQUIRE(got.size() == ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) {
            CHECK(std::abs(got[i] - ref[i]) < 1e-12);
        }
    }
}

TEST_CASE("maxpool: window examples and tie-break") {
    Tensor v = Tensor::from_values({4}, std::vector<double>{1, 3, 2, 4});
    CHECK(maxpool(v, 2).values() == std::vector<double>{3, 4});

    Tensor c = Tensor::full({4}, 5.0, DType::f64, true);
    Tensor p = maxpool(c, 2);
    CHECK(p.values() == std::vector<double>{5, 5});
    Tensor loss = mse_loss(p, Tensor::zeros({2}));
    loss.backward();
    // ties route to the first cell of each window
    CHECK(c.grad_at(0) != 0.0);
    CHECK(c.grad_at(1) == 0.0);
    CHECK(c.grad_at(2) != 0.0);
    CHECK(c.grad_at(3) == 0.0);

    CHECK_THROWS_AS(maxpool(Tensor::full({1, 1}, 1.0), 2), DimensionError);
}

TEST_CASE("maxpool matches the window-scan oracle on a random volume") {
    std::mt19937_64 rng(23);
    const auto vals = oracle::random_vector(1 * 8 * 8 * 8, rng);
    Tensor in = Tensor::from_values({1, 8, 8, 8}, vals);
    const auto got = maxpool(in, 2).values();
    const auto ref = oracle::maxpool_ref(vals, {1, 8, 8, 8}, 2);
    CHECK(got == ref);
}

TEST_CASE("maxpool ceil mode clamps the trailing window") {
    Tensor in = Tensor::from_values({5}, std::vector<double>{1, 5, 2, 3, 9});
    CHECK(maxpool(in, 2).values() == std::vector<double>{5, 3, 9});
}

TEST_CASE("upsample: replication examples and oracle") {
    Tensor v = Tensor::from_values({2}, std::vector<double>{1, 2});
    CHECK(upsample(v, 2).values() == std::vector<double>{1, 1, 2, 2});

    // upsample(maxpool(constant)) restores the constant input
    Tensor c = Tensor::full({2, 4}, 3.5);
    const auto round_trip = upsample(maxpool(c, 2), 2).values();
    CHECK(round_trip == c.values());

    std::mt19937_64 rng(5);
    const auto vals = oracle::random_vector(2 * 4 * 4 * 4, rng);
    Tensor in = Tensor::from_values({2, 4, 4, 4}, vals);
    const auto got = upsample(in, 2).values();
    const auto ref = oracle::upsample_ref(vals, {2, 4, 4, 4}, 2);
    CHECK(got == ref);
}

TEST_CASE("maxpool-upsample idempotence on window-constant input") {
    // piecewise constant at window granularity: pool then upsample is identity
    std::mt19937_64 rng(17);
    Tensor blocks = Tensor::zeros({1, 4, 4, 4});
    std::uniform_real_distribution<double> dist(-1, 1);
    for (std::int64_t z = 0; z < 4; z += 2)
        for (std::int64_t y = 0; y < 4; y += 2)
            for (std::int64_t x = 0; x < 4; x += 2) {
                const double v = dist(rng);
                for (std::int64_t dz = 0; dz < 2; ++dz)
                    for (std::int64_t dy = 0; dy < 2; ++dy)
                        for (std::int64_t dx = 0; dx < 2; ++dx) {
                            blocks.set(((z + dz) * 4 + y + dy) * 4 + x + dx, v);
                        }
            }
    const auto once = upsample(maxpool(blocks, 2), 2).values();
    CHECK(once == blocks.values());
}

TEST_CASE("relu, concat, scale, reshape, crop") {
    Tensor x = Tensor::from_values({3}, std::vector<double>{-1, 0, 2});
    CHECK(relu(x).values() == std::vector<double>{0, 0, 2});

    Tensor a = Tensor::full({2, 3}, 1.0);
    Tensor b = Tensor::full({3, 3}, 2.0);
    Tensor cat = concat_channels(a, b);
    CHECK(cat.shape() == Shape{5, 3});
    CHECK(cat.at(0) == 1.0);
    CHECK(cat.at(6) == 2.0);
    CHECK_THROWS_AS(concat_channels(a, Tensor::full({2, 4}, 1.0)), DimensionError);

    Tensor s = Tensor::full({2}, 1.5, DType::f64, true);
    Tensor y = scale(s, 3.0);
    CHECK(y.at(0) == doctest::Approx(4.5));
    Tensor loss = mse_loss(y, Tensor::zeros({2}));
    loss.backward();
    // gradient of scale(x,3) is 3 * upstream; upstream = 2*3x/2 = 3x
    CHECK(s.grad_at(0) == doctest::Approx(3.0 * 3.0 * 1.5).epsilon(1e-12));

    Tensor r = reshape(Tensor::from_values({4}, std::vector<double>{1, 2, 3, 4}), {2, 2});
    CHECK(r.shape() == Shape{2, 2});
    CHECK_THROWS_AS(reshape(r, {5}), DimensionError);

    Tensor cr = crop(Tensor::from_values({1, 4}, std::vector<double>{1, 2, 3, 4}), {2});
    CHECK(cr.values() == std::vector<double>{1, 2});
}

TEST_CASE("mse_loss: trivial and random values") {
    Tensor p = Tensor::from_values({2}, std::vector<double>{0, 0});
    Tensor t = Tensor::from_values({2}, std::vector<double>{1, 1});
    CHECK(mse_loss(p, p).item() == 0.0);
    CHECK(mse_loss(p, t).item() == doctest::Approx(1.0).epsilon(1e-15));

    std::mt19937_64 rng(31);
    const auto av = oracle::random_vector(24, rng);
    const auto bv = oracle::random_vector(24, rng);
    Tensor a = Tensor::from_values({24}, av);
    Tensor b = Tensor::from_values({24}, bv);
    CHECK(mse_loss(a, b).item() == doctest::Approx(oracle::mse_ref(av, bv)).epsilon(1e-14));

    CHECK_THROWS_AS(mse_loss(a, Tensor::zeros({23})), DimensionError);
}

TEST_CASE("neg_pearson_loss: hand-derived -0.8 plus perfect correlations") {
    Tensor x = Tensor::from_values({4}, std::vector<double>{1, 2, 3, 4});
    Tensor y = Tensor::from_values({4}, std::vector<double>{1, 3, 2, 4});
    CHECK(neg_pearson_loss(x, y).item() == doctest::Approx(-0.8).epsilon(1e-13));

    CHECK(neg_pearson_loss(x, x).item() == doctest::Approx(-1.0).epsilon(1e-9));
    Tensor negx = scale(x, -1.0).detach();
    CHECK(neg_pearson_loss(x, negx).item() == doctest::Approx(1.0).epsilon(1e-9));

    bool degenerate = false;
    Tensor flat = Tensor::full({4}, 2.0);
    const double v = neg_pearson_loss(flat, x, &degenerate).item();
    CHECK(degenerate);
    CHECK(std::isfinite(v));

    CHECK_THROWS_AS(neg_pearson_loss(x, Tensor::zeros({3})), DimensionError);
    CHECK_THROWS_AS(neg_pearson_loss(Tensor::zeros({1}), Tensor::zeros({1})), DimensionError);
}

TEST_CASE("neg_pearson_loss bound and affine invariance over random pairs") {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> a_dist(0.5, 3.0);
    std::uniform_real_distribution<double> b_dist(-2.0, 2.0);
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t n = 4 + rep % 29;
        const auto xv = oracle::random_vector(n, rng);
        const auto yv = oracle::random_vector(n, rng);
        Tensor x = Tensor::from_values({static_cast<std::int64_t>(n)}, xv);
        Tensor y = Tensor::from_values({static_cast<std::int64_t>(n)}, yv);
        const double loss = neg_pearson_loss(x, y).item();
        CHECK(loss >= -1.0 - 1e-9);
        CHECK(loss <= 1.0 + 1e-9);

        const double a = a_dist(rng);
        const double b = b_dist(rng);
        std::vector<double> xt(n);
        for (std::size_t i = 0; i < n; ++i) {
            xt[i] = a * xv[i] + b;
        }
        Tensor x2 = Tensor::from_values({static_cast<std::int64_t>(n)}, xt);
        const double loss2 = neg_pearson_loss(x2, y).item();
        CHECK(std::abs(loss - loss2) < 1e-9);
    }
}

TEST_CASE("frame_inner_products matches per-frame dot products") {
    std::mt19937_64 rng(41);
    const auto fv = oracle::random_vector(4 * 27, rng);
    const auto wv = oracle::random_vector(27, rng);
    Tensor frames = Tensor::from_values({4, 3, 3, 3}, fv);
    Tensor weights = Tensor::from_values({3, 3, 3}, wv);
    const auto got = frame_inner_products(frames, weights).values();
    for (std::size_t t = 0; t < 4; ++t) {
        double ref = 0.0;
        for (std::size_t j = 0; j < 27; ++j) {
            ref += fv[t * 27 + j] * wv[j];
        }
        CHECK(std::abs(got[t] - ref) < 1e-12);
    }
}

TEST_CASE("add_channel_bias broadcasts per channel") {
    Tensor x = Tensor::zeros({2, 3});
    Tensor b = Tensor::from_values({2}, std::vector<double>{1.0, -2.0});
    const auto got = add_channel_bias(x, b).values();
    CHECK(got == std::vector<double>{1, 1, 1, -2, -2, -2});
    CHECK_THROWS_AS(add_channel_bias(x, Tensor::zeros({3})), DimensionError);
}

}  // TEST_SUITE
