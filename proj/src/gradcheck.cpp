#include "stcnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stcnn/cae.hpp"
#include "stcnn/ops.hpp"
#include "stcnn/unet.hpp"

namespace stcnn {

GradCheckReport check_gradients(const std::function<Tensor()>& forward,
                                std::span<const Tensor> leaves, double h, double tol,
                                std::int64_t max_elems_per_leaf, std::mt19937_64* rng) {
    GradCheckReport report;
    for (const auto& leaf : leaves) {
        const_cast<Tensor&>(leaf).zero_grad();
    }
    Tensor loss = forward();
    loss.backward();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (const auto& leaf : leaves) {
        analytic.push_back(leaf.has_grad() ? leaf.grad_values()
                                           : std::vector<double>(
                                                 static_cast<std::size_t>(leaf.numel()), 0.0));
    }

    for (std::size_t k = 0; k < leaves.size(); ++k) {
        Tensor leaf = leaves[k];
        std::vector<std::int64_t> idx(static_cast<std::size_t>(leaf.numel()));
        std::iota(idx.begin(), idx.end(), 0);
        if (max_elems_per_leaf >= 0 && max_elems_per_leaf < leaf.numel()) {
            if (rng == nullptr) {
                throw UsageError("check_gradients: sampling requires an rng");
            }
            std::shuffle(idx.begin(), idx.end(), *rng);
            idx.resize(static_cast<std::size_t>(max_elems_per_leaf));
        }
        for (const std::int64_t i : idx) {
            const double x0 = leaf.at(i);
            leaf.set(i, x0 + h);
            const double lp = forward().item();
            leaf.set(i, x0 - h);
            const double lm = forward().item();
            leaf.set(i, x0);
            const double numeric = (lp - lm) / (2.0 * h);
            const double a = analytic[k][static_cast<std::size_t>(i)];
            const double rel = std::abs(a - numeric) /
                               std::max({1.0, std::abs(a), std::abs(numeric)});
            ++report.checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst = "leaf " + std::to_string(k) + " elem " + std::to_string(i) +
                               ": analytic " + std::to_string(a) + " numeric " +
                               std::to_string(numeric);
            }
            if (rel > tol) {
                report.ok = false;
            }
        }
    }
    return report;
}

namespace {

SuiteCheck merge(const std::string& name, std::vector<GradCheckReport> reports, double tol) {
    SuiteCheck check;
    check.name = name;
    check.ok = true;
    for (const auto& r : reports) {
        check.ok = check.ok && r.ok && r.max_rel_err <= tol;
        check.max_rel_err = std::max(check.max_rel_err, r.max_rel_err);
        check.checked += r.checked;
    }
    return check;
}

}  // namespace

std::vector<SuiteCheck> run_gradcheck_suite(std::uint64_t seed) {
    std::mt19937_64 rng(seed == 0 ? 0x5eedf00dull : seed);
    constexpr double kOpTol = 1e-6;
    constexpr double kNetTol = 1e-5;
    constexpr int kReps = 20;
    std::vector<SuiteCheck> out;

    auto leaf = [&](Shape shape) {
        return Tensor::uniform(std::move(shape), -1.0, 1.0, rng, DType::f64, true);
    };
    auto target_for = [&](const Tensor& probe) {
        return Tensor::uniform(probe.shape(), -1.0, 1.0, rng);
    };

    {
        std::vector<GradCheckReport> reports;
        for (int rep = 0; rep < kReps; ++rep) {
            Tensor in = leaf({2, 3, 3, 3});
            Tensor ker = leaf({2, 2, 2, 2, 2});
            const Padding pad = rep % 2 == 0 ? Padding::same : Padding::valid;
            Tensor target = target_for(conv3d(in, ker, pad));
            const Tensor leaves[] = {in, ker};
            reports.push_back(check_gradients(
                [&] { return mse_loss(conv3d(in, ker, pad), target); }, leaves, 1e-5, kOpTol));
        }
        out.push_back(merge("conv3d", std::move(reports), kOpTol));
    }
    {
        std::vector<GradCheckReport> reports;
        for (int rep = 0; rep < kReps; ++rep) {
            Tensor in = leaf({2, 9});
            Tensor ker = leaf({3, 2, 4});
            const Padding pad = rep % 2 == 0 ? Padding::same : Padding::valid;
            Tensor target = target_for(conv1d(in, ker, pad));
            const Tensor leaves[] = {in, ker};
            reports.push_back(check_gradients(
                [&] { return mse_loss(conv1d(in, ker, pad), target); }, leaves, 1e-5, kOpTol));
        }
        out.push_back(merge("conv1d", std::move(reports), kOpTol));
    }
    {
        std::vector<GradCheckReport> reports;
        for (int rep = 0; rep < kReps; ++rep) {
            Tensor in = leaf({2, 4, 5, 4});
            Tensor target = target_for(maxpool(in, 2));
            const Tensor leaves[] = {in};
            reports.push_back(check_gradients([&] { return mse_loss(maxpool(in, 2), target); },
                                              leaves, 1e-6, kOpTol));
        }
        out.push_back(merge("maxpool", std::move(reports), kOpTol));
    }
    {
        std::vector<GradCheckReport> reports;
        for (int rep = 0; rep < kReps; ++rep) {
            Tensor in = leaf({1, 3, 2, 3});
            Tensor target = target_for(upsample(in, 2));
            const Tensor leaves[] = {in};
            reports.push_back(check_gradients([&] { return mse_loss(upsample(in, 2), target); },
                                              leaves, 1e-5, kOpTol));
        }
        out.push_back(merge("upsample", std::move(reports), kOpTol));
    }
    {
        std::vector<GradCheckReport> reports;
        for (int rep = 0; rep < kReps; ++rep) {
            Tensor a = leaf({3, 4});
            Tensor b = leaf({3, 4});
            Tensor c = leaf({2, 4});
            Tensor bias = leaf({5});
            Tensor target = target_for(Tensor::zeros({5, 4}));
            const Tensor leaves[] = {a, b, c, bias};
            reports.push_back(check_gradients(
                [&] {
                    Tensor cat = concat_channels(add(a, b), c);
                    return mse_loss(relu(scale(add_channel_bias(cat, bias), 1.7)), target);
                },
                leaves, 1e-5, kOpTol));
        }
        out.push_back(merge("relu/add/scale/concat/bias", std::move(reports), kOpTol));
    }
    {
        std::vector<GradCheckReport> reports;
        for (int rep = 0; rep < kReps; ++rep) {
            Tensor in = leaf({2, 5, 4, 6});
            Tensor target = target_for(crop(in, {4, 4, 5}));
            const Tensor leaves[] = {in};
            reports.push_back(check_gradients(
                [&] { return mse_loss(crop(in, {4, 4, 5}), target); }, leaves, 1e-5, kOpTol));
        }
        out.push_back(merge("crop", std::move(reports), kOpTol));
    }
    {
        std::vector<GradCheckReport> reports;
        for (int rep = 0; rep < kReps; ++rep) {
            Tensor p = leaf({7});
            Tensor t = leaf({7});
            const Tensor leaves[] = {p, t};
            reports.push_back(
                check_gradients([&] { return mse_loss(p, t); }, leaves, 1e-5, kOpTol));
        }
        out.push_back(merge("mse_loss", std::move(reports), kOpTol));
    }
    {
        std::vector<GradCheckReport> reports;
        for (int rep = 0; rep < kReps; ++rep) {
            Tensor x = leaf({12});
            Tensor y = leaf({12});
            const Tensor leaves[] = {x, y};
            reports.push_back(
                check_gradients([&] { return neg_pearson_loss(x, y); }, leaves, 1e-5, kOpTol));
        }
        out.push_back(merge("neg_pearson_loss", std::move(reports), kOpTol));
    }
    {
        std::vector<GradCheckReport> reports;
        for (int rep = 0; rep < kReps; ++rep) {
            Tensor frames = leaf({5, 3, 3, 3});
            Tensor weights = leaf({3, 3, 3});
            Tensor target = target_for(Tensor::zeros({5}));
            const Tensor leaves[] = {frames, weights};
            reports.push_back(check_gradients(
                [&] { return mse_loss(frame_inner_products(frames, weights), target); }, leaves,
                1e-5, kOpTol));
        }
        out.push_back(merge("frame_inner_products", std::move(reports), kOpTol));
    }

    {
        UNetConfig cfg;
        cfg.in_channels = 4;
        cfg.levels = 3;
        cfg.base_channels = 4;
        cfg.seed = 17;
        const UNetModel model = UNetModel::init(cfg);
        Tensor input = Tensor::uniform({4, 8, 8, 8}, -1, 1, rng);
        Tensor target = Tensor::uniform({1, 8, 8, 8}, -1, 1, rng);
        auto fwd = [&] { return spatial_loss(model.forward(input), target); };
        const auto params = model.parameters();
        std::vector<Tensor> sampled{params[0], params[4], params[10], params.back()};
        std::vector<GradCheckReport> reports{
            check_gradients(fwd, sampled, 1e-5, kNetTol, 3, &rng)};
        out.push_back(merge("unet sampled parameters", std::move(reports), kNetTol));
    }
    {
        const CAEModel model = CAEModel::init(CAEConfig{.dtype = DType::f64, .seed = 23});
        Tensor input = Tensor::uniform({1, 16}, -1, 1, rng);
        Tensor label = Tensor::uniform({16}, -1, 1, rng);
        auto fwd = [&] { return temporal_loss(model.forward(input), label); };
        const auto params = model.parameters();
        std::vector<Tensor> sampled{params[0], params[2], params[6], params.back()};
        std::vector<GradCheckReport> reports{
            check_gradients(fwd, sampled, 1e-5, kNetTol, 3, &rng)};
        out.push_back(merge("cae sampled parameters", std::move(reports), kNetTol));
    }
    return out;
}

}  // namespace stcnn
