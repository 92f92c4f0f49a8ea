#pragma once

#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stcnn/tensor.hpp"

namespace stcnn {

struct GradCheckReport {
    bool ok = true;
    double max_rel_err = 0.0;
    std::int64_t checked = 0;
    std::string worst;  // description of the worst element
};

// Central finite-difference check of d(forward)/d(leaf) for each listed leaf.
// forward must rebuild the graph from the leaves' current values and return a
// scalar loss. Relative error uses |a - n| / max(1, |a|, |n|).
//
// max_elems_per_leaf < 0 checks every element; otherwise a random subset of
// that size is drawn from rng (required in that case).
GradCheckReport check_gradients(const std::function<Tensor()>& forward,
                                std::span<const Tensor> leaves, double h = 1e-5,
                                double tol = 1e-6, std::int64_t max_elems_per_leaf = -1,
                                std::mt19937_64* rng = nullptr);

struct SuiteCheck {
    std::string name;
    bool ok = false;
    double max_rel_err = 0.0;
    std::int64_t checked = 0;
};

// Finite-difference sweep over every differentiable op (20 random instances
// each, tolerance 1e-6) and sampled parameters of both networks (tolerance
// 1e-5). Backs the `stcnn gradcheck` command and the acceptance gate.
std::vector<SuiteCheck> run_gradcheck_suite(std::uint64_t seed = 0);

}  // namespace stcnn
