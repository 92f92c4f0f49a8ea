#include "stcnn/optim.hpp"

#include <cmath>

namespace stcnn {

Sgd::Sgd(std::vector<Tensor> params, SgdConfig cfg) : params_(std::move(params)), cfg_(cfg) {}

void Sgd::step() {
    for (auto& p : params_) {
        if (!p.has_grad()) {
            continue;
        }
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            p.set(i, p.at(i) - cfg_.lr * p.grad_at(i));
        }
    }
}

void Sgd::zero_grad() {
    for (auto& p : params_) {
        p.zero_grad();
    }
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
        v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& p = params_[k];
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            const double g = p.has_grad() ? p.grad_at(i) : 0.0;
            const std::size_t j = static_cast<std::size_t>(i);
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.set(i, p.at(i) - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) {
        p.zero_grad();
    }
}

}  // namespace stcnn
