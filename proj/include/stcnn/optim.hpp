#pragma once

#include <vector>

#include "stcnn/tensor.hpp"

namespace stcnn {

struct SgdConfig {
    double lr = 1e-2;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Plain gradient descent over a fixed parameter list. Parameters with no
// populated gradient are left untouched.
class Sgd {
  public:
    explicit Sgd(std::vector<Tensor> params, SgdConfig cfg = {});
    void step();
    void zero_grad();
    const SgdConfig& config() const { return cfg_; }

  private:
    std::vector<Tensor> params_;
    SgdConfig cfg_;
};

// Adam with bias correction. Moments are kept in double regardless of the
// parameter dtype.
class Adam {
  public:
    explicit Adam(std::vector<Tensor> params, AdamConfig cfg = {});
    void step();
    void zero_grad();
    const AdamConfig& config() const { return cfg_; }

  private:
    std::vector<Tensor> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::int64_t t_ = 0;
};

}  // namespace stcnn
