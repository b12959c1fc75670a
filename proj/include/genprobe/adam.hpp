#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace genprobe {

struct AdamSettings {
  double step_size = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive-moment state for one parameter tensor.
template <class Tensor>
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(const Tensor& shape_like)
      : m_(Tensor::Zero(shape_like.rows(), shape_like.cols())),
        v_(Tensor::Zero(shape_like.rows(), shape_like.cols())) {}

  // Returns the step to subtract from the parameters.
  Tensor step(const Tensor& grad, const AdamSettings& s) {
    ++t_;
    m_ = s.beta1 * m_ + (1.0 - s.beta1) * grad;
    v_ = s.beta2 * v_ + (1.0 - s.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(s.beta1, t_);
    const double c2 = 1.0 - std::pow(s.beta2, t_);
    const double a = s.step_size * std::sqrt(c2) / c1;
    return (a * m_.array() / (v_.array().sqrt() + s.epsilon * std::sqrt(c2))).matrix();
  }

  int steps() const noexcept { return t_; }

 private:
  Tensor m_;
  Tensor v_;
  int t_ = 0;
};

}  // namespace genprobe
