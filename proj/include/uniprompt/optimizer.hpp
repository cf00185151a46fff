#pragma once

#include <cmath>
#include <vector>

#include "uniprompt/tensor.hpp"

namespace uniprompt {

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam keyed by position: callers must pass parameters in the same order on
// every step (models provide a stable visit order).
class Adam {
 public:
  Adam(double learning_rate, AdamParams params = {}) : lr_(learning_rate), p_(params) {}

  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size()) {
      throw ShapeError("optimizer got " + std::to_string(params.size()) + " params but " +
                       std::to_string(grads.size()) + " grads");
    }
    if (m_.empty()) {
      for (const Tensor* t : params) {
        m_.push_back(Tensor::zeros(t->shape));
        v_.push_back(Tensor::zeros(t->shape));
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(p_.beta1, t_);
    const double bc2 = 1.0 - std::pow(p_.beta2, t_);
    for (std::size_t k = 0; k < params.size(); ++k) {
      Tensor& p = *params[k];
      const Tensor& g = grads[k];
      if (!p.same_shape(g)) {
        throw ShapeError("optimizer grad shape " + shape_str(g.shape) + " vs param " +
                         shape_str(p.shape));
      }
      for (std::size_t i = 0; i < p.data.size(); ++i) {
        double& m = m_[k].data[i];
        double& v = v_[k].data[i];
        m = p_.beta1 * m + (1.0 - p_.beta1) * g.data[i];
        v = p_.beta2 * v + (1.0 - p_.beta2) * g.data[i] * g.data[i];
        p.data[i] -= lr_ * (m / bc1) / (std::sqrt(v / bc2) + p_.eps);
      }
    }
  }

  long step_count() const { return t_; }

 private:
  double lr_;
  AdamParams p_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace uniprompt
