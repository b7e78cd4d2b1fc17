#include "causalprobe/nn.h"

#include <cmath>

#include "causalprobe/error.h"

namespace causalprobe::nn {

Dense Dense::init(Eigen::Index in, Eigen::Index out, Rng &rng) {
  Dense layer(in, out);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index r = 0; r < out; ++r) {
    for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = u(rng);
  }
  for (Eigen::Index r = 0; r < out; ++r) layer.bias(r) = u(rng);
  return layer;
}

DenseGrad dense_backward(const Dense &layer, const Matrix &x, const Matrix &dy,
                         Matrix *dx) {
  DenseGrad g;
  g.weight.noalias() = dy.transpose() * x;
  g.bias = dy.colwise().sum().transpose();
  if (dx != nullptr) dx->noalias() = dy * layer.weight;
  return g;
}

void Adam::step(const std::vector<Param> &params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].size, 0.0);
      v_[i].assign(params[i].size, 0.0);
    }
  } else if (m_.size() != params.size()) {
    throw DimensionError("Adam: parameter list changed between steps");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Param &p = params[i];
    auto &m = m_[i];
    auto &v = v_[i];
    for (std::size_t k = 0; k < p.size; ++k) {
      const double g = p.grad[k];
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g * g;
      p.value[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

}  // namespace causalprobe::nn
