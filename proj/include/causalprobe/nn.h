// Minimal dense-network building blocks shared by probes and the MI
// estimator: affine layers with hand-written backward passes and Adam.
// Activations are row-major batches (one example per row).

#ifndef CAUSALPROBE_NN_H_
#define CAUSALPROBE_NN_H_

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "causalprobe/rng.h"

namespace causalprobe::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Dense {
  Matrix weight;  // out x in
  Vector bias;    // out

  Dense() = default;
  Dense(Eigen::Index in, Eigen::Index out) : weight(Matrix::Zero(out, in)), bias(Vector::Zero(out)) {}

  // Uniform(-1/sqrt(in), 1/sqrt(in)) for weights and bias.
  static Dense init(Eigen::Index in, Eigen::Index out, Rng &rng);

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }

  Matrix forward(const Matrix &x) const {
    Matrix y = x * weight.transpose();
    y.rowwise() += bias.transpose();
    return y;
  }
};

struct DenseGrad {
  Matrix weight;
  Vector bias;
};

// Given the layer input x and dL/dy, returns parameter gradients; writes
// dL/dx into dx when non-null.
DenseGrad dense_backward(const Dense &layer, const Matrix &x, const Matrix &dy,
                         Matrix *dx);

inline Matrix relu(const Matrix &x) { return x.cwiseMax(0.0); }

// Zeroes entries of dy where the pre-activation was not positive.
inline Matrix relu_backward(const Matrix &pre, const Matrix &dy) {
  return (pre.array() > 0.0).select(dy, 0.0);
}

class Adam {
 public:
  struct Param {
    double *value;
    const double *grad;
    std::size_t size;
  };

  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  // Parameters must be passed in the same order and sizes on every call.
  void step(const std::vector<Param> &params);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

inline Adam::Param param(Matrix &value, const Matrix &grad) {
  return {value.data(), grad.data(), static_cast<std::size_t>(value.size())};
}
inline Adam::Param param(Vector &value, const Vector &grad) {
  return {value.data(), grad.data(), static_cast<std::size_t>(value.size())};
}

}  // namespace causalprobe::nn

#endif  // CAUSALPROBE_NN_H_
