// Mutual information estimation by maximizing the Donsker-Varadhan bound
//
//   I(X;Y) >= E_P[T(x,y)] - log E_Q[exp T(x,y)]
//
// over a statistic network T, where P is the joint distribution and Q the
// product of marginals (pairs formed by permuting the y side). Also hosts the
// redundancy test comparing I(Z;D) with I(Z1;D) + I(Z2;D).

#ifndef CAUSALPROBE_MINE_H_
#define CAUSALPROBE_MINE_H_

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "causalprobe/nn.h"

namespace causalprobe {

struct StatisticNetworkShape {
  int x_dim = 1;
  int y_dim = 1;
  int encoder_width = 64;
  int hidden_width = 1024;
};

// Separate linear encoders per input, concatenated, two ReLU trunk layers,
// scalar head. Inputs are standardized with stored per-column statistics.
class StatisticNetwork {
 public:
  StatisticNetwork() = default;
  StatisticNetwork(const StatisticNetworkShape &shape, Rng &rng);

  const StatisticNetworkShape &shape() const { return shape_; }

  // One T value per row pair.
  Eigen::VectorXd evaluate(const Eigen::MatrixXd &x, const Eigen::MatrixXd &y) const;

  // Sets the standardization applied to raw inputs before the encoders.
  void set_normalization(Eigen::RowVectorXd x_mean, Eigen::RowVectorXd x_scale,
                         Eigen::RowVectorXd y_mean, Eigen::RowVectorXd y_scale);

  struct Grad {
    nn::DenseGrad enc_x, enc_y, trunk1, trunk2, head;
  };
  // Gradient of sum_k dT(k) * T(x_k, y_k) with respect to the parameters.
  Grad backward(const Eigen::MatrixXd &x, const Eigen::MatrixXd &y,
                const Eigen::VectorXd &dT) const;
  void adam_step(nn::Adam &adam, const Grad &g);

 private:
  struct Cache {
    Eigen::MatrixXd xn, yn, cat, pre1, h1, pre2, h2;
  };
  Eigen::VectorXd run(const Eigen::MatrixXd &x, const Eigen::MatrixXd &y, Cache *cache) const;

  StatisticNetworkShape shape_;
  nn::Dense enc_x_, enc_y_, trunk1_, trunk2_, head_;
  Eigen::RowVectorXd x_mean_, x_scale_, y_mean_, y_scale_;
};

// mean(joint_t) - log(mean(exp(marginal_t))), computed with log-sum-exp.
// Throws DimensionError on an empty batch.
double dv_bound(std::span<const double> joint_t, std::span<const double> marginal_t);

// Bound for a network on explicit joint and marginal batches.
double dv_bound(const StatisticNetwork &net, const Eigen::MatrixXd &joint_x,
                const Eigen::MatrixXd &joint_y, const Eigen::MatrixXd &marginal_x,
                const Eigen::MatrixXd &marginal_y);

struct MineSchedule {
  int epochs = 50;
  int batch_size = 32;
  double learning_rate = 1e-4;
  int encoder_width = 64;
  int hidden_width = 1024;
  int smoothing_window = 5;  // EMA span in epochs
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

struct MineEstimate {
  StatisticNetwork network;  // parameters at the epoch of the best smoothed bound
  double mi_nats = 0.0;      // max smoothed bound, clamped at 0
  std::vector<double> history;   // per-epoch bound on the full sample set
  std::vector<double> smoothed;  // EMA of history
};

// Rows of x and y are aligned samples. Marginal batches permute the y side
// within each batch. Throws ConfigError with fewer than 2 samples or
// misaligned inputs.
MineEstimate train_mine(const Eigen::MatrixXd &x, const Eigen::MatrixXd &y,
                        const MineSchedule &schedule);

struct RedundancySamples {
  Eigen::MatrixXd z;  // one row per token
  Eigen::MatrixXd d;  // one row per token (depth as a 1-column matrix)

  Eigen::MatrixXd z1() const { return z.leftCols(z.cols() / 2); }
  Eigen::MatrixXd z2() const { return z.rightCols(z.cols() - z.cols() / 2); }
  void validate() const;
};

struct RedundancyReport {
  double i_z1 = 0.0;
  double i_z2 = 0.0;
  double i_z = 0.0;
  bool redundant = false;
};

// Three independent estimator runs; redundant = I(Z;D) + margin < I(Z1;D) +
// I(Z2;D). margin = 0 gives the plain inequality.
RedundancyReport redundancy_test(const RedundancySamples &samples,
                                 const MineSchedule &schedule, double margin = 0.0);

}  // namespace causalprobe

#endif  // CAUSALPROBE_MINE_H_
