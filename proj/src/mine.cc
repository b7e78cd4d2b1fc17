#include "causalprobe/mine.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "causalprobe/error.h"

namespace causalprobe {
namespace {

using nn::Matrix;

double log_mean_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s / static_cast<double>(v.size()));
}

void column_stats(const Matrix &m, Eigen::RowVectorXd *mean, Eigen::RowVectorXd *scale) {
  *mean = m.colwise().mean();
  *scale = Eigen::RowVectorXd::Ones(m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double var = (m.col(c).array() - (*mean)(c)).square().mean();
    if (var > 1e-12) (*scale)(c) = 1.0 / std::sqrt(var);
  }
}

Matrix take_rows(const Matrix &m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

}  // namespace

StatisticNetwork::StatisticNetwork(const StatisticNetworkShape &shape, Rng &rng)
    : shape_(shape) {
  enc_x_ = nn::Dense::init(shape.x_dim, shape.encoder_width, rng);
  enc_y_ = nn::Dense::init(shape.y_dim, shape.encoder_width, rng);
  trunk1_ = nn::Dense::init(2 * shape.encoder_width, shape.hidden_width, rng);
  trunk2_ = nn::Dense::init(shape.hidden_width, shape.hidden_width, rng);
  head_ = nn::Dense::init(shape.hidden_width, 1, rng);
  x_mean_ = Eigen::RowVectorXd::Zero(shape.x_dim);
  x_scale_ = Eigen::RowVectorXd::Ones(shape.x_dim);
  y_mean_ = Eigen::RowVectorXd::Zero(shape.y_dim);
  y_scale_ = Eigen::RowVectorXd::Ones(shape.y_dim);
}

void StatisticNetwork::set_normalization(Eigen::RowVectorXd x_mean, Eigen::RowVectorXd x_scale,
                                         Eigen::RowVectorXd y_mean, Eigen::RowVectorXd y_scale) {
  x_mean_ = std::move(x_mean);
  x_scale_ = std::move(x_scale);
  y_mean_ = std::move(y_mean);
  y_scale_ = std::move(y_scale);
}

Eigen::VectorXd StatisticNetwork::run(const Matrix &x, const Matrix &y, Cache *c) const {
  if (x.cols() != shape_.x_dim || y.cols() != shape_.y_dim || x.rows() != y.rows()) {
    throw DimensionError("statistic network input shape mismatch");
  }
  Cache local;
  Cache &k = c ? *c : local;
  k.xn = (x.rowwise() - x_mean_).array().rowwise() * x_scale_.array();
  k.yn = (y.rowwise() - y_mean_).array().rowwise() * y_scale_.array();
  k.cat.resize(x.rows(), 2 * shape_.encoder_width);
  k.cat.leftCols(shape_.encoder_width) = enc_x_.forward(k.xn);
  k.cat.rightCols(shape_.encoder_width) = enc_y_.forward(k.yn);
  k.pre1 = trunk1_.forward(k.cat);
  k.h1 = nn::relu(k.pre1);
  k.pre2 = trunk2_.forward(k.h1);
  k.h2 = nn::relu(k.pre2);
  return head_.forward(k.h2).col(0);
}

Eigen::VectorXd StatisticNetwork::evaluate(const Matrix &x, const Matrix &y) const {
  return run(x, y, nullptr);
}

StatisticNetwork::Grad StatisticNetwork::backward(const Matrix &x, const Matrix &y,
                                                  const Eigen::VectorXd &dT) const {
  Cache c;
  run(x, y, &c);
  Grad g;
  Matrix dh2, dh1, dcat;
  g.head = nn::dense_backward(head_, c.h2, Matrix(dT), &dh2);
  const Matrix dpre2 = nn::relu_backward(c.pre2, dh2);
  g.trunk2 = nn::dense_backward(trunk2_, c.h1, dpre2, &dh1);
  const Matrix dpre1 = nn::relu_backward(c.pre1, dh1);
  g.trunk1 = nn::dense_backward(trunk1_, c.cat, dpre1, &dcat);
  const Eigen::Index w = shape_.encoder_width;
  g.enc_x = nn::dense_backward(enc_x_, c.xn, dcat.leftCols(w), nullptr);
  g.enc_y = nn::dense_backward(enc_y_, c.yn, dcat.rightCols(w), nullptr);
  return g;
}

void StatisticNetwork::adam_step(nn::Adam &adam, const Grad &g) {
  adam.step({nn::param(enc_x_.weight, g.enc_x.weight), nn::param(enc_x_.bias, g.enc_x.bias),
             nn::param(enc_y_.weight, g.enc_y.weight), nn::param(enc_y_.bias, g.enc_y.bias),
             nn::param(trunk1_.weight, g.trunk1.weight), nn::param(trunk1_.bias, g.trunk1.bias),
             nn::param(trunk2_.weight, g.trunk2.weight), nn::param(trunk2_.bias, g.trunk2.bias),
             nn::param(head_.weight, g.head.weight), nn::param(head_.bias, g.head.bias)});
}

double dv_bound(std::span<const double> joint_t, std::span<const double> marginal_t) {
  if (joint_t.empty() || marginal_t.empty()) throw DimensionError("dv_bound: empty batch");
  const double mean_joint =
      std::accumulate(joint_t.begin(), joint_t.end(), 0.0) / static_cast<double>(joint_t.size());
  return mean_joint - log_mean_exp(marginal_t);
}

double dv_bound(const StatisticNetwork &net, const Matrix &joint_x, const Matrix &joint_y,
                const Matrix &marginal_x, const Matrix &marginal_y) {
  const Eigen::VectorXd tj = net.evaluate(joint_x, joint_y);
  const Eigen::VectorXd tm = net.evaluate(marginal_x, marginal_y);
  return dv_bound(std::span<const double>(tj.data(), static_cast<std::size_t>(tj.size())),
                  std::span<const double>(tm.data(), static_cast<std::size_t>(tm.size())));
}

void MineSchedule::validate() const {
  if (epochs < 1) throw ConfigError("mine epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("mine batch_size must be >= 2");
  if (!(learning_rate > 0.0)) throw ConfigError("mine learning_rate must be positive");
  if (encoder_width < 1 || hidden_width < 1) throw ConfigError("mine widths must be positive");
  if (smoothing_window < 1) throw ConfigError("mine smoothing_window must be >= 1");
}

MineEstimate train_mine(const Matrix &x, const Matrix &y, const MineSchedule &schedule) {
  schedule.validate();
  if (x.rows() != y.rows()) throw ConfigError("train_mine: x and y are not aligned");
  if (x.rows() < 2) throw ConfigError("train_mine: need at least 2 samples");
  if (x.cols() < 1 || y.cols() < 1) throw ConfigError("train_mine: empty sample vectors");

  Rng rng(derive_seed(schedule.seed, {0x6d696e65ULL}));
  StatisticNetworkShape shape{static_cast<int>(x.cols()), static_cast<int>(y.cols()),
                              schedule.encoder_width, schedule.hidden_width};
  StatisticNetwork net(shape, rng);
  Eigen::RowVectorXd xm, xs, ym, ys;
  column_stats(x, &xm, &xs);
  column_stats(y, &ym, &ys);
  net.set_normalization(xm, xs, ym, ys);

  nn::Adam adam(schedule.learning_rate);
  const auto n = static_cast<std::size_t>(x.rows());
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(schedule.batch_size), n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  MineEstimate est;
  const double ema_alpha = 2.0 / (static_cast<double>(schedule.smoothing_window) + 1.0);
  double best = -std::numeric_limits<double>::infinity();
  double ema = 0.0;

  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start + batch <= n; start += batch) {
      std::span<const std::size_t> idx(order.data() + start, batch);
      std::vector<std::size_t> perm(idx.begin(), idx.end());
      std::shuffle(perm.begin(), perm.end(), rng);
      const auto b = static_cast<Eigen::Index>(batch);
      Matrix bx = take_rows(x, idx);
      Matrix both_x(2 * b, x.cols()), both_y(2 * b, y.cols());
      both_x << bx, bx;
      both_y << take_rows(y, idx), take_rows(y, perm);
      const Eigen::VectorXd t = net.evaluate(both_x, both_y);
      // Minimize -bound: d/dT_joint = -1/b, d/dT_marginal = softmax(T_marginal).
      Eigen::VectorXd dT(2 * b);
      dT.head(b).setConstant(-1.0 / static_cast<double>(b));
      const Eigen::VectorXd tm = t.tail(b);
      const Eigen::ArrayXd e = (tm.array() - tm.maxCoeff()).exp();
      dT.tail(b) = e / e.sum();
      net.adam_step(adam, net.backward(both_x, both_y, dT));
    }

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const double bound = dv_bound(net, x, y, x, take_rows(y, perm));
    if (!std::isfinite(bound)) throw ModelError("train_mine: bound became non-finite");
    est.history.push_back(bound);
    ema = epoch == 0 ? bound : ema_alpha * bound + (1.0 - ema_alpha) * ema;
    est.smoothed.push_back(ema);
    if (ema > best) {
      best = ema;
      est.network = net;
    }
  }
  est.mi_nats = std::max(0.0, best);
  return est;
}

void RedundancySamples::validate() const {
  if (z.rows() != d.rows()) throw ConfigError("redundancy samples are not aligned");
  if (z.cols() < 2) throw ConfigError("redundancy samples need embeddings of width >= 2");
  if (d.cols() < 1) throw ConfigError("redundancy samples need a depth column");
}

RedundancyReport redundancy_test(const RedundancySamples &samples, const MineSchedule &schedule,
                                 double margin) {
  samples.validate();
  RedundancyReport r;
  MineSchedule s = schedule;
  s.seed = derive_seed(schedule.seed, {1});
  r.i_z1 = train_mine(samples.z1(), samples.d, s).mi_nats;
  s.seed = derive_seed(schedule.seed, {2});
  r.i_z2 = train_mine(samples.z2(), samples.d, s).mi_nats;
  s.seed = derive_seed(schedule.seed, {3});
  r.i_z = train_mine(samples.z, samples.d, s).mi_nats;
  r.redundant = r.i_z + margin < r.i_z1 + r.i_z2;
  return r;
}

}  // namespace causalprobe
