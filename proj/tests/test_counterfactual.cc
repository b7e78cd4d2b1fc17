#include <cmath>
#include <random>

#include "causalprobe/counterfactual.h"
#include "causalprobe/error.h"
#include "causalprobe/synthetic_model.h"
#include "doctest.h"
#include "test_util.h"

using namespace causalprobe;

namespace {

SyntheticRedundantModel make_model() {
  SyntheticModelConfig c;
  c.seed = 3;
  c.task = Task::kNli;
  return SyntheticRedundantModel(c);
}

Probe trained_random_probe(int in, std::uint64_t seed) {
  ProbeConfig c;
  c.kind = seed % 2 ? ProbeKind::kDepth : ProbeKind::kDistance;
  c.input_dim = in;
  c.hidden_dim = 8;
  c.output_dim = 4;
  c.seed = seed;
  Probe p = init_probe(c);
  p.set_trained(true);
  return p;
}

CounterfactualRequest request_for(const Eigen::MatrixXd &z, const ParseTree &target,
                                  const Probe &probe) {
  CounterfactualRequest r;
  r.embeddings = z;
  r.target = target;
  r.probe = &probe;
  return r;
}

}  // namespace

TEST_CASE("zero steps leave the embeddings alone") {
  Rng rng(1);
  const Probe probe = trained_random_probe(5, 2);
  const ParseTree t = testing::random_tree(4, rng);
  auto req = request_for(testing::gaussian(4, 5, rng), t, probe);
  req.max_steps = 0;
  req.loss_threshold = 1e-9;
  const auto res = generate_counterfactual(req);
  CHECK(res.steps_taken == 0);
  CHECK(res.embeddings_prime == req.embeddings);
  CHECK(res.loss_trajectory.size() == 1);
}

TEST_CASE("already at the target takes no steps") {
  const auto model = make_model();
  const Probe probe = testing::copy_probe(model, 0);
  const ParseTree t = ParseTree::from_heads({1, -1, 1, 2});
  const Eigen::MatrixXd code = model.dependency_code({"a", "b", "c", "d"}, t);
  Eigen::MatrixXd z(4, model.embedding_width());
  z << code, code;
  auto req = request_for(z, t, probe);
  const auto res = generate_counterfactual(req);
  CHECK(res.final_loss < 1e-12);
  CHECK(res.steps_taken == 0);
  CHECK(res.embeddings_prime == z);
}

TEST_CASE("a probe blind to the first copy never touches it") {
  const auto model = make_model();
  const Probe probe = testing::copy_probe(model, 1);
  const ParseTree a = ParseTree::from_heads({1, -1, 1, 2, 3});
  const ParseTree b = ParseTree::from_heads({1, -1, 1, 1, 1});
  const std::vector<std::string> words = {"a", "b", "c", "d", "e"};
  const Eigen::MatrixXd code = model.dependency_code(words, a);
  Eigen::MatrixXd z(5, model.embedding_width());
  z << code, code;
  auto req = request_for(z, b, probe);
  req.step_size = 0.05;
  const auto res = generate_counterfactual(req);
  const int h = model.half_width();
  CHECK(res.embeddings_prime.leftCols(h) == z.leftCols(h));
  CHECK(res.embeddings_prime.rightCols(h) != z.rightCols(h));
  CHECK(res.final_loss <= req.loss_threshold);
}

TEST_CASE("random requests respect the mask and the stopping rule") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 6;
    const int in = 3 + trial % 5;
    const Probe probe = trained_random_probe(in, static_cast<std::uint64_t>(trial));
    auto req = request_for(testing::gaussian(n, in, rng), testing::random_tree(n, rng), probe);
    std::bernoulli_distribution keep(0.5);
    req.update_mask.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) req.update_mask[static_cast<std::size_t>(i)] = keep(rng);
    req.loss_threshold = 0.05 + 0.05 * (trial % 4);
    req.step_size = 0.01;
    req.max_steps = 50 + trial;
    const auto res = generate_counterfactual(req);
    for (int i = 0; i < n; ++i) {
      if (!req.update_mask[static_cast<std::size_t>(i)]) {
        REQUIRE(res.embeddings_prime.row(i) == req.embeddings.row(i));
      }
    }
    CHECK(res.steps_taken <= req.max_steps);
    CHECK(res.loss_trajectory.size() == static_cast<std::size_t>(res.steps_taken) + 1);
    CHECK(res.loss_trajectory.back() == res.final_loss);
    for (double l : res.loss_trajectory) CHECK(std::isfinite(l));
    if (res.steps_taken < req.max_steps) CHECK(res.final_loss <= req.loss_threshold);
    for (int s = 0; s < res.steps_taken; ++s) {
      CHECK(res.loss_trajectory[static_cast<std::size_t>(s)] > req.loss_threshold);
    }
  }
}

TEST_CASE("loss is non-increasing for the hand-built linear probe") {
  const auto model = make_model();
  const Probe probe = testing::copy_probe(model, 0);
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const ParseTree t = testing::random_tree(4 + trial % 5, rng);
    std::vector<std::string> words(t.size(), "w");
    const Eigen::MatrixXd code = 0.2 * model.dependency_code(words, t);
    Eigen::MatrixXd z(static_cast<Eigen::Index>(t.size()), model.embedding_width());
    z << code, code;
    auto req = request_for(z, t, probe);
    req.step_size = 0.01;
    req.max_steps = 5000;
    const auto res = generate_counterfactual(req);
    CHECK(res.final_loss <= req.loss_threshold);
    CHECK(res.steps_taken > 0);
    for (std::size_t s = 1; s < res.loss_trajectory.size(); ++s) {
      CHECK(res.loss_trajectory[s] <= res.loss_trajectory[s - 1]);
    }
  }
}

TEST_CASE("a lower threshold never takes fewer steps") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Probe probe = trained_random_probe(4, static_cast<std::uint64_t>(trial));
    auto req = request_for(testing::gaussian(5, 4, rng), testing::random_tree(5, rng), probe);
    req.step_size = 0.01;
    req.max_steps = 300;
    int previous = -1;
    for (double thr : {0.4, 0.3, 0.2, 0.1, 0.05}) {
      req.loss_threshold = thr;
      const int steps = generate_counterfactual(req).steps_taken;
      CHECK(steps >= previous);
      previous = steps;
    }
  }
}

TEST_CASE("divergence reports its step") {
  const auto model = make_model();
  const Probe probe = testing::copy_probe(model, 0);
  const ParseTree t = ParseTree::from_heads({-1, 0, 1, 2});
  const Eigen::MatrixXd code = model.dependency_code({"a", "b", "c", "d"}, t);
  Eigen::MatrixXd z(4, model.embedding_width());
  z << code, code;
  auto req = request_for(z, ParseTree::from_heads({-1, 0, 0, 0}), probe);
  req.step_size = 1e6;
  req.loss_threshold = 1e-12;
  try {
    generate_counterfactual(req);
    FAIL("expected divergence");
  } catch (const DivergenceError &e) {
    CHECK(e.step() >= 1);
    CHECK(e.step() < 1000);
  }
}

TEST_CASE("request validation") {
  Rng rng(2);
  Probe probe = trained_random_probe(3, 0);
  auto req = request_for(testing::gaussian(3, 3, rng), ParseTree::from_heads({-1, 0, 0}), probe);
  req.loss_threshold = 0.0;
  CHECK_THROWS_AS(generate_counterfactual(req), ConfigError);
  req.loss_threshold = 0.1;
  req.update_mask = {true};
  CHECK_THROWS_AS(generate_counterfactual(req), DimensionError);
  req.update_mask.clear();
  req.target = ParseTree::from_heads({-1, 0});
  CHECK_THROWS_AS(generate_counterfactual(req), DimensionError);
  Probe raw = init_probe(probe.config());
  auto untrained = request_for(req.embeddings, ParseTree::from_heads({-1, 0, 0}), raw);
  CHECK_THROWS_AS(generate_counterfactual(untrained), ConfigError);
}

TEST_CASE("subword rows share the word gradient equally") {
  const auto model = make_model();
  const Probe probe = testing::copy_probe(model, 0);
  const ParseTree t = ParseTree::from_heads({-1, 0, 1});
  const Eigen::MatrixXd code = model.dependency_code({"a", "b", "c"}, t);
  Eigen::MatrixXd word(3, model.embedding_width());
  word << code, code;
  Eigen::MatrixXd z(4, model.embedding_width());
  z << word.row(0), word.row(1), word.row(1), word.row(2);
  auto req = request_for(z, ParseTree::from_heads({-1, 0, 0}), probe);
  req.word_rows = SubwordMap{{0, 1}, {1, 3}, {3, 4}};
  req.step_size = 0.05;
  const auto res = generate_counterfactual(req);
  CHECK(res.steps_taken > 0);
  CHECK(res.embeddings_prime.row(1) == res.embeddings_prime.row(2));
  CHECK(res.final_loss <= req.loss_threshold);
  req.word_rows = SubwordMap{{0, 2}, {1, 4}};
  CHECK_THROWS_AS(generate_counterfactual(req), DimensionError);
}

TEST_CASE("sweeps enumerate layers, thresholds and readings") {
  Rng rng(6);
  const Probe probe = trained_random_probe(4, 2);
  const ParseTree a = ParseTree::from_heads({-1, 0, 1, 2});
  const ParseTree b = ParseTree::from_heads({-1, 0, 0, 0});
  const Eigen::MatrixXd z = testing::gaussian(4, 4, rng);
  SweepParams params;
  params.step_size = 0.01;
  params.max_steps = 20;
  const auto one = sweep_counterfactuals({{1, z, &probe}}, {a, b}, params);
  CHECK(one.size() == 2);
  CHECK(one[0].interpretation == 0);
  CHECK(one[1].interpretation == 1);

  std::vector<SweepLayer> layers;
  for (int k = 1; k <= 12; ++k) layers.push_back({k, z, &probe});
  params.thresholds = {0.05, 0.1, 0.2, 0.3};
  const auto all = sweep_counterfactuals(layers, {a, b}, params);
  REQUIRE(all.size() == 96);
  CHECK(all[0].layer == 1);
  CHECK(all[8].layer == 2);
  CHECK(all[2].threshold == 0.1);

  const auto same = sweep_counterfactuals({{1, z, &probe}}, {a, a}, params);
  for (std::size_t i = 0; i < same.size(); i += 2) {
    CHECK(same[i].result.embeddings_prime == same[i + 1].result.embeddings_prime);
    CHECK(same[i].result.loss_trajectory == same[i + 1].result.loss_trajectory);
  }
}

TEST_CASE("results round trip through the payload format") {
  testing::TempDir dir("cf");
  Rng rng(8);
  const Probe probe = trained_random_probe(3, 4);
  auto req = request_for(testing::gaussian(3, 3, rng), ParseTree::from_heads({-1, 0, 1}), probe);
  req.max_steps = 10;
  req.step_size = 0.01;
  const auto res = generate_counterfactual(req);
  const std::string path = (dir.path() / "cf.bin").string();
  save_counterfactual(path, res, {{"layer", 4}});
  nlohmann::json meta;
  const auto back = load_counterfactual(path, &meta);
  CHECK(back.embeddings_prime == res.embeddings_prime);
  CHECK(back.loss_trajectory == res.loss_trajectory);
  CHECK(back.steps_taken == res.steps_taken);
  CHECK(back.final_loss == res.final_loss);
  CHECK(meta.at("layer") == 4);
}
