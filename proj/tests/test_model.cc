#include <cmath>
#include <thread>

#include "causalprobe/error.h"
#include "causalprobe/external_model.h"
#include "causalprobe/model.h"
#include "causalprobe/suites.h"
#include "causalprobe/synthetic_model.h"
#include "doctest.h"
#include "test_util.h"

using namespace causalprobe;

namespace {

SyntheticRedundantModel model_for(Task task, std::optional<int> causal_layer = std::nullopt) {
  SyntheticModelConfig c;
  c.seed = 11;
  c.task = task;
  c.causal_layer = causal_layer;
  return SyntheticRedundantModel(c);
}

ModelInput prompt_input(const std::string &suite, std::size_t index, Interpretation encoded) {
  return to_model_input(generate_suite(suite)[index], encoded);
}

double outcome(const TaskOutput &out) {
  switch (out.task) {
    case Task::kMaskedFill:
      return out.word_probs(0) * 3.0 / (out.word_probs.head(3).sum() / out.word_probs(0));
    case Task::kQaSpan:
      return out.start_probs.maxCoeff();
    case Task::kNli:
      return out.class_probs(0);
  }
  return 0.0;
}

std::string worker_command(Task task, int seed = 11) {
  return std::string(CAUSALPROBE_SYNTHETIC_WORKER) + " --seed " + std::to_string(seed) +
         " --task " + std::string(to_string(task));
}

}  // namespace

TEST_CASE("encodings hold two identical copies of the dependency code") {
  const auto model = model_for(Task::kMaskedFill);
  const ModelInput in = prompt_input("mask_coord", 5, Interpretation::kA);
  const EncodedInput e = encode_to_layer(model, in, 4);
  const int h = model.half_width();
  CHECK(e.embeddings.cols() == model.embedding_width());
  CHECK(e.embeddings.leftCols(h) == e.embeddings.rightCols(h));
  CHECK(e.embeddings.leftCols(h) == model.dependency_code(in.words, *in.parse));
  CHECK(e.word_rows == identity_word_map(in.words.size()));
  const Eigen::MatrixXd x = ancestor_codes(*in.parse, model.config().codebook_size);
  const Eigen::MatrixXd decoded = e.embeddings.leftCols(model.config().codebook_size) * model.rotation();
  CHECK((decoded - x).cwiseAbs().maxCoeff() < 1e-12);
  const auto d = parse_distances(*in.parse);
  for (std::size_t i = 0; i < in.words.size(); ++i) {
    for (std::size_t j = 0; j < in.words.size(); ++j) {
      CHECK((x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).squaredNorm() ==
            doctest::Approx(d(i, j)));
    }
  }
}

TEST_CASE("layer range and length checks") {
  const auto model = model_for(Task::kNli);
  const ModelInput in = prompt_input("nli_coord", 0, Interpretation::kA);
  CHECK_THROWS_AS(encode_to_layer(model, in, 0), ConfigError);
  CHECK_THROWS_AS(encode_to_layer(model, in, model.n_layers()), ConfigError);
  CHECK_NOTHROW(encode_to_layer(model, in, model.n_layers() - 1));
  ModelInput longer = in;
  longer.pair_words.assign(model.max_positions(), "x");
  CHECK_THROWS_AS(encode_to_layer(model, longer, 3), ModelError);
  const EncodedInput e = encode_to_layer(model, in, 3);
  CHECK_THROWS_AS(continue_from_layer(model, in, e.embeddings.leftCols(3), 3), DimensionError);
  ModelInput no_parse = in;
  no_parse.parse.reset();
  CHECK_THROWS_AS(model.forward(no_parse), ModelError);
}

TEST_CASE("round trip equals the direct output for every task") {
  const std::vector<std::pair<Task, std::string>> cases = {
      {Task::kMaskedFill, "mask_coord"}, {Task::kQaSpan, "qa_coord"}, {Task::kNli, "nli_coord"}};
  for (const auto &[task, suite] : cases) {
    const auto model = model_for(task);
    for (std::size_t i = 0; i < 10; ++i) {
      for (auto interp : {Interpretation::kA, Interpretation::kB}) {
        const ModelInput in = prompt_input(suite, i * 7, interp);
        const TaskOutput direct = model.forward(in);
        for (int k = 1; k < model.n_layers(); ++k) {
          const TaskOutput rt = continue_from_layer(model, in, encode_to_layer(model, in, k).embeddings, k);
          CHECK(total_variation(direct, rt) < 1e-12);
        }
        switch (task) {
          case Task::kMaskedFill:
            CHECK(direct.word_probs.sum() == doctest::Approx(1.0));
            break;
          case Task::kQaSpan:
            CHECK(direct.start_probs.sum() == doctest::Approx(1.0));
            CHECK(direct.end_probs.sum() == doctest::Approx(1.0));
            break;
          case Task::kNli:
            CHECK(direct.class_probs.sum() == doctest::Approx(1.0));
            break;
        }
      }
    }
  }
}

TEST_CASE("the head reads only the first copy") {
  const auto model = model_for(Task::kNli);
  Rng rng(3);
  const ModelInput in_a = prompt_input("nli_coord", 3, Interpretation::kA);
  const ModelInput in_b = prompt_input("nli_coord", 3, Interpretation::kB);
  const Eigen::MatrixXd za = encode_to_layer(model, in_a, 4).embeddings;
  const Eigen::MatrixXd zb = encode_to_layer(model, in_b, 4).embeddings;
  const int h = model.half_width();
  const TaskOutput base = continue_from_layer(model, in_a, za, 4);

  Eigen::MatrixXd noisy = za;
  noisy.rightCols(h) = testing::gaussian(za.rows(), h, rng, 5.0);
  const TaskOutput perturbed = continue_from_layer(model, in_a, noisy, 4);
  CHECK(perturbed.class_probs == base.class_probs);

  Eigen::MatrixXd swapped = za;
  swapped.leftCols(h) = zb.leftCols(h);
  CHECK(total_variation(continue_from_layer(model, in_a, swapped, 4), model.forward(in_b)) < 1e-12);
  CHECK(total_variation(base, model.forward(in_b)) > 0.5);
}

TEST_CASE("outcome gradient is zero on the second copy and matches differences on the first") {
  const auto model = model_for(Task::kNli);
  Rng rng(5);
  const ModelInput in = prompt_input("nli_coord", 9, Interpretation::kA);
  Eigen::MatrixXd z = encode_to_layer(model, in, 4).embeddings;
  z += testing::gaussian(z.rows(), z.cols(), rng, 0.1);
  const auto g = model.outcome_gradient(in, z, 4);
  REQUIRE(g);
  const int h = model.half_width();
  CHECK(g->rightCols(h).isZero(0.0));
  CHECK(g->leftCols(h).norm() > 0.0);
  const double eps = 1e-6;
  Eigen::MatrixXd numeric = Eigen::MatrixXd::Zero(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index j = 0; j < h; ++j) {
      Eigen::MatrixXd up = z, down = z;
      up(i, j) += eps;
      down(i, j) -= eps;
      numeric(i, j) = (model.resume(in, up, 4).class_probs(0) -
                       model.resume(in, down, 4).class_probs(0)) / (2 * eps);
    }
  }
  CHECK((numeric - *g).norm() / g->norm() < 1e-5);
}

TEST_CASE("a causal layer confines edits") {
  const auto model = model_for(Task::kNli, 6);
  const ModelInput in_a = prompt_input("nli_coord", 3, Interpretation::kA);
  const ModelInput in_b = prompt_input("nli_coord", 3, Interpretation::kB);
  for (int k : {3, 6}) {
    Eigen::MatrixXd z = encode_to_layer(model, in_a, k).embeddings;
    z.leftCols(model.half_width()) = encode_to_layer(model, in_b, k).embeddings.leftCols(model.half_width());
    const double tv = total_variation(continue_from_layer(model, in_a, z, k), model.forward(in_a));
    if (k == 6) {
      CHECK(tv > 0.5);
    } else {
      CHECK(tv == 0.0);
      CHECK(model.outcome_gradient(in_a, z, k)->isZero(0.0));
    }
  }
}

TEST_CASE("word pooling and gradient scatter") {
  Eigen::MatrixXd z(4, 1);
  z << 5.0, 1.0, 3.0, 7.0;
  CHECK(align_words(z, identity_word_map(4)) == z);
  const SubwordMap map = {{0, 1}, {1, 3}, {3, 4}};
  const Eigen::MatrixXd w = align_words(z, map);
  REQUIRE(w.rows() == 3);
  CHECK(w(1, 0) == 2.0);
  Eigen::MatrixXd g(3, 1);
  g << 1.0, 4.0, 2.0;
  const Eigen::MatrixXd s = scatter_word_gradient(g, map, 4);
  CHECK(s(1, 0) == 2.0);
  CHECK(s(2, 0) == 2.0);
  CHECK(s(3, 0) == 2.0);
  CHECK_THROWS_AS(validate_subword_map({{0, 2}, {1, 4}}, 4), DimensionError);
  CHECK_THROWS_AS(validate_subword_map({{0, 1}, {2, 4}}, 4), DimensionError);
  CHECK_THROWS_AS(validate_subword_map({{0, 1}, {1, 1}, {1, 4}}, 4), DimensionError);
  CHECK_THROWS_AS(validate_subword_map({{0, 1}, {1, 5}}, 4), DimensionError);
  CHECK_NOTHROW(validate_subword_map({{1, 2}, {2, 3}}, 4));
  const Eigen::MatrixXd edges = scatter_word_gradient(g.topRows(2), {{1, 2}, {2, 3}}, 4);
  CHECK(edges(0, 0) == 0.0);
  CHECK(edges(3, 0) == 0.0);
}

TEST_CASE("json encodings round trip") {
  const ModelInput in = prompt_input("qa_coord", 4, Interpretation::kB);
  const ModelInput back = model_input_from_json(nlohmann::json::parse(to_json(in).dump()));
  CHECK(back.words == in.words);
  CHECK(back.pair_words == in.pair_words);
  CHECK(back.answer_spans == in.answer_spans);
  CHECK(*back.parse == *in.parse);
  CHECK(back.readings->first == in.readings->first);
  const auto model = model_for(Task::kQaSpan);
  const TaskOutput out = model.forward(in);
  const TaskOutput out2 = task_output_from_json(nlohmann::json::parse(to_json(out).dump()));
  CHECK(out2.start_probs == out.start_probs);
  CHECK(out2.word_rows == out.word_rows);
  Rng rng(1);
  const Eigen::MatrixXd m = testing::gaussian(3, 4, rng);
  CHECK(matrix_from_json(nlohmann::json::parse(matrix_to_json(m).dump())) == m);
  CHECK_THROWS_AS(matrix_from_json(nlohmann::json::parse("[[1,2],[3]]")), FormatError);
  CHECK_THROWS_AS(matrix_from_json(nlohmann::json::parse("{\"a\":1}")), FormatError);
}

TEST_CASE("total variation") {
  TaskOutput a, b;
  a.task = b.task = Task::kNli;
  a.class_probs = Eigen::Vector3d(1.0, 0.0, 0.0);
  b.class_probs = Eigen::Vector3d(0.25, 0.5, 0.25);
  CHECK(total_variation(a, b) == doctest::Approx(0.75));
  CHECK(total_variation(a, a) == 0.0);
}

TEST_CASE("worker-backed model matches the in-process model") {
  for (Task task : {Task::kMaskedFill, Task::kQaSpan, Task::kNli}) {
    const auto local = model_for(task);
    const ExternalProcessModel remote(worker_command(task));
    CHECK(remote.model_id() == local.model_id());
    CHECK(remote.n_layers() == local.n_layers());
    CHECK(remote.embedding_width() == local.embedding_width());
    CHECK(remote.task() == task);
    CHECK(remote.max_positions() == local.max_positions());
    const std::string suite =
        task == Task::kMaskedFill ? "mask_coord" : task == Task::kQaSpan ? "qa_rc" : "nli_coord";
    const ModelInput in = prompt_input(suite, 2, Interpretation::kB);
    const EncodedInput el = local.encode(in, 5), er = remote.encode(in, 5);
    CHECK(er.embeddings == el.embeddings);
    CHECK(er.word_rows == el.word_rows);
    Eigen::MatrixXd edited = el.embeddings;
    edited(0, 0) += 0.5;
    CHECK(total_variation(remote.resume(in, edited, 5), local.resume(in, edited, 5)) == 0.0);
    CHECK(total_variation(remote.forward(in), local.forward(in)) == 0.0);
    CHECK(*remote.outcome_gradient(in, edited, 5) == *local.outcome_gradient(in, edited, 5));
    CHECK_THROWS_AS(remote.resume(in, edited.leftCols(2), 5), ModelError);
  }
}

TEST_CASE("worker-backed model is safe to share between threads") {
  const ExternalProcessModel remote(worker_command(Task::kNli));
  const auto local = model_for(Task::kNli);
  const auto prompts = generate_suite("nli_coord");
  std::vector<double> got(prompts.size()), want(prompts.size());
  std::vector<std::thread> pool;
  for (int t = 0; t < 4; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = static_cast<std::size_t>(t); i < 40; i += 4) {
        got[i] = outcome(remote.forward(to_model_input(prompts[i], Interpretation::kA)));
      }
    });
  }
  for (auto &th : pool) th.join();
  for (std::size_t i = 0; i < 40; ++i) {
    want[i] = outcome(local.forward(to_model_input(prompts[i], Interpretation::kA)));
    CHECK(got[i] == want[i]);
  }
}

TEST_CASE("worker failures surface as model errors") {
  CHECK_THROWS_AS(ExternalProcessModel("exit 3"), ModelError);
  CHECK_THROWS_AS(ExternalProcessModel("echo not-json"), ModelError);
  CHECK_THROWS_AS(ExternalProcessModel("echo '{\"ok\":false,\"error\":\"no weights\"}'"), ModelError);
  CHECK_THROWS_AS(ExternalProcessModel(""), ConfigError);
  const ExternalProcessModel remote(worker_command(Task::kNli));
  CHECK_THROWS_AS(remote.call({{"op", "bogus"}}), ModelError);
}
