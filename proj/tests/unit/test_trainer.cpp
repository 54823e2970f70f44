#include <cmath>
#include <fstream>

#include "doctest.h"
#include "omad/error.hpp"
#include "omad/ops.hpp"
#include "omad/trainer.hpp"
#include "test_util.hpp"

using namespace omad;
using omad::testing::TempDir;
using omad::testing::read_file;

namespace {

GeneratorParams tiny_data() {
  GeneratorParams p;
  p.n_identities = 8;
  p.bona_fide_per_identity = 4;
  p.n_morphs = 16;
  p.size = 16;
  return p;
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.input_size = 16;
  c.conv_channels = {4, 8};
  c.embed_dim = 4;
  return c;
}

TrainConfig quick_config(double alpha) {
  TrainConfig t;
  t.alpha = alpha;
  t.learning_rate = 1e-3;
  t.batch_size = 5;
  t.epochs = 3;
  t.seed = 12;
  return t;
}

std::string drop_ms(const std::string& log) {
  std::string out;
  std::size_t start = 0;
  while (start < log.size()) {
    std::size_t end = log.find('\n', start);
    if (end == std::string::npos) end = log.size();
    const std::string line = log.substr(start, end - start);
    out += line.substr(0, line.rfind(',')) + "\n";
    start = end + 1;
  }
  return out;
}

template <typename Real>
GradMap<Real> full_grads(const ModelParams<Real>& p, Real fill) {
  GradMap<Real> g;
  p.for_each([&](const std::string& name, const Tensor<Real>& t) { g[name].assign(t.size(), fill); });
  return g;
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate());
  CHECK(t.alpha == 100.0);
  CHECK(t.learning_rate == 1e-5);
  CHECK(t.batch_size == 16);
  CHECK(t.optimizer == OptimizerKind::kAdam);
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.learning_rate = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.alpha = -1;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  CHECK(parse_optimizer("sgd") == OptimizerKind::kSgd);
  CHECK_THROWS_AS(parse_optimizer("rmsprop"), ConfigError);
}

TEST_CASE("sgd step") {
  auto p = init_model<double>(tiny_model(), 1);
  const auto before = p;
  TrainConfig t;
  t.optimizer = OptimizerKind::kSgd;
  t.learning_rate = 0.1;
  OptimizerState<double> state;
  std::mt19937_64 rng(2);
  GradMap<double> g;
  p.for_each([&](const std::string& name, const Tensor<double>& x) {
    g[name] = omad::testing::random_vector<double>(rng, x.size());
  });
  optimizer_step(p, g, state, t);
  p.for_each([&](const std::string& name, const Tensor<double>& x) {
    const Tensor<double>* old = nullptr;
    before.for_each([&](const std::string& n, const Tensor<double>& y) {
      if (n == name) old = &y;
    });
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == (*old)[i] - 0.1 * g[name][i]);
  });
}

TEST_CASE("zero gradient is a fixed point") {
  for (auto kind : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
    auto p = init_model<float>(tiny_model(), 3);
    const auto before = p;
    TrainConfig t;
    t.optimizer = kind;
    OptimizerState<float> state;
    for (int k = 0; k < 3; ++k) optimizer_step(p, full_grads<float>(p, 0.0f), state, t);
    CHECK(p == before);
  }
}

TEST_CASE("adam matches the hand-evaluated recurrence") {
  auto p = init_model<double>(tiny_model(), 4);
  TrainConfig t;
  t.learning_rate = 0.01;
  OptimizerState<double> state;
  const double w0 = p.classifier[0];
  const double g1 = 0.5, g2 = -2.0;

  auto grads = full_grads<double>(p, 0.0);
  grads["classifier.weight"][0] = g1;
  optimizer_step(p, grads, state, t);
  // Step 1: m_hat = g, v_hat = g^2, so the move is lr * sign(g) up to eps.
  const double w1 = w0 - 0.01 * g1 / (std::abs(g1) + 1e-8);
  CHECK(p.classifier[0] == doctest::Approx(w1).epsilon(1e-15));

  grads["classifier.weight"][0] = g2;
  optimizer_step(p, grads, state, t);
  const double m = 0.9 * (0.1 * g1) + 0.1 * g2;
  const double v = 0.999 * (0.001 * g1 * g1) + 0.001 * g2 * g2;
  const double m_hat = m / (1 - 0.81);
  const double v_hat = v / (1 - 0.999 * 0.999);
  const double w2 = w1 - 0.01 * m_hat / (std::sqrt(v_hat) + 1e-8);
  CHECK(p.classifier[0] == doctest::Approx(w2).epsilon(1e-14));
  CHECK(state.step == 2);
}

TEST_CASE("optimizer rejects incomplete gradients") {
  auto p = init_model<float>(tiny_model(), 5);
  TrainConfig t;
  OptimizerState<float> state;
  auto g = full_grads<float>(p, 1.0f);
  g.erase("head2.weight");
  CHECK_THROWS_WITH_AS(optimizer_step(p, g, state, t), doctest::Contains("head2.weight"), ContractError);
  g = full_grads<float>(p, 1.0f);
  g["head1.weight"].pop_back();
  CHECK_THROWS_AS(optimizer_step(p, g, state, t), ContractError);
}

TEST_CASE("alpha zero gradients equal plain cross-entropy gradients") {
  const auto params = init_model<double>(tiny_model(), 6);
  std::mt19937_64 rng(7);
  std::vector<Tensor<double>> images;
  for (int i = 0; i < 4; ++i) images.push_back(omad::testing::random_tensor<double>(rng, {1, 16, 16}, 0, 1));
  const std::vector<int> labels{1, 0, 0, 1};

  const auto [loss, g_total] = loss_and_gradients<double>(params, images, labels, ObjectiveConfig{0.0, false});

  Graph<double> graph;
  const auto bound = bind_params(graph, params);
  std::vector<Var<double>> terms;
  for (std::size_t i = 0; i < images.size(); ++i) {
    terms.push_back(bce(forward(params.config, bound, images[i]).y, labels[i]));
  }
  const auto g_bce = graph.backward(mean(std::span<const Var<double>>(terms)));
  CHECK(g_total == g_bce);
  CHECK(loss.total == loss.bce);
}

TEST_CASE("training run") {
  TempDir dir("train");
  const auto manifest = generate_dataset(tiny_data(), dir / "data");

  SUBCASE("alpha zero logs total equal to bce") {
    for (auto precision : {0, 1}) {
      std::vector<TrainLogRecord> log;
      if (precision == 0) {
        log = train<float>(quick_config(0.0), tiny_model(), manifest, {}).log;
      } else {
        log = train<double>(quick_config(0.0), tiny_model(), manifest, {}).log;
      }
      REQUIRE(!log.empty());
      for (const auto& r : log) CHECK(r.total == r.bce);
    }
  }

  SUBCASE("artifacts and log") {
    const auto result = train<float>(quick_config(100.0), tiny_model(), manifest, dir / "run");
    CHECK(std::filesystem::exists(dir / "run/final.omad"));
    CHECK(std::filesystem::exists(dir / "run/best.omad"));
    const auto log = read_train_log(dir / "run/train_log.csv");
    // 36 train samples (6 identities x 4, plus 12 morphs) in batches of 5
    // give 8 steps per epoch.
    REQUIRE(log.size() == 24);
    for (std::size_t i = 0; i < log.size(); ++i) {
      CHECK(log[i].step == static_cast<int>(i));
      CHECK(log[i].epoch == static_cast<int>(i / 8));
      CHECK(log[i].reg >= 0);
      CHECK(log[i].abs_cos <= 1 + 1e-6);
      CHECK(std::isfinite(log[i].total));
      CHECK(log[i].total == doctest::Approx(log[i].bce + 100 * log[i].reg).epsilon(1e-6));
    }
    CHECK(load_model(dir / "run/final.omad").params == result.final_params);
    CHECK(load_model(dir / "run/best.omad").params == result.best_params);
    const auto summaries = epoch_summaries(log);
    REQUIRE(summaries.size() == 3);
    CHECK(result.best_loss == doctest::Approx(summaries[static_cast<std::size_t>(result.best_epoch)].total));
    CHECK(read_file(dir / "run/train_log.csv").rfind(std::string(kTrainLogHeader) + "\n", 0) == 0);
  }

  SUBCASE("reruns are identical") {
    train<float>(quick_config(100.0), tiny_model(), manifest, dir / "r1");
    train<float>(quick_config(100.0), tiny_model(), manifest, dir / "r2");
    CHECK(read_file(dir / "r1/final.omad") == read_file(dir / "r2/final.omad"));
    CHECK(read_file(dir / "r1/best.omad") == read_file(dir / "r2/best.omad"));
    CHECK(drop_ms(read_file(dir / "r1/train_log.csv")) == drop_ms(read_file(dir / "r2/train_log.csv")));
    auto other = quick_config(100.0);
    other.seed = 13;
    train<float>(other, tiny_model(), manifest, dir / "r3");
    CHECK(read_file(dir / "r1/final.omad") != read_file(dir / "r3/final.omad"));
  }

  SUBCASE("holdout selection") {
    auto t = quick_config(1.0);
    t.holdout_fraction = 0.25;
    const auto result = train<float>(t, tiny_model(), manifest, {});
    // 27 of 36 samples remain for training: 6 steps per epoch.
    CHECK(result.log.size() == 18);
  }

  SUBCASE("divergence aborts with the step") {
    auto t = quick_config(100.0);
    t.optimizer = OptimizerKind::kSgd;
    t.learning_rate = 1e30;
    CHECK_THROWS_WITH_AS(train<float>(t, tiny_model(), manifest, dir / "div"), doctest::Contains("step"),
                         NumericError);
    CHECK(std::filesystem::exists(dir / "div/train_log.csv"));
  }

  SUBCASE("single-class training split is rejected") {
    auto m = manifest;
    std::erase_if(m.records, [](const ManifestRecord& r) { return r.label == kAttackLabel; });
    CHECK_THROWS_AS(train<float>(quick_config(1.0), tiny_model(), m, {}), ContractError);
  }
}

TEST_CASE("evaluation") {
  TempDir dir("eval");
  const auto manifest = generate_dataset(tiny_data(), dir / "data");
  const auto params = init_model<float>(tiny_model(), 9);
  const auto result = evaluate(params, manifest, Split::kTest);
  const auto expected = manifest.split_records(Split::kTest);
  REQUIRE(result.scores.records().size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& r = result.scores.records()[i];
    CHECK(r.sample_id == expected[i].sample_id);
    CHECK(r.label == expected[i].label);
    CHECK(r.score > 0.0);
    CHECK(r.score < 1.0);
  }
  CHECK(result.embeddings.abs_cos >= 0.0);
  CHECK(result.embeddings.abs_cos <= 1.0);

  write_scores_csv(dir / "a.csv", result.scores);
  write_scores_csv(dir / "b.csv", evaluate(params, manifest, Split::kTest).scores);
  CHECK(read_file(dir / "a.csv") == read_file(dir / "b.csv"));

  // Score equals a direct forward pass on the loaded image.
  const auto img = read_pgm(dir.path() / "data" / expected[0].path);
  Tensor<float> t({1, 16, 16});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) t[i] = static_cast<float>(img.pixels[i]) / 255.0f;
  CHECK(result.scores.records()[0].score == static_cast<double>(predict(params, t).y));
}

TEST_CASE("log file parsing") {
  TempDir dir("log");
  std::vector<TrainLogRecord> log{{0, 0, 0.5, 0.25, 25.5, 1.5, 2.0, 0.1, 3.25}, {1, 1, 0.4, 0.0, 0.4, 1, 1, 0, 2}};
  write_train_log(dir / "log.csv", log);
  const auto back = read_train_log(dir / "log.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].total == 25.5);
  CHECK(back[0].ms == 3.25);
  CHECK(back[1].epoch == 1);
  std::ofstream(dir / "bad.csv") << kTrainLogHeader << "\n0,0,x,0,0,0,0,0,0\n";
  CHECK_THROWS_WITH_AS(read_train_log(dir / "bad.csv"), doctest::Contains("line 2"), FormatError);

  const auto s = epoch_summaries(log);
  REQUIRE(s.size() == 2);
  CHECK(s[0].reg == 0.25);
  CHECK(s[1].total == 0.4);
}
