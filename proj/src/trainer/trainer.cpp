#include "omad/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "omad/error.hpp"
#include "omad/ops.hpp"
#include "omad/rng.hpp"
#include "omad/text.hpp"

namespace omad {

namespace fs = std::filesystem;

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(const std::string& text) {
  if (text == "adam") return OptimizerKind::kAdam;
  if (text == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer '" + text + "' (expected adam or sgd)");
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a finite value >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1, got " + std::to_string(batch_size));
  if (epochs < 1) throw ConfigError("epochs must be >= 1, got " + std::to_string(epochs));
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0,1)");
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) throw ConfigError("holdout fraction must lie in [0,1)");
}

std::string format_log_record(const TrainLogRecord& r) {
  char ms[32];
  std::snprintf(ms, sizeof(ms), "%.3f", r.ms);
  return std::to_string(r.epoch) + "," + std::to_string(r.step) + "," + shortest_double(r.bce) + "," +
         shortest_double(r.reg) + "," + shortest_double(r.total) + "," + shortest_double(r.z1_norm) + "," +
         shortest_double(r.z2_norm) + "," + shortest_double(r.abs_cos) + "," + ms;
}

void write_train_log(const fs::path& path, const std::vector<TrainLogRecord>& log) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << kTrainLogHeader << "\n";
  for (const auto& r : log) out << format_log_record(r) << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<TrainLogRecord> read_train_log(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open training log: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kTrainLogHeader) throw FormatError("training log: bad header");
  std::vector<TrainLogRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    TrainLogRecord r;
    long long epoch = 0, step = 0;
    const bool ok = f.size() == 9 && parse_int64(f[0], epoch) && parse_int64(f[1], step) && parse_double(f[2], r.bce) &&
                    parse_double(f[3], r.reg) && parse_double(f[4], r.total) && parse_double(f[5], r.z1_norm) &&
                    parse_double(f[6], r.z2_norm) && parse_double(f[7], r.abs_cos) && parse_double(f[8], r.ms);
    if (!ok) throw FormatError("training log line " + std::to_string(line_no) + ": malformed record");
    r.epoch = static_cast<int>(epoch);
    r.step = static_cast<int>(step);
    out.push_back(r);
  }
  return out;
}

std::vector<EpochSummary> epoch_summaries(const std::vector<TrainLogRecord>& log) {
  std::vector<EpochSummary> out;
  std::size_t count = 0;
  for (const auto& r : log) {
    if (out.empty() || out.back().epoch != r.epoch) {
      if (!out.empty()) {
        auto& s = out.back();
        s.bce /= count, s.reg /= count, s.total /= count, s.abs_cos /= count;
      }
      out.push_back({r.epoch, 0, 0, 0, 0});
      count = 0;
    }
    auto& s = out.back();
    s.bce += r.bce;
    s.reg += r.reg;
    s.total += r.total;
    s.abs_cos += r.abs_cos;
    ++count;
  }
  if (!out.empty()) {
    auto& s = out.back();
    s.bce /= count, s.reg /= count, s.total /= count, s.abs_cos /= count;
  }
  return out;
}

template <typename Real>
void optimizer_step(ModelParams<Real>& params, const GradMap<Real>& grads, OptimizerState<Real>& state,
                    const TrainConfig& config) {
  ++state.step;
  const double lr = config.learning_rate;
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  params.for_each([&](const std::string& name, Tensor<Real>& t) {
    const auto it = grads.find(name);
    if (it == grads.end()) throw ContractError("optimizer: no gradient for parameter " + name);
    const std::vector<Real>& g = it->second;
    if (g.size() != t.size()) {
      throw ContractError("optimizer: gradient for " + name + " has " + std::to_string(g.size()) +
                          " elements, parameter has " + std::to_string(t.size()));
    }
    auto p = t.data();
    if (config.optimizer == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= static_cast<Real>(lr) * g[i];
      return;
    }
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) {
      m.assign(p.size(), Real(0));
      v.assign(p.size(), Real(0));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = static_cast<Real>(b1 * m[i] + (1.0 - b1) * g[i]);
      v[i] = static_cast<Real>(b2 * v[i] + (1.0 - b2) * static_cast<double>(g[i]) * g[i]);
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] = static_cast<Real>(p[i] - lr * m_hat / (std::sqrt(v_hat) + config.epsilon));
    }
  });
}

namespace {

double norm(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

template <typename Real>
std::vector<double> as_double(const Tensor<Real>& t) {
  return std::vector<double>(t.data().begin(), t.data().end());
}

struct EmbeddingAccumulator {
  double z1 = 0, z2 = 0, cos = 0, reg = 0;
  std::size_t n = 0;

  void add(const std::vector<double>& a, const std::vector<double>& b) {
    const double na = norm(a), nb = norm(b);
    const double dot = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
    z1 += na;
    z2 += nb;
    cos += na > 0 && nb > 0 ? std::abs(dot) / (na * nb) : 0.0;
    reg += dot * dot;
    ++n;
  }
  EmbeddingStats mean() const {
    const double d = n ? static_cast<double>(n) : 1.0;
    return {z1 / d, z2 / d, cos / d, reg / d};
  }
};

std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::vector<std::size_t> items) {
  CounterRng rng(seed, RngPurpose::kShuffle, static_cast<std::uint64_t>(epoch));
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[static_cast<std::size_t>(rng.below(i, i))]);
  }
  return items;
}

template <typename Real>
void save_checkpoint(const ModelParams<Real>& params, const fs::path& path) {
  if constexpr (std::is_same_v<Real, float>) {
    save_model(params, path);
  } else {
    save_model(params.template cast<float>(), path);
  }
}

template <typename Real>
double holdout_loss(const ModelParams<Real>& params, DatasetReader& reader, const std::vector<std::size_t>& indices,
                    const ObjectiveConfig& objective, int size) {
  double sum = 0;
  for (std::size_t start = 0; start < indices.size(); start += 64) {
    const std::size_t end = std::min(indices.size(), start + 64);
    const std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                         indices.begin() + static_cast<std::ptrdiff_t>(end));
    const Batch<Real> batch = reader.batch<Real>(Split::kTrain, chunk, false, 0, size);
    Graph<Real> graph;
    const BoundParams<Real> bound = bind_params(graph, params);
    std::vector<Prediction<Real>> preds;
    for (const auto& img : batch.images) preds.push_back(forward(params.config, bound, img));
    const LossGraph<Real> loss = total_loss<Real>(preds, batch.labels, objective);
    sum += loss.values.total * static_cast<double>(chunk.size());
  }
  return sum / static_cast<double>(indices.size());
}

}  // namespace

template <typename Real>
TrainResult<Real> train(const TrainConfig& config, const ModelConfig& model_config, const DatasetManifest& manifest,
                        const fs::path& out_dir, const TrainHooks& hooks) {
  config.validate();
  model_config.validate();
  DatasetReader reader(manifest);
  const auto& records = reader.records(Split::kTrain);
  if (records.empty()) throw ContractError("training split is empty");
  bool has_bona = false, has_attack = false;
  for (const auto& r : records) (r.label == kBonaFideLabel ? has_bona : has_attack) = true;
  if (!has_bona || !has_attack) throw ContractError("training split needs both bona fide and attack samples");

  std::vector<std::size_t> all(records.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::size_t> train_idx = all;
  std::vector<std::size_t> holdout_idx;
  if (config.holdout_fraction > 0) {
    std::vector<std::size_t> shuffled = epoch_order(config.seed ^ 0x686f6c64ULL, -1, all);
    const auto n_hold = static_cast<std::size_t>(std::lround(config.holdout_fraction * static_cast<double>(all.size())));
    if (n_hold == 0 || n_hold >= all.size()) throw ConfigError("holdout fraction leaves an empty split");
    holdout_idx.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_hold));
    train_idx.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_hold), shuffled.end());
    std::sort(holdout_idx.begin(), holdout_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
  }

  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  }

  const ObjectiveConfig objective{config.alpha, config.normalize_reg};
  TrainResult<Real> result;
  ModelParams<Real> params = init_model<Real>(model_config, config.seed);
  OptimizerState<Real> state;
  result.best_loss = std::numeric_limits<double>::infinity();
  const std::size_t batch_size = static_cast<std::size_t>(config.batch_size);
  int step = 0;

  auto flush_log = [&] {
    if (!out_dir.empty()) write_train_log(out_dir / "train_log.csv", result.log);
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(config.seed, epoch, train_idx);
    const std::uint64_t flip_seed = CounterRng(config.seed, RngPurpose::kFlip, static_cast<std::uint64_t>(epoch)).bits(0);
    for (std::size_t start = 0; start < order.size(); start += batch_size, ++step) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::size_t end = std::min(order.size(), start + batch_size);
      const std::vector<std::size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      const Batch<Real> batch =
          reader.batch<Real>(Split::kTrain, chunk, config.flip_augment, flip_seed, model_config.input_size);

      TrainLogRecord rec;
      rec.epoch = epoch;
      rec.step = step;
      GradMap<Real> grads;
      try {
        Graph<Real> graph;
        const BoundParams<Real> bound = bind_params(graph, params);
        std::vector<Prediction<Real>> preds;
        preds.reserve(batch.images.size());
        for (const auto& img : batch.images) preds.push_back(forward(model_config, bound, img));
        const LossGraph<Real> loss = total_loss<Real>(preds, batch.labels, objective);
        rec.bce = loss.values.bce;
        rec.reg = loss.values.reg;
        rec.total = loss.values.total;
        if (!std::isfinite(rec.total)) throw NumericError("loss is not finite");
        EmbeddingAccumulator acc;
        for (const auto& p : preds) acc.add(as_double(p.z1.value()), as_double(p.z2.value()));
        const EmbeddingStats s = acc.mean();
        rec.z1_norm = s.z1_norm;
        rec.z2_norm = s.z2_norm;
        rec.abs_cos = s.abs_cos;
        grads = graph.backward(loss.total);
      } catch (const NumericError& e) {
        rec.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(rec);
        flush_log();
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                           ": " + e.what());
      }
      optimizer_step(params, grads, state, config);
      rec.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      result.log.push_back(rec);
    }

    const std::vector<TrainLogRecord> epoch_log(
        std::find_if(result.log.begin(), result.log.end(), [&](const TrainLogRecord& r) { return r.epoch == epoch; }),
        result.log.end());
    const EpochSummary summary = epoch_summaries(epoch_log).front();
    const double selection =
        holdout_idx.empty() ? summary.total
                            : holdout_loss(params, reader, holdout_idx, objective, model_config.input_size);
    if (selection < result.best_loss) {
      result.best_loss = selection;
      result.best_epoch = epoch;
      result.best_params = params;
      if (!out_dir.empty()) save_checkpoint(params, out_dir / "best.omad");
    }
    if (hooks.on_epoch) hooks.on_epoch(summary);
  }

  result.final_params = params;
  if (!out_dir.empty()) save_checkpoint(params, out_dir / "final.omad");
  flush_log();
  return result;
}

template <typename Real>
EvalResult evaluate(const ModelParams<Real>& params, const DatasetManifest& manifest, Split split) {
  DatasetReader reader(manifest);
  const auto& records = reader.records(split);
  if (records.empty()) throw ContractError("split " + to_string(split) + " is empty");
  std::vector<ScoreRecord> scores;
  scores.reserve(records.size());
  EmbeddingAccumulator acc;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::vector<std::size_t> one{i};
    const Batch<Real> batch = reader.batch<Real>(split, one, false, 0, params.config.input_size);
    const PredictionValues<Real> v = predict(params, batch.images[0]);
    scores.push_back({records[i].sample_id, records[i].label, static_cast<double>(v.y)});
    acc.add(std::vector<double>(v.embeddings.z1.begin(), v.embeddings.z1.end()),
            std::vector<double>(v.embeddings.z2.begin(), v.embeddings.z2.end()));
  }
  return {ScoreSet(std::move(scores)), acc.mean()};
}

template void optimizer_step(ModelParams<float>&, const GradMap<float>&, OptimizerState<float>&, const TrainConfig&);
template void optimizer_step(ModelParams<double>&, const GradMap<double>&, OptimizerState<double>&,
                             const TrainConfig&);
template TrainResult<float> train(const TrainConfig&, const ModelConfig&, const DatasetManifest&, const fs::path&,
                                  const TrainHooks&);
template TrainResult<double> train(const TrainConfig&, const ModelConfig&, const DatasetManifest&, const fs::path&,
                                   const TrainHooks&);
template EvalResult evaluate(const ModelParams<float>&, const DatasetManifest&, Split);
template EvalResult evaluate(const ModelParams<double>&, const DatasetManifest&, Split);

}  // namespace omad
