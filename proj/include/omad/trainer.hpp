#pragma once

// Mini-batch training of the detector and split evaluation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "omad/metrics.hpp"
#include "omad/model.hpp"
#include "omad/objective.hpp"
#include "omad/synthdata.hpp"

namespace omad {

enum class OptimizerKind { kAdam, kSgd };

std::string to_string(OptimizerKind kind);
// Throws ConfigError.
OptimizerKind parse_optimizer(const std::string& text);

struct TrainConfig {
  double alpha = kDefaultAlpha;
  double learning_rate = 1e-5;
  int batch_size = 16;
  int epochs = 30;
  std::uint64_t seed = 7;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool flip_augment = true;
  bool normalize_reg = false;
  // Fraction of the train split held out to pick best.omad. 0 selects by
  // the epoch's mean training loss.
  double holdout_fraction = 0.0;

  // Throws ConfigError.
  void validate() const;
};

struct TrainLogRecord {
  int epoch = 0;
  int step = 0;  // global, from 0
  double bce = 0;
  double reg = 0;
  double total = 0;
  double z1_norm = 0;  // batch means
  double z2_norm = 0;
  double abs_cos = 0;
  double ms = 0;  // wall clock for the step
};

inline constexpr const char* kTrainLogHeader = "epoch,step,bce,reg,total,z1_norm,z2_norm,abs_cos,ms";

std::string format_log_record(const TrainLogRecord& r);
void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRecord>& log);
// Throws IoError or FormatError naming the line.
std::vector<TrainLogRecord> read_train_log(const std::filesystem::path& path);

struct EpochSummary {
  int epoch = 0;
  double bce = 0;
  double reg = 0;
  double total = 0;
  double abs_cos = 0;
};

// Per-epoch means of the step records.
std::vector<EpochSummary> epoch_summaries(const std::vector<TrainLogRecord>& log);

template <typename Real>
struct OptimizerState {
  std::uint64_t step = 0;
  std::map<std::string, std::vector<Real>> m;
  std::map<std::string, std::vector<Real>> v;
};

// One update of every parameter. Throws ContractError if grads lacks a
// parameter or has the wrong size.
template <typename Real>
void optimizer_step(ModelParams<Real>& params, const GradMap<Real>& grads, OptimizerState<Real>& state,
                    const TrainConfig& config);

template <typename Real>
struct TrainResult {
  ModelParams<Real> final_params;
  ModelParams<Real> best_params;
  int best_epoch = 0;
  double best_loss = 0;
  std::vector<TrainLogRecord> log;
};

struct TrainHooks {
  // Called after each epoch with its summary.
  std::function<void(const EpochSummary&)> on_epoch;
};

// Trains from a seeded initialisation. With a non-empty out_dir, writes
// final.omad, best.omad and train_log.csv there. A non-finite loss aborts
// with NumericError naming the step; the log up to that step is still
// written.
template <typename Real>
TrainResult<Real> train(const TrainConfig& config, const ModelConfig& model_config, const DatasetManifest& manifest,
                        const std::filesystem::path& out_dir, const TrainHooks& hooks = {});

struct EmbeddingStats {
  double z1_norm = 0;
  double z2_norm = 0;
  double abs_cos = 0;
  double reg = 0;
};

struct EvalResult {
  ScoreSet scores;  // ordered by sample_id
  EmbeddingStats embeddings;
};

// Forward pass over a split without augmentation.
template <typename Real>
EvalResult evaluate(const ModelParams<Real>& params, const DatasetManifest& manifest, Split split);

}  // namespace omad
