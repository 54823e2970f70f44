#include "omad/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <ostream>

#include "omad/error.hpp"
#include "omad/metrics.hpp"
#include "omad/objective.hpp"
#include "omad/synthdata.hpp"
#include "omad/text.hpp"
#include "omad/trainer.hpp"

namespace omad::cli {

namespace fs = std::filesystem;

namespace {

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

struct GenArgs {
  std::string out;
  GeneratorParams params;
};

struct TrainArgs {
  std::string data;
  std::string out;
  TrainConfig config;
  int embed_dim = 32;
  std::string optimizer = "adam";
  std::string precision = "f32";
  bool no_flip = false;
};

struct EvalArgs {
  std::string model;
  std::string data;
  std::string split = "test";
  std::string scores;
  std::string report;
};

struct DetArgs {
  std::string scores;
  std::string out;
};

struct GradArgs {
  std::uint64_t seed = 1;
  double tolerance = 1e-4;
  double alpha = kDefaultAlpha;
  std::size_t samples = 200;
  double step = 1e-5;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  a.params.validate();
  const DatasetManifest m = generate_dataset(a.params, a.out);
  std::size_t counts[2][2] = {{0, 0}, {0, 0}};
  for (const auto& r : m.records) ++counts[r.split == Split::kTrain ? 0 : 1][r.label];
  out << "wrote " << m.records.size() << " samples to " << a.out << "\n";
  out << "train: " << counts[0][kBonaFideLabel] << " bona fide, " << counts[0][kAttackLabel] << " attacks, "
      << m.identities(Split::kTrain).size() << " identities\n";
  out << "test:  " << counts[1][kBonaFideLabel] << " bona fide, " << counts[1][kAttackLabel] << " attacks, "
      << m.identities(Split::kTest).size() << " identities\n";
  return kExitOk;
}

template <typename Real>
int train_with(const TrainArgs& a, const ModelConfig& model, const DatasetManifest& manifest, std::ostream& out) {
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochSummary& s) {
    out << "epoch " << (s.epoch + 1) << "/" << a.config.epochs << "  bce " << fixed(s.bce) << "  reg " << fixed(s.reg)
        << "  total " << fixed(s.total) << "  |cos| " << fixed(s.abs_cos) << "\n";
    out.flush();
  };
  const TrainResult<Real> result = train<Real>(a.config, model, manifest, a.out, hooks);
  const TrainLogRecord& last = result.log.back();
  out << "final step " << last.step << ": bce " << shortest_double(last.bce) << "  reg " << shortest_double(last.reg)
      << "  alpha " << shortest_double(a.config.alpha) << "  total " << shortest_double(last.total) << "\n";
  out << "best epoch " << (result.best_epoch + 1) << " (loss " << fixed(result.best_loss) << ")\n";
  out << "wrote " << (fs::path(a.out) / "final.omad").string() << ", best.omad, train_log.csv\n";
  return kExitOk;
}

int cmd_train(TrainArgs a, std::ostream& out) {
  a.config.optimizer = parse_optimizer(a.optimizer);
  a.config.flip_augment = !a.no_flip;
  a.config.validate();
  if (a.precision != "f32" && a.precision != "f64") throw ConfigError("precision must be f32 or f64");
  const DatasetManifest manifest = load_manifest(a.data);
  ModelConfig model;
  model.embed_dim = a.embed_dim;
  model.input_size = manifest.params.size;
  model.validate();
  if (a.precision == "f64") return train_with<double>(a, model, manifest, out);
  return train_with<float>(a, model, manifest, out);
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const Split split = parse_split(a.split);
  const LoadedModel loaded = load_model(a.model);
  const DatasetManifest manifest = load_manifest(a.data);
  const EvalResult result = evaluate(loaded.params, manifest, split);
  const MetricsReport report = compute_report(result.scores);
  if (!a.scores.empty()) write_scores_csv(a.scores, result.scores);
  if (!a.report.empty()) write_report_json(a.report, report);
  out << a.split << " split: " << report.n_bona_fide << " bona fide, " << report.n_attack << " attacks\n";
  out << format_summary(report) << "\n";
  out << "mean |cos(z1,z2)| " << fixed(result.embeddings.abs_cos) << "\n";
  return kExitOk;
}

int cmd_det(const DetArgs& a, std::ostream& out) {
  const ScoreSet scores = read_scores_csv(a.scores);
  const auto points = det_curve(scores);
  write_det_csv(a.out, points);
  out << "wrote " << points.size() << " DET points to " << a.out << "\n";
  out << format_summary(compute_report(scores)) << "\n";
  return kExitOk;
}

int cmd_gradcheck(const GradArgs& a, std::ostream& out, std::ostream& err) {
  if (!(a.tolerance > 0)) throw ConfigError("tolerance must be positive");
  if (!(a.step > 0)) throw ConfigError("step must be positive");
  const GradCheckRun run = run_gradcheck(a.seed, a.alpha, a.tolerance, a.samples, a.step);
  const auto& r = run.report;
  out << "checked " << r.checked << " of " << run.parameter_count << " parameter elements (seed " << a.seed
      << ", alpha " << shortest_double(a.alpha) << ", step " << shortest_double(a.step) << ")\n";
  if (r.kink_skipped > 0) out << "skipped " << r.kink_skipped << " elements whose probe crossed a relu kink\n";
  out << "max relative error " << shortest_double(r.max_rel_error);
  if (r.checked > 0) out << " at " << r.worst.param << "[" << r.worst.index << "]";
  out << "\n" << (r.passed ? "PASS" : "FAIL") << " (tolerance " << shortest_double(a.tolerance) << ")\n";
  if (r.passed) return kExitOk;
  err << "error: gradient check failed: " << r.failures.size() << " of " << r.checked << " elements above tolerance\n";
  return kExitRuntime;
}

}  // namespace

GradCheckRun run_gradcheck(std::uint64_t seed, double alpha, double tolerance, std::size_t samples, double step,
                           const ModelConfig& config) {
  config.validate();
  ModelParams<double> params = init_model<double>(config, seed);
  const auto size = static_cast<std::size_t>(config.input_size);
  const auto channels = static_cast<std::size_t>(config.input_channels);
  const std::uint64_t data_seed = seed ^ 0x67726164ULL;
  std::vector<IdentityPrototype> protos;
  for (int id = 0; id < 3; ++id) protos.push_back(make_prototype(data_seed, id, config.input_size));
  std::vector<Sample> samples_in{make_bona_fide(protos[0], data_seed + 1, 0.03),
                                 make_bona_fide(protos[1], data_seed + 2, 0.03),
                                 make_morph(protos[0], protos[1], 0.5, data_seed + 3, 0.03),
                                 make_morph(protos[1], protos[2], 0.5, data_seed + 4, 0.03)};
  std::vector<Tensor<double>> images;
  std::vector<int> labels;
  for (const auto& s : samples_in) {
    Tensor<double> img({channels, size, size});
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < size * size; ++i) img[c * size * size + i] = s.pixels[i];
    images.push_back(std::move(img));
    labels.push_back(s.label);
  }
  GradCheckOptions options;
  options.step = step;
  options.tolerance = tolerance;
  options.sample_size = samples;
  options.seed = seed;
  GradCheckRun run;
  run.parameter_count = params.element_count();
  run.report = check_loss_gradients(params, images, labels, ObjectiveConfig{alpha, false}, options);
  return run;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Orthogonal-identity morphing attack detector", "omad"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic morphing dataset");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--seed", gen.params.seed, "Random seed")->capture_default_str();
  g->add_option("--identities", gen.params.n_identities, "Number of identities")->capture_default_str();
  g->add_option("--per-id", gen.params.bona_fide_per_identity, "Bona fide samples per identity")->capture_default_str();
  g->add_option("--morphs", gen.params.n_morphs, "Number of morphing attacks")->capture_default_str();
  g->add_option("--split", gen.params.split_fraction, "Fraction of identities in the train split")->capture_default_str();
  g->add_option("--size", gen.params.size, "Image side length in pixels")->capture_default_str();
  g->add_option("--noise", gen.params.noise_std, "Pixel noise standard deviation")->capture_default_str();
  g->add_option("--blend", gen.params.blend, "Morph blend weight")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a detector");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--out", tr.out, "Output directory for checkpoints and log")->required();
  t->add_option("--alpha", tr.config.alpha, "Weight of the orthogonality term")->capture_default_str();
  t->add_option("--lr", tr.config.learning_rate, "Learning rate")->capture_default_str();
  t->add_option("--batch", tr.config.batch_size, "Batch size")->capture_default_str();
  t->add_option("--epochs", tr.config.epochs, "Epochs")->capture_default_str();
  t->add_option("--seed", tr.config.seed, "Seed for initialisation, shuffling and flips")->capture_default_str();
  t->add_option("--embed-dim", tr.embed_dim, "Length of each identity vector")->capture_default_str();
  t->add_option("--optimizer", tr.optimizer, "adam or sgd")->capture_default_str();
  t->add_option("--precision", tr.precision, "f32 or f64")->capture_default_str();
  t->add_option("--holdout", tr.config.holdout_fraction, "Train fraction held out to select best.omad")
      ->capture_default_str();
  t->add_flag("--no-flip", tr.no_flip, "Disable horizontal flip augmentation");
  t->add_flag("--normalize-reg", tr.config.normalize_reg, "Penalise the squared cosine instead");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a split and report error rates");
  e->add_option("--model", ev.model, "Model file")->required();
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--split", ev.split, "train or test")->capture_default_str();
  e->add_option("--scores", ev.scores, "Output score CSV");
  e->add_option("--report", ev.report, "Output metrics JSON");

  DetArgs det;
  auto* d = app.add_subcommand("det", "Export a DET curve from a score file");
  d->add_option("--scores", det.scores, "Score CSV")->required();
  d->add_option("--out", det.out, "Output DET CSV")->required();

  GradArgs gc;
  auto* c = app.add_subcommand("gradcheck", "Finite-difference check of the training objective");
  c->add_option("--seed", gc.seed, "Seed for weights, batch and sampled elements")->capture_default_str();
  c->add_option("--tolerance", gc.tolerance, "Maximum relative error")->capture_default_str();
  c->add_option("--alpha", gc.alpha, "Weight of the orthogonality term")->capture_default_str();
  c->add_option("--samples", gc.samples, "Parameter elements to check (0 = all)")->capture_default_str();
  c->add_option("--step", gc.step, "Central-difference step")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n";
    auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kExitUsage;
  }

  try {
    if (*g) return cmd_gen(gen, out);
    if (*t) return cmd_train(tr, out);
    if (*e) return cmd_eval(ev, out);
    if (*d) return cmd_det(det, out);
    if (*c) return cmd_gradcheck(gc, out, err);
  } catch (const ConfigError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitRuntime;
  }
  err << "error: no subcommand\n";
  return kExitUsage;
}

}  // namespace omad::cli
