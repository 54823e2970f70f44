#include "omad/model.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "omad/ops.hpp"
#include "omad/rng.hpp"

namespace omad {

namespace {

template <typename Real>
Tensor<Real> fan_in_uniform(Shape shape, std::size_t fan_in, RngStream& rng) {
  Tensor<Real> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (Real& v : t.data()) v = static_cast<Real>(rng.uniform(-bound, bound));
  return t;
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw FormatError("model header: bad integer for " + key + ": '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw FormatError("model header: bad boolean for " + key + ": '" + value + "'");
}

}  // namespace

void ModelConfig::validate() const {
  if (input_channels < 1) throw ConfigError("input_channels must be >= 1");
  if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  if (conv_channels.empty()) throw ConfigError("conv_channels must not be empty");
  for (int c : conv_channels) {
    if (c < 1) throw ConfigError("conv_channels entries must be >= 1");
  }
  if (conv_channels.size() > 16) throw ConfigError("too many backbone stages");
  const int factor = 1 << conv_channels.size();
  if (input_size < factor || input_size % factor != 0) {
    throw ConfigError("input_size " + std::to_string(input_size) + " must be a positive multiple of " +
                      std::to_string(factor));
  }
}

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  out << "format=omad-model\n";
  out << "input_channels=" << input_channels << "\n";
  out << "input_size=" << input_size << "\n";
  out << "conv_channels=";
  for (std::size_t i = 0; i < conv_channels.size(); ++i) out << (i ? "," : "") << conv_channels[i];
  out << "\n";
  out << "use_residual=" << (use_residual ? 1 : 0) << "\n";
  out << "embed_dim=" << embed_dim << "\n";
  out << "classifier_bias=" << (classifier_bias ? 1 : 0) << "\n";
  return out.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("model header: line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto take = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("model header: missing key " + key);
    return it->second;
  };
  if (take("format") != "omad-model") throw FormatError("model header: unknown format");
  ModelConfig c;
  c.input_channels = parse_int("input_channels", take("input_channels"));
  c.input_size = parse_int("input_size", take("input_size"));
  c.conv_channels.clear();
  std::istringstream channels(take("conv_channels"));
  std::string item;
  while (std::getline(channels, item, ',')) c.conv_channels.push_back(parse_int("conv_channels", item));
  c.use_residual = parse_bool("use_residual", take("use_residual"));
  c.embed_dim = parse_int("embed_dim", take("embed_dim"));
  c.classifier_bias = parse_bool("classifier_bias", take("classifier_bias"));
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model header: ") + e.what());
  }
  return c;
}

template <typename Real>
std::size_t ModelParams<Real>::element_count() const {
  std::size_t n = 0;
  for_each([&n](const std::string&, const Tensor<Real>& t) { n += t.size(); });
  return n;
}

template <typename Real>
ModelParams<Real> init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams<Real> p;
  p.config = config;
  std::uint64_t stream = 0;
  auto next_rng = [&] { return RngStream(CounterRng(seed, RngPurpose::kInit, stream++)); };

  std::size_t in_c = static_cast<std::size_t>(config.input_channels);
  for (int out : config.conv_channels) {
    const auto out_c = static_cast<std::size_t>(out);
    RngStream ra = next_rng();
    p.conv_a.push_back(fan_in_uniform<Real>({out_c, in_c, 3, 3}, in_c * 9, ra));
    RngStream rb = next_rng();
    p.conv_b.push_back(fan_in_uniform<Real>({out_c, out_c, 3, 3}, out_c * 9, rb));
    in_c = out_c;
  }
  const std::size_t f = config.feature_dim();
  const auto d = static_cast<std::size_t>(config.embed_dim);
  RngStream r1 = next_rng();
  p.head1 = fan_in_uniform<Real>({d, f}, f, r1);
  RngStream r2 = next_rng();
  p.head2 = fan_in_uniform<Real>({d, f}, f, r2);
  RngStream rc = next_rng();
  p.classifier = fan_in_uniform<Real>({1, 2 * d}, 2 * d, rc);
  if (config.classifier_bias) p.classifier_bias = Tensor<Real>(Shape{1});
  return p;
}

template <typename Real>
BoundParams<Real> bind_params(Graph<Real>& graph, const ModelParams<Real>& params) {
  BoundParams<Real> b;
  for (std::size_t i = 0; i < params.conv_a.size(); ++i) {
    b.conv_a.push_back(graph.parameter("stage" + std::to_string(i) + ".conv_a", params.conv_a[i]));
    b.conv_b.push_back(graph.parameter("stage" + std::to_string(i) + ".conv_b", params.conv_b[i]));
  }
  b.head1 = graph.parameter("head1.weight", params.head1);
  b.head2 = graph.parameter("head2.weight", params.head2);
  b.classifier = graph.parameter("classifier.weight", params.classifier);
  if (params.classifier_bias) b.classifier_bias = graph.parameter("classifier.bias", *params.classifier_bias);
  return b;
}

template <typename Real>
Prediction<Real> forward(const ModelConfig& config, const BoundParams<Real>& params,
                         const Tensor<Real>& image) {
  const auto c = static_cast<std::size_t>(config.input_channels);
  const auto s = static_cast<std::size_t>(config.input_size);
  if (image.shape() != Shape{c, s, s}) {
    throw DimensionError("forward: image shape " + shape_string(image.shape()) +
                         " does not match model input " + shape_string(Shape{c, s, s}));
  }
  if (params.conv_a.size() != config.conv_channels.size()) {
    throw ContractError("forward: parameters do not match the config's stage count");
  }
  Graph<Real>& graph = *params.head1.graph();
  Var<Real> x = graph.constant(image);
  for (std::size_t i = 0; i < params.conv_a.size(); ++i) {
    Var<Real> h = relu(conv2d(x, params.conv_a[i], 1, 1));
    if (config.use_residual && x.shape()[0] <= h.shape()[0]) h = add_channel_padded(h, x);
    x = relu(conv2d(h, params.conv_b[i], 2, 1));
  }
  Var<Real> features = global_avg_pool(x);

  Prediction<Real> out;
  out.z1 = dense(features, params.head1);
  out.z2 = dense(features, params.head2);
  out.z = concat(out.z1, out.z2);
  out.logit = dense(out.z, params.classifier, params.classifier_bias);
  out.y = sigmoid(out.logit);
  return out;
}

template <typename Real>
PredictionValues<Real> predict(const ModelParams<Real>& params, const Tensor<Real>& image) {
  Graph<Real> graph;
  const BoundParams<Real> bound = bind_params(graph, params);
  const Prediction<Real> pred = forward(params.config, bound, image);
  PredictionValues<Real> v;
  v.y = pred.y.value()[0];
  v.logit = pred.logit.value()[0];
  v.embeddings.z1 = pred.z1.value().vector();
  v.embeddings.z2 = pred.z2.value().vector();
  v.embeddings.z = pred.z.value().vector();
  return v;
}

void save_model(const ModelParams<float>& params, const std::filesystem::path& path) {
  params.config.validate();
  std::vector<NamedTensor> tensors;
  params.for_each([&](const std::string& name, const Tensor<float>& t) { tensors.push_back({name, t}); });
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open model file for writing: " + path.string());
  const std::string header = params.config.to_text() + "\n";
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_weights(out, tensors);
  out.flush();
  if (!out) throw IoError("failed writing model file: " + path.string());
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path.string());

  std::string header;
  std::string line;
  std::uint64_t offset = 0;
  bool terminated = false;
  while (std::getline(in, line)) {
    offset += line.size() + 1;
    if (line.empty()) {
      terminated = true;
      break;
    }
    if (line.size() > 4096 || offset > (1u << 20)) break;
    header += line + "\n";
  }
  if (!terminated) {
    throw FormatError("model header not terminated by a blank line (offset " + std::to_string(offset) + ")");
  }
  LoadedModel loaded;
  loaded.config = ModelConfig::from_text(header);
  std::vector<NamedTensor> tensors = read_weights(in, offset);

  ModelParams<float> expected = init_model<float>(loaded.config, 0);
  std::size_t k = 0;
  expected.for_each([&](const std::string& name, Tensor<float>& slot) {
    if (k >= tensors.size()) throw FormatError("model file is missing tensor " + name);
    NamedTensor& t = tensors[k++];
    if (t.name != name) throw FormatError("model file: expected tensor " + name + ", found " + t.name);
    if (t.tensor.shape() != slot.shape()) {
      throw FormatError("model file: tensor " + name + " has shape " + shape_string(t.tensor.shape()) +
                        ", expected " + shape_string(slot.shape()));
    }
    if (!all_finite<float>(t.tensor.data())) throw FormatError("model file: non-finite values in " + name);
    slot = std::move(t.tensor);
  });
  if (k != tensors.size()) throw FormatError("model file has unexpected extra tensors");
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after weight section");
  }
  loaded.params = std::move(expected);
  return loaded;
}

template struct ModelParams<float>;
template struct ModelParams<double>;

#define OMAD_INSTANTIATE_MODEL(Real)                                                               \
  template ModelParams<Real> init_model<Real>(const ModelConfig&, std::uint64_t);                 \
  template BoundParams<Real> bind_params<Real>(Graph<Real>&, const ModelParams<Real>&);           \
  template Prediction<Real> forward<Real>(const ModelConfig&, const BoundParams<Real>&,           \
                                          const Tensor<Real>&);                                   \
  template PredictionValues<Real> predict<Real>(const ModelParams<Real>&, const Tensor<Real>&);

OMAD_INSTANTIATE_MODEL(float)
OMAD_INSTANTIATE_MODEL(double)

#undef OMAD_INSTANTIATE_MODEL

}  // namespace omad
