#pragma once

// Two-headed detector: a small residual convolutional backbone, two linear
// identity heads producing z1 and z2, their concatenation z, and a linear
// classifier whose sigmoid is the bona fide score.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "omad/autodiff.hpp"
#include "omad/serialize.hpp"

namespace omad {

struct ModelConfig {
  int input_channels = 1;
  int input_size = 64;
  std::vector<int> conv_channels{8, 16, 32};
  bool use_residual = true;
  // Length of each identity vector.
  int embed_dim = 32;
  bool classifier_bias = false;

  // Throws ConfigError.
  void validate() const;

  // Backbone output feature count (F).
  std::size_t feature_dim() const { return static_cast<std::size_t>(conv_channels.back()); }

  // "key=value" lines, each terminated by '\n'.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);

  bool operator==(const ModelConfig&) const = default;
};

template <typename Real>
struct ModelParams {
  ModelConfig config;
  // Per stage: stride-1 conv [C_out,C_in,3,3] and stride-2 conv [C_out,C_out,3,3].
  std::vector<Tensor<Real>> conv_a;
  std::vector<Tensor<Real>> conv_b;
  Tensor<Real> head1;       // [d, F]
  Tensor<Real> head2;       // [d, F]
  Tensor<Real> classifier;  // [1, 2d]
  std::optional<Tensor<Real>> classifier_bias;  // [1]

  // Visits (name, tensor) in a fixed order.
  template <typename Fn>
  void for_each(Fn&& fn) {
    for_each_impl(*this, fn);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for_each_impl(*this, fn);
  }

  std::size_t element_count() const;

  template <typename To>
  ModelParams<To> cast() const {
    ModelParams<To> out;
    out.config = config;
    for (const auto& t : conv_a) out.conv_a.push_back(t.template cast<To>());
    for (const auto& t : conv_b) out.conv_b.push_back(t.template cast<To>());
    out.head1 = head1.template cast<To>();
    out.head2 = head2.template cast<To>();
    out.classifier = classifier.template cast<To>();
    if (classifier_bias) out.classifier_bias = classifier_bias->template cast<To>();
    return out;
  }

  bool operator==(const ModelParams&) const = default;

 private:
  template <typename Self, typename Fn>
  static void for_each_impl(Self& self, Fn& fn) {
    for (std::size_t i = 0; i < self.conv_a.size(); ++i) {
      fn("stage" + std::to_string(i) + ".conv_a", self.conv_a[i]);
      fn("stage" + std::to_string(i) + ".conv_b", self.conv_b[i]);
    }
    fn(std::string("head1.weight"), self.head1);
    fn(std::string("head2.weight"), self.head2);
    fn(std::string("classifier.weight"), self.classifier);
    if (self.classifier_bias) fn(std::string("classifier.bias"), *self.classifier_bias);
  }
};

// Deterministic fan-in uniform initialisation, U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
template <typename Real>
ModelParams<Real> init_model(const ModelConfig& config, std::uint64_t seed);

// Parameters registered as leaves of one graph.
template <typename Real>
struct BoundParams {
  std::vector<Var<Real>> conv_a;
  std::vector<Var<Real>> conv_b;
  Var<Real> head1;
  Var<Real> head2;
  Var<Real> classifier;
  std::optional<Var<Real>> classifier_bias;
};

template <typename Real>
BoundParams<Real> bind_params(Graph<Real>& graph, const ModelParams<Real>& params);

// Graph-attached outputs of one forward pass.
template <typename Real>
struct Prediction {
  Var<Real> y;      // sigmoid(logit), shape [1]
  Var<Real> logit;  // W.z (+ bias), shape [1]
  Var<Real> z1;     // [d]
  Var<Real> z2;     // [d]
  Var<Real> z;      // concat(z1, z2), [2d]

  Real score() const { return y.value()[0]; }
};

// image is [C,H,W] matching config.input_channels and config.input_size.
template <typename Real>
Prediction<Real> forward(const ModelConfig& config, const BoundParams<Real>& params,
                         const Tensor<Real>& image);

// Detached values of one forward pass.
template <typename Real>
struct IdentityEmbeddings {
  std::vector<Real> z1;
  std::vector<Real> z2;
  std::vector<Real> z;
};

template <typename Real>
struct PredictionValues {
  Real y = 0;
  Real logit = 0;
  IdentityEmbeddings<Real> embeddings;
};

// Forward pass on a private graph; safe to call concurrently on shared params.
template <typename Real>
PredictionValues<Real> predict(const ModelParams<Real>& params, const Tensor<Real>& image);

// Model file: config "key=value" lines, a blank line, then the weight section.
void save_model(const ModelParams<float>& params, const std::filesystem::path& path);

struct LoadedModel {
  ModelConfig config;
  ModelParams<float> params;
};

// Throws FormatError (bad magic, version, truncation, header or shape
// mismatch) or IoError.
LoadedModel load_model(const std::filesystem::path& path);

extern template struct ModelParams<float>;
extern template struct ModelParams<double>;

}  // namespace omad
