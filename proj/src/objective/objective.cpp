#include "omad/objective.hpp"

#include "omad/ops.hpp"

namespace omad {

template <typename Real>
Var<Real> reg_term(Var<Real> z1, Var<Real> z2, bool normalized) {
  return square(normalized ? cosine(z1, z2) : inner_product(z1, z2));
}

template <typename Real>
Real reg_term(std::span<const Real> z1, std::span<const Real> z2, bool normalized) {
  Graph<Real> graph;
  Var<Real> a = graph.constant(Tensor<Real>(Shape{z1.size()}, std::vector<Real>(z1.begin(), z1.end())));
  Var<Real> b = graph.constant(Tensor<Real>(Shape{z2.size()}, std::vector<Real>(z2.begin(), z2.end())));
  return reg_term(a, b, normalized).value().item();
}

template <typename Real>
Var<Real> bce(Var<Real> probability, int label) {
  return binary_cross_entropy(probability, label);
}

template <typename Real>
LossGraph<Real> total_loss(std::span<const Prediction<Real>> predictions, std::span<const int> labels,
                           const ObjectiveConfig& config) {
  if (predictions.empty()) throw ContractError("total_loss: empty batch");
  if (predictions.size() != labels.size()) {
    throw ContractError("total_loss: " + std::to_string(predictions.size()) + " predictions but " +
                        std::to_string(labels.size()) + " labels");
  }
  if (!(config.alpha >= 0)) throw ContractError("total_loss: alpha must be >= 0");
  std::vector<Var<Real>> bces;
  std::vector<Var<Real>> regs;
  bces.reserve(predictions.size());
  regs.reserve(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    bces.push_back(bce(predictions[i].y, labels[i]));
    regs.push_back(reg_term(predictions[i].z1, predictions[i].z2, config.normalize_reg));
  }
  LossGraph<Real> out;
  out.bce = mean<Real>(bces);
  out.reg = mean<Real>(regs);
  out.total = add(out.bce, scale(out.reg, static_cast<Real>(config.alpha)));
  out.values.bce = out.bce.value().item();
  out.values.reg = out.reg.value().item();
  out.values.alpha = config.alpha;
  out.values.total = out.total.value().item();
  return out;
}

template <typename Real>
std::pair<LossBreakdown, GradMap<Real>> loss_and_gradients(const ModelParams<Real>& params,
                                                           std::span<const Tensor<Real>> images,
                                                           std::span<const int> labels,
                                                           const ObjectiveConfig& objective) {
  Graph<Real> graph;
  const BoundParams<Real> bound = bind_params(graph, params);
  std::vector<Prediction<Real>> preds;
  preds.reserve(images.size());
  for (const Tensor<Real>& image : images) preds.push_back(forward(params.config, bound, image));
  LossGraph<Real> loss = total_loss<Real>(preds, labels, objective);
  GradMap<Real> grads = graph.backward(loss.total);
  return {loss.values, std::move(grads)};
}

GradCheckReport check_loss_gradients(ModelParams<double>& params, std::span<const Tensor<double>> images,
                                     std::span<const int> labels, const ObjectiveConfig& objective,
                                     const GradCheckOptions& options) {
  auto [values, analytic] = loss_and_gradients<double>(params, images, labels, objective);
  (void)values;
  std::vector<ParamView> views;
  params.for_each([&](const std::string& name, Tensor<double>& t) { views.push_back({name, t.data()}); });
  auto loss = [&]() {
    Graph<double> graph;
    const BoundParams<double> bound = bind_params(graph, params);
    std::vector<Prediction<double>> preds;
    for (const Tensor<double>& image : images) preds.push_back(forward(params.config, bound, image));
    return total_loss<double>(preds, labels, objective).values.total;
  };
  return finite_diff_check(loss, views, analytic, options);
}

#define OMAD_INSTANTIATE_OBJECTIVE(Real)                                                         \
  template Var<Real> reg_term<Real>(Var<Real>, Var<Real>, bool);                                \
  template Real reg_term<Real>(std::span<const Real>, std::span<const Real>, bool);             \
  template Var<Real> bce<Real>(Var<Real>, int);                                                 \
  template LossGraph<Real> total_loss<Real>(std::span<const Prediction<Real>>,                  \
                                            std::span<const int>, const ObjectiveConfig&);      \
  template std::pair<LossBreakdown, GradMap<Real>> loss_and_gradients<Real>(                    \
      const ModelParams<Real>&, std::span<const Tensor<Real>>, std::span<const int>,            \
      const ObjectiveConfig&);

OMAD_INSTANTIATE_OBJECTIVE(float)
OMAD_INSTANTIATE_OBJECTIVE(double)

#undef OMAD_INSTANTIATE_OBJECTIVE

}  // namespace omad
