#include "dadg/meta.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dadg/rng.hpp"

namespace dadg {

OuterMode parse_outer_mode(const std::string& s) {
  if (s == "combined") return OuterMode::combined;
  if (s == "literal") return OuterMode::literal;
  if (s == "first_order") return OuterMode::first_order;
  throw std::invalid_argument("unknown outer mode: " + s);
}

std::string to_string(OuterMode m) {
  switch (m) {
    case OuterMode::combined: return "combined";
    case OuterMode::literal: return "literal";
    case OuterMode::first_order: return "first_order";
  }
  return "?";
}

namespace {

template <typename S>
std::pair<ParamList<S>, ParamList<S>> split_joint(const ParamList<S>& joint, int n_theta) {
  ParamList<S> theta(joint.begin(), joint.begin() + n_theta);
  ParamList<S> phi(joint.begin() + n_theta, joint.end());
  return {std::move(theta), std::move(phi)};
}

template <typename S>
ParamList<S> join(const ParamList<S>& theta, const ParamList<S>& phi) {
  ParamList<S> joint = theta;
  joint.insert(joint.end(), phi.begin(), phi.end());
  return joint;
}

template <typename S>
using DualOf = Dual<typename scalar_traits<S>::base>;

}  // namespace

template <typename S>
ObjectiveT<S> classification_objective(int n_theta_tensors, std::vector<BatchT<S>> batches) {
  if (batches.empty()) throw std::invalid_argument("classification_objective: no batches");
  ObjectiveT<S> obj;
  obj.value = [n_theta_tensors, batches](const ParamList<S>& joint) -> S {
    auto [theta, phi] = split_joint(joint, n_theta_tensors);
    S total{};
    for (const auto& b : batches) {
      Tensor<S> logits = classify(phi, forward_features(theta, b.inputs));
      total += cross_entropy(logits, b.class_labels) * from_double<S>(1.0 / double(batches.size()));
    }
    return total;
  };
  obj.value_grad = [n_theta_tensors, batches](const ParamList<S>& joint) {
    auto [theta, phi] = split_joint(joint, n_theta_tensors);
    ClassGrads<S> g = class_loss_grads<S>(theta, phi, batches);
    return std::make_pair(g.loss, join(g.d_theta, g.d_phi));
  };
  obj.hessian_vec = [n_theta_tensors, batches](const ParamList<S>& joint,
                                               const ParamList<S>& vec) -> ParamList<S> {
    using D = DualOf<S>;
    ParamList<D> seeded = seed_direction(joint, vec);
    auto [theta, phi] = split_joint(seeded, n_theta_tensors);
    std::vector<BatchT<D>> dual_batches;
    dual_batches.reserve(batches.size());
    for (const auto& b : batches) dual_batches.push_back(cast_batch<D>(b));
    ClassGrads<D> g = class_loss_grads<D>(theta, phi, dual_batches);
    return derivative_part(join(g.d_theta, g.d_phi));
  };
  return obj;
}

template <typename S>
ParamList<S> meta_gradient(const ObjectiveT<S>& g, const ObjectiveT<S>& h,
                           const ParamList<S>& params, double beta, OuterMode mode,
                           S* loss_g, S* loss_h) {
  if (beta < 0) throw std::invalid_argument("meta_gradient: beta must be >= 0");
  auto [gval, ggrad] = g.value_grad(params);
  if (loss_g) *loss_g = gval;
  ParamList<S> inner = params;
  if (beta != 0.0) axpy(inner, -beta, ggrad);
  auto [hval, hgrad] = h.value_grad(inner);
  if (loss_h) *loss_h = hval;

  ParamList<S> grad;
  switch (mode) {
    case OuterMode::combined:
    case OuterMode::literal: {
      grad = hgrad;
      if (beta != 0.0) {
        ParamList<S> hvp = g.hessian_vec(params, hgrad);
        axpy(grad, -beta, hvp);
      }
      if (mode == OuterMode::combined) axpy(grad, 1.0, ggrad);
      break;
    }
    case OuterMode::first_order: {
      grad = ggrad;
      axpy(grad, 1.0, hgrad);
      break;
    }
  }
  if (!all_finite(grad)) throw std::runtime_error("meta_gradient: non-finite gradient");
  return grad;
}

template <typename S>
InnerResult<S> inner_update(const ParamList<S>& theta_shared, const ParamList<S>& phi,
                            const BatchT<S>& train_a, const BatchT<S>& train_b, double beta) {
  if (beta < 0) throw std::invalid_argument("inner_update: beta must be >= 0");
  std::vector<BatchT<S>> batches{train_a, train_b};
  ClassGrads<S> g = class_loss_grads<S>(theta_shared, phi, batches);
  if (!is_finite_value(g.loss)) throw std::runtime_error("inner_update: non-finite loss");
  InnerResult<S> out{theta_shared, phi, g.loss};
  if (beta != 0.0) {
    axpy(out.theta, -beta, g.d_theta);
    axpy(out.phi, -beta, g.d_phi);
  }
  return out;
}

template <typename S>
S cdv_loss(const ParamList<S>& theta_inner, const ParamList<S>& phi_inner, const BatchT<S>& val) {
  Tensor<S> logits = classify(phi_inner, forward_features(theta_inner, val.inputs));
  return cross_entropy(logits, val.class_labels);
}

template <typename S>
OuterGradients<S> outer_gradients(const ParamList<S>& theta_shared, const ParamList<S>& phi,
                                  const EpisodeBatchesT<S>& eb, double beta, OuterMode mode) {
  if (!eb.domain_val.empty() && (eb.domain_val == eb.domain_a || eb.domain_val == eb.domain_b))
    throw std::invalid_argument("outer_gradients: validation domain '" + eb.domain_val +
                                "' overlaps the training pair");
  const int n_theta = int(theta_shared.size());
  ObjectiveT<S> g = classification_objective<S>(n_theta, {eb.train_a, eb.train_b});
  ObjectiveT<S> h = classification_objective<S>(n_theta, {eb.val});
  S lg{}, lh{};
  ParamList<S> grad = meta_gradient(g, h, join(theta_shared, phi), beta, mode, &lg, &lh);
  auto [d_theta, d_phi] = split_joint(grad, n_theta);
  OuterGradients<S> out;
  out.d_theta = std::move(d_theta);
  out.d_phi = std::move(d_phi);
  out.report.loss_g = static_cast<double>(primal(lg));
  out.report.loss_h = static_cast<double>(primal(lh));
  out.report.outer_grad_norm_theta = l2_norm(out.d_theta);
  out.report.outer_grad_norm_phi = l2_norm(out.d_phi);
  out.report.mode = mode;
  return out;
}

template <typename S>
OuterResult<S> outer_update(const ParamList<S>& theta_shared, const ParamList<S>& phi,
                            const EpisodeBatchesT<S>& eb, double beta, double gamma,
                            OuterMode mode) {
  if (gamma < 0) throw std::invalid_argument("outer_update: gamma must be >= 0");
  OuterGradients<S> og = outer_gradients(theta_shared, phi, eb, beta, mode);
  OuterResult<S> out{theta_shared, phi, og.report};
  if (gamma != 0.0) {
    axpy(out.theta, -gamma, og.d_theta);
    axpy(out.phi, -gamma, og.d_phi);
  }
  return out;
}

MetaCheckReport meta_gradient_check(const ArchSpec& arch, uint64_t seed, double epsilon,
                                    double beta) {
  arch.validate();
  ModelParams model = init_model(arch, seed);
  Rng rng = Rng::stream(seed, "meta-check");
  auto make_batch = [&](int n) {
    Batch b;
    b.inputs = Tensor<double>(n, arch.input_dim);
    for (auto& x : b.inputs.data) x = rng.normal();
    b.class_labels.resize(n);
    for (auto& y : b.class_labels) y = int(rng.uniform_int(arch.num_classes));
    return b;
  };
  // reject batch draws whose pre-activations sit near a ReLU kink, where
  // finite differences and the subgradient legitimately disagree
  EpisodeBatches eb;
  for (int attempt = 0; attempt < 100; ++attempt) {
    eb.train_a = make_batch(8);
    eb.train_b = make_batch(8);
    eb.val = make_batch(8);
    InnerResult<double> inner = inner_update(model.theta, model.phi, eb.train_a, eb.train_b, beta);
    double margin = std::numeric_limits<double>::infinity();
    for (const Batch* b : {&eb.train_a, &eb.train_b, &eb.val}) {
      margin = std::min(margin, min_abs_preactivation(model.theta, b->inputs));
      margin = std::min(margin, min_abs_preactivation(inner.theta, b->inputs));
    }
    if (margin > 1e-3) break;
  }

  // Analytic gradient through the inner step, H term only.
  OuterGradients<double> og =
      outer_gradients<double>(model.theta, model.phi, eb, beta, OuterMode::literal);

  auto h_of_theta = [&](const ParamList<double>& theta) {
    InnerResult<double> inner = inner_update(theta, model.phi, eb.train_a, eb.train_b, beta);
    return cdv_loss(inner.theta, inner.phi, eb.val);
  };

  MetaCheckReport rep;
  rep.beta = beta;
  rep.epsilon = epsilon;
  ParamList<double> theta = model.theta;
  for (size_t t = 0; t < theta.size(); ++t) {
    for (size_t j = 0; j < theta[t].data.size(); ++j) {
      double save = theta[t].data[j];
      theta[t].data[j] = save + epsilon;
      double up = h_of_theta(theta);
      theta[t].data[j] = save - epsilon;
      double down = h_of_theta(theta);
      theta[t].data[j] = save;
      double fd = (up - down) / (2 * epsilon);
      double an = og.d_theta[t].data[j];
      double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
      rep.max_rel_err = std::max(rep.max_rel_err, rel);
      ++rep.checked_parameters;
    }
  }
  return rep;
}

#define DADG_INSTANTIATE_META(S)                                                              \
  template ObjectiveT<S> classification_objective<S>(int, std::vector<BatchT<S>>);            \
  template ParamList<S> meta_gradient<S>(const ObjectiveT<S>&, const ObjectiveT<S>&,          \
                                         const ParamList<S>&, double, OuterMode, S*, S*);     \
  template InnerResult<S> inner_update<S>(const ParamList<S>&, const ParamList<S>&,           \
                                          const BatchT<S>&, const BatchT<S>&, double);        \
  template S cdv_loss<S>(const ParamList<S>&, const ParamList<S>&, const BatchT<S>&);         \
  template OuterGradients<S> outer_gradients<S>(const ParamList<S>&, const ParamList<S>&,     \
                                                const EpisodeBatchesT<S>&, double, OuterMode); \
  template OuterResult<S> outer_update<S>(const ParamList<S>&, const ParamList<S>&,           \
                                          const EpisodeBatchesT<S>&, double, double, OuterMode);

DADG_INSTANTIATE_META(double)
DADG_INSTANTIATE_META(float)

#undef DADG_INSTANTIATE_META

}  // namespace dadg
