#pragma once

#include <functional>
#include <string>
#include <utility>

#include "dadg/model.hpp"

namespace dadg {

// How the outer step combines the training and validation losses:
//  - combined:    descend grad of [G + H(inner-updated params)]
//  - literal:     descend grad of [H(inner-updated params)] only
//  - first_order: as combined, but H's gradient is taken at the inner point
//                 with no second-order term
enum class OuterMode { combined, literal, first_order };

OuterMode parse_outer_mode(const std::string& s);
std::string to_string(OuterMode m);

// Differentiable objective over a joint parameter list.
template <typename S>
struct ObjectiveT {
  std::function<S(const ParamList<S>&)> value;
  std::function<std::pair<S, ParamList<S>>(const ParamList<S>&)> value_grad;
  // Exact Hessian-vector product at the given point.
  std::function<ParamList<S>(const ParamList<S>&, const ParamList<S>&)> hessian_vec;
};
using Objective = ObjectiveT<double>;

// Classification objective over theta ++ phi (split after n_theta_tensors),
// averaging the per-batch losses with equal weight.
template <typename S>
ObjectiveT<S> classification_objective(int n_theta_tensors, std::vector<BatchT<S>> batches);

// One inner step followed by the outer gradient through it:
//   grad = [G term if mode demands] + (I - beta * hess(G)) * grad H(inner point)
template <typename S>
ParamList<S> meta_gradient(const ObjectiveT<S>& g, const ObjectiveT<S>& h,
                           const ParamList<S>& params, double beta, OuterMode mode,
                           S* loss_g = nullptr, S* loss_h = nullptr);

// --- Episode-level operations ------------------------------------------------

template <typename S>
struct EpisodeBatchesT {
  BatchT<S> train_a, train_b;  // one batch per DAL/train domain
  BatchT<S> val;               // batch from the held-out validation domain
  // Optional domain ids; when set, the validation domain must differ from both
  // training domains.
  std::string domain_a, domain_b, domain_val;
};
using EpisodeBatches = EpisodeBatchesT<double>;

template <typename S>
struct InnerResult {
  ParamList<S> theta;
  ParamList<S> phi;
  S loss_g;
};

// theta/phi after one gradient step of the classification loss on the two
// training batches. Inputs are untouched.
template <typename S>
InnerResult<S> inner_update(const ParamList<S>& theta_shared, const ParamList<S>& phi,
                            const BatchT<S>& train_a, const BatchT<S>& train_b, double beta);

// Validation cross entropy at the inner-updated parameters.
template <typename S>
S cdv_loss(const ParamList<S>& theta_inner, const ParamList<S>& phi_inner, const BatchT<S>& val);

struct MetaStepReport {
  double loss_g = 0;
  double loss_h = 0;
  double outer_grad_norm_theta = 0;
  double outer_grad_norm_phi = 0;
  OuterMode mode = OuterMode::combined;
};

template <typename S>
struct OuterGradients {
  ParamList<S> d_theta;
  ParamList<S> d_phi;
  MetaStepReport report;
};

template <typename S>
OuterGradients<S> outer_gradients(const ParamList<S>& theta_shared, const ParamList<S>& phi,
                                  const EpisodeBatchesT<S>& eb, double beta, OuterMode mode);

template <typename S>
struct OuterResult {
  ParamList<S> theta;
  ParamList<S> phi;
  MetaStepReport report;
};

// Raw SGD outer step with step size gamma from (theta_shared, phi).
template <typename S>
OuterResult<S> outer_update(const ParamList<S>& theta_shared, const ParamList<S>& phi,
                            const EpisodeBatchesT<S>& eb, double beta, double gamma,
                            OuterMode mode);

// Compares the analytic meta-gradient w.r.t. theta_shared against central
// finite differences of theta -> H(inner_update(theta, phi)). Model stays
// small so the check runs in well under a second.
struct MetaCheckReport {
  double beta = 0;
  double epsilon = 0;
  double max_rel_err = 0;
  int checked_parameters = 0;
};

MetaCheckReport meta_gradient_check(const ArchSpec& arch, uint64_t seed, double epsilon,
                                    double beta = 5e-4);

}  // namespace dadg
