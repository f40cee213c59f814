#pragma once

#include <span>
#include <vector>

#include "dadg/model.hpp"
#include "dadg/optim.hpp"

namespace dadg {

// Gradient reversal: forward is the identity; backward multiplies the upstream
// gradient by -lambda.
std::vector<double> grl_backward(std::span<const double> upstream_grad, double lambda);

template <typename S>
Tensor<S> grl_backward(const Tensor<S>& upstream_grad, double lambda) {
  Tensor<S> out(upstream_grad.name, upstream_grad.rows, upstream_grad.cols);
  S neg = from_double<S>(-lambda);
  for (size_t i = 0; i < upstream_grad.data.size(); ++i) out.data[i] = neg * upstream_grad.data[i];
  return out;
}

struct DalStepReport {
  double loss_f = 0;          // discriminative loss before the step
  double disc_accuracy = 0;   // discriminator accuracy on the step's batches
  double grad_norm_theta = 0;
  double grad_norm_psi = 0;
};

struct DalOptions {
  double alpha = 0.0;
  double lambda = 1.0;
  // Optimizer settings for the discriminator update; the reversed extractor
  // update is always a raw SGD step.
  double psi_momentum = 0.0;
  double psi_weight_decay = 0.0;
};

template <typename S>
struct DalResult {
  ParamList<S> theta;  // shared with the rest of this iteration
  ParamList<S> psi;
  DalStepReport report;
};

// One adversarial step. batch_a must carry domain label 0 and batch_b label 1;
// the discriminator descends the loss while the extractor follows the reversed
// gradient. phi is never touched.
template <typename S>
DalResult<S> dal_step(const ModelParamsT<S>& model, const BatchT<S>& batch_a,
                      const BatchT<S>& batch_b, const DalOptions& opt,
                      SgdState<S>* psi_state = nullptr);

template <typename S>
DalResult<S> dal_step(const ModelParamsT<S>& model, const BatchT<S>& batch_a,
                      const BatchT<S>& batch_b, double alpha, double lambda) {
  return dal_step(model, batch_a, batch_b, DalOptions{alpha, lambda, 0.0, 0.0}, nullptr);
}

}  // namespace dadg
