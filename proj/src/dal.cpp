#include "dadg/dal.hpp"

#include <stdexcept>

namespace dadg {

std::vector<double> grl_backward(std::span<const double> upstream_grad, double lambda) {
  std::vector<double> out(upstream_grad.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = -lambda * upstream_grad[i];
  return out;
}

namespace {

template <typename S>
void append_rows(Tensor<S>& dst, const Tensor<S>& src) {
  dst.data.insert(dst.data.end(), src.data.begin(), src.data.end());
  dst.rows += src.rows;
}

}  // namespace

template <typename S>
DalResult<S> dal_step(const ModelParamsT<S>& model, const BatchT<S>& batch_a,
                      const BatchT<S>& batch_b, const DalOptions& opt, SgdState<S>* psi_state) {
  if (opt.alpha < 0) throw std::invalid_argument("dal_step: alpha must be >= 0");
  if (batch_a.inputs.cols != batch_b.inputs.cols)
    throw std::invalid_argument("dal_step: batches disagree on feature width");
  for (int y : batch_a.domain_labels)
    if (y != 0) throw std::invalid_argument("dal_step: batch_a must carry domain label 0");
  for (int y : batch_b.domain_labels)
    if (y != 1) throw std::invalid_argument("dal_step: batch_b must carry domain label 1");

  Tensor<S> inputs = batch_a.inputs;
  append_rows(inputs, batch_b.inputs);
  std::vector<int> labels = batch_a.domain_labels;
  labels.insert(labels.end(), batch_b.domain_labels.begin(), batch_b.domain_labels.end());

  MlpCache<S> tc, dc;
  Tensor<S> feats = mlp_forward(model.theta, inputs, &tc);
  Tensor<S> logits = mlp_forward(model.psi, feats, &dc);
  Tensor<S> d_logits;
  S loss = binary_domain_loss(logits, labels, &d_logits);

  int correct = 0;
  for (int i = 0; i < logits.rows; ++i)
    if ((primal(logits.data[i]) > 0 ? 1 : 0) == labels[i]) ++correct;

  Tensor<S> d_feats;
  ParamList<S> g_psi = mlp_backward(model.psi, dc, d_logits, &d_feats);
  // The reversal layer sits between extractor and discriminator: the gradient
  // reaching the extractor is -lambda times the downstream one.
  Tensor<S> d_feats_rev = grl_backward(d_feats, opt.lambda);
  ParamList<S> g_theta_rev = mlp_backward(model.theta, tc, d_feats_rev);

  DalResult<S> out;
  out.theta = model.theta;
  out.psi = model.psi;
  out.report.loss_f = static_cast<double>(primal(loss));
  out.report.disc_accuracy = double(correct) / double(logits.rows);
  out.report.grad_norm_psi = l2_norm(g_psi);
  // Report the norm of the true dF/dtheta, independent of lambda.
  out.report.grad_norm_theta = opt.lambda != 0.0
                                   ? l2_norm(g_theta_rev) / opt.lambda
                                   : l2_norm(mlp_backward(model.theta, tc, d_feats));

  sgd_step(out.psi, g_psi, {opt.alpha, opt.psi_momentum, opt.psi_weight_decay}, psi_state);
  if (opt.alpha != 0.0 && opt.lambda != 0.0)
    axpy(out.theta, -opt.alpha, g_theta_rev);  // theta descends the reversed gradient
  return out;
}

template DalResult<double> dal_step<double>(const ModelParamsT<double>&, const BatchT<double>&,
                                            const BatchT<double>&, const DalOptions&,
                                            SgdState<double>*);
template DalResult<float> dal_step<float>(const ModelParamsT<float>&, const BatchT<float>&,
                                          const BatchT<float>&, const DalOptions&,
                                          SgdState<float>*);

}  // namespace dadg
