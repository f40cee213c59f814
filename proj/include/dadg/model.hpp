#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dadg/tensor.hpp"

namespace dadg {

// Shapes of the three networks. The extractor and classifier are configurable
// MLP stand-ins for a backbone; the discriminator defaults to two 1024-wide
// hidden layers with a single output logit.
struct ArchSpec {
  int input_dim = 0;
  int feature_dim = 0;
  std::vector<int> extractor_hidden;  // empty = single linear layer
  int num_classes = 0;
  std::vector<int> disc_hidden = {1024, 1024};
  static constexpr int disc_out = 1;

  void validate() const;  // throws std::invalid_argument
  std::vector<int> extractor_widths() const;
  std::vector<int> classifier_widths() const;
  std::vector<int> discriminator_widths() const;
};

// One minibatch. domain_labels hold the example's position (0 or 1) within the
// current episode's DAL pair; class_labels index into the dataset's classes.
template <typename S>
struct BatchT {
  Tensor<S> inputs;  // [n x input_dim]
  std::vector<int> class_labels;
  std::vector<int> domain_labels;

  int size() const { return inputs.rows; }
};
using Batch = BatchT<double>;

template <typename To, typename From>
BatchT<To> cast_batch(const BatchT<From>& b) {
  return {cast_tensor<To>(b.inputs), b.class_labels, b.domain_labels};
}

template <typename S>
struct ModelParamsT {
  ParamList<S> theta;  // feature extractor
  ParamList<S> phi;    // classifier
  ParamList<S> psi;    // domain discriminator
};
using ModelParams = ModelParamsT<double>;

template <typename To, typename From>
ModelParamsT<To> cast_model(const ModelParamsT<From>& m) {
  return {cast_params<To>(m.theta), cast_params<To>(m.phi), cast_params<To>(m.psi)};
}

// Deterministic init: weights ~ N(0, 1/fan_in), biases exactly zero.
ModelParams init_model(const ArchSpec& arch, uint64_t seed);
ParamList<double> init_mlp(const std::vector<int>& widths, uint64_t seed);

// --- MLP kernels -----------------------------------------------------------
// A parameter list is the sequence w0,b0,w1,b1,... with wk [in x out] and
// bk [1 x out]. ReLU between layers, linear output.

template <typename S>
struct MlpCache {
  std::vector<Tensor<S>> pre;   // pre-activation per layer
  std::vector<Tensor<S>> post;  // post-activation per layer; post.back() is the output
  Tensor<S> input;
};

template <typename S>
Tensor<S> mlp_forward(const ParamList<S>& params, const Tensor<S>& x, MlpCache<S>* cache = nullptr);

// Backward from d(loss)/d(output). Returns parameter gradients; optionally the
// gradient with respect to the input.
template <typename S>
ParamList<S> mlp_backward(const ParamList<S>& params, const MlpCache<S>& cache,
                          const Tensor<S>& d_out, Tensor<S>* d_input = nullptr);

// --- Forward passes ---------------------------------------------------------

template <typename S>
Tensor<S> forward_features(const ParamList<S>& theta, const Tensor<S>& inputs) {
  return mlp_forward(theta, inputs);
}

template <typename S>
Tensor<S> classify(const ParamList<S>& phi, const Tensor<S>& features) {
  return mlp_forward(phi, features);
}

template <typename S>
Tensor<S> discriminate(const ParamList<S>& psi, const Tensor<S>& features) {
  return mlp_forward(psi, features);
}

// --- Losses -----------------------------------------------------------------

// Mean softmax cross entropy. Throws std::out_of_range on a bad label.
template <typename S>
S cross_entropy(const Tensor<S>& logits, const std::vector<int>& class_labels,
                Tensor<S>* d_logits = nullptr);

// Mean binary cross entropy with logits over an [n x 1] logit column.
// Labels must be 0 or 1.
template <typename S>
S binary_domain_loss(const Tensor<S>& domain_logits, const std::vector<int>& domain_labels,
                     Tensor<S>* d_logits = nullptr);

// --- Whole-pipeline gradients ------------------------------------------------

template <typename S>
struct ClassGrads {
  S loss;
  ParamList<S> d_theta;
  ParamList<S> d_phi;
};

// Classification loss and gradients, averaged with equal weight over the given
// batches (one per training domain).
template <typename S>
ClassGrads<S> class_loss_grads(const ParamList<S>& theta, const ParamList<S>& phi,
                               std::span<const BatchT<S>> batches);

template <typename S>
struct DiscGrads {
  S loss;
  double accuracy;  // sign-rule accuracy of the discriminator on this batch
  ParamList<S> d_theta;
  ParamList<S> d_psi;
};

// Smallest |pre-activation| over the network's hidden layers for the given
// inputs. Finite-difference checks reject batches where this is tiny: a value
// on a ReLU kink makes the numeric and (sub)analytic gradients disagree.
double min_abs_preactivation(const ParamList<double>& params, const Tensor<double>& x);

template <typename S>
DiscGrads<S> disc_loss_grads(const ParamList<S>& theta, const ParamList<S>& psi,
                             const Tensor<S>& inputs, const std::vector<int>& domain_labels);

}  // namespace dadg
