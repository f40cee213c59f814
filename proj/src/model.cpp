#include "dadg/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dadg/rng.hpp"

namespace dadg {

void ArchSpec::validate() const {
  if (input_dim < 1) throw std::invalid_argument("ArchSpec: input_dim must be >= 1");
  if (feature_dim < 1) throw std::invalid_argument("ArchSpec: feature_dim must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("ArchSpec: num_classes must be >= 2");
  for (int w : extractor_hidden)
    if (w < 1) throw std::invalid_argument("ArchSpec: zero-width extractor layer");
  for (int w : disc_hidden)
    if (w < 1) throw std::invalid_argument("ArchSpec: zero-width discriminator layer");
}

std::vector<int> ArchSpec::extractor_widths() const {
  std::vector<int> w{input_dim};
  w.insert(w.end(), extractor_hidden.begin(), extractor_hidden.end());
  w.push_back(feature_dim);
  return w;
}

std::vector<int> ArchSpec::classifier_widths() const { return {feature_dim, num_classes}; }

std::vector<int> ArchSpec::discriminator_widths() const {
  std::vector<int> w{feature_dim};
  w.insert(w.end(), disc_hidden.begin(), disc_hidden.end());
  w.push_back(disc_out);
  return w;
}

ParamList<double> init_mlp(const std::vector<int>& widths, uint64_t seed) {
  Rng rng(seed);
  ParamList<double> params;
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    int in = widths[l], out = widths[l + 1];
    if (in < 1 || out < 1) throw std::invalid_argument("init_mlp: zero-width layer");
    Tensor<double> w("w" + std::to_string(l), in, out);
    double scale = 1.0 / std::sqrt(double(in));
    for (auto& x : w.data) x = scale * rng.normal();
    Tensor<double> b("b" + std::to_string(l), 1, out);  // zeros
    params.push_back(std::move(w));
    params.push_back(std::move(b));
  }
  return params;
}

ModelParams init_model(const ArchSpec& arch, uint64_t seed) {
  arch.validate();
  ModelParams m;
  m.theta = init_mlp(arch.extractor_widths(), Rng::derive_seed(seed, "init/theta"));
  m.phi = init_mlp(arch.classifier_widths(), Rng::derive_seed(seed, "init/phi"));
  m.psi = init_mlp(arch.discriminator_widths(), Rng::derive_seed(seed, "init/psi"));
  return m;
}

namespace {

template <typename S>
void check_mlp_params(const ParamList<S>& p) {
  if (p.empty() || p.size() % 2 != 0)
    throw std::invalid_argument("mlp: parameter list must hold (weight, bias) pairs");
  for (size_t l = 0; l * 2 < p.size(); ++l) {
    const auto& w = p[2 * l];
    const auto& b = p[2 * l + 1];
    if (b.rows != 1 || b.cols != w.cols)
      throw std::invalid_argument("mlp: bias shape mismatch at layer " + std::to_string(l));
    if (l > 0 && p[2 * l - 2].cols != w.rows)
      throw std::invalid_argument("mlp: layer width mismatch at layer " + std::to_string(l));
  }
}

template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  if (x.cols != w.rows)
    throw std::invalid_argument("mlp: input width " + std::to_string(x.cols) +
                                " does not match layer input " + std::to_string(w.rows));
  Tensor<S> out(x.rows, w.cols);
  for (int i = 0; i < x.rows; ++i) {
    S* orow = &out.data[size_t(i) * out.cols];
    for (int c = 0; c < w.cols; ++c) orow[c] = b.data[c];
    const S* xrow = &x.data[size_t(i) * x.cols];
    for (int k = 0; k < x.cols; ++k) {
      const S xv = xrow[k];
      const S* wrow = &w.data[size_t(k) * w.cols];
      for (int c = 0; c < w.cols; ++c) orow[c] += xv * wrow[c];
    }
  }
  return out;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> out(x.rows, x.cols);
  for (size_t i = 0; i < x.data.size(); ++i)
    out.data[i] = primal(x.data[i]) > 0 ? x.data[i] : S{};
  return out;
}

}  // namespace

template <typename S>
Tensor<S> mlp_forward(const ParamList<S>& params, const Tensor<S>& x, MlpCache<S>* cache) {
  check_mlp_params(params);
  size_t layers = params.size() / 2;
  if (cache) {
    cache->pre.clear();
    cache->post.clear();
    cache->input = x;
  }
  Tensor<S> cur = x;
  for (size_t l = 0; l < layers; ++l) {
    Tensor<S> z = linear(cur, params[2 * l], params[2 * l + 1]);
    Tensor<S> a = (l + 1 < layers) ? relu(z) : z;
    if (cache) {
      cache->pre.push_back(z);
      cache->post.push_back(a);
    }
    cur = std::move(a);
  }
  return cur;
}

template <typename S>
ParamList<S> mlp_backward(const ParamList<S>& params, const MlpCache<S>& cache,
                          const Tensor<S>& d_out, Tensor<S>* d_input) {
  size_t layers = params.size() / 2;
  if (cache.pre.size() != layers)
    throw std::invalid_argument("mlp_backward: cache does not match parameter list");
  ParamList<S> grads = zeros_like(params);
  Tensor<S> d = d_out;
  for (size_t l = layers; l-- > 0;) {
    const Tensor<S>& a_in = (l == 0) ? cache.input : cache.post[l - 1];
    const Tensor<S>& w = params[2 * l];
    Tensor<S>& dw = grads[2 * l];
    Tensor<S>& db = grads[2 * l + 1];
    // dw = a_in^T * d ; db = column sums of d
    for (int i = 0; i < a_in.rows; ++i) {
      const S* arow = &a_in.data[size_t(i) * a_in.cols];
      const S* drow = &d.data[size_t(i) * d.cols];
      for (int c = 0; c < d.cols; ++c) db.data[c] += drow[c];
      for (int k = 0; k < a_in.cols; ++k) {
        const S av = arow[k];
        S* dwrow = &dw.data[size_t(k) * dw.cols];
        for (int c = 0; c < d.cols; ++c) dwrow[c] += av * drow[c];
      }
    }
    if (l == 0 && !d_input) break;
    // d_prev = d * w^T, gated by the previous layer's ReLU mask
    Tensor<S> d_prev(d.rows, w.rows);
    for (int i = 0; i < d.rows; ++i) {
      const S* drow = &d.data[size_t(i) * d.cols];
      S* prow = &d_prev.data[size_t(i) * d_prev.cols];
      for (int k = 0; k < w.rows; ++k) {
        S acc{};
        const S* wrow = &w.data[size_t(k) * w.cols];
        for (int c = 0; c < d.cols; ++c) acc += drow[c] * wrow[c];
        prow[k] = acc;
      }
    }
    if (l > 0) {
      const Tensor<S>& z = cache.pre[l - 1];
      for (size_t i = 0; i < d_prev.data.size(); ++i)
        if (!(primal(z.data[i]) > 0)) d_prev.data[i] = S{};
    }
    if (l == 0) {
      if (d_input) *d_input = std::move(d_prev);
      break;
    }
    d = std::move(d_prev);
  }
  return grads;
}

template <typename S>
S cross_entropy(const Tensor<S>& logits, const std::vector<int>& class_labels,
                Tensor<S>* d_logits) {
  if (logits.rows != int(class_labels.size()))
    throw std::invalid_argument("cross_entropy: label count does not match logits");
  if (logits.rows < 1) throw std::invalid_argument("cross_entropy: empty batch");
  for (int y : class_labels)
    if (y < 0 || y >= logits.cols)
      throw std::out_of_range("cross_entropy: class label " + std::to_string(y) +
                              " outside [0, " + std::to_string(logits.cols) + ")");
  const int n = logits.rows, c = logits.cols;
  if (d_logits) *d_logits = Tensor<S>(n, c);
  S total{};
  for (int i = 0; i < n; ++i) {
    const S* row = &logits.data[size_t(i) * c];
    S mx = row[0];
    for (int j = 1; j < c; ++j)
      if (primal(row[j]) > primal(mx)) mx = row[j];
    S sum{};
    for (int j = 0; j < c; ++j) sum += exp(row[j] - mx);
    S lse = mx + log(sum);
    total += lse - row[class_labels[i]];
    if (d_logits) {
      S* drow = &d_logits->data[size_t(i) * c];
      S inv_n = from_double<S>(1.0 / n);
      for (int j = 0; j < c; ++j) drow[j] = exp(row[j] - lse) * inv_n;
      drow[class_labels[i]] -= inv_n;
    }
  }
  return total * from_double<S>(1.0 / n);
}

template <typename S>
S binary_domain_loss(const Tensor<S>& domain_logits, const std::vector<int>& domain_labels,
                     Tensor<S>* d_logits) {
  if (domain_logits.cols != 1)
    throw std::invalid_argument("binary_domain_loss: logits must be a single column");
  if (domain_logits.rows != int(domain_labels.size()))
    throw std::invalid_argument("binary_domain_loss: label count does not match logits");
  if (domain_logits.rows < 1) throw std::invalid_argument("binary_domain_loss: empty batch");
  for (int y : domain_labels)
    if (y != 0 && y != 1)
      throw std::out_of_range("binary_domain_loss: domain label must be 0 or 1, got " +
                              std::to_string(y));
  const int n = domain_logits.rows;
  if (d_logits) *d_logits = Tensor<S>(n, 1);
  S total{};
  for (int i = 0; i < n; ++i) {
    S z = domain_logits.data[i];
    // softplus(-z) for label 1, softplus(z) for label 0, computed stably
    S zs = domain_labels[i] == 1 ? -z : z;
    S loss = primal(zs) > 0 ? zs + log1p(exp(-zs)) : log1p(exp(zs));
    total += loss;
    if (d_logits) {
      // sigmoid(z) - y, stable in both tails
      S one = from_double<S>(1.0);
      S sig = primal(z) >= 0 ? one / (exp(-z) + one) : exp(z) / (exp(z) + one);
      d_logits->data[i] = (sig - from_double<S>(double(domain_labels[i]))) * from_double<S>(1.0 / n);
    }
  }
  return total * from_double<S>(1.0 / n);
}

template <typename S>
ClassGrads<S> class_loss_grads(const ParamList<S>& theta, const ParamList<S>& phi,
                               std::span<const BatchT<S>> batches) {
  if (batches.empty()) throw std::invalid_argument("class_loss_grads: no batches");
  ClassGrads<S> out;
  out.loss = S{};
  out.d_theta = zeros_like(theta);
  out.d_phi = zeros_like(phi);
  const double w = 1.0 / double(batches.size());
  for (const auto& b : batches) {
    MlpCache<S> tc, pc;
    Tensor<S> feats = mlp_forward(theta, b.inputs, &tc);
    Tensor<S> logits = mlp_forward(phi, feats, &pc);
    Tensor<S> d_logits;
    S loss = cross_entropy(logits, b.class_labels, &d_logits);
    Tensor<S> d_feats;
    ParamList<S> g_phi = mlp_backward(phi, pc, d_logits, &d_feats);
    ParamList<S> g_theta = mlp_backward(theta, tc, d_feats);
    out.loss += loss * from_double<S>(w);
    axpy(out.d_theta, w, g_theta);
    axpy(out.d_phi, w, g_phi);
  }
  return out;
}

template <typename S>
DiscGrads<S> disc_loss_grads(const ParamList<S>& theta, const ParamList<S>& psi,
                             const Tensor<S>& inputs, const std::vector<int>& domain_labels) {
  MlpCache<S> tc, dc;
  Tensor<S> feats = mlp_forward(theta, inputs, &tc);
  Tensor<S> logits = mlp_forward(psi, feats, &dc);
  Tensor<S> d_logits;
  DiscGrads<S> out;
  out.loss = binary_domain_loss(logits, domain_labels, &d_logits);
  int correct = 0;
  for (int i = 0; i < logits.rows; ++i) {
    int pred = primal(logits.data[i]) > 0 ? 1 : 0;
    if (pred == domain_labels[i]) ++correct;
  }
  out.accuracy = double(correct) / double(logits.rows);
  Tensor<S> d_feats;
  out.d_psi = mlp_backward(psi, dc, d_logits, &d_feats);
  out.d_theta = mlp_backward(theta, tc, d_feats);
  return out;
}

double min_abs_preactivation(const ParamList<double>& params, const Tensor<double>& x) {
  MlpCache<double> cache;
  mlp_forward(params, x, &cache);
  double best = std::numeric_limits<double>::infinity();
  for (size_t l = 0; l + 1 < cache.pre.size(); ++l)  // hidden layers only
    for (double v : cache.pre[l].data) best = std::min(best, std::abs(v));
  return best;
}

#define DADG_INSTANTIATE_KERNELS(S)                                                        \
  template Tensor<S> mlp_forward<S>(const ParamList<S>&, const Tensor<S>&, MlpCache<S>*);  \
  template ParamList<S> mlp_backward<S>(const ParamList<S>&, const MlpCache<S>&,           \
                                        const Tensor<S>&, Tensor<S>*);                     \
  template S cross_entropy<S>(const Tensor<S>&, const std::vector<int>&, Tensor<S>*);      \
  template S binary_domain_loss<S>(const Tensor<S>&, const std::vector<int>&, Tensor<S>*); \
  template ClassGrads<S> class_loss_grads<S>(const ParamList<S>&, const ParamList<S>&,     \
                                             std::span<const BatchT<S>>);                  \
  template DiscGrads<S> disc_loss_grads<S>(const ParamList<S>&, const ParamList<S>&,       \
                                           const Tensor<S>&, const std::vector<int>&);

DADG_INSTANTIATE_KERNELS(double)
DADG_INSTANTIATE_KERNELS(float)
DADG_INSTANTIATE_KERNELS(Dual<double>)
DADG_INSTANTIATE_KERNELS(Dual<float>)

#undef DADG_INSTANTIATE_KERNELS

}  // namespace dadg
