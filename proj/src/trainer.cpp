#include "dadg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dadg/errors.hpp"

namespace dadg {

void HyperParams::validate() const {
  if (alpha < 0 || beta < 0 || gamma < 0) throw std::invalid_argument("step sizes must be >= 0");
  if (lambda < 0) throw std::invalid_argument("lambda must be >= 0");
  if (batch_dal < 1 || batch_cdv < 1) throw std::invalid_argument("batch sizes must be >= 1");
  if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  if (momentum < 0 || momentum >= 1) throw std::invalid_argument("momentum must be in [0,1)");
  if (weight_decay < 0) throw std::invalid_argument("weight_decay must be >= 0");
}

Episode Episode::make(std::array<std::string, 2> s_d, std::string s_c) {
  if (s_d[0] == s_d[1]) throw std::invalid_argument("episode: s_d entries must be distinct");
  if (s_c == s_d[0] || s_c == s_d[1])
    throw std::invalid_argument("episode: s_c must be disjoint from s_d");
  return Episode{std::move(s_d), std::move(s_c)};
}

Episode sample_episode(const std::vector<std::string>& source_domains, Rng& rng) {
  if (source_domains.size() < 3)
    throw std::invalid_argument("sample_episode: need at least 3 source domains, have " +
                                std::to_string(source_domains.size()));
  size_t ci = rng.uniform_int(source_domains.size());
  std::vector<std::string> rest;
  rest.reserve(source_domains.size() - 1);
  for (size_t i = 0; i < source_domains.size(); ++i)
    if (i != ci) rest.push_back(source_domains[i]);
  rng.shuffle_items(rest);
  return Episode::make({rest[0], rest[1]}, source_domains[ci]);
}

Variant parse_variant(const std::string& s) {
  if (s == "dadg") return Variant::dadg;
  if (s == "deepall") return Variant::deepall;
  if (s == "dadg_dal") return Variant::dadg_dal;
  if (s == "dadg_cdv") return Variant::dadg_cdv;
  throw std::invalid_argument("unknown variant: " + s);
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::dadg: return "dadg";
    case Variant::deepall: return "deepall";
    case Variant::dadg_dal: return "dadg_dal";
    case Variant::dadg_cdv: return "dadg_cdv";
  }
  return "?";
}

ArchSpec resolve_arch(ArchSpec arch, const MultiDomainDataset& dataset) {
  if (arch.input_dim == 0) arch.input_dim = dataset.input_dim;
  if (arch.num_classes == 0) arch.num_classes = dataset.num_classes();
  if (arch.feature_dim == 0) arch.feature_dim = dataset.input_dim;
  arch.validate();
  if (arch.input_dim != dataset.input_dim)
    throw std::invalid_argument("arch input_dim does not match dataset");
  if (arch.num_classes != dataset.num_classes())
    throw std::invalid_argument("arch num_classes does not match dataset");
  return arch;
}

template <typename S>
double classification_step(ModelParamsT<S>& model, std::span<const BatchT<S>> batches,
                           const SgdOptions& opt, SgdState<S>* theta_state,
                           SgdState<S>* phi_state) {
  ClassGrads<S> g = class_loss_grads<S>(model.theta, model.phi, batches);
  sgd_step(model.theta, g.d_theta, opt, theta_state);
  sgd_step(model.phi, g.d_phi, opt, phi_state);
  return static_cast<double>(primal(g.loss));
}

template double classification_step<double>(ModelParamsT<double>&, std::span<const BatchT<double>>,
                                            const SgdOptions&, SgdState<double>*,
                                            SgdState<double>*);
template double classification_step<float>(ModelParamsT<float>&, std::span<const BatchT<float>>,
                                           const SgdOptions&, SgdState<float>*, SgdState<float>*);

template <typename S>
struct TrainerT<S>::Streams {
  std::map<std::string, BatchIterator> by_key;  // "purpose/domain"
  std::unique_ptr<PooledIterator> pooled;
};

template <typename S>
TrainerT<S>::TrainerT(ArchSpec arch, HyperParams hp, Variant variant,
                      const MultiDomainDataset& dataset, const SplitPlan& split, uint64_t seed)
    : arch_(resolve_arch(std::move(arch), dataset)),
      hp_(hp),
      variant_(variant),
      dataset_(&dataset),
      split_(split),
      seed_(seed),
      episode_rng_(Rng::stream(seed, "episode")),
      streams_(std::make_unique<Streams>()) {
  hp_.validate();
  size_t n_sources = split_.sources.size();
  size_t need = variant == Variant::deepall ? 1 : variant == Variant::dadg_dal ? 2 : 3;
  if (n_sources < need)
    throw std::invalid_argument(to_string(variant) + " needs at least " + std::to_string(need) +
                                " source domains, split provides " + std::to_string(n_sources));
  model_ = cast_model<S>(init_model(arch_, Rng::derive_seed(seed, "init")));
}

template <typename S>
TrainerT<S>::~TrainerT() = default;
template <typename S>
TrainerT<S>::TrainerT(TrainerT&&) noexcept = default;
template <typename S>
TrainerT<S>& TrainerT<S>::operator=(TrainerT&&) noexcept = default;

template <typename S>
BatchT<S> TrainerT<S>::draw(const std::string& purpose, const std::string& domain, int batch_size,
                            int label) {
  std::string key = purpose + "/" + domain;
  auto it = streams_->by_key.find(key);
  if (it == streams_->by_key.end()) {
    auto split_it = split_.sources.find(domain);
    if (split_it == split_.sources.end())
      throw std::invalid_argument("domain " + domain + " is not a training source");
    it = streams_->by_key
             .emplace(key, BatchIterator(*dataset_, domain, split_it->second.train, batch_size,
                                         Rng::derive_seed(seed_, "batch/" + key)))
             .first;
  }
  Batch b = it->second.next(label);
  if constexpr (std::is_same_v<S, double>)
    return b;
  else
    return cast_batch<S>(b);
}

template <typename S>
void TrainerT<S>::check_finite(const IterationReport& rep) const {
  auto bad = [](double v) { return !std::isfinite(v); };
  bool diverged = false;
  std::ostringstream what;
  if (rep.dal && (bad(rep.dal->loss_f) || bad(rep.dal->grad_norm_theta) || bad(rep.dal->grad_norm_psi))) {
    diverged = true;
    what << "loss_F=" << rep.dal->loss_f;
  }
  if (rep.meta && (bad(rep.meta->loss_g) || bad(rep.meta->loss_h))) {
    diverged = true;
    what << " loss_G=" << rep.meta->loss_g << " loss_H=" << rep.meta->loss_h;
  }
  if (rep.class_loss && bad(*rep.class_loss)) {
    diverged = true;
    what << " loss=" << *rep.class_loss;
  }
  if (diverged) throw DivergenceError(rep.iteration, what.str());
}

template <typename S>
IterationReport TrainerT<S>::variant_step(const std::optional<Episode>& episode) {
  IterationReport rep;
  rep.iteration = iteration_;
  rep.episode = episode;

  SgdOptions outer_opt{hp_.gamma, hp_.momentum_outer ? hp_.momentum : 0.0,
                       hp_.momentum_outer ? hp_.weight_decay : 0.0};

  if (variant_ == Variant::deepall) {
    if (!streams_->pooled) {
      std::vector<std::pair<std::string, std::vector<int>>> parts;
      for (const auto& [name, src] : split_.sources) parts.emplace_back(name, src.train);
      streams_->pooled = std::make_unique<PooledIterator>(*dataset_, std::move(parts),
                                                          hp_.batch_dal,
                                                          Rng::derive_seed(seed_, "batch/pooled"));
    }
    Batch pooled = streams_->pooled->next();
    BatchT<S> b = [&] {
      if constexpr (std::is_same_v<S, double>)
        return pooled;
      else
        return cast_batch<S>(pooled);
    }();
    std::vector<BatchT<S>> batches{std::move(b)};
    rep.class_loss =
        classification_step<S>(model_, batches, outer_opt, &theta_state_, &phi_state_);
    check_finite(rep);
    return rep;
  }

  // adversarial stage (dadg, dadg_dal); the pair is fed in canonical name
  // order so the discriminator sees a stable labeling of any given pair
  if (variant_ == Variant::dadg || variant_ == Variant::dadg_dal) {
    std::array<std::string, 2> pair = episode ? episode->s_d : std::array<std::string, 2>{};
    if (!episode) {
      auto names = split_.source_names();
      pair = {names[0], names[1]};
      if (episode_rng_.uniform_int(2) == 1) std::swap(pair[0], pair[1]);
    }
    std::string lo = std::min(pair[0], pair[1]);
    std::string hi = std::max(pair[0], pair[1]);
    BatchT<S> a = draw("dal", lo, hp_.batch_dal, 0);
    BatchT<S> b = draw("dal", hi, hp_.batch_dal, 1);
    DalOptions opt{hp_.alpha, hp_.lambda, hp_.momentum_psi ? hp_.momentum : 0.0,
                   hp_.momentum_psi ? hp_.weight_decay : 0.0};
    DalResult<S> dal = dal_step(model_, a, b, opt, &psi_state_);
    model_.theta = std::move(dal.theta);
    model_.psi = std::move(dal.psi);
    rep.dal = dal.report;
  }

  if (variant_ == Variant::dadg || variant_ == Variant::dadg_cdv) {
    EpisodeBatchesT<S> eb;
    eb.train_a = draw("cdv", episode->s_d[0], hp_.batch_cdv, 0);
    eb.train_b = draw("cdv", episode->s_d[1], hp_.batch_cdv, 1);
    eb.val = draw("cdv", episode->s_c, hp_.batch_cdv, 0);
    eb.domain_a = episode->s_d[0];
    eb.domain_b = episode->s_d[1];
    eb.domain_val = episode->s_c;
    OuterGradients<S> og =
        outer_gradients<S>(model_.theta, model_.phi, eb, hp_.beta, hp_.outer_mode);
    sgd_step(model_.theta, og.d_theta, outer_opt, &theta_state_);
    sgd_step(model_.phi, og.d_phi, outer_opt, &phi_state_);
    rep.meta = og.report;
  } else if (variant_ == Variant::dadg_dal) {
    // conventional classification on the DAL pair
    std::vector<BatchT<S>> batches;
    batches.push_back(draw("cdv", episode ? episode->s_d[0] : split_.source_names()[0],
                           hp_.batch_cdv, 0));
    batches.push_back(draw("cdv", episode ? episode->s_d[1] : split_.source_names()[1],
                           hp_.batch_cdv, 1));
    rep.class_loss =
        classification_step<S>(model_, batches, outer_opt, &theta_state_, &phi_state_);
  }

  check_finite(rep);
  return rep;
}

template <typename S>
IterationReport TrainerT<S>::step() {
  ++iteration_;
  std::optional<Episode> episode;
  if (variant_ != Variant::deepall) {
    auto names = split_.source_names();
    if (names.size() >= 3)
      episode = sample_episode(names, episode_rng_);
    // dadg_dal with exactly two sources runs without an s_c domain
  }
  return variant_step(episode);
}

template <typename S>
IterationReport TrainerT<S>::dadg_iteration(const Episode& episode) {
  if (variant_ != Variant::dadg)
    throw std::invalid_argument("dadg_iteration: trainer variant is " + to_string(variant_));
  if (!split_.sources.count(episode.s_d[0]) || !split_.sources.count(episode.s_d[1]) ||
      !split_.sources.count(episode.s_c))
    throw std::invalid_argument("dadg_iteration: episode names a non-source domain");
  ++iteration_;
  return variant_step(episode);
}

template <typename S>
TrainResultT<S> TrainerT<S>::run() {
  TrainResultT<S> out;
  out.history.reserve(hp_.iterations);
  for (int i = 0; i < hp_.iterations; ++i) out.history.push_back(step());
  out.model = model_;
  out.draw_counts = draw_counts();
  if (!all_finite(out.model.theta) || !all_finite(out.model.phi) || !all_finite(out.model.psi))
    throw DivergenceError(iteration_, "non-finite parameters after training");
  return out;
}

template <typename S>
std::map<std::string, size_t> TrainerT<S>::draw_counts() const {
  std::map<std::string, size_t> counts;
  for (const auto& [key, it] : streams_->by_key) counts[it.domain()] += it.draws();
  if (streams_->pooled)
    for (const auto& [dom, c] : streams_->pooled->draw_counts()) counts[dom] += c;
  return counts;
}

template class TrainerT<double>;
template class TrainerT<float>;

}  // namespace dadg
