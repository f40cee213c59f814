#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dadg/dal.hpp"
#include "dadg/data.hpp"
#include "dadg/meta.hpp"
#include "dadg/model.hpp"
#include "dadg/optim.hpp"

namespace dadg {

struct HyperParams {
  double alpha = 5e-5;   // adversarial step size
  double beta = 5e-4;    // inner classification step size
  double gamma = 5e-4;   // outer step size
  double lambda = 1.0;   // gradient reversal coefficient
  double momentum = 0.9;
  double weight_decay = 5e-5;
  int iterations = 2000;
  int batch_dal = 64;
  int batch_cdv = 32;
  OuterMode outer_mode = OuterMode::combined;
  // Momentum + weight decay toggles per stage; the adversarial extractor ascent
  // and the inner step are always raw SGD.
  bool momentum_psi = true;
  bool momentum_outer = true;

  void validate() const;
};

// One iteration's random split of the source domains.
struct Episode {
  std::array<std::string, 2> s_d;
  std::string s_c;

  static Episode make(std::array<std::string, 2> s_d, std::string s_c);
};

Episode sample_episode(const std::vector<std::string>& source_domains, Rng& rng);

enum class Variant { dadg, deepall, dadg_dal, dadg_cdv };

Variant parse_variant(const std::string& s);
std::string to_string(Variant v);

struct IterationReport {
  int iteration = 0;
  std::optional<Episode> episode;
  std::optional<DalStepReport> dal;
  std::optional<MetaStepReport> meta;
  std::optional<double> class_loss;  // plain classification step (deepall, dadg_dal)
};

// Plain cross-entropy step on theta and phi over the given batches (equal
// weight). Returns the loss before the step.
template <typename S>
double classification_step(ModelParamsT<S>& model, std::span<const BatchT<S>> batches,
                           const SgdOptions& opt, SgdState<S>* theta_state,
                           SgdState<S>* phi_state);

template <typename S>
struct TrainResultT {
  ModelParamsT<S> model;
  std::vector<IterationReport> history;
  std::map<std::string, size_t> draw_counts;  // training examples drawn per domain
};
using TrainResult = TrainResultT<double>;

// Runs one variant on the training side of a split plan. All randomness comes
// from named substreams of `seed` (episodes, per-domain batch order, init), so
// a (variant, split, seed) triple fully determines the run, and variants that
// share a seed see identical episode and batch streams.
template <typename S>
class TrainerT {
 public:
  TrainerT(ArchSpec arch, HyperParams hp, Variant variant, const MultiDomainDataset& dataset,
           const SplitPlan& split, uint64_t seed);
  ~TrainerT();
  TrainerT(TrainerT&&) noexcept;
  TrainerT& operator=(TrainerT&&) noexcept;

  // One training iteration; samples the episode internally.
  IterationReport step();
  // One full DADG iteration on a caller-chosen episode.
  IterationReport dadg_iteration(const Episode& episode);

  TrainResultT<S> run();

  const ModelParamsT<S>& model() const { return model_; }
  const ArchSpec& arch() const { return arch_; }
  int iteration() const { return iteration_; }
  std::map<std::string, size_t> draw_counts() const;

 private:
  struct Streams;

  BatchT<S> draw(const std::string& purpose, const std::string& domain, int batch_size, int label);
  IterationReport variant_step(const std::optional<Episode>& episode);
  void check_finite(const IterationReport& rep) const;

  ArchSpec arch_;
  HyperParams hp_;
  Variant variant_;
  const MultiDomainDataset* dataset_;
  SplitPlan split_;
  uint64_t seed_;
  int iteration_ = 0;
  ModelParamsT<S> model_;
  Rng episode_rng_;
  std::unique_ptr<Streams> streams_;
  SgdState<S> psi_state_, theta_state_, phi_state_;
};
using Trainer = TrainerT<double>;

// Fills input_dim and num_classes from the dataset when left at zero.
ArchSpec resolve_arch(ArchSpec arch, const MultiDomainDataset& dataset);

template <typename S>
TrainResultT<S> train(const ArchSpec& arch, const HyperParams& hp, Variant variant,
                      const MultiDomainDataset& dataset, const SplitPlan& split, uint64_t seed) {
  TrainerT<S> trainer(arch, hp, variant, dataset, split, seed);
  return trainer.run();
}

}  // namespace dadg
