#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dadg/model.hpp"
#include "dadg/rng.hpp"

namespace dadg {

struct DomainData {
  Tensor<double> inputs;    // [n x input_dim]
  std::vector<int> labels;  // class indices
  int size() const { return inputs.rows; }
};

struct MultiDomainDataset {
  int input_dim = 0;
  std::vector<std::string> class_names;
  std::vector<std::string> domain_names;  // deterministic (lexicographic on load)
  std::map<std::string, DomainData> domains;

  int num_classes() const { return int(class_names.size()); }
  const DomainData& domain(const std::string& name) const;
  void validate() const;
};

enum class SyntheticFamily { rotated_moons, spurious_shift };

SyntheticFamily parse_family(const std::string& s);
std::string to_string(SyntheticFamily f);

// Per-domain parameters. rotated_moons uses angle_deg; spurious_shift uses the
// nuisance offset (a class-neutral translation of coordinates 2-3) and the
// correlation coefficient (probability that the class-signed displacement along
// coordinate 2 is aligned with the class; < 0.5 means anti-correlated).
struct DomainSpec {
  std::string name;
  double angle_deg = 0.0;
  std::array<double, 2> offset{0.0, 0.0};
  double correlation = 0.5;
};

struct SyntheticSpec {
  SyntheticFamily family = SyntheticFamily::spurious_shift;
  std::vector<DomainSpec> domains;
  int samples_per_domain = 512;
  double noise_sigma = 0.1;
  uint64_t seed = 0;
  int input_dim = 0;  // 0 = family minimum (2 for moons, 4 for spurious_shift)
  // spurious_shift only: magnitude of the class-signed displacement and half
  // distance between the two class blobs in coordinates 0-1.
  double signal_gain = 2.2;
  double class_separation = 0.55;

  void validate() const;
  int resolved_input_dim() const;
};

// The two-moons / spurious-shift benchmark generators. Pure functions of the
// spec: identical specs give identical datasets.
MultiDomainDataset generate_synthetic(const SyntheticSpec& spec);

// On-disk layout: root/<domain>/<class>.csv, one example per row, plus a
// manifest file at root. UTF-8, no header rows, LF or CRLF.
void save_csv_dataset(const MultiDomainDataset& dataset, const std::filesystem::path& root);
MultiDomainDataset load_csv_dataset(const std::filesystem::path& root);

enum class SplitProtocol { full_target, vlcs_70_30 };

SplitProtocol parse_protocol(const std::string& s);
std::string to_string(SplitProtocol p);

struct SourceSplit {
  std::vector<int> train;
  std::vector<int> test;
};

struct SplitPlan {
  std::string target_domain;
  SplitProtocol protocol = SplitProtocol::full_target;
  std::map<std::string, SourceSplit> sources;  // target never appears here

  std::vector<std::string> source_names() const;
};

// Leave-one-domain-out split. full_target trains on every source example;
// vlcs_70_30 shuffles each source with a seeded Fisher-Yates and keeps the
// first 70% (floor) for training. The target is always evaluation-only.
SplitPlan make_lodo_splits(const MultiDomainDataset& dataset, const std::string& target_domain,
                           SplitProtocol protocol, uint64_t seed);

// Without-replacement batch stream over a fixed index set; reshuffles on
// exhaustion. The final batch of an epoch may be short.
class BatchIterator {
 public:
  BatchIterator(const MultiDomainDataset& dataset, std::string domain, std::vector<int> indices,
                int batch_size, uint64_t seed);

  Batch next(int episode_domain_label);
  const std::string& domain() const { return domain_; }
  size_t draws() const { return draws_; }

 private:
  const MultiDomainDataset* dataset_;
  std::string domain_;
  std::vector<int> indices_;
  int batch_size_;
  size_t cursor_ = 0;
  size_t draws_ = 0;
  Rng rng_;
};

// Batch stream over the union of several domains' index sets, for baselines
// that pool their sources.
class PooledIterator {
 public:
  PooledIterator(const MultiDomainDataset& dataset,
                 std::vector<std::pair<std::string, std::vector<int>>> parts, int batch_size,
                 uint64_t seed);

  Batch next();
  const std::map<std::string, size_t>& draw_counts() const { return draw_counts_; }

 private:
  const MultiDomainDataset* dataset_;
  std::vector<std::pair<std::string, int>> pool_;  // (domain, row)
  std::vector<std::string> domain_order_;
  int batch_size_;
  size_t cursor_ = 0;
  Rng rng_;
  std::map<std::string, size_t> draw_counts_;
};

}  // namespace dadg
