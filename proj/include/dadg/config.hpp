#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dadg/data.hpp"
#include "dadg/trainer.hpp"

namespace dadg {

enum class Precision { f64, f32 };

enum class DatasetKind { synthetic, csv };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::synthetic;
  SyntheticSpec synthetic;  // defaults to the bundled spurious-shift benchmark
  std::string csv_root;
};

struct ModelConfig {
  int feature_dim = 0;  // 0 = input_dim
  std::vector<int> extractor_hidden;
  std::vector<int> disc_hidden = {1024, 1024};
};

struct ReportConfig {
  std::set<std::string> formats = {"csv", "json", "markdown"};
  bool loss_curves = false;
};

struct RunConfig {
  int config_version = 1;
  DatasetConfig dataset;
  ModelConfig model;
  HyperParams hyper;
  std::vector<Variant> variants = {Variant::dadg};
  std::vector<std::string> targets;  // empty = rotate over every domain
  std::vector<uint64_t> seeds;       // empty = 1..repetitions
  int repetitions = 5;
  SplitProtocol protocol = SplitProtocol::full_target;
  std::string out_dir = "runs";
  Precision precision = Precision::f64;
  int jobs = 1;
  ReportConfig report;

  std::vector<uint64_t> resolved_seeds() const;
  void validate() const;
};

// The bundled 4-domain spurious-shift benchmark (3 sources, 1 anti-correlated
// target) used by the default configuration.
SyntheticSpec default_benchmark_spec();

// Flat `key = value` text with dotted key paths and '#' comments. Unknown keys,
// type mismatches and malformed values raise ConfigError naming the key.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::filesystem::path& path);

// Applies `key=value` pairs on top of an existing config (CLI overrides).
void apply_override(RunConfig& config, const std::string& key, const std::string& value);

// Canonical serialization: every key materialized, sorted. parse(serialize(c))
// is a fixed point.
std::string serialize_config(const RunConfig& config);

// FNV-1a hash of the canonical serialization, as 16 hex digits.
std::string config_hash(const RunConfig& config);

// All recognized keys with their descriptions, for CLI registration and docs.
std::vector<std::pair<std::string, std::string>> config_key_help();

MultiDomainDataset build_dataset(const DatasetConfig& config);

}  // namespace dadg
