#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dadg/config.hpp"
#include "dadg/data.hpp"
#include "dadg/model.hpp"
#include "dadg/trainer.hpp"

namespace dadg {

enum class EvalPartition { target, source_test };

// Fraction of argmax-correct predictions on the chosen partition.
template <typename S>
double evaluate(const ModelParamsT<S>& model, const MultiDomainDataset& dataset,
                const SplitPlan& split, EvalPartition which);

// Mean discriminator accuracy over every unordered source pair, with the
// lexicographically smaller domain labeled 0 (the training convention).
// `indices` picks the rows to evaluate per domain; an empty map means all rows.
template <typename S>
double discriminator_accuracy(const ModelParamsT<S>& model, const MultiDomainDataset& dataset,
                              const std::vector<std::string>& source_domains,
                              const std::map<std::string, std::vector<int>>& indices = {});

struct ResultRow {
  std::string variant;
  std::string target;
  uint64_t seed = 0;
  double accuracy = 0;
  double disc_accuracy = 0;  // NaN when the variant trains no discriminator
  double loss_f = 0, loss_g = 0, loss_h = 0;  // NaN when the stage does not run
  bool failed = false;
  std::string error;
};

struct ResultAggregate {
  std::string variant;
  std::string target;
  int count = 0;
  double mean_accuracy = 0;
  double stddev_accuracy = 0;  // population standard deviation
};

struct ResultTable {
  std::vector<ResultRow> rows;
  std::vector<ResultAggregate> aggregates;
  std::string config_hash;
  std::string timestamp;
  std::string code_version;
  std::string config_text;  // resolved configuration for reproducibility
};

std::vector<ResultAggregate> recompute_aggregates(const std::vector<ResultRow>& rows);

// Trains every (variant, target, seed) cell of the config's grid and evaluates
// each trained model on its held-out target domain. Failed runs become error
// rows. Runs fan out over config.jobs workers; the row order is fixed by the
// grid, not by scheduling.
ResultTable run_experiment(const RunConfig& config);
ResultTable run_experiment(const RunConfig& config, const MultiDomainDataset& dataset);

enum class ReportFormat { csv, json, markdown };

ReportFormat parse_format(const std::string& s);
std::string to_string(ReportFormat f);

// Writes results_<hash>.{csv,json,md} into out_dir; returns the file paths.
std::vector<std::filesystem::path> emit_report(const ResultTable& table,
                                               const std::filesystem::path& out_dir,
                                               const std::set<ReportFormat>& formats);

std::string table_to_json(const ResultTable& table);
ResultTable table_from_json(const std::string& text);
ResultTable load_report(const std::filesystem::path& json_path);

}  // namespace dadg
