#include "dadg/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dadg/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dadg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <typename S>
double partition_accuracy(const ModelParamsT<S>& model, const MultiDomainDataset& dataset,
                          const std::vector<std::pair<std::string, std::vector<int>>>& parts) {
  size_t total = 0, correct = 0;
  for (const auto& [dom, idx] : parts) {
    const DomainData& d = dataset.domain(dom);
    if (idx.empty()) continue;
    BatchT<S> b;
    b.inputs = Tensor<S>(int(idx.size()), dataset.input_dim);
    for (size_t i = 0; i < idx.size(); ++i)
      for (int k = 0; k < dataset.input_dim; ++k)
        b.inputs.at(int(i), k) = from_double<S>(d.inputs.at(idx[i], k));
    Tensor<S> logits = classify(model.phi, forward_features(model.theta, b.inputs));
    for (size_t i = 0; i < idx.size(); ++i) {
      int best = 0;
      for (int c = 1; c < logits.cols; ++c)
        if (primal(logits.at(int(i), c)) > primal(logits.at(int(i), best))) best = c;
      if (best == d.labels[idx[i]]) ++correct;
      ++total;
    }
  }
  if (total == 0) throw std::invalid_argument("evaluate: empty partition");
  return double(correct) / double(total);
}

std::vector<int> all_rows(const DomainData& d) {
  std::vector<int> idx(d.size());
  for (int i = 0; i < d.size(); ++i) idx[i] = i;
  return idx;
}

std::string iso_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fmt_full(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json num_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

double num_from(const json& j) {
  if (j.is_null()) return kNaN;
  return j.get<double>();
}

}  // namespace

template <typename S>
double evaluate(const ModelParamsT<S>& model, const MultiDomainDataset& dataset,
                const SplitPlan& split, EvalPartition which) {
  std::vector<std::pair<std::string, std::vector<int>>> parts;
  if (which == EvalPartition::target) {
    parts.emplace_back(split.target_domain, all_rows(dataset.domain(split.target_domain)));
  } else {
    for (const auto& [name, src] : split.sources)
      if (!src.test.empty()) parts.emplace_back(name, src.test);
    if (parts.empty())
      throw std::invalid_argument("evaluate: split has no source test partition");
  }
  return partition_accuracy(model, dataset, parts);
}

template double evaluate<double>(const ModelParamsT<double>&, const MultiDomainDataset&,
                                 const SplitPlan&, EvalPartition);
template double evaluate<float>(const ModelParamsT<float>&, const MultiDomainDataset&,
                                const SplitPlan&, EvalPartition);

template <typename S>
double discriminator_accuracy(const ModelParamsT<S>& model, const MultiDomainDataset& dataset,
                              const std::vector<std::string>& source_domains,
                              const std::map<std::string, std::vector<int>>& indices) {
  if (source_domains.size() < 2)
    throw std::invalid_argument("discriminator_accuracy: need at least 2 domains");
  auto rows_for = [&](const std::string& dom) {
    auto it = indices.find(dom);
    return it != indices.end() ? it->second : all_rows(dataset.domain(dom));
  };
  auto features_logits = [&](const std::string& dom) {
    std::vector<int> idx = rows_for(dom);
    const DomainData& d = dataset.domain(dom);
    Tensor<S> x(int(idx.size()), dataset.input_dim);
    for (size_t i = 0; i < idx.size(); ++i)
      for (int k = 0; k < dataset.input_dim; ++k)
        x.at(int(i), k) = from_double<S>(d.inputs.at(idx[i], k));
    return discriminate(model.psi, forward_features(model.theta, x));
  };
  std::vector<std::string> doms = source_domains;
  std::sort(doms.begin(), doms.end());
  double acc_sum = 0;
  int pairs = 0;
  for (size_t i = 0; i < doms.size(); ++i) {
    Tensor<S> li = features_logits(doms[i]);
    for (size_t j = i + 1; j < doms.size(); ++j) {
      Tensor<S> lj = features_logits(doms[j]);
      size_t correct = 0;
      for (int r = 0; r < li.rows; ++r)
        if (!(primal(li.data[r]) > 0)) ++correct;  // smaller name carries label 0
      for (int r = 0; r < lj.rows; ++r)
        if (primal(lj.data[r]) > 0) ++correct;
      acc_sum += double(correct) / double(li.rows + lj.rows);
      ++pairs;
    }
  }
  return acc_sum / pairs;
}

template double discriminator_accuracy<double>(const ModelParamsT<double>&,
                                               const MultiDomainDataset&,
                                               const std::vector<std::string>&,
                                               const std::map<std::string, std::vector<int>>&);
template double discriminator_accuracy<float>(const ModelParamsT<float>&,
                                              const MultiDomainDataset&,
                                              const std::vector<std::string>&,
                                              const std::map<std::string, std::vector<int>>&);

std::vector<ResultAggregate> recompute_aggregates(const std::vector<ResultRow>& rows) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& r : rows) {
    if (r.failed) continue;
    auto key = std::make_pair(r.variant, r.target);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(r.accuracy);
  }
  std::vector<ResultAggregate> out;
  for (const auto& key : order) {
    const auto& xs = groups[key];
    ResultAggregate a;
    a.variant = key.first;
    a.target = key.second;
    a.count = int(xs.size());
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= double(xs.size());
    double var = 0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= double(xs.size());
    a.mean_accuracy = mean;
    a.stddev_accuracy = std::sqrt(var);
    out.push_back(a);
  }
  return out;
}

namespace {

struct RunCell {
  Variant variant;
  std::string target;
  uint64_t seed;
};

template <typename S>
ResultRow run_cell(const RunConfig& config, const MultiDomainDataset& dataset,
                   const RunCell& cell) {
  ResultRow row;
  row.variant = to_string(cell.variant);
  row.target = cell.target;
  row.seed = cell.seed;
  row.disc_accuracy = kNaN;
  row.loss_f = row.loss_g = row.loss_h = kNaN;
  try {
    // the split (for vlcs_70_30) and the trainer share the run seed, so every
    // repetition varies both initialization and the in-domain split
    uint64_t run_seed = Rng::derive_seed(cell.seed, "run/" + cell.target);
    SplitPlan split = make_lodo_splits(dataset, cell.target, config.protocol, run_seed);
    ArchSpec arch;
    arch.feature_dim = config.model.feature_dim;
    arch.extractor_hidden = config.model.extractor_hidden;
    arch.disc_hidden = config.model.disc_hidden;
    arch = resolve_arch(arch, dataset);
    TrainResultT<S> result =
        train<S>(arch, config.hyper, cell.variant, dataset, split, run_seed);
    row.accuracy = evaluate(result.model, dataset, split, EvalPartition::target);
    for (auto it = result.history.rbegin(); it != result.history.rend(); ++it) {
      if (std::isnan(row.loss_f) && it->dal) row.loss_f = it->dal->loss_f;
      if (std::isnan(row.loss_g) && it->meta) row.loss_g = it->meta->loss_g;
      if (std::isnan(row.loss_g) && it->class_loss) row.loss_g = *it->class_loss;
      if (std::isnan(row.loss_h) && it->meta) row.loss_h = it->meta->loss_h;
    }
    if (cell.variant == Variant::dadg || cell.variant == Variant::dadg_dal) {
      // held-out rows where the protocol provides them, training rows otherwise
      std::map<std::string, std::vector<int>> held;
      if (config.protocol == SplitProtocol::vlcs_70_30)
        for (const auto& [name, src] : split.sources) held[name] = src.test;
      row.disc_accuracy =
          discriminator_accuracy(result.model, dataset, split.source_names(), held);
    }
  } catch (const std::exception& e) {
    row.failed = true;
    row.error = e.what();
    row.accuracy = kNaN;
  }
  return row;
}

}  // namespace

ResultTable run_experiment(const RunConfig& config) {
  return run_experiment(config, build_dataset(config.dataset));
}

ResultTable run_experiment(const RunConfig& config, const MultiDomainDataset& dataset) {
  config.validate();
  dataset.validate();
  std::vector<std::string> targets =
      config.targets.empty() ? dataset.domain_names : config.targets;
  for (const auto& t : targets)
    if (!dataset.domains.count(t)) throw ConfigError("run.targets: unknown domain '" + t + "'");

  std::vector<RunCell> cells;
  for (Variant v : config.variants)
    for (const auto& t : targets)
      for (uint64_t s : config.resolved_seeds()) cells.push_back({v, t, s});

  std::vector<ResultRow> rows(cells.size());
  auto worker = [&](size_t i) {
    rows[i] = config.precision == Precision::f64 ? run_cell<double>(config, dataset, cells[i])
                                                 : run_cell<float>(config, dataset, cells[i]);
  };
  int jobs = std::max(1, config.jobs);
  if (jobs == 1) {
    for (size_t i = 0; i < cells.size(); ++i) worker(i);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j)
      pool.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) worker(i);
      });
    for (auto& th : pool) th.join();
  }

  ResultTable table;
  table.rows = std::move(rows);
  table.aggregates = recompute_aggregates(table.rows);
  table.config_hash = config_hash(config);
  table.timestamp = iso_timestamp();
  table.code_version = kVersion;
  table.config_text = serialize_config(config);
  return table;
}

ReportFormat parse_format(const std::string& s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  if (s == "markdown") return ReportFormat::markdown;
  throw std::invalid_argument("unknown report format: " + s);
}

std::string to_string(ReportFormat f) {
  switch (f) {
    case ReportFormat::csv: return "csv";
    case ReportFormat::json: return "json";
    case ReportFormat::markdown: return "markdown";
  }
  return "?";
}

namespace {

std::string render_csv(const ResultTable& table) {
  std::string out = "variant,target,seed,accuracy,disc_accuracy,loss_F,loss_G,loss_H\n";
  for (const auto& r : table.rows) {
    if (r.failed) {
      out += "ERROR," + r.variant + "," + r.target + "," + std::to_string(r.seed) + "," +
             r.error + "\n";
      continue;
    }
    out += r.variant + "," + r.target + "," + std::to_string(r.seed) + "," +
           fmt_full(r.accuracy) + "," + fmt_full(r.disc_accuracy) + "," + fmt_full(r.loss_f) +
           "," + fmt_full(r.loss_g) + "," + fmt_full(r.loss_h) + "\n";
  }
  for (const auto& a : table.aggregates)
    out += "AGG," + a.variant + "," + a.target + "," + std::to_string(a.count) + "," +
           fmt_full(a.mean_accuracy) + "," + fmt_full(a.stddev_accuracy) + "\n";
  return out;
}

std::string render_markdown(const ResultTable& table) {
  // variants as rows, targets as columns, final "Avg." column
  std::vector<std::string> variants, targets;
  std::map<std::pair<std::string, std::string>, const ResultAggregate*> cell;
  for (const auto& a : table.aggregates) {
    if (std::find(variants.begin(), variants.end(), a.variant) == variants.end())
      variants.push_back(a.variant);
    if (std::find(targets.begin(), targets.end(), a.target) == targets.end())
      targets.push_back(a.target);
    cell[{a.variant, a.target}] = &a;
  }
  char buf[64];
  std::string out = "| Variant |";
  for (const auto& t : targets) out += " " + t + " |";
  out += " Avg. |\n|---|";
  for (size_t i = 0; i < targets.size() + 1; ++i) out += "---|";
  out += "\n";
  for (const auto& v : variants) {
    out += "| " + v + " |";
    double sum = 0;
    int n = 0;
    for (const auto& t : targets) {
      auto it = cell.find({v, t});
      if (it == cell.end()) {
        out += " - |";
        continue;
      }
      std::snprintf(buf, sizeof buf, " %.2f |", 100.0 * it->second->mean_accuracy);
      out += buf;
      sum += it->second->mean_accuracy;
      ++n;
    }
    std::snprintf(buf, sizeof buf, " %.2f |\n", n ? 100.0 * sum / n : 0.0);
    out += buf;
  }
  return out;
}

}  // namespace

std::string table_to_json(const ResultTable& table) {
  json j;
  j["metadata"] = {{"config_hash", table.config_hash},
                   {"timestamp", table.timestamp},
                   {"code_version", table.code_version},
                   {"config", table.config_text}};
  j["rows"] = json::array();
  for (const auto& r : table.rows) {
    j["rows"].push_back({{"variant", r.variant},
                         {"target", r.target},
                         {"seed", r.seed},
                         {"accuracy", num_or_null(r.accuracy)},
                         {"disc_accuracy", num_or_null(r.disc_accuracy)},
                         {"loss_F", num_or_null(r.loss_f)},
                         {"loss_G", num_or_null(r.loss_g)},
                         {"loss_H", num_or_null(r.loss_h)},
                         {"failed", r.failed},
                         {"error", r.error}});
  }
  j["aggregates"] = json::array();
  for (const auto& a : table.aggregates) {
    j["aggregates"].push_back({{"variant", a.variant},
                               {"target", a.target},
                               {"count", a.count},
                               {"mean_accuracy", a.mean_accuracy},
                               {"stddev_accuracy", a.stddev_accuracy}});
  }
  return j.dump(2);
}

ResultTable table_from_json(const std::string& text) {
  json j = json::parse(text);
  ResultTable table;
  table.config_hash = j.at("metadata").at("config_hash").get<std::string>();
  table.timestamp = j.at("metadata").at("timestamp").get<std::string>();
  table.code_version = j.at("metadata").at("code_version").get<std::string>();
  table.config_text = j.at("metadata").at("config").get<std::string>();
  for (const auto& r : j.at("rows")) {
    ResultRow row;
    row.variant = r.at("variant").get<std::string>();
    row.target = r.at("target").get<std::string>();
    row.seed = r.at("seed").get<uint64_t>();
    row.accuracy = num_from(r.at("accuracy"));
    row.disc_accuracy = num_from(r.at("disc_accuracy"));
    row.loss_f = num_from(r.at("loss_F"));
    row.loss_g = num_from(r.at("loss_G"));
    row.loss_h = num_from(r.at("loss_H"));
    row.failed = r.at("failed").get<bool>();
    row.error = r.at("error").get<std::string>();
    table.rows.push_back(row);
  }
  for (const auto& a : j.at("aggregates")) {
    ResultAggregate agg;
    agg.variant = a.at("variant").get<std::string>();
    agg.target = a.at("target").get<std::string>();
    agg.count = a.at("count").get<int>();
    agg.mean_accuracy = a.at("mean_accuracy").get<double>();
    agg.stddev_accuracy = a.at("stddev_accuracy").get<double>();
    table.aggregates.push_back(agg);
  }
  return table;
}

ResultTable load_report(const fs::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw DataError("cannot read report " + json_path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return table_from_json(ss.str());
  } catch (const json::exception& e) {
    throw DataError("malformed report " + json_path.string() + ": " + e.what());
  }
}

std::vector<fs::path> emit_report(const ResultTable& table, const fs::path& out_dir,
                                  const std::set<ReportFormat>& formats) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<fs::path> written;
  auto write = [&](const std::string& ext, const std::string& content) {
    fs::path file = out_dir / ("results_" + table.config_hash + "." + ext);
    std::ofstream out(file);
    if (!out) throw DataError("cannot write " + file.string());
    out << content;
    if (!out) throw DataError("write failed for " + file.string());
    written.push_back(file);
  };
  for (ReportFormat f : formats) {
    switch (f) {
      case ReportFormat::csv: write("csv", render_csv(table)); break;
      case ReportFormat::json: write("json", table_to_json(table)); break;
      case ReportFormat::markdown: write("md", render_markdown(table)); break;
    }
  }
  return written;
}

}  // namespace dadg
