#include "dadg/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "dadg/errors.hpp"

namespace fs = std::filesystem;

namespace dadg {

const DomainData& MultiDomainDataset::domain(const std::string& name) const {
  auto it = domains.find(name);
  if (it == domains.end()) throw std::invalid_argument("unknown domain: " + name);
  return it->second;
}

void MultiDomainDataset::validate() const {
  if (class_names.size() < 2) throw std::invalid_argument("dataset needs at least 2 classes");
  if (domains.empty()) throw std::invalid_argument("dataset has no domains");
  for (const auto& [name, d] : domains) {
    if (d.size() < 1) throw std::invalid_argument("domain " + name + " is empty");
    if (d.inputs.cols != input_dim)
      throw std::invalid_argument("domain " + name + " disagrees on input_dim");
    for (int y : d.labels)
      if (y < 0 || y >= num_classes())
        throw std::invalid_argument("domain " + name + " has out-of-range label");
  }
}

SyntheticFamily parse_family(const std::string& s) {
  if (s == "rotated_moons") return SyntheticFamily::rotated_moons;
  if (s == "spurious_shift") return SyntheticFamily::spurious_shift;
  throw std::invalid_argument("unknown synthetic family: " + s);
}

std::string to_string(SyntheticFamily f) {
  return f == SyntheticFamily::rotated_moons ? "rotated_moons" : "spurious_shift";
}

void SyntheticSpec::validate() const {
  if (domains.empty()) throw std::invalid_argument("SyntheticSpec: no domains");
  if (samples_per_domain < 1) throw std::invalid_argument("SyntheticSpec: samples_per_domain < 1");
  if (noise_sigma < 0) throw std::invalid_argument("SyntheticSpec: negative noise_sigma");
  int min_dim = family == SyntheticFamily::rotated_moons ? 2 : 4;
  if (input_dim != 0 && input_dim < min_dim)
    throw std::invalid_argument("SyntheticSpec: input_dim must be >= " + std::to_string(min_dim) +
                                " for " + to_string(family));
  for (const auto& d : domains)
    if (d.correlation < 0 || d.correlation > 1)
      throw std::invalid_argument("SyntheticSpec: correlation outside [0,1]");
}

int SyntheticSpec::resolved_input_dim() const {
  if (input_dim != 0) return input_dim;
  return family == SyntheticFamily::rotated_moons ? 2 : 4;
}

namespace {

std::string default_domain_name(size_t i) { return "d" + std::to_string(i); }

}  // namespace

MultiDomainDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const int dim = spec.resolved_input_dim();
  const int n = spec.samples_per_domain;
  MultiDomainDataset ds;
  ds.input_dim = dim;
  ds.class_names = {"class0", "class1"};

  for (size_t di = 0; di < spec.domains.size(); ++di) {
    const DomainSpec& dom = spec.domains[di];
    std::string name = dom.name.empty() ? default_domain_name(di) : dom.name;
    Rng rng = Rng::stream(spec.seed, "synth/" + name);
    DomainData data;
    data.inputs = Tensor<double>(n, dim);
    data.labels.resize(n);
    for (int i = 0; i < n; ++i) {
      int y = int(rng.uniform_int(2));
      data.labels[i] = y;
      double* row = &data.inputs.data[size_t(i) * dim];
      if (spec.family == SyntheticFamily::rotated_moons) {
        double t = rng.uniform01() * std::numbers::pi;
        // canonical interleaving arcs: class0 on the unit upper arc, class1 on
        // the lower arc shifted to (1, 0.5)
        double x = y == 0 ? std::cos(t) : 1.0 - std::cos(t);
        double yy = y == 0 ? std::sin(t) : 0.5 - std::sin(t);
        double a = dom.angle_deg * std::numbers::pi / 180.0;
        double rx = std::cos(a) * x - std::sin(a) * yy;
        double ry = std::sin(a) * x + std::cos(a) * yy;
        row[0] = rx + spec.noise_sigma * rng.normal();
        row[1] = ry + spec.noise_sigma * rng.normal();
        for (int k = 2; k < dim; ++k) row[k] = 0.0;
      } else {
        // class blobs in coordinates 0-1
        double c = y == 1 ? spec.class_separation : -spec.class_separation;
        row[0] = c + spec.noise_sigma * rng.normal();
        row[1] = c + spec.noise_sigma * rng.normal();
        // nuisance block: domain translation plus a class-signed displacement
        // along coordinate 2 that is aligned with the class with probability
        // `correlation`
        double s = y == 1 ? 1.0 : -1.0;
        if (rng.uniform01() > dom.correlation) s = -s;
        row[2] = dom.offset[0] + s * spec.signal_gain + spec.noise_sigma * rng.normal();
        row[3] = dom.offset[1] + spec.noise_sigma * rng.normal();
        for (int k = 4; k < dim; ++k) row[k] = spec.noise_sigma * rng.normal();
      }
    }
    if (ds.domains.count(name)) throw std::invalid_argument("duplicate domain name: " + name);
    ds.domains.emplace(name, std::move(data));
  }
  for (const auto& [name, _] : ds.domains) ds.domain_names.push_back(name);
  ds.validate();
  return ds;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_csv_dataset(const MultiDomainDataset& dataset, const fs::path& root) {
  dataset.validate();
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw DataError("cannot create " + root.string() + ": " + ec.message());
  for (const auto& [dom, data] : dataset.domains) {
    fs::create_directories(root / dom, ec);
    if (ec) throw DataError("cannot create " + (root / dom).string() + ": " + ec.message());
    for (int ci = 0; ci < dataset.num_classes(); ++ci) {
      fs::path file = root / dom / (dataset.class_names[ci] + ".csv");
      std::ofstream out(file);
      if (!out) throw DataError("cannot write " + file.string());
      for (int i = 0; i < data.size(); ++i) {
        if (data.labels[i] != ci) continue;
        for (int k = 0; k < dataset.input_dim; ++k) {
          if (k) out << ',';
          out << format_double(data.inputs.at(i, k));
        }
        out << '\n';
      }
      if (!out) throw DataError("write failed for " + file.string());
    }
  }
  std::ofstream man(root / "manifest.txt");
  if (!man) throw DataError("cannot write manifest in " + root.string());
  man << "format_version = 1\n";
  man << "input_dim = " << dataset.input_dim << "\n";
  man << "domains = ";
  for (size_t i = 0; i < dataset.domain_names.size(); ++i)
    man << (i ? "," : "") << dataset.domain_names[i];
  man << "\nclasses = ";
  for (size_t i = 0; i < dataset.class_names.size(); ++i)
    man << (i ? "," : "") << dataset.class_names[i];
  man << "\n";
}

MultiDomainDataset load_csv_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " is not a directory");
  std::vector<std::string> domain_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) domain_dirs.push_back(e.path().filename().string());
  std::sort(domain_dirs.begin(), domain_dirs.end());
  if (domain_dirs.empty()) throw DataError("no domain directories under " + root.string());

  // classes discovered from the union of csv file stems, lexicographic
  std::set<std::string> class_set;
  for (const auto& dom : domain_dirs)
    for (const auto& e : fs::directory_iterator(root / dom))
      if (e.is_regular_file() && e.path().extension() == ".csv")
        class_set.insert(e.path().stem().string());
  if (class_set.size() < 2)
    throw DataError("fewer than 2 classes found under " + root.string());

  MultiDomainDataset ds;
  ds.class_names.assign(class_set.begin(), class_set.end());
  ds.domain_names = domain_dirs;
  int width = -1;

  for (const auto& dom : domain_dirs) {
    std::vector<double> values;
    std::vector<int> labels;
    int rows = 0;
    for (int ci = 0; ci < int(ds.class_names.size()); ++ci) {
      fs::path file = root / dom / (ds.class_names[ci] + ".csv");
      if (!fs::exists(file)) continue;
      std::ifstream in(file);
      if (!in) throw DataError("cannot read " + file.string());
      std::string line;
      int lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        size_t pos = 0;
        while (pos <= line.size()) {
          size_t comma = line.find(',', pos);
          std::string_view cell(line.data() + pos,
                                (comma == std::string::npos ? line.size() : comma) - pos);
          double v = 0;
          auto [p, errc] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
          if (errc != std::errc() || p != cell.data() + cell.size())
            throw DataError(file.string() + ":" + std::to_string(lineno) +
                            ": non-numeric cell '" + std::string(cell) + "'");
          row.push_back(v);
          if (comma == std::string::npos) break;
          pos = comma + 1;
        }
        if (width == -1) width = int(row.size());
        if (int(row.size()) != width)
          throw DataError(file.string() + ":" + std::to_string(lineno) + ": ragged row (" +
                          std::to_string(row.size()) + " cells, expected " +
                          std::to_string(width) + ")");
        values.insert(values.end(), row.begin(), row.end());
        labels.push_back(ci);
        ++rows;
      }
    }
    if (rows == 0) throw DataError("domain " + dom + " is empty");
    DomainData data;
    data.inputs = Tensor<double>(rows, width);
    data.inputs.data = std::move(values);
    data.labels = std::move(labels);
    ds.domains.emplace(dom, std::move(data));
  }
  ds.input_dim = width;

  fs::path manifest = root / "manifest.txt";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    std::string line;
    while (std::getline(in, line)) {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto trim = [](std::string s) {
        size_t a = s.find_first_not_of(" \t\r");
        size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
      if (key == "input_dim" && std::stoi(value) != ds.input_dim)
        throw DataError("manifest input_dim " + value + " does not match data (" +
                        std::to_string(ds.input_dim) + ")");
    }
  }
  ds.validate();
  return ds;
}

SplitProtocol parse_protocol(const std::string& s) {
  if (s == "full_target") return SplitProtocol::full_target;
  if (s == "vlcs_70_30") return SplitProtocol::vlcs_70_30;
  throw std::invalid_argument("unknown protocol: " + s);
}

std::string to_string(SplitProtocol p) {
  return p == SplitProtocol::full_target ? "full_target" : "vlcs_70_30";
}

std::vector<std::string> SplitPlan::source_names() const {
  std::vector<std::string> names;
  for (const auto& [n, _] : sources) names.push_back(n);
  return names;
}

SplitPlan make_lodo_splits(const MultiDomainDataset& dataset, const std::string& target_domain,
                           SplitProtocol protocol, uint64_t seed) {
  if (!dataset.domains.count(target_domain))
    throw std::invalid_argument("unknown target domain: " + target_domain);
  SplitPlan plan;
  plan.target_domain = target_domain;
  plan.protocol = protocol;
  for (const auto& name : dataset.domain_names) {
    if (name == target_domain) continue;
    const DomainData& d = dataset.domain(name);
    std::vector<int> idx(d.size());
    for (int i = 0; i < d.size(); ++i) idx[i] = i;
    SourceSplit split;
    if (protocol == SplitProtocol::full_target) {
      split.train = std::move(idx);
    } else {
      Rng rng = Rng::stream(seed, "split/" + name);
      rng.shuffle(idx);
      size_t train_count = size_t(d.size()) * 7 / 10;
      split.train.assign(idx.begin(), idx.begin() + train_count);
      split.test.assign(idx.begin() + train_count, idx.end());
    }
    plan.sources.emplace(name, std::move(split));
  }
  if (plan.sources.empty())
    throw std::invalid_argument("target " + target_domain + " leaves no source domains");
  return plan;
}

BatchIterator::BatchIterator(const MultiDomainDataset& dataset, std::string domain,
                             std::vector<int> indices, int batch_size, uint64_t seed)
    : dataset_(&dataset),
      domain_(std::move(domain)),
      indices_(std::move(indices)),
      batch_size_(batch_size),
      rng_(seed) {
  if (indices_.empty()) throw std::invalid_argument("BatchIterator: empty index list");
  if (batch_size_ < 1) throw std::invalid_argument("BatchIterator: batch_size < 1");
  const DomainData& d = dataset_->domain(domain_);
  for (int i : indices_)
    if (i < 0 || i >= d.size())
      throw std::invalid_argument("BatchIterator: index out of range for " + domain_);
  rng_.shuffle(indices_);
}

Batch BatchIterator::next(int episode_domain_label) {
  const DomainData& d = dataset_->domain(domain_);
  size_t take = std::min(size_t(batch_size_), indices_.size() - cursor_);
  Batch b;
  b.inputs = Tensor<double>(int(take), dataset_->input_dim);
  b.class_labels.resize(take);
  b.domain_labels.assign(take, episode_domain_label);
  for (size_t i = 0; i < take; ++i) {
    int row = indices_[cursor_ + i];
    std::copy_n(&d.inputs.data[size_t(row) * dataset_->input_dim], dataset_->input_dim,
                &b.inputs.data[i * dataset_->input_dim]);
    b.class_labels[i] = d.labels[row];
  }
  cursor_ += take;
  draws_ += take;
  if (cursor_ >= indices_.size()) {
    cursor_ = 0;
    rng_.shuffle(indices_);
  }
  return b;
}

PooledIterator::PooledIterator(const MultiDomainDataset& dataset,
                               std::vector<std::pair<std::string, std::vector<int>>> parts,
                               int batch_size, uint64_t seed)
    : dataset_(&dataset), batch_size_(batch_size), rng_(seed) {
  for (auto& [dom, idx] : parts) {
    for (int i : idx) pool_.emplace_back(dom, i);
    domain_order_.push_back(dom);
  }
  if (pool_.empty()) throw std::invalid_argument("PooledIterator: empty pool");
  if (batch_size_ < 1) throw std::invalid_argument("PooledIterator: batch_size < 1");
  rng_.shuffle_items(pool_);
}

Batch PooledIterator::next() {
  size_t take = std::min(size_t(batch_size_), pool_.size() - cursor_);
  Batch b;
  b.inputs = Tensor<double>(int(take), dataset_->input_dim);
  b.class_labels.resize(take);
  b.domain_labels.assign(take, 0);
  for (size_t i = 0; i < take; ++i) {
    const auto& [dom, row] = pool_[cursor_ + i];
    const DomainData& d = dataset_->domain(dom);
    std::copy_n(&d.inputs.data[size_t(row) * dataset_->input_dim], dataset_->input_dim,
                &b.inputs.data[i * dataset_->input_dim]);
    b.class_labels[i] = d.labels[row];
    ++draw_counts_[dom];
  }
  cursor_ += take;
  if (cursor_ >= pool_.size()) {
    cursor_ = 0;
    rng_.shuffle_items(pool_);
  }
  return b;
}

}  // namespace dadg
