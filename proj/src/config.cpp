#include "dadg/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "dadg/errors.hpp"

namespace dadg {

namespace {

std::string trim(std::string_view s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string_view::npos) return {};
  size_t b = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(a, b - a + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= s.size()) {
    size_t next = s.find(sep, pos);
    out.push_back(trim(s.substr(pos, (next == std::string::npos ? s.size() : next) - pos)));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

long long to_int(const std::string& key, const std::string& v) {
  long long x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

DomainSpec& domain_at(SyntheticSpec& spec, size_t i) {
  if (spec.domains.size() <= i) spec.domains.resize(i + 1);
  return spec.domains[i];
}

struct KeyEntry {
  std::string help;
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::map<std::string, KeyEntry>& key_table() {
  static const std::map<std::string, KeyEntry> table = [] {
    std::map<std::string, KeyEntry> t;
    auto add = [&](const std::string& key, const std::string& help, auto set, auto get) {
      t[key] = KeyEntry{help, set, get};
    };

    add("config_version", "config grammar version (must be 1)",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.config_version = int(to_int(k, v));
          if (c.config_version != 1) throw ConfigError(k + ": unsupported version " + v);
        },
        [](const RunConfig& c) { return std::to_string(c.config_version); });

    add("dataset.kind", "synthetic | csv",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "synthetic") c.dataset.kind = DatasetKind::synthetic;
          else if (v == "csv") c.dataset.kind = DatasetKind::csv;
          else throw ConfigError(k + ": expected synthetic|csv, got '" + v + "'");
        },
        [](const RunConfig& c) {
          return c.dataset.kind == DatasetKind::synthetic ? "synthetic" : "csv";
        });
    add("dataset.csv_root", "root directory of a csv dataset",
        [](RunConfig& c, const std::string&, const std::string& v) { c.dataset.csv_root = v; },
        [](const RunConfig& c) { return c.dataset.csv_root; });
    add("dataset.family", "rotated_moons | spurious_shift",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          try {
            c.dataset.synthetic.family = parse_family(v);
          } catch (const std::invalid_argument& e) {
            throw ConfigError(k + ": " + e.what());
          }
        },
        [](const RunConfig& c) { return to_string(c.dataset.synthetic.family); });
    add("dataset.samples_per_domain", "examples generated per domain",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.dataset.synthetic.samples_per_domain = int(to_int(k, v));
        },
        [](const RunConfig& c) { return std::to_string(c.dataset.synthetic.samples_per_domain); });
    add("dataset.noise_sigma", "gaussian noise level",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.dataset.synthetic.noise_sigma = to_double(k, v);
        },
        [](const RunConfig& c) { return fmt(c.dataset.synthetic.noise_sigma); });
    add("dataset.input_dim", "flattened feature count (0 = family minimum)",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.dataset.synthetic.input_dim = int(to_int(k, v));
        },
        [](const RunConfig& c) { return std::to_string(c.dataset.synthetic.input_dim); });
    add("dataset.signal_gain", "spurious_shift: class-signed displacement magnitude",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.dataset.synthetic.signal_gain = to_double(k, v);
        },
        [](const RunConfig& c) { return fmt(c.dataset.synthetic.signal_gain); });
    add("dataset.class_separation", "spurious_shift: class blob half-distance",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.dataset.synthetic.class_separation = to_double(k, v);
        },
        [](const RunConfig& c) { return fmt(c.dataset.synthetic.class_separation); });
    add("dataset.seed", "generator seed",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.dataset.synthetic.seed = uint64_t(to_int(k, v));
        },
        [](const RunConfig& c) { return std::to_string(c.dataset.synthetic.seed); });
    add("dataset.domain_names", "comma-separated domain names",
        [](RunConfig& c, const std::string&, const std::string& v) {
          auto parts = split(v, ',');
          for (size_t i = 0; i < parts.size(); ++i)
            domain_at(c.dataset.synthetic, i).name = parts[i];
          if (parts.size() < c.dataset.synthetic.domains.size())
            c.dataset.synthetic.domains.resize(parts.size());
        },
        [](const RunConfig& c) {
          std::vector<std::string> parts;
          for (size_t i = 0; i < c.dataset.synthetic.domains.size(); ++i) {
            const auto& n = c.dataset.synthetic.domains[i].name;
            parts.push_back(n.empty() ? "d" + std::to_string(i) : n);
          }
          return join(parts, ",");
        });
    add("dataset.domain_angles", "rotated_moons: per-domain rotation in degrees",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          auto parts = split(v, ',');
          for (size_t i = 0; i < parts.size(); ++i)
            domain_at(c.dataset.synthetic, i).angle_deg = to_double(k, parts[i]);
        },
        [](const RunConfig& c) {
          std::vector<std::string> parts;
          for (const auto& d : c.dataset.synthetic.domains) parts.push_back(fmt(d.angle_deg));
          return join(parts, ",");
        });
    add("dataset.domain_offsets", "spurious_shift: per-domain 'x y' offsets, ';'-separated",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          auto parts = split(v, ';');
          for (size_t i = 0; i < parts.size(); ++i) {
            std::istringstream ss(parts[i]);
            double x, y;
            if (!(ss >> x >> y)) throw ConfigError(k + ": expected 'x y' pair, got '" + parts[i] + "'");
            std::string rest;
            if (ss >> rest) throw ConfigError(k + ": trailing content in '" + parts[i] + "'");
            domain_at(c.dataset.synthetic, i).offset = {x, y};
          }
        },
        [](const RunConfig& c) {
          std::vector<std::string> parts;
          for (const auto& d : c.dataset.synthetic.domains)
            parts.push_back(fmt(d.offset[0]) + " " + fmt(d.offset[1]));
          return join(parts, "; ");
        });
    add("dataset.domain_correlations", "spurious_shift: per-domain class correlations",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          auto parts = split(v, ',');
          for (size_t i = 0; i < parts.size(); ++i)
            domain_at(c.dataset.synthetic, i).correlation = to_double(k, parts[i]);
        },
        [](const RunConfig& c) {
          std::vector<std::string> parts;
          for (const auto& d : c.dataset.synthetic.domains) parts.push_back(fmt(d.correlation));
          return join(parts, ",");
        });

    add("model.feature_dim", "extractor output width (0 = input_dim)",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.model.feature_dim = int(to_int(k, v));
        },
        [](const RunConfig& c) { return std::to_string(c.model.feature_dim); });
    add("model.extractor_hidden", "comma-separated hidden widths (empty = linear)",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.model.extractor_hidden.clear();
          for (const auto& p : split(v, ',')) c.model.extractor_hidden.push_back(int(to_int(k, p)));
        },
        [](const RunConfig& c) {
          std::vector<std::string> parts;
          for (int w : c.model.extractor_hidden) parts.push_back(std::to_string(w));
          return join(parts, ",");
        });
    add("model.disc_hidden", "comma-separated discriminator hidden widths",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.model.disc_hidden.clear();
          for (const auto& p : split(v, ',')) c.model.disc_hidden.push_back(int(to_int(k, p)));
        },
        [](const RunConfig& c) {
          std::vector<std::string> parts;
          for (int w : c.model.disc_hidden) parts.push_back(std::to_string(w));
          return join(parts, ",");
        });

    auto add_hyper = [&](const std::string& key, const std::string& help, double HyperParams::*field) {
      add(key, help,
          [field](RunConfig& c, const std::string& k, const std::string& v) {
            c.hyper.*field = to_double(k, v);
          },
          [field](const RunConfig& c) { return fmt(c.hyper.*field); });
    };
    add_hyper("hyper.alpha", "adversarial step size", &HyperParams::alpha);
    add_hyper("hyper.beta", "inner step size", &HyperParams::beta);
    add_hyper("hyper.gamma", "outer step size", &HyperParams::gamma);
    add_hyper("hyper.lambda", "gradient reversal coefficient", &HyperParams::lambda);
    add_hyper("hyper.momentum", "sgd momentum", &HyperParams::momentum);
    add_hyper("hyper.weight_decay", "sgd weight decay", &HyperParams::weight_decay);
    auto add_hyper_int = [&](const std::string& key, const std::string& help, int HyperParams::*field) {
      add(key, help,
          [field](RunConfig& c, const std::string& k, const std::string& v) {
            c.hyper.*field = int(to_int(k, v));
          },
          [field](const RunConfig& c) { return std::to_string(c.hyper.*field); });
    };
    add_hyper_int("hyper.iterations", "training iterations", &HyperParams::iterations);
    add_hyper_int("hyper.batch_dal", "adversarial batch size per domain", &HyperParams::batch_dal);
    add_hyper_int("hyper.batch_cdv", "meta-validation batch size", &HyperParams::batch_cdv);
    add("hyper.outer_mode", "combined | literal | first_order",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          try {
            c.hyper.outer_mode = parse_outer_mode(v);
          } catch (const std::invalid_argument& e) {
            throw ConfigError(k + ": " + e.what());
          }
        },
        [](const RunConfig& c) { return to_string(c.hyper.outer_mode); });
    add("hyper.momentum_psi", "momentum + weight decay on the discriminator update",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.hyper.momentum_psi = to_bool(k, v);
        },
        [](const RunConfig& c) { return c.hyper.momentum_psi ? "true" : "false"; });
    add("hyper.momentum_outer", "momentum + weight decay on the classifier-path updates",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.hyper.momentum_outer = to_bool(k, v);
        },
        [](const RunConfig& c) { return c.hyper.momentum_outer ? "true" : "false"; });

    add("run.variants", "comma-separated: dadg,deepall,dadg_dal,dadg_cdv",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.variants.clear();
          for (const auto& p : split(v, ',')) {
            try {
              c.variants.push_back(parse_variant(p));
            } catch (const std::invalid_argument& e) {
              throw ConfigError(k + ": " + e.what());
            }
          }
        },
        [](const RunConfig& c) {
          std::vector<std::string> parts;
          for (auto v : c.variants) parts.push_back(to_string(v));
          return join(parts, ",");
        });
    add("run.targets", "target domains, comma-separated; empty or 'all' = rotate over every domain",
        [](RunConfig& c, const std::string&, const std::string& v) {
          c.targets = (v == "all") ? std::vector<std::string>{} : split(v, ',');
        },
        [](const RunConfig& c) { return c.targets.empty() ? "all" : join(c.targets, ","); });
    add("run.seeds", "run seeds, comma-separated; empty = 1..repetitions",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.seeds.clear();
          for (const auto& p : split(v, ',')) c.seeds.push_back(uint64_t(to_int(k, p)));
        },
        [](const RunConfig& c) {
          std::vector<std::string> parts;
          for (auto s : c.seeds) parts.push_back(std::to_string(s));
          return join(parts, ",");
        });
    add("run.repetitions", "repetition count when run.seeds is empty",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.repetitions = int(to_int(k, v));
        },
        [](const RunConfig& c) { return std::to_string(c.repetitions); });
    add("run.protocol", "full_target | vlcs_70_30",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          try {
            c.protocol = parse_protocol(v);
          } catch (const std::invalid_argument& e) {
            throw ConfigError(k + ": " + e.what());
          }
        },
        [](const RunConfig& c) { return to_string(c.protocol); });
    add("run.out_dir", "output directory (env DADG_OUT_DIR overrides the default)",
        [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; },
        [](const RunConfig& c) { return c.out_dir; });
    add("run.precision", "double | float32",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "double" || v == "f64" || v == "float64") c.precision = Precision::f64;
          else if (v == "float32" || v == "f32" || v == "single") c.precision = Precision::f32;
          else throw ConfigError(k + ": expected double|float32, got '" + v + "'");
        },
        [](const RunConfig& c) { return c.precision == Precision::f64 ? "double" : "float32"; });
    add("run.jobs", "parallel training workers for `experiment`",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.jobs = int(to_int(k, v));
        },
        [](const RunConfig& c) { return std::to_string(c.jobs); });

    add("report.formats", "csv,json,markdown",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.report.formats.clear();
          for (const auto& p : split(v, ',')) {
            if (p != "csv" && p != "json" && p != "markdown")
              throw ConfigError(k + ": unknown format '" + p + "'");
            c.report.formats.insert(p);
          }
        },
        [](const RunConfig& c) {
          return join({c.report.formats.begin(), c.report.formats.end()}, ",");
        });
    add("report.loss_curves", "write per-run loss curve csv files",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.report.loss_curves = to_bool(k, v);
        },
        [](const RunConfig& c) { return c.report.loss_curves ? "true" : "false"; });

    return t;
  }();
  return table;
}

}  // namespace

SyntheticSpec default_benchmark_spec() {
  SyntheticSpec spec;
  spec.family = SyntheticFamily::spurious_shift;
  spec.samples_per_domain = 512;
  spec.noise_sigma = 0.55;
  spec.signal_gain = 2.2;
  spec.class_separation = 0.55;
  spec.input_dim = 4;
  spec.seed = 20240101;
  spec.domains = {
      {"d0", 0.0, {0.0, 0.0}, 0.95},
      {"d1", 0.0, {1.5, 0.0}, 0.95},
      {"d2", 0.0, {3.0, 0.0}, 0.85},
      {"d3", 0.0, {1.5, 0.0}, 0.02},
  };
  return spec;
}

std::vector<uint64_t> RunConfig::resolved_seeds() const {
  if (!seeds.empty()) return seeds;
  std::vector<uint64_t> out;
  for (int i = 1; i <= repetitions; ++i) out.push_back(uint64_t(i));
  return out;
}

void RunConfig::validate() const {
  if (dataset.kind == DatasetKind::csv && dataset.csv_root.empty())
    throw ConfigError("dataset.csv_root: required when dataset.kind = csv (missing dataset)");
  if (dataset.kind == DatasetKind::synthetic && dataset.synthetic.domains.empty())
    throw ConfigError("dataset.domain_names: synthetic dataset has no domains (missing dataset)");
  if (variants.empty()) throw ConfigError("run.variants: at least one variant required");
  if (repetitions < 1 && seeds.empty())
    throw ConfigError("run.repetitions: must be >= 1 when run.seeds is empty");
  if (jobs < 1) throw ConfigError("run.jobs: must be >= 1");
  try {
    hyper.validate();
    if (dataset.kind == DatasetKind::synthetic) dataset.synthetic.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

static RunConfig default_config() {
  RunConfig c;
  c.dataset.synthetic = default_benchmark_spec();
  if (const char* env = std::getenv("DADG_OUT_DIR"); env && *env) c.out_dir = env;
  return c;
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig config = default_config();
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) continue;
    auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" +
                        stripped + "'");
    std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    apply_override(config, key, value);
  }
  return config;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void apply_override(RunConfig& config, const std::string& key, const std::string& value) {
  auto it = key_table().find(key);
  if (it == key_table().end()) throw ConfigError("unknown key: " + key);
  it->second.set(config, key, value);
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const auto& [key, entry] : key_table()) {
    out += key;
    out += " = ";
    out += entry.get(config);
    out += "\n";
  }
  return out;
}

std::string config_hash(const RunConfig& config) {
  std::string text = serialize_config(config);
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::pair<std::string, std::string>> config_key_help() {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [key, entry] : key_table()) out.emplace_back(key, entry.help);
  return out;
}

MultiDomainDataset build_dataset(const DatasetConfig& config) {
  if (config.kind == DatasetKind::csv) return load_csv_dataset(config.csv_root);
  return generate_synthetic(config.synthetic);
}

}  // namespace dadg
