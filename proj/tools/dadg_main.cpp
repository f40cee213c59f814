// Command line front end: dataset generation, single training runs, experiment
// grids, gradient checking and report re-emission.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dadg/config.hpp"
#include "dadg/errors.hpp"
#include "dadg/eval.hpp"
#include "dadg/meta.hpp"
#include "dadg/model.hpp"
#include "dadg/trainer.hpp"

namespace fs = std::filesystem;
using namespace dadg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitDivergence = 2;
constexpr int kExitIo = 3;

struct ConfigCli {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
};

// Registers --config plus one flag per config key (e.g. --hyper.gamma 0).
void add_config_options(CLI::App* cmd, ConfigCli& cli) {
  cmd->add_option("-c,--config", cli.config_path, "config file (flat key = value lines)");
  for (const auto& [key, help] : config_key_help()) {
    cmd->add_option_function<std::string>(
        "--" + key, [&cli, key = key](const std::string& v) { cli.overrides.emplace_back(key, v); },
        help);
  }
}

RunConfig resolve_config(const ConfigCli& cli) {
  RunConfig config =
      cli.config_path.empty() ? parse_config_text("") : parse_config_file(cli.config_path);
  for (const auto& [k, v] : cli.overrides) apply_override(config, k, v);
  config.validate();
  return config;
}

int cmd_gen_data(const ConfigCli& cli, const std::string& out) {
  RunConfig config = resolve_config(cli);
  MultiDomainDataset ds = build_dataset(config.dataset);
  save_csv_dataset(ds, out);
  std::cout << "wrote " << ds.domain_names.size() << " domains x " << ds.num_classes()
            << " classes (input_dim " << ds.input_dim << ") to " << out << "\n";
  return kExitOk;
}

int cmd_train(const ConfigCli& cli, const std::string& variant_name, const std::string& target,
              uint64_t seed) {
  RunConfig config = resolve_config(cli);
  config.variants = {parse_variant(variant_name)};
  if (!target.empty()) config.targets = {target};
  config.seeds = {seed};
  ResultTable table = run_experiment(config);
  for (const auto& r : table.rows) {
    if (r.failed) {
      std::cout << r.variant << " target=" << r.target << " seed=" << r.seed
                << " FAILED: " << r.error << "\n";
      return kExitDivergence;
    }
    std::printf("%s target=%s seed=%llu accuracy=%.4f disc=%.4f loss_F=%.4g loss_G=%.4g loss_H=%.4g\n",
                r.variant.c_str(), r.target.c_str(), (unsigned long long)r.seed, r.accuracy,
                r.disc_accuracy, r.loss_f, r.loss_g, r.loss_h);
  }
  std::set<ReportFormat> formats;
  for (const auto& f : config.report.formats) formats.insert(parse_format(f));
  for (const auto& p : emit_report(table, config.out_dir, formats))
    std::cout << "wrote " << p.string() << "\n";
  return kExitOk;
}

int cmd_experiment(const ConfigCli& cli) {
  RunConfig config = resolve_config(cli);
  ResultTable table = run_experiment(config);
  int failures = 0;
  for (const auto& r : table.rows)
    if (r.failed) {
      ++failures;
      std::cout << "run failed: " << r.variant << "/" << r.target << "/" << r.seed << ": "
                << r.error << "\n";
    }
  for (const auto& a : table.aggregates)
    std::printf("%-10s target=%-8s n=%d accuracy=%.4f +- %.4f\n", a.variant.c_str(),
                a.target.c_str(), a.count, a.mean_accuracy, a.stddev_accuracy);
  std::set<ReportFormat> formats;
  for (const auto& f : config.report.formats) formats.insert(parse_format(f));
  for (const auto& p : emit_report(table, config.out_dir, formats))
    std::cout << "wrote " << p.string() << "\n";
  return failures == 0 ? kExitOk : kExitDivergence;
}

int cmd_check_grads(uint64_t seed) {
  // first-order checks on a small model, then the meta-gradient check
  ArchSpec arch;
  arch.input_dim = 3;
  arch.feature_dim = 3;
  arch.extractor_hidden = {4};
  arch.num_classes = 2;
  arch.disc_hidden = {4};
  bool ok = true;

  ModelParams model = init_model(arch, seed);
  Rng rng = Rng::stream(seed, "check");
  const int n = 6;
  Batch batch;
  // redraw until clear of ReLU kinks so finite differences are trustworthy
  for (int attempt = 0; attempt < 100; ++attempt) {
    batch.inputs = Tensor<double>(n, arch.input_dim);
    for (auto& x : batch.inputs.data) x = rng.normal();
    batch.class_labels.resize(n);
    for (auto& y : batch.class_labels) y = int(rng.uniform_int(arch.num_classes));
    batch.domain_labels.resize(n);
    for (auto& y : batch.domain_labels) y = int(rng.uniform_int(2));
    Tensor<double> feats = forward_features(model.theta, batch.inputs);
    double margin = std::min(min_abs_preactivation(model.theta, batch.inputs),
                             min_abs_preactivation(model.psi, feats));
    if (margin > 1e-3) break;
  }

  auto fd_check = [&](const char* name, ParamList<double>& params, auto loss_fn,
                      const ParamList<double>& analytic) {
    double max_rel = 0;
    for (auto& t : params)
      for (size_t j = 0; j < t.data.size(); ++j) {
        double save = t.data[j];
        t.data[j] = save + 1e-5;
        double up = loss_fn();
        t.data[j] = save - 1e-5;
        double down = loss_fn();
        t.data[j] = save;
        double fd = (up - down) / 2e-5;
        size_t ti = &t - params.data();
        double an = analytic[ti].data[j];
        double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
        max_rel = std::max(max_rel, rel);
      }
    bool pass = max_rel < 1e-4;
    ok = ok && pass;
    std::printf("%-28s max_rel_err=%.3e %s\n", name, max_rel, pass ? "OK" : "FAIL");
  };

  std::vector<Batch> cls_batches{batch};
  ClassGrads<double> cg = class_loss_grads<double>(model.theta, model.phi, cls_batches);
  auto class_loss = [&] {
    return primal(class_loss_grads<double>(model.theta, model.phi, cls_batches).loss);
  };
  fd_check("L_train grad theta", model.theta, class_loss, cg.d_theta);
  fd_check("L_train grad phi", model.phi, class_loss, cg.d_phi);

  DiscGrads<double> dg =
      disc_loss_grads(model.theta, model.psi, batch.inputs, batch.domain_labels);
  auto disc_loss = [&] {
    return primal(disc_loss_grads(model.theta, model.psi, batch.inputs, batch.domain_labels).loss);
  };
  fd_check("L_disc grad theta", model.theta, disc_loss, dg.d_theta);
  fd_check("L_disc grad psi", model.psi, disc_loss, dg.d_psi);

  for (double beta : {0.0, 5e-4, 0.05}) {
    MetaCheckReport rep = meta_gradient_check(arch, seed, 1e-5, beta);
    double tol = beta == 0.0 ? 1e-8 : 1e-4;
    bool pass = rep.max_rel_err < tol;
    ok = ok && pass;
    std::printf("meta-gradient beta=%-8g max_rel_err=%.3e (%d params) %s\n", beta,
                rep.max_rel_err, rep.checked_parameters, pass ? "OK" : "FAIL");
  }
  return ok ? kExitOk : kExitDivergence;
}

int cmd_report(const std::string& from, const std::string& out,
               const std::vector<std::string>& format_names) {
  ResultTable table = load_report(from);
  std::set<ReportFormat> formats;
  for (const auto& f : format_names) formats.insert(parse_format(f));
  if (formats.empty()) formats = {ReportFormat::csv, ReportFormat::json, ReportFormat::markdown};
  for (const auto& p : emit_report(table, out, formats)) std::cout << "wrote " << p.string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"domain-generalization training laboratory"};
  app.require_subcommand(1);

  ConfigCli gen_cli, train_cli, exp_cli;
  std::string gen_out = "dataset";
  std::string train_variant = "dadg", train_target;
  uint64_t train_seed = 1, check_seed = 7;
  std::string report_from, report_out = "runs";
  std::vector<std::string> report_formats;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset as csv");
  add_config_options(gen, gen_cli);
  gen->add_option("-o,--out", gen_out, "output directory");

  auto* tr = app.add_subcommand("train", "train a single run and report its accuracy");
  add_config_options(tr, train_cli);
  tr->add_option("--variant", train_variant, "dadg|deepall|dadg_dal|dadg_cdv");
  tr->add_option("--target", train_target, "target domain (default: first rotation entry)");
  tr->add_option("--seed", train_seed, "run seed");

  auto* ex = app.add_subcommand("experiment", "run the variants x targets x seeds grid");
  add_config_options(ex, exp_cli);

  auto* ck = app.add_subcommand("check-grads", "finite-difference gradient and meta-gradient checks");
  ck->add_option("--seed", check_seed, "model/batch seed");

  auto* rp = app.add_subcommand("report", "re-emit reports from a stored json table");
  rp->add_option("--from", report_from, "results_*.json file")->required();
  rp->add_option("-o,--out", report_out, "output directory");
  rp->add_option("--formats", report_formats, "csv,json,markdown")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_cli, gen_out);
    if (tr->parsed()) return cmd_train(train_cli, train_variant, train_target, train_seed);
    if (ex->parsed()) return cmd_experiment(exp_cli);
    if (ck->parsed()) return cmd_check_grads(check_seed);
    if (rp->parsed()) return cmd_report(report_from, report_out, report_formats);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const DataError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
