// gdod: experiment harness for gradient combiners on shared-bottom models.
//
//   gdod run --config cfg.json [--combiner gdod,sum] [--seed-list 1,2,3]
//   gdod compare --baseline sum --inputs a/report.json b/report.json --out table.csv
//   gdod descent-check --gamma 0.1 [--steps 500 --seed 1 --dim 8 --isotropic]
//   gdod gen-data --spec spec.json --out data.csv
//
// Exit codes: 0 ok, 1 runtime failure (or every seed failed), 2 config error,
// 3 failed descent check. GDOD_OUTPUT_DIR overrides the configured output dir.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gdod/data.hpp"
#include "gdod/errors.hpp"
#include "gdod/experiment.hpp"

namespace {

using nlohmann::json;

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitCheckFailed = 3;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw gdod::ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw gdod::ConfigError(path + ": " + e.what());
  }
}

struct RunOptions {
  std::string config_path;
  std::string combiners;
  std::string seed_list;
  std::string output_dir;
  std::optional<std::string> basis, mask_rule, profile, optimizer, loss_weighting;
  std::optional<std::size_t> groups, epochs, batch_size, threads;
  std::optional<double> cagrad_c, learning_rate, correlation;
  bool log_steps = false;
};

int cmd_run(const RunOptions& o) {
  json base = o.config_path.empty() ? json::object() : read_json(o.config_path);
  auto& comb = base["combiner"];
  if (comb.is_null()) comb = json::object();
  if (o.basis) comb["basis"] = *o.basis;
  if (o.mask_rule) comb["mask_rule"] = *o.mask_rule;
  if (o.groups) comb["groups"] = *o.groups;
  if (o.cagrad_c) comb["cagrad_c"] = *o.cagrad_c;
  if (o.profile) base["profile"] = *o.profile;
  if (o.loss_weighting) base["loss_weighting"] = *o.loss_weighting;
  if (o.epochs) base["epochs"] = *o.epochs;
  if (o.threads) base["threads"] = *o.threads;
  if (o.log_steps) base["log_steps"] = true;
  if (o.optimizer || o.learning_rate || o.batch_size) {
    auto& opt = base["optimizer"];
    if (opt.is_null()) opt = json::object();
    if (o.optimizer) opt["kind"] = *o.optimizer;
    if (o.learning_rate) opt["learning_rate"] = *o.learning_rate;
    if (o.batch_size) opt["batch_size"] = *o.batch_size;
  }
  if (o.correlation) {
    auto& ds = base["dataset"];
    if (ds.is_null()) ds = json::object();
    ds["correlation"] = *o.correlation;
  }
  if (!o.seed_list.empty()) {
    std::vector<std::uint64_t> seeds;
    for (const auto& s : split_list(o.seed_list)) {
      try {
        std::size_t used = 0;
        seeds.push_back(std::stoull(s, &used));
        if (used != s.size()) throw std::invalid_argument(s);
      } catch (const std::exception&) {
        throw gdod::ConfigError("bad seed '" + s + "'");
      }
    }
    base["seeds"] = seeds;
  }

  std::vector<json> configs;
  const auto names = split_list(o.combiners);
  if (names.empty()) {
    configs.push_back(base);
  } else {
    for (const auto& name : names) {
      json c = base;
      c["combiner"]["name"] = name;
      if (names.size() > 1) c.erase("label");
      configs.push_back(std::move(c));
    }
  }

  std::vector<gdod::ExperimentConfig> parsed;
  for (const auto& c : configs) parsed.push_back(gdod::parse_config(c));

  bool any_failed_all = false;
  for (auto& config : parsed) {
    if (const char* env = std::getenv("GDOD_OUTPUT_DIR"); env && *env) config.output_dir = env;
    if (!o.output_dir.empty()) config.output_dir = o.output_dir;
    const gdod::ExperimentReport report = gdod::run_experiment(config);
    const auto dir = gdod::write_report(report, config.output_dir);
    std::cout << report.label << ": " << report.successful_runs() << "/" << report.runs.size()
              << " seeds ok";
    const auto auc = report.final_auc_mean();
    for (std::size_t k = 0; k < auc.size(); ++k) std::cout << "  auc" << k + 1 << "=" << auc[k];
    std::cout << "  -> " << dir.string() << "\n";
    for (const auto& r : report.runs)
      if (!r.ok) std::cerr << "seed " << r.seed << " failed: " << r.failure << "\n";
    if (report.successful_runs() == 0) any_failed_all = true;
  }
  return any_failed_all ? kExitFailure : 0;
}

int cmd_compare(const std::string& baseline, const std::vector<std::string>& inputs,
                const std::string& out_path) {
  std::vector<json> reports;
  for (const auto& path : inputs) reports.push_back(read_json(path));
  const gdod::ComparisonTable table = gdod::compare_reports(reports, baseline);
  const std::string csv = table.to_csv();
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw gdod::Error("cannot write " + out_path);
    out << csv;
  }
  return 0;
}

int cmd_descent_check(std::optional<double> gamma, std::size_t steps, std::uint64_t seed,
                      std::size_t dim, bool isotropic, const std::string& rule) {
  const gdod::QuadraticProblem problem = gdod::make_quadratic(dim, seed, isotropic);
  const gdod::DescentTrace trace =
      gdod::descent_check(problem, gamma, steps, gdod::parse_mask_rule(rule));
  double min_slack = 0.0;
  if (!trace.slack.empty()) min_slack = *std::min_element(trace.slack.begin(), trace.slack.end());
  std::cout << "L=" << trace.lipschitz << " gamma=" << trace.gamma << " steps=" << steps
            << " loss " << trace.losses.front() << " -> " << trace.losses.back()
            << " min_slack=" << min_slack << "\n"
            << "descent " << (trace.descent_holds ? "ok" : "VIOLATED") << ", monotone "
            << (trace.monotone ? "ok" : "VIOLATED") << ", stationarity "
            << (trace.stationarity_bound_holds ? "ok" : "VIOLATED") << "\n";
  std::cout << (trace.passed() ? "PASS" : "FAIL") << "\n";
  return trace.passed() ? 0 : kExitCheckFailed;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_path) {
  const json j = read_json(spec_path);
  gdod::SyntheticSpec spec;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "samples") spec.samples = value.get<std::size_t>();
      else if (key == "features") spec.features = value.get<std::size_t>();
      else if (key == "tasks") spec.tasks = value.get<std::size_t>();
      else if (key == "correlation") spec.correlation = value.get<double>();
      else if (key == "nonlinearity") spec.nonlinearity = value.get<double>();
      else if (key == "logit_scale") spec.logit_scale = value.get<double>();
      else if (key == "seed") spec.seed = value.get<std::uint64_t>();
      else throw gdod::ConfigError("unknown key '" + key + "' in data spec");
    }
  } catch (const json::exception& e) {
    throw gdod::ConfigError(std::string("data spec: ") + e.what());
  }
  gdod::MultiTaskDataset data;
  try {
    data = gdod::generate_synthetic(spec);
  } catch (const gdod::InvalidInput& e) {
    throw gdod::ConfigError(e.what());
  }
  gdod::write_csv(data, out_path);
  std::cout << "wrote " << data.size() << " rows to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient combiners for multi-task shared-bottom models"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Train every seed of an experiment and write reports");
  run_cmd->add_option("--config", run.config_path, "JSON experiment config");
  run_cmd->add_option("--combiner", run.combiners, "Combiner name(s), comma separated");
  run_cmd->add_option("--seed-list", run.seed_list, "Seeds, comma separated");
  run_cmd->add_option("--output-dir", run.output_dir, "Output directory");
  run_cmd->add_option("--basis", run.basis, "svd | qr | random | randdec");
  run_cmd->add_option("--mask-rule", run.mask_rule, "all_agree | literal_product");
  run_cmd->add_option("--groups", run.groups, "Gradient groups G");
  run_cmd->add_option("--cagrad-c", run.cagrad_c, "CAGrad radius c");
  run_cmd->add_option("--profile", run.profile, "desk | paper");
  run_cmd->add_option("--loss-weighting", run.loss_weighting, "fixed | uncertainty");
  run_cmd->add_option("--optimizer", run.optimizer, "sgd | adam");
  run_cmd->add_option("--learning-rate", run.learning_rate, "Step size");
  run_cmd->add_option("--batch-size", run.batch_size, "Mini-batch size");
  run_cmd->add_option("--epochs", run.epochs, "Training epochs");
  run_cmd->add_option("--correlation", run.correlation, "Synthetic task correlation");
  run_cmd->add_option("--threads", run.threads, "Parallel seeds (0: one per seed)");
  run_cmd->add_flag("--log-steps", run.log_steps, "Also write per-step diagnostics");

  std::string baseline = "sum";
  std::vector<std::string> inputs;
  std::string table_out;
  auto* cmp_cmd = app.add_subcommand("compare", "Tabulate final AUC and gain over a baseline");
  cmp_cmd->add_option("--baseline", baseline, "Baseline label");
  cmp_cmd->add_option("--inputs", inputs, "report.json files")->required();
  cmp_cmd->add_option("--out", table_out, "Output CSV (stdout if absent)");

  std::optional<double> gamma;
  std::size_t steps = 500;
  std::uint64_t seed = 1;
  std::size_t dim = 8;
  bool isotropic = false;
  std::string rule = "all_agree";
  auto* dc_cmd = app.add_subcommand("descent-check", "Verify the per-step descent bound on a quadratic");
  dc_cmd->add_option("--gamma", gamma, "Step size (default 1/L)");
  dc_cmd->add_option("--steps", steps, "Steps");
  dc_cmd->add_option("--seed", seed, "Problem seed");
  dc_cmd->add_option("--dim", dim, "Parameter dimension");
  dc_cmd->add_option("--mask-rule", rule, "all_agree | literal_product");
  dc_cmd->add_flag("--isotropic", isotropic, "A_i = I with opposite centres");

  std::string spec_path, data_out;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic dataset as CSV");
  gen_cmd->add_option("--spec", spec_path, "JSON generator spec")->required();
  gen_cmd->add_option("--out", data_out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*cmp_cmd) return cmd_compare(baseline, inputs, table_out);
    if (*dc_cmd) return cmd_descent_check(gamma, steps, seed, dim, isotropic, rule);
    if (*gen_cmd) return cmd_gen_data(spec_path, data_out);
  } catch (const gdod::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const gdod::InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return 0;
}
