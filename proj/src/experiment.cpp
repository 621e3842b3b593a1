#include "gdod/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <charconv>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "gdod/errors.hpp"
#include "gdod/metrics.hpp"

namespace gdod {

using nlohmann::json;

std::size_t ExperimentConfig::task_count() const {
  return std::visit([](const auto& d) { return d.tasks; }, dataset);
}

namespace {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError(std::string("unknown key '") + key + "' in " + where);
}

template <class Fn>
auto translate(Fn&& fn) {
  try {
    return fn();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  reject_unknown(j,
                 {"dataset", "test_fraction", "profile", "combiner", "loss_weighting",
                  "task_weights", "optimizer", "epochs", "seeds", "output_dir", "log_steps",
                  "threads", "label"},
                 "config");
  ExperimentConfig c;

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    const auto kind = get_or<std::string>(d, "kind", "synthetic");
    if (kind == "synthetic") {
      reject_unknown(d, {"kind", "samples", "features", "tasks", "correlation", "nonlinearity",
                         "logit_scale"},
                     "dataset");
      SyntheticSpec s;
      s.samples = get_or(d, "samples", s.samples);
      s.features = get_or(d, "features", s.features);
      s.tasks = get_or(d, "tasks", s.tasks);
      s.correlation = get_or(d, "correlation", s.correlation);
      s.nonlinearity = get_or(d, "nonlinearity", s.nonlinearity);
      s.logit_scale = get_or(d, "logit_scale", s.logit_scale);
      c.dataset = s;
    } else if (kind == "csv") {
      reject_unknown(d, {"kind", "path", "features", "tasks"}, "dataset");
      CsvSource s;
      s.path = get_or<std::string>(d, "path", "");
      s.features = get_or<std::size_t>(d, "features", 0);
      s.tasks = get_or<std::size_t>(d, "tasks", 0);
      if (s.path.empty() || s.features == 0 || s.tasks == 0)
        throw ConfigError("csv dataset needs path, features and tasks");
      c.dataset = s;
    } else {
      throw ConfigError("unknown dataset kind '" + kind + "'");
    }
  }

  c.test_fraction = get_or(j, "test_fraction", c.test_fraction);
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0))
    throw ConfigError("test_fraction must lie in (0, 1)");
  c.profile = translate([&] { return parse_profile(get_or<std::string>(j, "profile", "desk")); });

  if (j.contains("combiner")) {
    const json& cj = j.at("combiner");
    reject_unknown(cj, {"name", "basis", "mask_rule", "groups", "cagrad_c", "cagrad_iters",
                        "fw_iters", "rel_cutoff", "random_rank", "randdec_target_rank",
                        "randdec_oversample"},
                   "combiner");
    CombinerConfig& k = c.combiner;
    k.kind = translate([&] { return parse_combiner(get_or<std::string>(cj, "name", "gdod")); });
    k.basis = translate([&] { return parse_basis_method(get_or<std::string>(cj, "basis", "svd")); });
    if (auto* r = std::get_if<RandomBasis>(&k.basis)) {
      if (cj.contains("random_rank") && !cj.at("random_rank").is_null())
        r->rank = get_or<std::size_t>(cj, "random_rank", 0);
    }
    if (auto* r = std::get_if<RandDecBasis>(&k.basis)) {
      if (cj.contains("randdec_target_rank") && !cj.at("randdec_target_rank").is_null())
        r->target_rank = get_or<std::size_t>(cj, "randdec_target_rank", 0);
      r->oversample = get_or(cj, "randdec_oversample", r->oversample);
    }
    k.mask_rule =
        translate([&] { return parse_mask_rule(get_or<std::string>(cj, "mask_rule", "all_agree")); });
    k.groups = get_or(cj, "groups", k.groups);
    k.cagrad_c = get_or(cj, "cagrad_c", k.cagrad_c);
    k.cagrad_iters = get_or(cj, "cagrad_iters", k.cagrad_iters);
    k.fw_iters = get_or(cj, "fw_iters", k.fw_iters);
    k.rel_cutoff = get_or(cj, "rel_cutoff", k.rel_cutoff);
  }
  if (c.combiner.groups == 0) throw ConfigError("groups must be >= 1");
  if (!(c.combiner.cagrad_c >= 0.0 && c.combiner.cagrad_c < 1.0))
    throw ConfigError("cagrad_c must lie in [0, 1)");
  if (!(c.combiner.rel_cutoff > 0.0 && c.combiner.rel_cutoff < 1.0))
    throw ConfigError("rel_cutoff must lie in (0, 1)");
  if (c.combiner.fw_iters == 0) throw ConfigError("fw_iters must be >= 1");

  const auto weighting = get_or<std::string>(j, "loss_weighting", "fixed");
  if (weighting == "uncertainty") c.uncertainty_weighting = true;
  else if (weighting != "fixed") throw ConfigError("unknown loss_weighting '" + weighting + "'");
  c.task_weights = get_or(j, "task_weights", c.task_weights);
  if (!c.task_weights.empty() && c.task_weights.size() != c.task_count())
    throw ConfigError("task_weights must have one entry per task");
  for (double w : c.task_weights)
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("task_weights must be nonnegative");

  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    reject_unknown(o, {"kind", "learning_rate", "batch_size"}, "optimizer");
    c.optimizer = translate([&] { return parse_optimizer(get_or<std::string>(o, "kind", "adam")); });
    c.learning_rate = get_or(o, "learning_rate", c.learning_rate);
    c.batch_size = get_or(o, "batch_size", c.batch_size);
  }
  if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate))
    throw ConfigError("learning_rate must be finite and >= 0");
  if (c.batch_size == 0) throw ConfigError("batch_size must be >= 1");

  c.epochs = get_or(j, "epochs", c.epochs);
  c.seeds = get_or(j, "seeds", c.seeds);
  if (c.seeds.empty()) throw ConfigError("seeds must be non-empty");
  c.output_dir = get_or(j, "output_dir", c.output_dir);
  c.log_steps = get_or(j, "log_steps", c.log_steps);
  c.threads = get_or(j, "threads", c.threads);
  c.label = get_or(j, "label", c.label);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  if (const auto* s = std::get_if<SyntheticSpec>(&c.dataset)) {
    j["dataset"] = {{"kind", "synthetic"},     {"samples", s->samples},
                    {"features", s->features}, {"tasks", s->tasks},
                    {"correlation", s->correlation}, {"nonlinearity", s->nonlinearity},
                    {"logit_scale", s->logit_scale}};
  } else {
    const auto& csv = std::get<CsvSource>(c.dataset);
    j["dataset"] = {{"kind", "csv"}, {"path", csv.path}, {"features", csv.features},
                    {"tasks", csv.tasks}};
  }
  j["test_fraction"] = c.test_fraction;
  j["profile"] = profile_name(c.profile);
  json k = {{"name", combiner_name(c.combiner.kind)},
            {"basis", basis_method_name(c.combiner.basis)},
            {"mask_rule", mask_rule_name(c.combiner.mask_rule)},
            {"groups", c.combiner.groups},
            {"cagrad_c", c.combiner.cagrad_c},
            {"cagrad_iters", c.combiner.cagrad_iters},
            {"fw_iters", c.combiner.fw_iters},
            {"rel_cutoff", c.combiner.rel_cutoff}};
  if (const auto* r = std::get_if<RandomBasis>(&c.combiner.basis)) {
    k["random_rank"] = r->rank ? json(*r->rank) : json(nullptr);
  }
  if (const auto* r = std::get_if<RandDecBasis>(&c.combiner.basis)) {
    k["randdec_target_rank"] = r->target_rank ? json(*r->target_rank) : json(nullptr);
    k["randdec_oversample"] = r->oversample;
  }
  j["combiner"] = k;
  j["loss_weighting"] = c.uncertainty_weighting ? "uncertainty" : "fixed";
  j["task_weights"] = c.task_weights;
  j["optimizer"] = {{"kind", optimizer_name(c.optimizer)},
                    {"learning_rate", c.learning_rate},
                    {"batch_size", c.batch_size}};
  j["epochs"] = c.epochs;
  j["seeds"] = c.seeds;
  j["log_steps"] = c.log_steps;
  j["label"] = run_label(c);
  return j;
}

std::string run_label(const ExperimentConfig& c) {
  if (!c.label.empty()) return c.label;
  std::string label = combiner_name(c.combiner.kind);
  const bool gdod_family =
      c.combiner.kind == CombinerKind::kGdod || c.combiner.kind == CombinerKind::kWeightedGdod;
  if (gdod_family && !std::holds_alternative<SvdBasis>(c.combiner.basis))
    label += "-" + basis_method_name(c.combiner.basis);
  if (c.uncertainty_weighting) label += "-uncert";
  return label;
}

namespace {

struct Splits {
  MultiTaskDataset train;
  MultiTaskDataset test;
};

Splits load_splits(const ExperimentConfig& config, std::uint64_t seed) {
  MultiTaskDataset data;
  if (const auto* s = std::get_if<SyntheticSpec>(&config.dataset)) {
    SyntheticSpec spec = *s;
    spec.seed = seed;
    data = generate_synthetic(spec);
  } else {
    const auto& csv = std::get<CsvSource>(config.dataset);
    data = load_csv(csv.path, csv.features, csv.tasks);
  }
  auto [train, test] = split(data, config.test_fraction, Rng(seed).derive(10).next_u64());
  return {std::move(train), std::move(test)};
}

Vector mean_losses(const SharedBottomModel& model, const MultiTaskDataset& data) {
  const auto probs = model.forward(data.features);
  Vector out;
  for (std::size_t k = 0; k < probs.size(); ++k)
    out.push_back(logloss(data.labels.column(k), probs[k]));
  return out;
}

void evaluate(const SharedBottomModel& model, const Splits& splits, EpochRecord& record) {
  record.train_loss = mean_losses(model, splits.train);
  const auto probs = model.forward(splits.test.features);
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const TaskMetrics m = evaluate_task(splits.test.labels.column(k), probs[k]);
    record.test_auc.push_back(m.auc);
    record.test_logloss.push_back(m.logloss);
  }
}

double mean_of(const Vector& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const Vector& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

SeedRun run_seed(const ExperimentConfig& config, std::uint64_t seed) {
  SeedRun run;
  run.seed = seed;
  try {
    const Splits splits = load_splits(config, seed);
    const std::size_t tasks = splits.train.task_count();
    const Rng root(seed);
    Rng init_rng = root.derive(20);
    Rng train_rng = root.derive(30);

    SharedBottomModel model(make_shape(config.profile, splits.train.feature_count(), tasks),
                            init_rng);
    LossWeights weights = config.uncertainty_weighting
                              ? LossWeights::uncertainty(tasks)
                              : LossWeights::fixed(config.task_weights.empty()
                                                       ? Vector(tasks, 1.0)
                                                       : config.task_weights);
    TrainingState state =
        TrainingState::make(std::move(model), config.optimizer, config.learning_rate, std::move(weights));

    EpochRecord initial;
    evaluate(state.model, splits, initial);
    run.epochs.push_back(std::move(initial));

    std::vector<std::size_t> order(splits.train.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
      train_rng.shuffle(std::span<std::size_t>(order));
      EpochRecord record;
      record.epoch = epoch;
      Vector mass, rank, update_norm;
      std::size_t step = 0;
      for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++step) {
        const std::size_t stop = std::min(order.size(), start + config.batch_size);
        const MultiTaskDataset batch =
            splits.train.subset(std::span<const std::size_t>(order).subspan(start, stop - start));
        StepDiagnostics diag =
            train_step(state, batch.features, batch.labels, config.combiner, train_rng);
        if (diag.shared_mass_fraction) {
          mass.push_back(*diag.shared_mass_fraction);
          rank.push_back(static_cast<double>(diag.subspace_rank));
        }
        update_norm.push_back(diag.update_norm);
        if (diag.empty_mask) ++record.empty_mask_steps;
        if (config.log_steps) run.steps.push_back({epoch, step, std::move(diag)});
      }
      if (!mass.empty()) {
        record.shared_mass_fraction = mean_of(mass);
        record.subspace_rank = mean_of(rank);
      }
      if (!update_norm.empty()) record.update_norm = mean_of(update_norm);
      evaluate(state.model, splits, record);
      for (double v : record.train_loss)
        if (!std::isfinite(v)) throw Error("training diverged (non-finite loss)");
      run.epochs.push_back(std::move(record));
    }
    run.ok = true;
  } catch (const std::exception& e) {
    run.ok = false;
    run.failure = e.what();
    run.epochs.clear();
    run.steps.clear();
  }
  return run;
}

std::size_t ExperimentReport::successful_runs() const {
  return static_cast<std::size_t>(
      std::count_if(runs.begin(), runs.end(), [](const SeedRun& r) { return r.ok; }));
}

Vector ExperimentReport::final_auc_mean() const {
  if (aggregate.empty()) return {};
  return aggregate.back().test_auc_mean;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.label = run_label(config);
  report.config = config;
  report.runs.resize(config.seeds.size());

  std::size_t threads = config.threads == 0 ? config.seeds.size() : config.threads;
  threads = std::max<std::size_t>(1, threads);
  for (std::size_t begin = 0; begin < config.seeds.size(); begin += threads) {
    const std::size_t end = std::min(config.seeds.size(), begin + threads);
    if (end - begin == 1) {
      report.runs[begin] = run_seed(config, config.seeds[begin]);
      continue;
    }
    std::vector<std::future<SeedRun>> pending;
    for (std::size_t i = begin; i < end; ++i)
      pending.push_back(std::async(std::launch::async, run_seed, std::cref(config), config.seeds[i]));
    for (std::size_t i = begin; i < end; ++i) report.runs[i] = pending[i - begin].get();
  }

  std::vector<const SeedRun*> ok;
  for (const auto& r : report.runs)
    if (r.ok) ok.push_back(&r);
  if (!ok.empty()) {
    const std::size_t tasks = ok.front()->epochs.front().test_auc.size();
    for (std::size_t e = 0; e <= config.epochs; ++e) {
      EpochAggregate agg;
      agg.epoch = e;
      for (std::size_t k = 0; k < tasks; ++k) {
        Vector auc_v, loss_v, train_v;
        for (const SeedRun* r : ok) {
          auc_v.push_back(r->epochs[e].test_auc[k]);
          loss_v.push_back(r->epochs[e].test_logloss[k]);
          train_v.push_back(r->epochs[e].train_loss[k]);
        }
        agg.test_auc_mean.push_back(mean_of(auc_v));
        agg.test_auc_std.push_back(sample_std(auc_v));
        agg.test_logloss_mean.push_back(mean_of(loss_v));
        agg.test_logloss_std.push_back(sample_std(loss_v));
        agg.train_loss_mean.push_back(mean_of(train_v));
      }
      report.aggregate.push_back(std::move(agg));
    }
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json report_to_json(const ExperimentReport& report) {
  json j;
  j["label"] = report.label;
  j["config"] = config_to_json(report.config);
  j["tasks"] = report.config.task_count();
  json runs = json::array();
  for (const auto& r : report.runs) {
    json rj;
    rj["seed"] = r.seed;
    rj["status"] = r.ok ? "ok" : "failed";
    if (!r.ok) rj["failure"] = r.failure;
    json epochs = json::array();
    for (const auto& e : r.epochs) {
      epochs.push_back({{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"test_auc", e.test_auc},
                        {"test_logloss", e.test_logloss},
                        {"shared_mass_fraction", optional_json(e.shared_mass_fraction)},
                        {"subspace_rank", optional_json(e.subspace_rank)},
                        {"update_norm", optional_json(e.update_norm)},
                        {"empty_mask_steps", e.empty_mask_steps}});
    }
    rj["epochs"] = std::move(epochs);
    runs.push_back(std::move(rj));
  }
  j["runs"] = std::move(runs);
  json agg = json::array();
  for (const auto& a : report.aggregate) {
    agg.push_back({{"epoch", a.epoch},
                   {"test_auc_mean", a.test_auc_mean},
                   {"test_auc_std", a.test_auc_std},
                   {"test_logloss_mean", a.test_logloss_mean},
                   {"test_logloss_std", a.test_logloss_std},
                   {"train_loss_mean", a.train_loss_mean}});
  }
  j["aggregate"] = std::move(agg);
  j["seeds_ok"] = report.successful_runs();
  j["status"] = report.successful_runs() > 0 ? "ok" : "failed";
  if (!report.aggregate.empty()) {
    j["final"] = {{"test_auc_mean", report.aggregate.back().test_auc_mean},
                  {"test_auc_std", report.aggregate.back().test_auc_std},
                  {"test_logloss_mean", report.aggregate.back().test_logloss_mean},
                  {"test_logloss_std", report.aggregate.back().test_logloss_std}};
  }
  return j;
}

namespace {

void append_number(std::string& out, double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

}  // namespace

std::string curves_csv(const ExperimentReport& report) {
  std::string out =
      "epoch,task,test_auc_mean,test_auc_std,test_logloss_mean,test_logloss_std,train_loss_mean\n";
  for (const auto& a : report.aggregate) {
    for (std::size_t k = 0; k < a.test_auc_mean.size(); ++k) {
      out += std::to_string(a.epoch) + "," + std::to_string(k + 1);
      for (double v : {a.test_auc_mean[k], a.test_auc_std[k], a.test_logloss_mean[k],
                       a.test_logloss_std[k], a.train_loss_mean[k]}) {
        out += ',';
        append_number(out, v);
      }
      out += '\n';
    }
  }
  return out;
}

std::string steps_csv(const ExperimentReport& report) {
  std::string out = "seed,epoch,step,mean_task_loss,shared_mass_fraction,subspace_rank,update_norm,empty_mask\n";
  for (const auto& r : report.runs) {
    for (const auto& s : r.steps) {
      out += std::to_string(r.seed) + "," + std::to_string(s.epoch) + "," + std::to_string(s.step) + ",";
      append_number(out, mean_of(s.diagnostics.task_losses));
      out += ',';
      if (s.diagnostics.shared_mass_fraction) append_number(out, *s.diagnostics.shared_mass_fraction);
      out += "," + std::to_string(s.diagnostics.subspace_rank) + ",";
      append_number(out, s.diagnostics.update_norm);
      out += s.diagnostics.empty_mask ? ",1\n" : ",0\n";
    }
  }
  return out;
}

std::filesystem::path write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::string safe = report.label;
  for (char& ch : safe)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) ch = '_';
  const std::filesystem::path run_dir = dir / safe;
  std::filesystem::create_directories(run_dir);
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(run_dir / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (run_dir / name).string());
    out << text;
  };
  write("report.json", report_to_json(report).dump(2) + "\n");
  write("curves.csv", curves_csv(report));
  if (report.config.log_steps) write("steps.csv", steps_csv(report));
  write("timing.json", json({{"wall_seconds", report.wall_seconds}}).dump(2) + "\n");
  return run_dir;
}

std::string ComparisonTable::to_csv() const {
  std::string out = "method";
  for (std::size_t k = 1; k <= tasks; ++k)
    out += ",task" + std::to_string(k) + "_auc,task" + std::to_string(k) + "_gain";
  out += '\n';
  for (std::size_t m = 0; m < methods.size(); ++m) {
    out += methods[m];
    for (std::size_t k = 0; k < tasks; ++k) {
      out += ',';
      append_number(out, auc[m][k]);
      out += ',';
      append_number(out, gain[m][k]);
    }
    out += '\n';
  }
  return out;
}

ComparisonTable compare_reports(const std::vector<json>& reports, std::string_view baseline) {
  ComparisonTable table;
  table.baseline = std::string(baseline);
  std::optional<Vector> base;
  for (const auto& r : reports) {
    if (!r.contains("final") || !r.contains("label"))
      throw InvalidInput("compare: report lacks final metrics (all seeds failed?)");
    const Vector auc = r.at("final").at("test_auc_mean").get<Vector>();
    if (table.methods.empty()) table.tasks = auc.size();
    if (auc.size() != table.tasks) throw InvalidInput("compare: reports disagree on task count");
    table.methods.push_back(r.at("label").get<std::string>());
    table.auc.push_back(auc);
    if (table.methods.back() == baseline && !base) base = auc;
  }
  if (!base) throw InvalidInput("compare: baseline '" + std::string(baseline) + "' not among inputs");
  for (const auto& auc : table.auc) {
    Vector g(auc.size());
    for (std::size_t k = 0; k < auc.size(); ++k) g[k] = auc[k] - (*base)[k];
    table.gain.push_back(std::move(g));
  }
  return table;
}

double QuadraticProblem::loss(std::span<const double> theta) const {
  double total = 0.0;
  for (const auto& [a, c] : {std::pair{&a1, &c1}, std::pair{&a2, &c2}}) {
    Vector diff(theta.begin(), theta.end());
    axpy(-1.0, *c, diff);
    total += 0.5 * dot(diff, matvec(*a, diff));
  }
  return total;
}

Matrix QuadraticProblem::task_gradients(std::span<const double> theta) const {
  Matrix out(0, theta.size());
  for (const auto& [a, c] : {std::pair{&a1, &c1}, std::pair{&a2, &c2}}) {
    Vector diff(theta.begin(), theta.end());
    axpy(-1.0, *c, diff);
    out.append_row(matvec(*a, diff));
  }
  return out;
}

QuadraticProblem make_quadratic(std::size_t dim, std::uint64_t seed, bool isotropic) {
  if (dim == 0) throw InvalidInput("make_quadratic: dim must be >= 1");
  Rng rng(seed);
  QuadraticProblem q;
  auto gaussian = [&](std::size_t n) {
    Vector v(n);
    for (double& x : v) x = rng.normal();
    return v;
  };
  if (isotropic) {
    q.a1 = Matrix::identity(dim);
    q.a2 = Matrix::identity(dim);
    q.c1 = gaussian(dim);
    q.c2 = q.c1;
    for (double& x : q.c2) x = -x;
  } else {
    for (Matrix* a : {&q.a1, &q.a2}) {
      Matrix b(dim, dim);
      for (double& x : b.data()) x = rng.normal();
      *a = matmul_transposed(b, b);
      for (double& x : a->data()) x /= static_cast<double>(dim);
    }
    q.c1 = gaussian(dim);
    q.c2 = gaussian(dim);
  }
  q.theta0 = gaussian(dim);
  for (double& x : q.theta0) x *= 3.0;
  Matrix sum = q.a1;
  for (std::size_t i = 0; i < sum.data().size(); ++i) sum.data()[i] += q.a2.data()[i];
  q.lipschitz = symmetric_eigen(sum).values.front();
  return q;
}

DescentTrace descent_check(const QuadraticProblem& problem, std::optional<double> gamma,
                           std::size_t steps, MaskRule rule) {
  constexpr double kTolerance = 1e-9;
  DescentTrace trace;
  trace.lipschitz = problem.lipschitz;
  if (!(problem.lipschitz > 0.0)) throw InvalidInput("descent_check: L must be positive");
  const double max_gamma = 1.0 / problem.lipschitz;
  trace.gamma = gamma.value_or(max_gamma);
  if (!(trace.gamma > 0.0) || trace.gamma > max_gamma * (1.0 + 1e-12))
    throw InvalidInput("descent_check: gamma must lie in (0, 1/L]");

  Vector theta = problem.theta0;
  Rng rng(0);  // SVD basis draws nothing; kept for the interface
  trace.losses.push_back(problem.loss(theta));
  for (std::size_t t = 0; t < steps; ++t) {
    const Matrix grads = problem.task_gradients(theta);
    GroupedBundle bundle;
    bundle.group_sizes = {1};
    bundle.task_weights = {1.0, 1.0};
    for (std::size_t i = 0; i < 2; ++i) bundle.per_group.push_back(Matrix(0, theta.size())),
                                          bundle.per_group.back().append_row(grads.row(i));
    const double before = trace.losses.back();
    double update_sq = 0.0;
    if (squared_norm(grads.data()) > 0.0) {
      const GdodDecomposition dec = gdod_combine(bundle, SvdBasis{}, rule, rng);
      update_sq = squared_norm(dec.update);
      axpy(-trace.gamma, dec.update, theta);
    }
    const double after = problem.loss(theta);
    const double bound = before - 0.5 * trace.gamma * update_sq;
    trace.update_sq_norms.push_back(update_sq);
    trace.slack.push_back(bound - after);
    trace.losses.push_back(after);
    if (after > bound + kTolerance) trace.descent_holds = false;
    if (after > before + kTolerance) trace.monotone = false;
  }
  if (steps > 0) {
    const double min_sq = *std::min_element(trace.update_sq_norms.begin(), trace.update_sq_norms.end());
    const double bound = 2.0 * (trace.losses.front() - trace.losses.back()) /
                         (static_cast<double>(steps) * trace.gamma);
    trace.stationarity_bound_holds = min_sq <= bound + kTolerance;
  }
  return trace;
}

}  // namespace gdod
