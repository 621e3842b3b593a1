#include "gdod/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <vector>

#include "gdod/errors.hpp"
#include "gdod/model.hpp"
#include "gdod/rng.hpp"

namespace gdod {

MultiTaskDataset MultiTaskDataset::subset(std::span<const std::size_t> rows) const {
  MultiTaskDataset out{Matrix(0, feature_count()), Matrix(0, task_count()), source};
  for (std::size_t r : rows) {
    out.features.append_row(features.row(r));
    out.labels.append_row(labels.row(r));
  }
  return out;
}

namespace {

void validate_spec(const SyntheticSpec& spec) {
  if (spec.samples == 0) throw InvalidInput("synthetic: samples must be >= 1");
  if (spec.features < 2) throw InvalidInput("synthetic: features must be >= 2");
  if (spec.tasks == 0) throw InvalidInput("synthetic: tasks must be >= 1");
  if (spec.features < spec.tasks) throw InvalidInput("synthetic: need features >= tasks");
  if (!(spec.correlation >= -1.0 && spec.correlation <= 1.0))
    throw InvalidInput("synthetic: correlation must lie in [-1, 1]");
  if (!std::isfinite(spec.nonlinearity) || !std::isfinite(spec.logit_scale))
    throw InvalidInput("synthetic: non-finite generator parameter");
  if (spec.tasks >= 2 &&
      spec.correlation < -1.0 / static_cast<double>(spec.tasks - 1) - 1e-12)
    throw InvalidInput("synthetic: pairwise correlation " + std::to_string(spec.correlation) +
                       " is not attainable by " + std::to_string(spec.tasks) + " tasks");
}

}  // namespace

Matrix task_directions(const SyntheticSpec& spec) {
  validate_spec(spec);
  Rng rng = Rng(spec.seed).derive(1);
  const std::size_t k = spec.tasks;
  Matrix corr(k, k, spec.correlation);
  for (std::size_t i = 0; i < k; ++i) corr(i, i) = 1.0;

  // corr = A A^T with A = E diag(sqrt(lambda)); u_k = sum_j A[k][j] q_j over
  // random orthonormal q_j, so u_i . u_k = corr(i, k).
  const SymmetricEigen eig = symmetric_eigen(corr);
  const Matrix q = random_orthonormal(k, spec.features, rng);
  Matrix out(k, spec.features);
  for (std::size_t row = 0; row < k; ++row) {
    for (std::size_t j = 0; j < k; ++j) {
      const double coeff = eig.vectors(j, row) * std::sqrt(std::max(eig.values[j], 0.0));
      axpy(coeff, q.row(j), out.row(row));
    }
    const double n = norm(out.row(row));
    for (double& x : out.row(row)) x /= n;
  }
  return out;
}

MultiTaskDataset generate_synthetic(const SyntheticSpec& spec) {
  const Matrix directions = task_directions(spec);
  Rng rng = Rng(spec.seed).derive(2);
  MultiTaskDataset out{Matrix(spec.samples, spec.features), Matrix(spec.samples, spec.tasks),
                       "synthetic"};
  for (std::size_t n = 0; n < spec.samples; ++n) {
    auto x = out.features.row(n);
    for (double& v : x) v = rng.normal();
    for (std::size_t k = 0; k < spec.tasks; ++k) {
      const double z = dot(directions.row(k), x);
      const double logit = spec.logit_scale * (z + spec.nonlinearity * std::sin(3.0 * z));
      out.labels(n, k) = rng.uniform() < sigmoid(logit) ? 1.0 : 0.0;
    }
  }
  return out;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

void append_number(std::string& out, double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

}  // namespace

MultiTaskDataset load_csv(const std::filesystem::path& path, std::size_t features,
                          std::size_t tasks) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("load_csv: cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw SchemaError("load_csv: missing header in " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::unordered_map<std::string, std::size_t> columns;
  const auto header = split_fields(line);
  for (std::size_t c = 0; c < header.size(); ++c) columns.emplace(std::string(header[c]), c);

  auto locate = [&](const std::string& name) {
    auto it = columns.find(name);
    if (it == columns.end()) throw SchemaError("load_csv: missing column '" + name + "'");
    return it->second;
  };
  std::vector<std::size_t> feature_cols;
  std::vector<std::size_t> label_cols;
  for (std::size_t f = 0; f < features; ++f) feature_cols.push_back(locate("f" + std::to_string(f)));
  for (std::size_t k = 0; k < tasks; ++k) label_cols.push_back(locate("y" + std::to_string(k)));

  MultiTaskDataset out{Matrix(0, features), Matrix(0, tasks), path.string()};
  Vector xs(features);
  Vector ys(tasks);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw SchemaError("load_csv: row " + std::to_string(row) + " has " +
                        std::to_string(fields.size()) + " fields, header has " +
                        std::to_string(header.size()));
    auto parse = [&](std::size_t col) {
      const std::string_view cell = fields[col];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
        throw ValueError("load_csv: row " + std::to_string(row) + " column '" +
                         std::string(header[col]) + "' is not a finite number");
      return v;
    };
    for (std::size_t f = 0; f < features; ++f) xs[f] = parse(feature_cols[f]);
    for (std::size_t k = 0; k < tasks; ++k) {
      ys[k] = parse(label_cols[k]);
      if (ys[k] != 0.0 && ys[k] != 1.0)
        throw ValueError("load_csv: row " + std::to_string(row) + " label 'y" +
                         std::to_string(k) + "' is not binary");
    }
    out.features.append_row(xs);
    out.labels.append_row(ys);
    ++row;
  }
  if (out.size() == 0) throw ValueError("load_csv: no data rows in " + path.string());
  return out;
}

void write_csv(const MultiTaskDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("write_csv: cannot open " + path.string());
  std::string text;
  for (std::size_t f = 0; f < dataset.feature_count(); ++f) text += "f" + std::to_string(f) + ",";
  for (std::size_t k = 0; k < dataset.task_count(); ++k) {
    text += "y" + std::to_string(k);
    text += k + 1 < dataset.task_count() ? "," : "\n";
  }
  for (std::size_t n = 0; n < dataset.size(); ++n) {
    for (double v : dataset.features.row(n)) {
      append_number(text, v);
      text += ',';
    }
    const auto labels = dataset.labels.row(n);
    for (std::size_t k = 0; k < labels.size(); ++k) {
      append_number(text, labels[k]);
      text += k + 1 < labels.size() ? ',' : '\n';
    }
  }
  out << text;
}

std::pair<MultiTaskDataset, MultiTaskDataset> split(const MultiTaskDataset& dataset,
                                                    double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw InvalidInput("split: test_fraction must lie in (0, 1)");
  const std::size_t n = dataset.size();
  if (n < 2) throw InvalidInput("split: need at least two rows");
  std::size_t test_n = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  test_n = std::clamp<std::size_t>(test_n, 1, n - 1);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  const std::span<const std::size_t> all(order);
  return {dataset.subset(all.subspan(test_n)), dataset.subset(all.first(test_n))};
}

}  // namespace gdod
