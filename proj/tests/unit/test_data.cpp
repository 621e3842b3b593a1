#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "helpers.hpp"

#include "gdod/data.hpp"
#include "gdod/errors.hpp"

using namespace gdod;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "gdod_test_data";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

double pearson(const Vector& a, const Vector& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double mean_abs_label_correlation(const MultiTaskDataset& d) {
  double s = 0;
  int pairs = 0;
  for (std::size_t i = 0; i < d.task_count(); ++i)
    for (std::size_t j = i + 1; j < d.task_count(); ++j, ++pairs)
      s += std::abs(pearson(d.labels.column(i), d.labels.column(j)));
  return s / pairs;
}

}  // namespace

TEST_CASE("task directions have the requested pairwise cosine") {
  for (double rho : {-0.3, 0.0, 0.2, 0.9, 1.0}) {
    SyntheticSpec spec;
    spec.tasks = 3;
    spec.features = 8;
    spec.correlation = rho;
    const Matrix u = task_directions(spec);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(norm(u.row(i)) == doctest::Approx(1.0).epsilon(1e-12));
      for (std::size_t j = i + 1; j < 3; ++j)
        CHECK(dot(u.row(i), u.row(j)) == doctest::Approx(rho).epsilon(1e-9));
    }
  }
}

TEST_CASE("synthetic generator") {
  SyntheticSpec spec;
  SUBCASE("determinism") {
    const MultiTaskDataset a = generate_synthetic(spec);
    const MultiTaskDataset b = generate_synthetic(spec);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
    spec.seed = 2;
    CHECK_FALSE(generate_synthetic(spec).features == a.features);
  }
  SUBCASE("shapes and label domain") {
    const MultiTaskDataset d = generate_synthetic(spec);
    CHECK(d.size() == 10000);
    CHECK(d.feature_count() == 16);
    CHECK(d.task_count() == 2);
    for (double y : d.labels.data()) CHECK((y == 0.0 || y == 1.0));
    CHECK(d.features.all_finite());
  }
  SUBCASE("rho = 1 gives strongly correlated labels") {
    spec.correlation = 1.0;
    spec.nonlinearity = 0.0;
    CHECK(mean_abs_label_correlation(generate_synthetic(spec)) > 0.5);
  }
  SUBCASE("rho = 0 gives balanced labels") {
    spec.correlation = 0.0;
    spec.nonlinearity = 0.0;
    const MultiTaskDataset d = generate_synthetic(spec);
    for (std::size_t k = 0; k < 2; ++k) {
      double rate = 0;
      for (double y : d.labels.column(k)) rate += y / d.size();
      CHECK(std::abs(rate - 0.5) <= 0.02);
    }
  }
  SUBCASE("correlation knob orders label correlation") {
    spec.correlation = 0.2;
    const double low = mean_abs_label_correlation(generate_synthetic(spec));
    spec.correlation = 0.9;
    const double high = mean_abs_label_correlation(generate_synthetic(spec));
    CHECK(low < high);
  }
  SUBCASE("invalid specs") {
    spec.tasks = 4;
    spec.correlation = -0.5;
    CHECK_THROWS_AS(generate_synthetic(spec), InvalidInput);
    spec.correlation = 1.5;
    CHECK_THROWS_AS(generate_synthetic(spec), InvalidInput);
    spec.correlation = 0.2;
    spec.features = 1;
    CHECK_THROWS_AS(generate_synthetic(spec), InvalidInput);
  }
}

TEST_CASE("csv loading") {
  SUBCASE("well formed") {
    const fs::path p = scratch("ok.csv");
    write_text(p, "f0,f1,y0\n1.5,-2,1\n0,3e-2,0\n");
    const MultiTaskDataset d = load_csv(p, 2, 1);
    CHECK(d.size() == 2);
    CHECK(d.features == Matrix{{1.5, -2}, {0, 0.03}});
    CHECK(d.labels == Matrix{{1}, {0}});
  }
  SUBCASE("columns are found by name") {
    const fs::path p = scratch("reordered.csv");
    write_text(p, "y0,f1,f0\n1,2,3\n");
    CHECK(load_csv(p, 2, 1).features == Matrix{{3, 2}});
  }
  SUBCASE("missing column") {
    const fs::path p = scratch("missing.csv");
    write_text(p, "f0,y0\n1,1\n");
    try {
      load_csv(p, 2, 1);
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find("'f1'") != std::string::npos);
    }
  }
  SUBCASE("non-binary label names its row") {
    const fs::path p = scratch("half.csv");
    write_text(p, "f0,y0\n1,1\n2,0.5\n");
    try {
      load_csv(p, 1, 1);
      FAIL("expected ValueError");
    } catch (const ValueError& e) {
      CHECK(std::string(e.what()).find("row 1") != std::string::npos);
    }
  }
  SUBCASE("non-numeric cell") {
    const fs::path p = scratch("text.csv");
    write_text(p, "f0,y0\nabc,1\n");
    CHECK_THROWS_AS(load_csv(p, 1, 1), ValueError);
  }
  SUBCASE("round trip is exact") {
    SyntheticSpec spec;
    spec.samples = 200;
    const MultiTaskDataset d = generate_synthetic(spec);
    const fs::path p = scratch("round.csv");
    write_csv(d, p);
    const MultiTaskDataset back = load_csv(p, 16, 2);
    CHECK(back.features == d.features);
    CHECK(back.labels == d.labels);
  }
}

TEST_CASE("split") {
  SyntheticSpec spec;
  spec.samples = 10;
  const MultiTaskDataset d = generate_synthetic(spec);
  const auto [train, test] = split(d, 0.2, 5);
  CHECK(train.size() == 8);
  CHECK(test.size() == 2);
  const auto [train2, test2] = split(d, 0.2, 5);
  CHECK(train2.features == train.features);
  // Disjoint and exhaustive: every original row appears exactly once.
  std::multiset<double> seen, all;
  for (std::size_t r = 0; r < 10; ++r) all.insert(d.features(r, 0));
  for (std::size_t r = 0; r < 8; ++r) seen.insert(train.features(r, 0));
  for (std::size_t r = 0; r < 2; ++r) seen.insert(test.features(r, 0));
  CHECK(seen == all);
  CHECK_THROWS_AS(split(d, 0.0, 1), InvalidInput);
  CHECK_THROWS_AS(split(d, 1.0, 1), InvalidInput);
}
