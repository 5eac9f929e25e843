#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "segopt/error.hpp"
#include "segopt/labels.hpp"
#include "segopt/metrics.hpp"
#include "segopt/rng.hpp"
#include "support/oracles.hpp"

using namespace segopt;
using namespace segopt::testing;

namespace {

LabelMap labels(std::vector<std::uint8_t> l, Shape shape) {
  return LabelMap(std::move(l), kNumBratsClasses, std::move(shape));
}

ProbMap random_probs(Rng& rng, std::size_t v) {
  NdArray a({v, 4});
  for (std::size_t i = 0; i < v; ++i) {
    double s = 0.0;
    for (double& x : a.row(i)) s += (x = rng.uniform() + 1e-3);
    for (double& x : a.row(i)) x /= s;
  }
  return ProbMap(std::move(a));
}

}  // namespace

TEST_CASE("region masks follow the label hierarchy") {
  const auto l = labels({0, 1, 2, 3}, {4});
  CHECK(region_mask(l, Region::kWt) == Mask{0, 1, 1, 1});
  CHECK(region_mask(l, Region::kTc) == Mask{0, 1, 0, 1});
  CHECK(region_mask(l, Region::kEt) == Mask{0, 1, 0, 0});
  const auto bg = labels({0, 0, 0}, {3});
  for (Region r : kRegions) CHECK(region_mask(bg, r) == Mask{0, 0, 0});

  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint8_t> v(50);
    for (auto& x : v) x = static_cast<std::uint8_t>(rng.below(4));
    const auto lm = labels(v, {50});
    const auto wt = region_mask(lm, Region::kWt);
    const auto tc = region_mask(lm, Region::kTc);
    const auto et = region_mask(lm, Region::kEt);
    for (std::size_t i = 0; i < 50; ++i) {
      CHECK(wt[i] >= tc[i]);
      CHECK(tc[i] >= et[i]);
    }
  }
  CHECK(to_string(Region::kTc) == "TC");
}

TEST_CASE("dice score hand values") {
  CHECK(dice_score(Mask{1, 1, 0}, Mask{1, 1, 0}) == 1.0);
  CHECK(dice_score(Mask{1, 0, 0}, Mask{0, 1, 1}) == 0.0);
  CHECK(dice_score(Mask{1, 1, 0}, Mask{0, 1, 1}) == 0.5);
  CHECK(dice_score(Mask{0, 0}, Mask{0, 0}) == 1.0);
  CHECK_THROWS_AS(dice_score(Mask{0, 0}, Mask{0}), ConfigError);
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_mask(rng, {6, 6}, 0.3);
    const auto b = random_mask(rng, {6, 6}, 0.3);
    CHECK(dice_score(a, b) == dice_score(b, a));
    if (std::any_of(a.begin(), a.end(), [](auto x) { return x; })) CHECK(dice_score(a, a) == 1.0);
  }
}

TEST_CASE("hd95 hand values") {
  Mask a(10, 0), b(10, 0);
  a[2] = 1;
  b[5] = 1;
  const std::vector<double> one{1.0};
  CHECK(*hd95(a, b, {10}, one) == 3.0);
  CHECK(*hd95(a, a, {10}, one) == 0.0);
  CHECK(*hd95(Mask(10, 0), Mask(10, 0), {10}, one) == 0.0);
  CHECK_FALSE(hd95(a, Mask(10, 0), {10}, one).has_value());
  CHECK_FALSE(hd95(Mask(10, 0), b, {10}, one).has_value());

  // Anisotropic spacing scales the axis it belongs to.
  Mask p(25, 0), q(25, 0);
  p[0] = 1;
  q[2 * 5 + 0] = 1;
  CHECK(*hd95(p, q, {5, 5}, std::vector<double>{2.5, 1.0}) == 5.0);
  CHECK_THROWS_AS(hd95(p, q, {5, 4}, std::vector<double>{1, 1}), ConfigError);
  CHECK_THROWS_AS(hd95(p, q, {5, 5}, std::vector<double>{1}), ConfigError);
}

TEST_CASE("boundary uses face neighbours and the grid edge") {
  Mask m(25, 0);
  for (std::size_t r = 1; r < 4; ++r) {
    for (std::size_t c = 1; c < 4; ++c) m[r * 5 + c] = 1;
  }
  const auto b = boundary(m, {5, 5});
  CHECK(b[12] == 0);
  CHECK(std::accumulate(b.begin(), b.end(), 0) == 8);
  CHECK(boundary(Mask(8, 1), {2, 2, 2}) == Mask(8, 1));
}

TEST_CASE("hd95 equals the brute-force oracle on random masks") {
  Rng rng(2024);
  std::size_t checked = 0;
  for (int trial = 0; trial < 600; ++trial) {
    const std::size_t dims = 2 + rng.below(2);
    Shape shape(dims);
    std::vector<double> spacing(dims);
    for (std::size_t a = 0; a < dims; ++a) {
      shape[a] = 1 + rng.below(8);
      spacing[a] = trial % 3 == 0 ? 1.0 : rng.uniform(0.5, 2.5);
    }
    const auto a = random_mask(rng, shape, rng.uniform(0.0, 0.4));
    const auto b = random_mask(rng, shape, rng.uniform(0.0, 0.4));
    const auto got = hd95(a, b, shape, spacing);
    const auto want = oracle_hd95(a, b, shape, spacing);
    REQUIRE(got.has_value() == want.has_value());
    if (got) {
      CHECK(std::abs(*got - *want) <= 1e-9);
      CHECK(*hd95(b, a, shape, spacing) == *got);
      ++checked;
    }
    CHECK(*hd95(a, a, shape, spacing) == 0.0);
  }
  CHECK(checked >= 500);
}

TEST_CASE("evaluate_case examples") {
  const std::vector<double> sp{1.0, 1.0};
  const auto gt = labels({0, 2, 2, 0, 2, 3, 1, 0, 0, 2, 2, 0, 0, 0, 0, 0}, {4, 4});
  const auto same = evaluate_case(gt, gt, sp, "c");
  for (Region r : kRegions) {
    CHECK(same[r].dice == 1.0);
    CHECK(*same[r].hd95 == 0.0);
  }
  const auto bg = labels(std::vector<std::uint8_t>(16, 0), {4, 4});
  const auto miss = evaluate_case(bg, gt, sp);
  CHECK(miss[Region::kEt].dice == 0.0);
  CHECK_FALSE(miss[Region::kEt].hd95.has_value());

  const auto no_et = labels({0, 2, 2, 0, 2, 3, 3, 0, 0, 2, 2, 0, 0, 0, 0, 0}, {4, 4});
  const auto pred = labels({0, 2, 0, 0, 2, 3, 2, 0, 0, 2, 2, 0, 0, 0, 0, 0}, {4, 4});
  const auto m = evaluate_case(pred, no_et, sp);
  CHECK(m[Region::kEt].dice == 1.0);
  CHECK(*m[Region::kEt].hd95 == 0.0);
  CHECK_THROWS_AS(evaluate_case(labels({0, 0, 0, 0}, {2, 2}), gt, sp), ConfigError);
}

TEST_CASE("aggregate statistics") {
  auto metric = [](double dice, std::optional<double> h) {
    CaseMetrics c;
    for (auto& r : c.regions) r = {dice, h};
    return c;
  };
  const std::vector<CaseMetrics> one{metric(0.7, 2.0)};
  const auto s1 = aggregate(one);
  CHECK(s1.dice[0].std == 0.0);
  CHECK(s1.dice[0].iqr == 0.0);
  CHECK(s1.dice[0].mean == 0.7);
  CHECK(s1.dice[0].median == 0.7);

  const std::vector<CaseMetrics> two{metric(0.8, 1.0), metric(0.9, std::nullopt)};
  const auto s2 = aggregate(two);
  CHECK(s2.dice[1].mean == doctest::Approx(0.85).epsilon(1e-15));
  CHECK(s2.dice[1].median == doctest::Approx(0.85).epsilon(1e-15));
  CHECK(s2.hd95[1].count == 1);
  CHECK(s2.hd95[1].excluded == 1);
  CHECK(s2.hd95[1].mean == 1.0);

  const std::vector<double> v{1, 2, 3, 4};
  const auto s = summarize(v);
  CHECK(s.q25 == 1.75);
  CHECK(s.q75 == 3.25);
  CHECK(s.iqr == 1.5);
  CHECK(s.median == 2.5);
  CHECK(s.std == doctest::Approx(std::sqrt(1.25)));
  CHECK(s.min <= s.median);
  CHECK(s.median <= s.max);
  CHECK_THROWS_AS(aggregate(std::span<const CaseMetrics>{}), ConfigError);
}

TEST_CASE("ensemble mean softmax") {
  Rng rng(3);
  const auto p = random_probs(rng, 10);
  const std::vector<ProbMap> same{p, p, p};
  const auto avg = ensemble_mean_softmax(same);
  for (std::size_t k = 0; k < p.array().size(); ++k) {
    CHECK(std::abs(avg.array()[k] - p.array()[k]) <= 1e-15);
  }

  const std::vector<ProbMap> halves{ProbMap(NdArray({1, 2}, std::vector<double>{1, 0})),
                                    ProbMap(NdArray({1, 2}, std::vector<double>{0, 1}))};
  CHECK(ensemble_mean_softmax(halves).array().values() == std::vector<double>{0.5, 0.5});

  std::vector<ProbMap> three{random_probs(rng, 10), random_probs(rng, 10), random_probs(rng, 10)};
  const auto e = ensemble_mean_softmax(three);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto r = e.row(i);
    CHECK(std::abs(std::accumulate(r.begin(), r.end(), 0.0) - 1.0) <= 1e-9);
  }
  std::vector<ProbMap> rev{three[2], three[0], three[1]};
  const auto e2 = ensemble_mean_softmax(rev);
  for (std::size_t k = 0; k < e.array().size(); ++k) {
    CHECK(std::abs(e.array()[k] - e2.array()[k]) <= 1e-15);
  }
  const std::vector<ProbMap> bad{random_probs(rng, 3), random_probs(rng, 4)};
  CHECK_THROWS_AS(ensemble_mean_softmax(bad), ConfigError);
  CHECK_THROWS_AS(ensemble_mean_softmax(std::span<const ProbMap>{}), ConfigError);
}

TEST_CASE("enhancing tumor post-processing boundary") {
  auto with_et = [](std::size_t et) {
    std::vector<std::uint8_t> v(100, 2);
    for (std::size_t i = 0; i < et; ++i) v[i] = 1;
    v[99] = 0;
    return LabelMap(v, 4, {10, 10});
  };
  const auto relabeled = postprocess_et(with_et(49));
  CHECK(std::count(relabeled.labels().begin(), relabeled.labels().end(), 1) == 0);
  CHECK(std::count(relabeled.labels().begin(), relabeled.labels().end(), 3) == 49);
  CHECK(postprocess_et(with_et(50)) == with_et(50));
  CHECK(postprocess_et(with_et(0)) == with_et(0));
  for (std::size_t et : {1u, 10u, 49u, 50u, 77u}) {
    const auto before = with_et(et);
    const auto after = postprocess_et(before);
    CHECK(region_mask(after, Region::kWt) == region_mask(before, Region::kWt));
    CHECK(region_mask(after, Region::kTc) == region_mask(before, Region::kTc));
  }
  CHECK(postprocess_et(with_et(5), 5) == with_et(5));
}

TEST_CASE("report writers") {
  CaseMetrics c;
  c.case_id = "x";
  c.regions = {RegionMetrics{0.5, std::nullopt}, RegionMetrics{1.0, 0.0},
               RegionMetrics{0.25, 1.5}};
  std::ostringstream csv;
  write_case_metrics_csv(csv, std::vector<CaseMetrics>{c});
  CHECK(csv.str() ==
        "case_id,region,dice,hd95,hd95_defined\n"
        "x,ET,0.5,nan,0\n"
        "x,WT,1,0,1\n"
        "x,TC,0.25,1.5,1\n");

  const auto stats = aggregate(std::vector<CaseMetrics>{c});
  std::ostringstream agg;
  write_aggregate_csv(agg, stats);
  CHECK(agg.str().rfind("metric,region,count,excluded,mean,std,median,iqr\n", 0) == 0);
  CHECK(agg.str().find("hd95,ET,0,1,nan,nan,nan,nan") != std::string::npos);

  const auto table = format_aggregate_table(stats);
  CHECK(table.find("Dice Score (%)") != std::string::npos);
  CHECK(table.find("Hausdorff 95% (mm)") != std::string::npos);
  for (const char* row : {"Mean", "Std", "Median", "IQR"}) {
    CHECK(table.find(row) != std::string::npos);
  }
  CHECK(table.find("   50.00") != std::string::npos);
  CHECK(table.find("n/a") != std::string::npos);
  CHECK(table.find("1 undefined HD95") != std::string::npos);
}
