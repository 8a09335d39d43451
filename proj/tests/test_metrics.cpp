#include <doctest.h>

#include <random>

#include "ctview/mil/metrics.hpp"
#include "support.hpp"

using namespace ctview;
using namespace ctview::mil;

TEST_CASE("auc extremes") {
  const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  CHECK(roc_auc(s, std::vector<int>{0, 0, 1, 1}) == 1.0);
  CHECK(roc_auc(s, std::vector<int>{1, 1, 0, 0}) == 0.0);
  CHECK(roc_auc(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}) == 0.5);
  CHECK_THROWS_AS(roc_auc(s, std::vector<int>{1, 1, 1, 1}), InvalidArgument);
}

TEST_CASE("auc equals the pairwise ranking probability") {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + static_cast<int>(rng() % 60);
    std::vector<double> s(n);
    std::vector<int> l(n);
    // Coarse scores so ties are common.
    for (int i = 0; i < n; ++i) {
      s[i] = t % 2 ? static_cast<double>(rng() % 7) / 7.0
                   : std::uniform_real_distribution<double>(0, 1)(rng);
      l[i] = static_cast<int>(rng() % 2);
    }
    l[0] = 0;
    l[1] = 1;
    CHECK(std::abs(roc_auc(s, l) - testing::pairwise_auc(s, l)) <= 1e-12);
  }
}

TEST_CASE("threshold metrics") {
  const std::vector<double> s{0.1, 0.5, 0.7, 0.4, 0.9};
  const std::vector<int> l{0, 0, 1, 1, 1};
  const auto m = threshold_metrics(s, l);
  CHECK(m.true_positive == 2);
  CHECK(m.false_negative == 1);
  CHECK(m.false_positive == 1);
  CHECK(m.true_negative == 1);
  CHECK(m.accuracy == doctest::Approx(0.6));
  CHECK(m.sensitivity == doctest::Approx(2.0 / 3));
  CHECK(m.specificity == doctest::Approx(0.5));
}

TEST_CASE("bootstrap intervals") {
  std::mt19937_64 rng(5);
  std::vector<double> s(60);
  std::vector<int> l(60);
  for (int i = 0; i < 60; ++i) {
    l[i] = i % 2;
    s[i] = std::normal_distribution<double>(l[i] ? 0.65 : 0.4, 0.15)(rng);
  }
  const MetricFn auc = [](auto sc, auto lb) { return roc_auc(sc, lb); };
  const double point = roc_auc(s, l);
  const auto ci = bootstrap_ci(auc, s, l, 0.95, 2000, 1);
  CHECK(ci.lo <= point);
  CHECK(point <= ci.hi);
  CHECK(ci.lo < ci.hi);
  const auto again = bootstrap_ci(auc, s, l, 0.95, 2000, 1);
  CHECK(again.lo == ci.lo);
  CHECK(again.hi == ci.hi);
  const auto doubled = bootstrap_ci(auc, s, l, 0.95, 4000, 1);
  CHECK(std::abs(doubled.lo - ci.lo) <= 0.01);
  CHECK(std::abs(doubled.hi - ci.hi) <= 0.01);

  const MetricFn constant = [](auto, auto) { return 0.75; };
  const auto flat = bootstrap_ci(constant, s, l);
  CHECK(flat.lo == 0.75);
  CHECK(flat.hi == 0.75);

  CHECK_THROWS_AS(bootstrap_ci(auc, std::span(s).first(9), std::span(l).first(9)), InvalidArgument);
}
