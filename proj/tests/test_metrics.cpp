#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "predsim/errors.hpp"
#include "predsim/metrics.hpp"
#include "predsim/rng.hpp"

using namespace predsim;

namespace {

std::vector<Vec3> cloud(Rng& rng, std::size_t n, double r = 100.0) {
  std::vector<Vec3> out(n);
  for (auto& p : out) p = {rng.uniform(-r, r), rng.uniform(-r, r), rng.uniform(-r, r)};
  return out;
}

}  // namespace

TEST_CASE("frame_error examples") {
  Rng rng(1);
  const auto a = cloud(rng, 50);
  CHECK(frame_error(a, a) == 0.0);
  auto b = a;
  for (auto& p : b) p += Vec3{3.0, 4.0, 0.0};
  CHECK(frame_error(a, b) == doctest::Approx(5.0).epsilon(1e-12));
  const std::vector<Vec3> d{{0, 0, 0}, {0, 0, 0}}, l{{1, 0, 0}, {0, 3, 0}};
  CHECK(frame_error(d, l) == doctest::Approx(2.0));
  CHECK_THROWS_AS(frame_error(d, a), ContractError);
}

TEST_CASE("frame_error is a metric on index-matched clouds") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = cloud(rng, 20), b = cloud(rng, 20), c = cloud(rng, 20);
    CHECK(frame_error(a, b) > 0.0);
    CHECK(frame_error(a, b) == frame_error(b, a));
    CHECK(frame_error(a, c) <= frame_error(a, b) + frame_error(b, c) + 1e-12);
  }
}

TEST_CASE("min_dist_error examples and oracle") {
  const std::vector<Vec3> p{{0, 0, 0}}, l{{1, 0, 0}, {5, 0, 0}};
  CHECK(min_dist_error(p, l).sum_mm == 1.0);
  CHECK(min_dist_error(p, l).mean_mm == 1.0);
  CHECK_THROWS_AS(min_dist_error({}, l), ContractError);
  CHECK_THROWS_AS(min_dist_error(p, {}), ContractError);

  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = cloud(rng, 50), b = cloud(rng, 50);
    const std::vector<Vec3> av(a.begin(), a.end()), bv(b.begin(), b.end());
    const auto got = min_dist_error(a, b);
    CHECK(got.sum_mm == oracle::min_dist_sum(av, bv));
    CHECK(got.mean_mm == got.sum_mm / 50.0);
    CHECK(min_dist_error(a, a).sum_mm == 0.0);
  }
}

TEST_CASE("min_dist_error is nonincreasing as live points are added") {
  Rng rng(4);
  const auto pred = cloud(rng, 30);
  std::vector<Vec3> live = cloud(rng, 1);
  double prev = min_dist_error(pred, live).sum_mm;
  for (int i = 0; i < 200; ++i) {
    live.push_back(cloud(rng, 1)[0]);
    const double cur = min_dist_error(pred, live).sum_mm;
    CHECK(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("aggregate") {
  const std::vector<double> c(17, 4.5);
  auto s = aggregate(c);
  CHECK(s.mean_mm == doctest::Approx(4.5));
  CHECK(s.std_mm == doctest::Approx(0.0));
  CHECK(s.n == 17);
  s = aggregate(std::vector<double>{0.0, 10.0});
  CHECK(s.mean_mm == 5.0);
  CHECK(s.std_mm == 5.0);
  CHECK_THROWS_AS(aggregate(std::vector<double>{}), ContractError);

  Rng rng(5);
  std::vector<double> v(10000);
  for (auto& x : v) x = 30.0 + rng.normal(0.0, 8.0);
  long double m = 0;
  for (double x : v) m += x;
  m /= v.size();
  long double var = 0;
  for (double x : v) var += (x - m) * (x - m);
  const double sd = std::sqrt(static_cast<double>(var / v.size()));
  s = aggregate(v);
  CHECK(std::abs(s.mean_mm - double(m)) <= 1e-12 * double(m));
  CHECK(std::abs(s.std_mm - sd) <= 1e-12 * sd);

  ErrorSeries series;
  for (std::size_t i = 0; i < v.size(); ++i) series.push_back({11.0 * i, v[i]});
  CHECK(aggregate(series).mean_mm == s.mean_mm);
  CHECK(error_values(series) == v);
}

TEST_CASE("moving average") {
  const auto c = moving_average(std::vector<double>(100, 3.0));
  for (double x : c) CHECK(x == doctest::Approx(3.0));
  std::vector<double> alt(1000);
  for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = i % 2 ? 10.0 : 0.0;
  const auto ma = moving_average(alt);
  REQUIRE(ma.size() == alt.size());
  CHECK(ma[0] == 0.0);
  CHECK(ma[1] == 5.0);
  for (std::size_t i = 49; i < ma.size(); ++i) CHECK(std::abs(ma[i] - 5.0) <= 0.2);
  const auto m3 = moving_average(std::vector<double>{1, 2, 3, 4}, 3);
  CHECK(m3 == std::vector<double>{1.0, 1.5, 2.0, 3.0});
  CHECK_THROWS_AS(moving_average(alt, 0), ContractError);
}

TEST_CASE("reduction factor") {
  auto r = reduction_factor({33.87, 10.15, 1}, {10.24, 5.0, 1});
  CHECK(r.mean_ratio == doctest::Approx(3.31).epsilon(0.002));
  r = reduction_factor({33.87, 10.15, 1}, {10.71, 5.08, 1});
  CHECK(r.mean_ratio == doctest::Approx(3.16).epsilon(0.002));
  CHECK(r.std_ratio == doctest::Approx(2.00).epsilon(0.002));
  r = reduction_factor({7.0, 2.0, 1}, {7.0, 2.0, 1});
  CHECK(r.mean_ratio == 1.0);
  CHECK(r.std_ratio == 1.0);
  CHECK(!r.infinite);
  r = reduction_factor({7.0, 2.0, 1}, {0.0, 0.0, 1});
  CHECK(r.infinite);
  CHECK(std::isinf(r.mean_ratio));
}
