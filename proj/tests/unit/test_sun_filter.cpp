#include <doctest.h>

#include <random>

#include "pvx/sun_filter.hpp"
#include "support.hpp"

using namespace pvx;
using testing::error_of;

namespace {

std::vector<PatchThermalStats> stable(int n, double t, int x, int y) {
  std::vector<PatchThermalStats> s;
  for (int i = 0; i < n; ++i) s.push_back(make_stats(i, t, x, y));
  return s;
}

std::vector<int> dropped(const std::vector<SunDecision>& d) {
  std::vector<int> out;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!d[i].keep) out.push_back(static_cast<int>(i));
  return out;
}

}  // namespace

TEST_SUITE("sun_filter") {

TEST_CASE("argmax takes the first pixel of a plateau") {
  RasterU16 r(6, 4, 30000);
  r(4, 1) = 31000;
  r(2, 2) = 31000;
  r(5, 3) = 31000;
  const auto s = thermal_stats(r, 3);
  CHECK(s.x == 4);
  CHECK(s.y == 1);
  CHECK(s.t_max == doctest::Approx(310.0 - 273.15));
  CHECK(s.p == doctest::Approx(std::hypot(4.0, 1.0)));
  CHECK(s.ordinal == 3);
  CHECK(error_of([] { thermal_stats(RasterU16{}, 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("constant sequence uses the whole range") {
  const auto s = stable(20, 42.0, 8, 5);
  const auto ref = select_reference(s);
  CHECK(ref.first == 0);
  CHECK(ref.last == 19);
  CHECK(ref.t_ref == 42.0);
  CHECK(ref.x_ref == 8.0);
  CHECK(ref.y_ref == 5.0);
}

TEST_CASE("only the run longer than 0.3N qualifies") {
  auto s = stable(20, 42.0, 8, 5);
  s[13] = make_stats(13, 40.0, 60, 5);
  for (int i = 14; i < 20; ++i) s[static_cast<std::size_t>(i)] = make_stats(i, 40.0, 30, 5);
  const auto ref = select_reference(s);
  CHECK(ref.first == 0);
  CHECK(ref.last == 12);
  CHECK(ref.t_ref == 42.0);
}

TEST_CASE("lower variance wins between qualifying runs") {
  std::vector<PatchThermalStats> s;
  for (int i = 0; i < 10; ++i) s.push_back(make_stats(i, i % 2 ? 44.0 : 40.0, 8, 5));
  for (int i = 10; i < 20; ++i) s.push_back(make_stats(i, i % 2 ? 42.5 : 41.5, 40, 5));
  const auto ref = select_reference(s);
  CHECK(ref.first == 10);
  CHECK(ref.last == 19);
  CHECK(ref.t_ref == doctest::Approx(42.0));
  CHECK(ref.x_ref == 40.0);
}

TEST_CASE("equal variance keeps the earliest run") {
  std::vector<PatchThermalStats> s;
  for (int i = 0; i < 8; ++i) s.push_back(make_stats(i, 42.0, 8, 5));
  for (int i = 8; i < 16; ++i) s.push_back(make_stats(i, 50.0, 40, 5));
  CHECK(select_reference(s).first == 0);
}

TEST_CASE("no qualifying run falls back to the longest") {
  // Every position differs by more than 10 px except one pair and one triple.
  std::vector<PatchThermalStats> s;
  const int xs[] = {0, 20, 21, 40, 60, 61, 62, 80, 100, 120};
  for (int i = 0; i < 10; ++i) s.push_back(make_stats(i, 40.0 + i, xs[i], 0));
  const auto ref = select_reference(s);
  CHECK(ref.first == 4);
  CHECK(ref.last == 6);
  CHECK(ref.t_ref == 45.0);
}

TEST_CASE("single patch is its own reference") {
  const auto s = stable(1, 37.0, 3, 4);
  const auto ref = select_reference(s);
  CHECK(ref.first == 0);
  CHECK(ref.last == 0);
  CHECK(ref.t_ref == 37.0);
  CHECK(filter_reflections(s, ref)[0].keep);
  CHECK(error_of([] { select_reference({}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("both thresholds must be exceeded") {
  ReflectionReference ref{42.0, 8.0, 5.0, 0, 9};
  const std::vector<PatchThermalStats> s{
      make_stats(0, 50.0, 23, 5),  // +8, 15 px
      make_stats(1, 50.0, 10, 5),  // +8, 2 px
      make_stats(2, 45.0, 23, 5),  // +3, 15 px
      make_stats(3, 34.0, 8, 20),  // -8, 15 px: deviations count in both directions
      make_stats(4, 47.0, 18, 5),  // exactly 5 and 10: strict inequalities keep it
  };
  const auto d = filter_reflections(s, ref);
  CHECK(dropped(d) == std::vector<int>{0, 3});
  CHECK_FALSE(d[0].reason.empty());
  CHECK(d[1].reason.empty());
}

TEST_CASE("injected reflections are removed exactly") {
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> len(10, 60);
  std::normal_distribution<double> noise(0.0, 0.2);
  std::uniform_real_distribution<double> glint(-1.5, 1.5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = len(rng);
    const int k = 1 + static_cast<int>(rng() % static_cast<unsigned>(std::max(1, static_cast<int>(0.7 * n) - 1)));
    const bool at_end = rng() % 2;
    const int first = at_end ? n - k : 0;
    std::vector<PatchThermalStats> s;
    std::vector<int> truth;
    for (int i = 0; i < n; ++i) {
      if (i >= first && i < first + k) {
        s.push_back(make_stats(i, 42.0 + 8.0 + glint(rng), 23, 5));
        truth.push_back(i);
      } else {
        s.push_back(make_stats(i, 42.0 + noise(rng), 8 + static_cast<int>(rng() % 3), 5));
      }
    }
    const auto ref = select_reference(s);
    const auto d = filter_reflections(s, ref);
    CHECK(dropped(d) == truth);
    // Entries of the reference run are never dropped.
    for (int i = ref.first; i <= ref.last; ++i) CHECK(d[static_cast<std::size_t>(i)].keep);
  }
}

TEST_CASE("global temperature offset changes nothing") {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> t(35.0, 55.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PatchThermalStats> a, b;
    for (int i = 0; i < 25; ++i) {
      const int x = static_cast<int>(rng() % 40), y = static_cast<int>(rng() % 24);
      const double ti = t(rng);
      a.push_back(make_stats(i, ti, x, y));
      b.push_back(make_stats(i, ti + 12.5, x, y));
    }
    const auto ra = select_reference(a), rb = select_reference(b);
    CHECK(ra.first == rb.first);
    CHECK(ra.last == rb.last);
    const auto da = filter_reflections(a, ra), db = filter_reflections(b, rb);
    for (std::size_t i = 0; i < da.size(); ++i) CHECK(da[i].keep == db[i].keep);
  }
}

}  // TEST_SUITE
