#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "pvx/segmentation.hpp"
#include "support.hpp"

using namespace pvx;
using testing::error_of;
using testing::TempDir;

namespace {

TemperatureFrame background(int w, int h, float t = 20.0f) { return TemperatureFrame{0, RasterF(w, h, t)}; }

void paint(TemperatureFrame& tf, int x0, int y0, int w, int h, float t) {
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x)
      if (tf.celsius.contains(x, y)) tf.celsius(x, y) = t;
}

std::vector<PixelXY> random_blob(std::mt19937& rng, int w, int h) {
  std::uniform_int_distribution<int> dx(0, w - 1), dy(0, h - 1), dn(1, 60);
  std::set<std::pair<int, int>> seen;
  std::vector<PixelXY> px;
  const int n = dn(rng);
  for (int i = 0; i < n; ++i) {
    const int x = dx(rng), y = dy(rng);
    if (seen.insert({x, y}).second) px.push_back({x, y});
  }
  return px;
}

std::set<std::pair<int, int>> as_set(const std::vector<PixelXY>& px) {
  std::set<std::pair<int, int>> s;
  for (auto p : px) s.insert({p.x, p.y});
  return s;
}

}  // namespace

TEST_SUITE("segmentation") {

TEST_CASE("two warm rectangles give two exact masks") {
  auto tf = background(100, 60);
  paint(tf, 10, 10, 20, 10, 45.0f);
  paint(tf, 50, 30, 20, 10, 45.0f);
  const auto masks = segment_threshold(tf, ThresholdParams{30.0, 50, 50000});
  REQUIRE(masks.size() == 2);
  std::vector<Box> boxes{masks[0].bbox(), masks[1].bbox()};
  std::sort(boxes.begin(), boxes.end(), [](const Box& a, const Box& b) { return a.x_min < b.x_min; });
  CHECK(boxes[0] == Box{10, 10, 30, 20});
  CHECK(boxes[1] == Box{50, 30, 70, 40});
  for (const auto& m : masks) CHECK(m.area() == 200);
}

TEST_CASE("border-touching component is discarded") {
  auto tf = background(100, 60);
  paint(tf, 0, 10, 20, 10, 45.0f);
  paint(tf, 40, 20, 20, 10, 45.0f);
  const auto masks = segment_threshold(tf, {});
  REQUIRE(masks.size() == 1);
  CHECK(masks[0].bbox() == Box{40, 20, 60, 30});
}

TEST_CASE("uniform cold frame has no masks") { CHECK(segment_threshold(background(64, 48), {}).empty()); }

TEST_CASE("area range filters components") {
  auto tf = background(100, 60);
  paint(tf, 10, 10, 5, 5, 45.0f);
  paint(tf, 40, 20, 20, 10, 45.0f);
  const auto masks = segment_threshold(tf, ThresholdParams{30.0, 50, 150});
  CHECK(masks.empty());
}

TEST_CASE("diagonal neighbours are separate components") {
  auto tf = background(40, 40);
  paint(tf, 5, 5, 10, 10, 45.0f);
  paint(tf, 15, 15, 10, 10, 45.0f);
  CHECK(segment_threshold(tf, ThresholdParams{30.0, 10, 1000}).size() == 2);
}

TEST_CASE("segmenter output masks are disjoint and consistent") {
  std::mt19937 rng(17);
  std::uniform_real_distribution<float> noise(0.0f, 1.0f);
  auto tf = background(120, 80);
  for (auto& v : tf.celsius.data()) v = noise(rng) < 0.45f ? 40.0f : 20.0f;
  const auto masks = segment_threshold(tf, ThresholdParams{30.0, 2, 100000});
  std::set<std::pair<int, int>> all;
  std::size_t total = 0;
  for (const auto& m : masks) {
    const auto px = m.pixels();
    total += px.size();
    CHECK(px.size() == m.area());
    double cx = 0, cy = 0;
    Box b{1e9, 1e9, -1e9, -1e9};
    for (auto p : px) {
      all.insert({p.x, p.y});
      cx += p.x + 0.5;
      cy += p.y + 0.5;
      b.x_min = std::min(b.x_min, double(p.x));
      b.y_min = std::min(b.y_min, double(p.y));
      b.x_max = std::max(b.x_max, double(p.x + 1));
      b.y_max = std::max(b.y_max, double(p.y + 1));
    }
    CHECK(m.bbox() == b);
    CHECK(m.center().x == doctest::Approx(cx / px.size()));
    CHECK(m.center().y == doctest::Approx(cy / px.size()));
  }
  CHECK(all.size() == total);
}

TEST_CASE("mask construction rejects bad input") {
  CHECK(error_of([] { ModuleMask::from_pixels(0, 10, 10, {}); }) == ErrorCode::EmptyMask);
  const std::vector<PixelXY> outside{{10, 0}};
  CHECK(error_of([&] { ModuleMask::from_pixels(0, 10, 10, outside); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("rle encodes background first") {
  const std::vector<PixelXY> px{{1, 0}, {2, 0}, {0, 1}};
  const auto m = ModuleMask::from_pixels(0, 4, 2, px);
  CHECK(m.to_rle() == std::vector<std::uint32_t>{1, 2, 1, 1});
  const std::vector<PixelXY> first{{0, 0}};
  CHECK(ModuleMask::from_pixels(0, 4, 2, first).to_rle() == std::vector<std::uint32_t>{0, 1});
}

TEST_CASE("rle decoding errors") {
  const std::vector<std::uint32_t> too_long{5, 10};
  CHECK(error_of([&] { ModuleMask::from_rle(0, 3, 3, too_long); }) == ErrorCode::ShapeMismatch);
  const std::vector<std::uint32_t> empty{4, 0};
  CHECK(error_of([&] { ModuleMask::from_rle(0, 3, 3, empty); }) == ErrorCode::EmptyMask);
}

TEST_CASE("mask files round trip pixel sets") {
  TempDir dir;
  std::mt19937 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ModuleMask> masks;
    std::vector<std::set<std::pair<int, int>>> expected;
    for (int k = 0; k < 3; ++k) {
      const auto px = random_blob(rng, 23, 17);
      masks.push_back(ModuleMask::from_pixels(trial, 23, 17, px));
      expected.push_back(as_set(px));
    }
    const auto path = dir / mask_file_name(trial);
    write_masks(path, 23, 17, masks);
    const auto back = load_masks(path, trial, 23, 17);
    REQUIRE(back.size() == 3);
    for (int k = 0; k < 3; ++k) {
      CHECK(as_set(back[k].pixels()) == expected[k]);
      CHECK(back[k].frame_index() == trial);
    }
  }
  CHECK(mask_file_name(12) == "masks_000012.json");
}

TEST_CASE("mask file shape must match the frame") {
  const auto text = R"({"width":4,"height":4,"instances":[{"rle":[2,3]}]})";
  CHECK(parse_masks(text, 0).size() == 1);
  TempDir dir;
  write_text_file(dir / "m.json", text);
  CHECK(error_of([&] { load_masks(dir / "m.json", 0, 5, 4); }) == ErrorCode::ShapeMismatch);
  CHECK(error_of([] { parse_masks(R"({"width":4,"height":4,"instances":[{"rle":[16,1]}]})", 0); }) ==
        ErrorCode::ShapeMismatch);
  CHECK(error_of([] { parse_masks(R"({"width":4,"height":4,"instances":[{"rle":[3]}]})", 0); }) ==
        ErrorCode::EmptyMask);
}

// --- detection metrics -------------------------------------------------------------

TEST_CASE("perfect detection") {
  const std::vector<Box> p{{0, 0, 10, 10}}, t{{0, 0, 10, 10}};
  const auto e = evaluate_detections(p, t);
  for (const auto& c : e.per_threshold) {
    CHECK(c.tp == 1);
    CHECK(c.fp == 0);
    CHECK(c.fn == 0);
    CHECK(c.f1 == 1.0);
  }
  CHECK(e.ap == 1.0);
}

TEST_CASE("one third overlap misses every threshold") {
  // Intersection 5x10 = 50, union 100 + 100 - 50 = 150.
  CHECK(iou(Box{5, 0, 15, 10}, Box{0, 0, 10, 10}) == doctest::Approx(1.0 / 3.0));
  const std::vector<Box> p{{5, 0, 15, 10}}, t{{0, 0, 10, 10}};
  const auto e = evaluate_detections(p, t);
  for (const auto& c : e.per_threshold) {
    CHECK(c.tp == 0);
    CHECK(c.fp == 1);
    CHECK(c.fn == 1);
    CHECK(c.f1 == 0.0);
  }
  CHECK(e.ap == 0.0);
}

TEST_CASE("iou 0.8 splits the thresholds") {
  const std::vector<Box> p{{0, 0, 10, 8}}, t{{0, 0, 10, 10}};
  const auto e = evaluate_detections(p, t);
  for (const auto& c : e.per_threshold) {
    const bool hit = c.iou_threshold < 0.8 - 1e-12;
    CHECK(c.tp == (hit ? 1 : 0));
    CHECK(c.fp == (hit ? 0 : 1));
    CHECK(c.fn == (hit ? 0 : 1));
  }
  // PR points: (1,1) six times and (0,0) four times; anchored trapezoid gives 1/2.
  CHECK(e.ap == doctest::Approx(0.5));
}

TEST_CASE("malformed boxes are rejected") {
  const std::vector<Box> p{{3, 0, 3, 10}}, t{{0, 0, 10, 10}};
  CHECK(error_of([&] { evaluate_detections(p, t); }) == ErrorCode::MalformedBox);
}

TEST_CASE("greedy matching is one-to-one") {
  const std::vector<Box> p{{0, 0, 10, 10}, {0, 0, 10, 9}}, t{{0, 0, 10, 10}};
  const auto e = evaluate_detections(p, t);
  CHECK(e.per_threshold[0].tp == 1);
  CHECK(e.per_threshold[0].fp == 1);
  CHECK(e.per_threshold[0].fn == 0);
}

TEST_CASE("f1 never increases with the threshold and translation changes nothing") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> pos(0, 200), size(5, 40), jitter(-6, 6);
  std::uniform_int_distribution<int> count(0, 12);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Box> truth, pred;
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      const double x = pos(rng), y = pos(rng), w = size(rng), h = size(rng);
      truth.push_back({x, y, x + w, y + h});
      if (i % 4 != 3) {
        const double a = x + jitter(rng), b = y + jitter(rng);
        pred.push_back({a, b, a + w + std::abs(jitter(rng)), b + h + std::abs(jitter(rng))});
      }
    }
    for (int i = 0; i < count(rng) / 4; ++i) {
      const double x = pos(rng), y = pos(rng);
      pred.push_back({x, y, x + size(rng), y + size(rng)});
    }
    const auto e = evaluate_detections(pred, truth);
    for (std::size_t k = 1; k < e.per_threshold.size(); ++k)
      CHECK(e.per_threshold[k].f1 <= e.per_threshold[k - 1].f1 + 1e-12);
    CHECK(e.ap >= 0.0);
    CHECK(e.ap <= 1.0);

    auto shift = [](std::vector<Box> v) {
      for (auto& b : v) b = Box{b.x_min + 37, b.y_min - 11, b.x_max + 37, b.y_max - 11};
      return v;
    };
    const auto s = evaluate_detections(shift(pred), shift(truth));
    for (std::size_t k = 0; k < s.per_threshold.size(); ++k) CHECK(s.per_threshold[k].tp == e.per_threshold[k].tp);
  }
}

TEST_CASE("pooled and per-frame averaging") {
  std::vector<FrameDetections> frames(2);
  frames[0].predicted = {{0, 0, 10, 10}};
  frames[0].truth = {{0, 0, 10, 10}};
  frames[1].predicted = {{50, 50, 60, 60}, {0, 0, 4, 4}};
  frames[1].truth = {{50, 50, 60, 60}, {20, 20, 30, 30}, {70, 70, 80, 80}};
  const auto pooled = evaluate_detection_frames(frames, DetectionAveraging::Pooled);
  // Pooled: TP 2, FP 1, FN 2 -> F1 = 4 / 7.
  CHECK(pooled.per_threshold[0].f1 == doctest::Approx(4.0 / 7.0));
  const auto per_frame = evaluate_detection_frames(frames, DetectionAveraging::PerFrame);
  // Frame 1: TP 1, FP 1, FN 2 -> F1 = 2 / 5; mean with 1.0.
  CHECK(per_frame.per_threshold[0].f1 == doctest::Approx(0.5 * (1.0 + 0.4)));
}

}  // TEST_SUITE
