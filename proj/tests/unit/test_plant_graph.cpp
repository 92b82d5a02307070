#include <doctest.h>

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>
#include <set>

#include "pvx/plant_graph.hpp"
#include "support.hpp"

using namespace pvx;
using testing::error_of;

namespace {

constexpr int kW = 640, kH = 512;

ModuleMask rect(int frame, int x, int y, int w, int h) {
  std::vector<PixelXY> px;
  for (int yy = y; yy < y + h; ++yy)
    for (int xx = x; xx < x + w; ++xx) px.push_back({xx, yy});
  return ModuleMask::from_pixels(frame, kW, kH, px);
}

TrackId tid(std::uint64_t n) { return TrackId{n * 0x9e3779b97f4a7c15ULL, static_cast<std::uint32_t>(n)}; }

PlantLayout grid_layout(int rows, int cols) {
  PlantLayout layout;
  PlantRow row;
  row.row_id = "R01";
  for (int r = 0; r < rows; ++r) {
    std::vector<std::optional<PlantId>> sub;
    for (int c = 0; c < cols; ++c) sub.emplace_back(PlantId{r + 1, c + 1});
    row.grid.push_back(sub);
  }
  layout.rows.push_back(row);
  return layout;
}

// Frames of a rows x cols grid of 40x24 px masks translating left by `step` px per frame.
std::vector<TrackedFrame> moving_grid(int rows, int cols, int frames, int gap, int step) {
  std::vector<TrackedFrame> out;
  for (int f = 0; f < frames; ++f) {
    TrackedFrame tf;
    tf.frame_index = f;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        tf.masks.push_back(rect(f, 200 + c * (40 + gap) - f * step, 300 + r * (24 + gap), 40, 24));
        tf.ids.push_back(tid(static_cast<std::uint64_t>(r * cols + c + 1)));
      }
    out.push_back(std::move(tf));
  }
  return out;
}

std::map<TrackId, int> lengths_of(const std::vector<TrackedFrame>& frames) {
  std::map<TrackId, int> len;
  for (const auto& f : frames)
    for (const auto& id : f.ids) ++len[id];
  return len;
}

// All injective, seed-fixing maps track -> plant that preserve every track edge.
std::vector<std::vector<int>> brute_force_embeddings(const Graph& t, const Graph& p, int seed_t, int seed_p) {
  std::vector<std::vector<int>> out;
  std::vector<int> map(static_cast<std::size_t>(t.size()), -1);
  std::vector<char> used(static_cast<std::size_t>(p.size()), 0);
  map[static_cast<std::size_t>(seed_t)] = seed_p;
  used[static_cast<std::size_t>(seed_p)] = 1;
  std::function<void(int)> rec = [&](int u) {
    if (u == t.size()) {
      for (const auto& [a, b] : t.edges())
        if (!p.has_edge(map[static_cast<std::size_t>(a)], map[static_cast<std::size_t>(b)])) return;
      out.push_back(map);
      return;
    }
    if (u == seed_t) return rec(u + 1);
    for (int q = 0; q < p.size(); ++q) {
      if (used[static_cast<std::size_t>(q)]) continue;
      used[static_cast<std::size_t>(q)] = 1;
      map[static_cast<std::size_t>(u)] = q;
      rec(u + 1);
      used[static_cast<std::size_t>(q)] = 0;
    }
    map[static_cast<std::size_t>(u)] = -1;
  };
  rec(0);
  return out;
}

// Track graph mirroring a subset of plant nodes, with image offsets from grid geometry.
TrackGraph mirror(const PlantGraph& pg, const std::vector<int>& subset, const std::vector<TrackId>& labels) {
  std::vector<std::pair<TrackId, int>> order;
  for (std::size_t k = 0; k < subset.size(); ++k) order.emplace_back(labels[k], subset[k]);
  std::sort(order.begin(), order.end());
  TrackGraph tg;
  tg.graph = Graph(static_cast<int>(order.size()));
  for (const auto& o : order) tg.ids.push_back(o.first);
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t j = i + 1; j < order.size(); ++j)
      if (pg.graph.has_edge(order[i].second, order[j].second)) {
        tg.graph.add_edge(static_cast<int>(i), static_cast<int>(j));
        const GridPos a = pg.positions[static_cast<std::size_t>(order[i].second)];
        const GridPos b = pg.positions[static_cast<std::size_t>(order[j].second)];
        tg.edge_offsets[{static_cast<int>(i), static_cast<int>(j)}] = {50.0 * (b.column - a.column),
                                                                       30.0 * (b.sub_row - a.sub_row)};
      }
  return tg;
}

}  // namespace

TEST_SUITE("plant_graph") {

TEST_CASE("plant file parsing") {
  const auto layout = parse_plant_layout(R"({"rows":[{"row_id":"R01","grid":[["1.1","1.2",null,"1.3"],["2.1","2.2",null,"2.3"]]}]})");
  const auto& row = layout.row("R01");
  CHECK(row.module_count() == 6);
  CHECK(row.bottom_left()->str() == "2.1");
  CHECK(row.top_right()->str() == "1.3");
  CHECK(parse_plant_layout(plant_layout_to_json(layout)).row("R01").grid == row.grid);
  CHECK(error_of([&] { layout.row("R09"); }) == ErrorCode::UnknownRow);
  CHECK(error_of([] { parse_plant_layout(R"({"rows":[{"row_id":"A","grid":[["1.1","1.1"]]}]})"); }) ==
        ErrorCode::IrregularLayout);
  CHECK(error_of([] { parse_plant_layout(R"({"rows":[{"row_id":"A","grid":[["1.1"],[null]]}]})"); }) ==
        ErrorCode::IrregularLayout);
  CHECK(error_of([] { parse_plant_layout("{\"rows\": [") ; }) == ErrorCode::Parse);
  CHECK(error_of([] { parse_plant_layout(R"({"rows":[{"row_id":"A","grid":[["x"]]}]})"); }) == ErrorCode::Parse);
}

TEST_CASE("grid edge counts") {
  for (int rows = 1; rows <= 3; ++rows)
    for (int cols = 1; cols <= 6; ++cols) {
      const auto pg = build_plant_graph(grid_layout(rows, cols), "R01", rows);
      CHECK(pg.graph.size() == rows * cols);
      CHECK(pg.graph.edge_count() == static_cast<std::size_t>(rows * (cols - 1) + (rows - 1) * cols));
    }
  CHECK(build_plant_graph(grid_layout(2, 3), "R01", 2).graph.edge_count() == 7);
  CHECK(build_plant_graph(grid_layout(2, 4), "R01", 2).graph.edge_count() == 10);
  CHECK(error_of([] { build_plant_graph(grid_layout(2, 3), "R01", 3); }) == ErrorCode::IrregularLayout);
}

TEST_CASE("gaps are bridged only when requested") {
  const auto layout = parse_plant_layout(R"({"rows":[{"row_id":"R","grid":[["1.1","1.2",null,"1.3"],["2.1","2.2",null,"2.3"]]}]})");
  const auto bridged = build_plant_graph(layout, "R", 2, true);
  const auto split = build_plant_graph(layout, "R", 2, false);
  const int a = bridged.index_of(PlantId{1, 2}), b = bridged.index_of(PlantId{1, 3});
  CHECK(bridged.graph.has_edge(a, b));
  CHECK_FALSE(split.graph.has_edge(a, b));
  CHECK(bridged.graph.edge_count() == 7);
  CHECK(split.graph.edge_count() == 5);
  CHECK(split.graph.components().size() == 2);
  CHECK(bridged.positions[static_cast<std::size_t>(b)] == GridPos{0, 3});
}

TEST_CASE("dilation and overlap match closed forms") {
  const auto m = rect(0, 100, 100, 30, 20);
  for (int r = 0; r <= 5; ++r) {
    const auto d = dilate(m, r);
    std::size_t area = 0;
    for (int y = 0; y < d.bitmap.height(); ++y)
      for (int x = 0; x < d.bitmap.width(); ++x) area += d.bitmap(x, y) != 0;
    CHECK(area == static_cast<std::size_t>((30 + 2 * r) * (20 + 2 * r)));
  }
  // Side by side with a 3 px gap: dilated bands overlap by 2r - 3 columns.
  const auto n = rect(0, 133, 100, 30, 20);
  for (int r = 1; r <= 5; ++r) {
    const std::size_t expect = 2 * r > 3 ? static_cast<std::size_t>((2 * r - 3) * (20 + 2 * r)) : 0;
    CHECK(overlap(dilate(m, r), dilate(n, r)) == expect);
  }
}

TEST_CASE("track graph of a moving grid is the grid graph") {
  const auto frames = moving_grid(2, 4, 8, 4, 6);
  const auto tg = build_track_graph(frames, lengths_of(frames), 2);
  CHECK(tg.graph.size() == 8);
  CHECK(tg.graph.edge_count() == 10);
  const int a = tg.index_of(tid(1)), b = tg.index_of(tid(2)), c = tg.index_of(tid(5));
  CHECK(tg.graph.has_edge(a, b));
  CHECK(tg.graph.has_edge(a, c));
  CHECK_FALSE(tg.graph.has_edge(b, c));
  const auto key = std::minmax(a, b);
  const Point2 d = tg.edge_offsets.at({key.first, key.second});
  CHECK(std::abs(d.x) == doctest::Approx(44));
  CHECK(d.y == doctest::Approx(0));
}

TEST_CASE("short tracks are excluded unless the row has one frame") {
  auto frames = moving_grid(1, 4, 6, 4, 5);
  frames[2].masks.push_back(rect(2, 200, 100, 40, 24));
  frames[2].ids.push_back(tid(99));
  frames[2].masks.push_back(rect(2, 244, 100, 40, 24));
  frames[2].ids.push_back(tid(98));
  const auto tg = build_track_graph(frames, lengths_of(frames), 1);
  CHECK(tg.index_of(tid(99)) < 0);
  CHECK(tg.graph.size() == 4);

  const std::vector<TrackedFrame> single{frames[2]};
  const auto tg1 = build_track_graph(single, lengths_of(single), 1);
  CHECK(tg1.graph.size() == 4);  // largest component is the 4-module path
}

TEST_CASE("pendant nodes are pruned for stacked rows only") {
  auto frames = moving_grid(2, 3, 6, 4, 5);
  for (auto& f : frames) {
    f.masks.push_back(rect(f.frame_index, 200 + 3 * 44 - f.frame_index * 5, 328, 40, 24));
    f.ids.push_back(tid(50));
  }
  const auto stacked = build_track_graph(frames, lengths_of(frames), 2);
  CHECK(stacked.index_of(tid(50)) < 0);
  CHECK(stacked.graph.size() == 6);

  const auto line = moving_grid(1, 4, 6, 4, 5);
  const auto flat = build_track_graph(line, lengths_of(line), 1);
  CHECK(flat.graph.size() == 4);
  CHECK(flat.graph.edge_count() == 3);
}

TEST_CASE("gap mode joins modules across a table gap") {
  std::vector<TrackedFrame> frames;
  for (int f = 0; f < 6; ++f) {
    TrackedFrame tf;
    tf.frame_index = f;
    const int xs[] = {100, 144, 220, 264};
    for (int k = 0; k < 4; ++k) {
      tf.masks.push_back(rect(f, xs[k] - 3 * f, 300, 40, 24));
      tf.ids.push_back(tid(static_cast<std::uint64_t>(k + 1)));
    }
    frames.push_back(std::move(tf));
  }
  TrackGraphParams off;
  off.gap_mode = false;
  const auto split = build_track_graph(frames, lengths_of(frames), 1, off);
  CHECK(split.graph.size() == 2);
  CHECK(split.index_of(tid(1)) >= 0);  // tie goes to the component with the smaller id
  const auto joined = build_track_graph(frames, lengths_of(frames), 1);
  CHECK(joined.graph.size() == 4);
  CHECK(joined.graph.edge_count() == 3);
}

TEST_CASE("empty graph") {
  auto frames = moving_grid(1, 2, 3, 4, 5);
  CHECK(error_of([&] { build_track_graph(frames, lengths_of(frames), 1); }) == ErrorCode::EmptyGraph);
  auto pair = moving_grid(1, 2, 6, 4, 5);
  CHECK(error_of([&] { build_track_graph(pair, lengths_of(pair), 2); }) == ErrorCode::EmptyGraph);
}

TEST_CASE("seed is the leftmost center of the bottom line") {
  const std::vector<Point2> centers{{300, 100}, {50, 100}, {40, 60}, {200, 100}};
  const std::vector<TrackId> ids{tid(1), tid(2), tid(3), tid(4)};
  FrontRows rows;
  CenterLine bottom, top;
  bottom.intercept = 100;
  bottom.inliers = {0, 1, 3};
  top.intercept = 60;
  top.inliers = {2};
  rows.lines = {bottom, top};
  CHECK(find_seed(centers, ids, rows) == tid(2));
  CHECK(error_of([&] { find_seed(centers, ids, FrontRows{}); }) == ErrorCode::SeedNotFound);
  CHECK(seed_frame_position(7, ScanDirection::Rightward) == 0);
  CHECK(seed_frame_position(7, ScanDirection::Leftward) == 6);
}

TEST_CASE("isomorphism recovers the true labels") {
  const auto pg = build_plant_graph(grid_layout(2, 5), "R01", 2);
  std::vector<int> all(static_cast<std::size_t>(pg.graph.size()));
  std::iota(all.begin(), all.end(), 0);
  std::vector<TrackId> labels;
  for (std::size_t k = 0; k < all.size(); ++k) labels.push_back(tid(1000 - k));
  const auto tg = mirror(pg, all, labels);
  const int seed_p = pg.index_of(PlantId{2, 1});
  const auto m = match_graphs(tg, pg, labels[static_cast<std::size_t>(seed_p)], PlantId{2, 1});
  CHECK(m.full_isomorphism);
  CHECK(m.missing_plants.empty());
  for (std::size_t k = 0; k < all.size(); ++k) CHECK(m.pairs.at(labels[k]) == pg.ids[k]);
}

TEST_CASE("geometry breaks the square's reflection") {
  const auto pg = build_plant_graph(grid_layout(2, 2), "R01", 2);
  const std::vector<int> all{0, 1, 2, 3};
  const std::vector<TrackId> labels{tid(4), tid(3), tid(2), tid(1)};
  const auto tg = mirror(pg, all, labels);
  const auto m = match_graphs(tg, pg, tid(2), PlantId{2, 1});
  CHECK(m.candidates_considered == 2);
  for (std::size_t k = 0; k < 4; ++k) CHECK(m.pairs.at(labels[k]) == pg.ids[k]);
}

TEST_CASE("seed of the wrong degree is unmatchable") {
  const auto pg = build_plant_graph(grid_layout(2, 3), "R01", 2);
  const std::vector<int> all{0, 1, 2, 3, 4, 5};
  std::vector<TrackId> labels;
  for (int k = 0; k < 6; ++k) labels.push_back(tid(static_cast<std::uint64_t>(k + 1)));
  const auto tg = mirror(pg, all, labels);
  // Track of the bottom-left corner (degree 2) paired with the top middle module (degree 3).
  CHECK(error_of([&] { match_graphs(tg, pg, labels[3], PlantId{1, 2}); }) == ErrorCode::RowUnmatchable);
  CHECK(error_of([&] { match_graphs(tg, pg, tid(77), PlantId{2, 1}); }) == ErrorCode::RowUnmatchable);
}

TEST_CASE("partial track graphs embed as monomorphisms") {
  const auto pg = build_plant_graph(grid_layout(2, 4), "R01", 2);
  // Drop the top-right module.
  const std::vector<int> subset{0, 1, 2, 4, 5, 6, 7};
  std::vector<TrackId> labels;
  for (std::size_t k = 0; k < subset.size(); ++k) labels.push_back(tid(k + 10));
  const auto tg = mirror(pg, subset, labels);
  const auto m = match_graphs(tg, pg, labels[3], PlantId{2, 1});
  CHECK_FALSE(m.full_isomorphism);
  REQUIRE(m.missing_plants.size() == 1);
  CHECK(m.missing_plants[0] == PlantId{1, 4});
  for (std::size_t k = 0; k < subset.size(); ++k) CHECK(m.pairs.at(labels[k]) == pg.ids[static_cast<std::size_t>(subset[k])]);
}

TEST_CASE("random subgraphs agree with the brute-force embedding oracle") {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const int rows = 1 + static_cast<int>(rng() % 3);
    const int cols = 2 + static_cast<int>(rng() % 2);
    const auto pg = build_plant_graph(grid_layout(rows, cols), "R01", rows);
    const int n = pg.graph.size();
    const int seed_p = pg.index_of(PlantId{rows, 1});
    // Random connected subset containing the seed, grown by random frontier picks.
    std::vector<int> subset{seed_p};
    const int target = 2 + static_cast<int>(rng() % static_cast<unsigned>(n - 1));
    while (static_cast<int>(subset.size()) < target) {
      std::vector<int> frontier;
      for (int v : subset)
        for (int w : pg.graph.neighbors(v))
          if (std::find(subset.begin(), subset.end(), w) == subset.end() &&
              std::find(frontier.begin(), frontier.end(), w) == frontier.end())
            frontier.push_back(w);
      subset.push_back(frontier[rng() % frontier.size()]);
    }
    std::vector<TrackId> labels;
    for (std::size_t k = 0; k < subset.size(); ++k) labels.push_back(TrackId{rng(), static_cast<std::uint32_t>(rng())});
    const auto tg = mirror(pg, subset, labels);
    const int seed_t = tg.index_of(labels[0]);
    const auto oracle = brute_force_embeddings(tg.graph, pg.graph, seed_t, seed_p);
    REQUIRE_FALSE(oracle.empty());
    const auto m = match_graphs(tg, pg, labels[0], PlantId{rows, 1});
    // Edge preserving and seed fixing.
    for (const auto& [a, b] : tg.graph.edges())
      CHECK(pg.graph.has_edge(pg.index_of(m.pairs.at(tg.ids[static_cast<std::size_t>(a)])),
                              pg.index_of(m.pairs.at(tg.ids[static_cast<std::size_t>(b)]))));
    CHECK(m.pairs.at(labels[0]) == PlantId{rows, 1});
    // Consistent geometry singles out the true placement.
    for (std::size_t k = 0; k < subset.size(); ++k) CHECK(m.pairs.at(labels[k]) == pg.ids[static_cast<std::size_t>(subset[k])]);
    CHECK(m.missing_plants.size() == static_cast<std::size_t>(n) - subset.size());
  }
}

}  // TEST_SUITE
