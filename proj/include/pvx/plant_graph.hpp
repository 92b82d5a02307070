#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pvx/geometry.hpp"
#include "pvx/plant_id.hpp"
#include "pvx/row_filter.hpp"
#include "pvx/segmentation.hpp"
#include "pvx/tracking.hpp"

namespace pvx {

// --- plant file -----------------------------------------------------------------------

// One plant row: grid[0] is the top sub-row, grid.back() the bottom one.
// Column k of every sub-row refers to the same horizontal position; an empty
// entry marks a gap (e.g. between module tables).
struct PlantRow {
  std::string row_id;
  std::vector<std::vector<std::optional<PlantId>>> grid;

  std::size_t module_count() const;
  std::optional<PlantId> bottom_left() const;
  std::optional<PlantId> top_right() const;
};

struct PlantLayout {
  std::vector<PlantRow> rows;

  // Throws UnknownRow.
  const PlantRow& row(std::string_view row_id) const;
};

// Throws Parse for malformed JSON, IrregularLayout for duplicate ids or empty sub-rows.
PlantLayout parse_plant_layout(std::string_view json_text);
PlantLayout load_plant_layout(const std::filesystem::path& path);
std::string plant_layout_to_json(const PlantLayout& layout);

// --- graphs ----------------------------------------------------------------------------

// Undirected simple graph on nodes 0..n-1 with sorted adjacency lists.
class Graph {
 public:
  Graph() = default;
  explicit Graph(int n) : adj_(static_cast<std::size_t>(n)) {}

  int size() const { return static_cast<int>(adj_.size()); }
  // Self-loops are rejected; duplicate edges are ignored.
  void add_edge(int a, int b);
  bool has_edge(int a, int b) const;
  int degree(int v) const { return static_cast<int>(adj_[static_cast<std::size_t>(v)].size()); }
  const std::vector<int>& neighbors(int v) const { return adj_[static_cast<std::size_t>(v)]; }
  std::size_t edge_count() const;
  std::vector<std::pair<int, int>> edges() const;  // (a < b), sorted

  // Connected components, each sorted; components ordered by smallest member.
  std::vector<std::vector<int>> components() const;
  // Subgraph induced by `keep` (sorted node list); node i of the result is keep[i].
  Graph induced(std::span<const int> keep) const;

 private:
  std::vector<std::vector<int>> adj_;
};

struct GridPos {
  int sub_row = 0;  // 0 = top
  int column = 0;
  friend bool operator==(const GridPos&, const GridPos&) = default;
};

struct PlantGraph {
  Graph graph;
  std::vector<PlantId> ids;
  std::vector<GridPos> positions;

  int index_of(const PlantId& id) const;  // -1 when absent
};

// Grid adjacency of the row's modules. Gaps are bridged horizontally when
// gap_adjacency is set. Throws UnknownRow, IrregularLayout when the grid
// height differs from rows_per_stack.
PlantGraph build_plant_graph(const PlantLayout& layout, std::string_view row_id, int rows_per_stack,
                             bool gap_adjacency = true);

// Front-row masks of one frame together with their track ids.
struct TrackedFrame {
  int frame_index = 0;
  std::vector<ModuleMask> masks;
  std::vector<TrackId> ids;
};

struct TrackGraphParams {
  double dilation_factor = 0.1;  // of the median mask width
  int overlap_threshold_px = 20;
  int min_track_frames = 5;
  bool gap_mode = true;
  double gap_search_factor = 3.0;  // of the median mask width
};

struct TrackGraph {
  Graph graph;
  std::vector<TrackId> ids;  // sorted
  // Mean image displacement from the lower-index to the higher-index endpoint of each edge.
  std::map<std::pair<int, int>, Point2> edge_offsets;

  int index_of(const TrackId& id) const;  // -1 when absent
};

// Square dilation of a mask's bitmap; returns the dilated bitmap and its frame offset.
struct DilatedMask {
  int x0 = 0;
  int y0 = 0;
  RasterU8 bitmap;
};
DilatedMask dilate(const ModuleMask& mask, int radius);
std::size_t overlap(const DilatedMask& a, const DilatedMask& b);

// Throws EmptyGraph when no non-spurious track remains.
TrackGraph build_track_graph(std::span<const TrackedFrame> frames, const std::map<TrackId, int>& track_lengths,
                             int rows_per_stack, const TrackGraphParams& params = {});

// Bottom line (largest intercept) of the frame's front rows, leftmost center.
// Throws SeedNotFound.
TrackId find_seed(std::span<const Point2> centers, std::span<const TrackId> ids, const FrontRows& rows);

// Frame to search for the seed: first for rightward scans, last for leftward.
std::size_t seed_frame_position(std::size_t frame_count, ScanDirection direction);

struct IdMapping {
  std::map<TrackId, PlantId> pairs;
  std::vector<TrackId> unmatched_tracks;
  std::vector<PlantId> missing_plants;
  bool full_isomorphism = false;
  int candidates_considered = 0;
};

struct MatchParams {
  long long step_budget = 5'000'000;
  int max_candidates = 4096;
};

// Stage 1: isomorphisms fixing the seed; stage 2: subgraph monomorphisms of
// the track graph into the plant graph. Among several candidates the one whose
// edge directions agree best with the image geometry wins. Throws RowUnmatchable.
IdMapping match_graphs(const TrackGraph& tracks, const PlantGraph& plant, const TrackId& seed_track,
                       const PlantId& seed_plant, const MatchParams& params = {});

}  // namespace pvx
