#include "pvx/plant_graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <set>

#include <json.hpp>

#include "pvx/error.hpp"
#include "pvx/ingest.hpp"

namespace pvx {

using json = nlohmann::json;

// --- plant file ------------------------------------------------------------------------

std::size_t PlantRow::module_count() const {
  std::size_t n = 0;
  for (const auto& sub : grid)
    for (const auto& cell : sub) n += cell.has_value();
  return n;
}

std::optional<PlantId> PlantRow::bottom_left() const {
  if (grid.empty()) return std::nullopt;
  for (const auto& cell : grid.back())
    if (cell) return cell;
  return std::nullopt;
}

std::optional<PlantId> PlantRow::top_right() const {
  if (grid.empty()) return std::nullopt;
  for (auto it = grid.front().rbegin(); it != grid.front().rend(); ++it)
    if (*it) return *it;
  return std::nullopt;
}

const PlantRow& PlantLayout::row(std::string_view row_id) const {
  for (const auto& r : rows)
    if (r.row_id == row_id) return r;
  fail(ErrorCode::UnknownRow, "row " + std::string(row_id) + " is not in the plant file");
}

PlantLayout parse_plant_layout(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("plant file: ") + e.what());
  }
  PlantLayout layout;
  std::set<PlantId> seen_ids;
  std::set<std::string> seen_rows;
  try {
    for (const auto& jr : j.at("rows")) {
      PlantRow row;
      row.row_id = jr.at("row_id").get<std::string>();
      if (!seen_rows.insert(row.row_id).second) fail(ErrorCode::IrregularLayout, "duplicate row " + row.row_id);
      for (const auto& jsub : jr.at("grid")) {
        std::vector<std::optional<PlantId>> sub;
        bool any = false;
        for (const auto& cell : jsub) {
          if (cell.is_null()) {
            sub.emplace_back();
            continue;
          }
          const PlantId id = PlantId::parse(cell.get<std::string>());
          if (!seen_ids.insert(id).second) fail(ErrorCode::IrregularLayout, "duplicate plant id " + id.str());
          sub.emplace_back(id);
          any = true;
        }
        if (!any) fail(ErrorCode::IrregularLayout, "row " + row.row_id + " has an empty sub-row");
        row.grid.push_back(std::move(sub));
      }
      if (row.grid.empty()) fail(ErrorCode::IrregularLayout, "row " + row.row_id + " has no modules");
      layout.rows.push_back(std::move(row));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("plant file: ") + e.what());
  }
  return layout;
}

PlantLayout load_plant_layout(const std::filesystem::path& path) { return parse_plant_layout(read_text_file(path)); }

std::string plant_layout_to_json(const PlantLayout& layout) {
  json rows = json::array();
  for (const auto& r : layout.rows) {
    json grid = json::array();
    for (const auto& sub : r.grid) {
      json cells = json::array();
      for (const auto& c : sub) cells.push_back(c ? json(c->str()) : json(nullptr));
      grid.push_back(std::move(cells));
    }
    rows.push_back({{"row_id", r.row_id}, {"grid", std::move(grid)}});
  }
  return json{{"rows", std::move(rows)}}.dump(2) + "\n";
}

// --- graph -------------------------------------------------------------------------------

void Graph::add_edge(int a, int b) {
  if (a == b) fail(ErrorCode::InvalidArgument, "self-loop");
  auto insert = [](std::vector<int>& v, int x) {
    const auto it = std::lower_bound(v.begin(), v.end(), x);
    if (it == v.end() || *it != x) v.insert(it, x);
  };
  insert(adj_[static_cast<std::size_t>(a)], b);
  insert(adj_[static_cast<std::size_t>(b)], a);
}

bool Graph::has_edge(int a, int b) const {
  const auto& v = adj_[static_cast<std::size_t>(a)];
  return std::binary_search(v.begin(), v.end(), b);
}

std::size_t Graph::edge_count() const {
  std::size_t total = 0;
  for (const auto& v : adj_) total += v.size();
  return total / 2;
}

std::vector<std::pair<int, int>> Graph::edges() const {
  std::vector<std::pair<int, int>> out;
  for (int a = 0; a < size(); ++a)
    for (int b : neighbors(a))
      if (a < b) out.emplace_back(a, b);
  return out;
}

std::vector<std::vector<int>> Graph::components() const {
  std::vector<int> comp(adj_.size(), -1);
  std::vector<std::vector<int>> out;
  for (int s = 0; s < size(); ++s) {
    if (comp[static_cast<std::size_t>(s)] >= 0) continue;
    std::vector<int> members{s};
    comp[static_cast<std::size_t>(s)] = static_cast<int>(out.size());
    for (std::size_t k = 0; k < members.size(); ++k)
      for (int n : neighbors(members[k]))
        if (comp[static_cast<std::size_t>(n)] < 0) {
          comp[static_cast<std::size_t>(n)] = static_cast<int>(out.size());
          members.push_back(n);
        }
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  return out;
}

Graph Graph::induced(std::span<const int> keep) const {
  Graph g(static_cast<int>(keep.size()));
  std::vector<int> index(adj_.size(), -1);
  for (std::size_t i = 0; i < keep.size(); ++i) index[static_cast<std::size_t>(keep[i])] = static_cast<int>(i);
  for (std::size_t i = 0; i < keep.size(); ++i)
    for (int n : neighbors(keep[i])) {
      const int j = index[static_cast<std::size_t>(n)];
      if (j > static_cast<int>(i)) g.add_edge(static_cast<int>(i), j);
    }
  return g;
}

int PlantGraph::index_of(const PlantId& id) const {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == id) return static_cast<int>(i);
  return -1;
}

int TrackGraph::index_of(const TrackId& id) const {
  const auto it = std::lower_bound(ids.begin(), ids.end(), id);
  return it != ids.end() && *it == id ? static_cast<int>(it - ids.begin()) : -1;
}

PlantGraph build_plant_graph(const PlantLayout& layout, std::string_view row_id, int rows_per_stack,
                             bool gap_adjacency) {
  const PlantRow& row = layout.row(row_id);
  if (static_cast<int>(row.grid.size()) != rows_per_stack)
    fail(ErrorCode::IrregularLayout, "row " + row.row_id + " has " + std::to_string(row.grid.size()) +
                                         " sub-rows, expected " + std::to_string(rows_per_stack));
  PlantGraph pg;
  std::map<std::pair<int, int>, int> at;
  for (std::size_t r = 0; r < row.grid.size(); ++r)
    for (std::size_t c = 0; c < row.grid[r].size(); ++c)
      if (row.grid[r][c]) {
        at[{static_cast<int>(r), static_cast<int>(c)}] = static_cast<int>(pg.ids.size());
        pg.ids.push_back(*row.grid[r][c]);
        pg.positions.push_back({static_cast<int>(r), static_cast<int>(c)});
      }
  pg.graph = Graph(static_cast<int>(pg.ids.size()));
  for (std::size_t r = 0; r < row.grid.size(); ++r) {
    int prev = -1;
    int prev_col = -1;
    for (std::size_t c = 0; c < row.grid[r].size(); ++c) {
      if (!row.grid[r][c]) continue;
      const int node = at.at({static_cast<int>(r), static_cast<int>(c)});
      if (prev >= 0 && (static_cast<int>(c) == prev_col + 1 || gap_adjacency)) pg.graph.add_edge(prev, node);
      prev = node;
      prev_col = static_cast<int>(c);
      if (r + 1 < row.grid.size()) {
        const auto below = at.find({static_cast<int>(r) + 1, static_cast<int>(c)});
        if (below != at.end()) pg.graph.add_edge(node, below->second);
      }
    }
  }
  return pg;
}

// --- track graph ---------------------------------------------------------------------------

DilatedMask dilate(const ModuleMask& mask, int radius) {
  const RasterU8& src = mask.bitmap();
  const int w = src.width() + 2 * radius, h = src.height() + 2 * radius;
  RasterU8 horiz(w, src.height());
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x)
      if (src(x, y))
        for (int dx = 0; dx <= 2 * radius; ++dx) horiz(x + dx, y) = 1;
  DilatedMask out{mask.x0() - radius, mask.y0() - radius, RasterU8(w, h)};
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < w; ++x)
      if (horiz(x, y))
        for (int dy = 0; dy <= 2 * radius; ++dy) out.bitmap(x, y + dy) = 1;
  return out;
}

std::size_t overlap(const DilatedMask& a, const DilatedMask& b) {
  const int x0 = std::max(a.x0, b.x0), y0 = std::max(a.y0, b.y0);
  const int x1 = std::min(a.x0 + a.bitmap.width(), b.x0 + b.bitmap.width());
  const int y1 = std::min(a.y0 + a.bitmap.height(), b.y0 + b.bitmap.height());
  std::size_t n = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) n += (a.bitmap(x - a.x0, y - a.y0) && b.bitmap(x - b.x0, y - b.y0));
  return n;
}

TrackGraph build_track_graph(std::span<const TrackedFrame> frames, const std::map<TrackId, int>& track_lengths,
                             int rows_per_stack, const TrackGraphParams& params) {
  const bool exempt = frames.size() == 1;
  std::set<TrackId> node_set;
  std::vector<double> widths;
  for (const auto& f : frames) {
    if (f.masks.size() != f.ids.size()) fail(ErrorCode::InvalidArgument, "masks and ids differ in length");
    for (std::size_t k = 0; k < f.masks.size(); ++k) {
      widths.push_back(f.masks[k].bbox_width());
      const auto it = track_lengths.find(f.ids[k]);
      const int len = it == track_lengths.end() ? 0 : it->second;
      if (exempt || len >= params.min_track_frames) node_set.insert(f.ids[k]);
    }
  }
  if (node_set.empty()) fail(ErrorCode::EmptyGraph, "no track spans enough frames");
  std::sort(widths.begin(), widths.end());
  const std::size_t nw = widths.size();
  const double median_width = nw % 2 ? widths[nw / 2] : 0.5 * (widths[nw / 2 - 1] + widths[nw / 2]);
  const int radius = static_cast<int>(std::lround(params.dilation_factor * median_width));
  const int search = static_cast<int>(std::lround(params.gap_search_factor * median_width));

  std::vector<TrackId> all(node_set.begin(), node_set.end());
  auto node_of = [&](const TrackId& id) {
    const auto it = std::lower_bound(all.begin(), all.end(), id);
    return it != all.end() && *it == id ? static_cast<int>(it - all.begin()) : -1;
  };
  Graph full(static_cast<int>(all.size()));

  for (const auto& f : frames) {
    std::vector<int> node;
    std::vector<std::size_t> members;
    for (std::size_t k = 0; k < f.masks.size(); ++k) {
      const int n = node_of(f.ids[k]);
      if (n >= 0) {
        node.push_back(n);
        members.push_back(k);
      }
    }
    std::vector<DilatedMask> dil;
    for (auto k : members) dil.push_back(dilate(f.masks[k], radius));
    for (std::size_t i = 0; i < members.size(); ++i)
      for (std::size_t j = i + 1; j < members.size(); ++j) {
        if (node[i] == node[j] || full.has_edge(node[i], node[j])) continue;
        if (overlap(dil[i], dil[j]) > static_cast<std::size_t>(params.overlap_threshold_px))
          full.add_edge(node[i], node[j]);
      }
    if (params.gap_mode) {
      for (std::size_t i = 0; i < members.size(); ++i) {
        const ModuleMask& m = f.masks[members[i]];
        const int y = static_cast<int>(std::floor(m.center().y));
        const int cx = static_cast<int>(std::floor(m.center().x));
        for (int dir : {-1, 1}) {
          for (int step = 1; step <= search; ++step) {
            const int x = cx + dir * step;
            if (m.contains(x, y)) continue;
            int hit = -1;
            for (std::size_t j = 0; j < members.size() && hit < 0; ++j)
              if (j != i && f.masks[members[j]].contains(x, y)) hit = static_cast<int>(j);
            if (hit >= 0) {
              if (node[static_cast<std::size_t>(hit)] != node[i]) full.add_edge(node[i], node[static_cast<std::size_t>(hit)]);
              break;
            }
          }
        }
      }
    }
  }

  // Largest connected component; ties go to the component with the smallest id.
  const auto comps = full.components();
  std::size_t best = 0;
  for (std::size_t c = 1; c < comps.size(); ++c)
    if (comps[c].size() > comps[best].size()) best = c;
  std::vector<int> keep = comps[best];

  if (rows_per_stack > 1) {
    std::vector<int> pruned;
    const Graph g = full.induced(keep);
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (g.degree(static_cast<int>(i)) != 1) pruned.push_back(keep[i]);
    keep = std::move(pruned);
  }
  if (keep.empty()) fail(ErrorCode::EmptyGraph, "track graph is empty after pruning");

  TrackGraph out;
  out.graph = full.induced(keep);
  for (int k : keep) out.ids.push_back(all[static_cast<std::size_t>(k)]);

  // Mean displacement along every kept edge.
  std::map<std::pair<int, int>, std::pair<Point2, int>> acc;
  for (const auto& f : frames) {
    std::vector<std::pair<int, Point2>> present;
    for (std::size_t k = 0; k < f.masks.size(); ++k) {
      const int n = out.index_of(f.ids[k]);
      if (n >= 0) present.emplace_back(n, f.masks[k].center());
    }
    for (std::size_t i = 0; i < present.size(); ++i)
      for (std::size_t j = 0; j < present.size(); ++j) {
        const auto [a, pa] = present[i];
        const auto [b, pb] = present[j];
        if (a < b && out.graph.has_edge(a, b)) {
          auto& [sum, count] = acc[{a, b}];
          sum = sum + (pb - pa);
          ++count;
        }
      }
  }
  for (const auto& [key, value] : acc) out.edge_offsets[key] = (1.0 / value.second) * value.first;
  return out;
}

TrackId find_seed(std::span<const Point2> centers, std::span<const TrackId> ids, const FrontRows& rows) {
  if (rows.lines.empty() || rows.lines.front().inliers.empty()) fail(ErrorCode::SeedNotFound, "no bottom line");
  const CenterLine* bottom = &rows.lines.front();
  for (const auto& l : rows.lines)
    if (l.intercept > bottom->intercept) bottom = &l;
  int best = -1;
  for (int k : bottom->inliers) {
    if (k < 0 || static_cast<std::size_t>(k) >= centers.size() || static_cast<std::size_t>(k) >= ids.size())
      fail(ErrorCode::SeedNotFound, "line refers to an unknown mask");
    if (best < 0 || centers[static_cast<std::size_t>(k)].x < centers[static_cast<std::size_t>(best)].x) best = k;
  }
  return ids[static_cast<std::size_t>(best)];
}

std::size_t seed_frame_position(std::size_t frame_count, ScanDirection direction) {
  if (frame_count == 0) fail(ErrorCode::SeedNotFound, "row has no frames");
  return direction == ScanDirection::Rightward ? 0 : frame_count - 1;
}

// --- matching ------------------------------------------------------------------------------

namespace {

int sign(double v) { return (v > 0) - (v < 0); }

class Matcher {
 public:
  Matcher(const TrackGraph& t, const PlantGraph& p, int seed_t, int seed_p, bool exact, const MatchParams& params)
      : t_(t), p_(p), exact_(exact), params_(params) {
    const int n = t.graph.size();
    order_.push_back(seed_t);
    parent_.assign(static_cast<std::size_t>(n), -1);
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    seen[static_cast<std::size_t>(seed_t)] = 1;
    for (std::size_t k = 0; k < order_.size(); ++k)
      for (int nb : t.graph.neighbors(order_[k]))
        if (!seen[static_cast<std::size_t>(nb)]) {
          seen[static_cast<std::size_t>(nb)] = 1;
          parent_[static_cast<std::size_t>(nb)] = order_[k];
          order_.push_back(nb);
        }
    map_.assign(static_cast<std::size_t>(n), -1);
    used_.assign(static_cast<std::size_t>(p.graph.size()), 0);
    seed_p_ = seed_p;
  }

  // Returns false when the step budget ran out.
  bool run() {
    if (static_cast<int>(order_.size()) != t_.graph.size()) return true;  // disconnected: nothing to find
    if (!compatible(order_[0], seed_p_)) return true;
    assign(order_[0], seed_p_);
    search(1);
    unassign(order_[0], seed_p_);
    return !out_of_budget_;
  }

  const std::vector<std::vector<int>>& candidates() const { return found_; }

 private:
  bool compatible(int u, int p) const {
    if (used_[static_cast<std::size_t>(p)]) return false;
    const int du = t_.graph.degree(u), dp = p_.graph.degree(p);
    if (exact_ ? du != dp : du > dp) return false;
    for (int w : t_.graph.neighbors(u)) {
      const int mw = map_[static_cast<std::size_t>(w)];
      if (mw >= 0 && !p_.graph.has_edge(mw, p)) return false;
    }
    if (exact_) {
      // Mapped plant neighbours of p must come from track neighbours of u.
      for (int q : p_.graph.neighbors(p)) {
        const int pre = inverse_.count(q) ? inverse_.at(q) : -1;
        if (pre >= 0 && !t_.graph.has_edge(pre, u)) return false;
      }
    }
    return true;
  }

  void assign(int u, int p) {
    map_[static_cast<std::size_t>(u)] = p;
    used_[static_cast<std::size_t>(p)] = 1;
    inverse_[p] = u;
  }
  void unassign(int u, int p) {
    map_[static_cast<std::size_t>(u)] = -1;
    used_[static_cast<std::size_t>(p)] = 0;
    inverse_.erase(p);
  }

  void search(std::size_t k) {
    if (out_of_budget_ || static_cast<int>(found_.size()) >= params_.max_candidates) return;
    if (k == order_.size()) {
      found_.push_back(map_);
      return;
    }
    const int u = order_[k];
    const int anchor = map_[static_cast<std::size_t>(parent_[static_cast<std::size_t>(u)])];
    for (int p : p_.graph.neighbors(anchor)) {
      if (++steps_ > params_.step_budget) {
        out_of_budget_ = true;
        return;
      }
      if (!compatible(u, p)) continue;
      assign(u, p);
      search(k + 1);
      unassign(u, p);
      if (out_of_budget_) return;
    }
  }

  const TrackGraph& t_;
  const PlantGraph& p_;
  bool exact_;
  MatchParams params_;
  std::vector<int> order_, parent_, map_;
  std::vector<char> used_;
  std::map<int, int> inverse_;
  int seed_p_ = 0;
  long long steps_ = 0;
  bool out_of_budget_ = false;
  std::vector<std::vector<int>> found_;
};

// Agreement between image displacements along track edges and grid offsets of
// their plant images: +1 per agreeing axis, -1 per contradicting one.
int geometric_score(const TrackGraph& t, const PlantGraph& p, const std::vector<int>& map) {
  int score = 0;
  for (const auto& [edge, d] : t.edge_offsets) {
    const GridPos a = p.positions[static_cast<std::size_t>(map[static_cast<std::size_t>(edge.first)])];
    const GridPos b = p.positions[static_cast<std::size_t>(map[static_cast<std::size_t>(edge.second)])];
    const int dc = b.column - a.column, dr = b.sub_row - a.sub_row;
    if (dc != 0) score += sign(dc) == sign(d.x) ? 1 : -1;
    if (dr != 0) score += sign(dr) == sign(d.y) ? 1 : -1;
  }
  return score;
}

}  // namespace

IdMapping match_graphs(const TrackGraph& tracks, const PlantGraph& plant, const TrackId& seed_track,
                       const PlantId& seed_plant, const MatchParams& params) {
  const int st = tracks.index_of(seed_track);
  const int sp = plant.index_of(seed_plant);
  if (st < 0) fail(ErrorCode::RowUnmatchable, "seed track " + seed_track.hex() + " is not in the track graph");
  if (sp < 0) fail(ErrorCode::RowUnmatchable, "seed plant id " + seed_plant.str() + " is not in the plant graph");

  std::vector<std::vector<int>> candidates;
  bool exact = false;
  if (tracks.graph.size() == plant.graph.size() && tracks.graph.edge_count() == plant.graph.edge_count()) {
    Matcher m(tracks, plant, st, sp, true, params);
    m.run();
    candidates = m.candidates();
    exact = !candidates.empty();
  }
  if (candidates.empty() && tracks.graph.size() <= plant.graph.size()) {
    Matcher m(tracks, plant, st, sp, false, params);
    m.run();
    candidates = m.candidates();
  }
  if (candidates.empty()) fail(ErrorCode::RowUnmatchable, "no embedding of the track graph honours the seed");

  std::size_t best = 0;
  int best_score = std::numeric_limits<int>::min();
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const int s = geometric_score(tracks, plant, candidates[c]);
    if (s > best_score) {
      best_score = s;
      best = c;
    }
  }
  IdMapping out;
  out.full_isomorphism = exact;
  out.candidates_considered = static_cast<int>(candidates.size());
  std::vector<char> hit(plant.ids.size(), 0);
  for (std::size_t u = 0; u < tracks.ids.size(); ++u) {
    const int p = candidates[best][u];
    out.pairs.emplace(tracks.ids[u], plant.ids[static_cast<std::size_t>(p)]);
    hit[static_cast<std::size_t>(p)] = 1;
  }
  for (std::size_t p = 0; p < plant.ids.size(); ++p)
    if (!hit[p]) out.missing_plants.push_back(plant.ids[p]);
  std::sort(out.missing_plants.begin(), out.missing_plants.end());
  return out;
}

}  // namespace pvx
