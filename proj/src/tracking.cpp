#include "pvx/tracking.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <set>

#include "pvx/error.hpp"

namespace pvx {

std::string TrackId::hex() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx%08x", static_cast<unsigned long long>(hi), static_cast<unsigned>(lo));
  return buf;
}

TrackId TrackId::parse(std::string_view hex) {
  if (hex.size() != 24) fail(ErrorCode::Parse, "track id must have 24 hex digits");
  auto value = [](std::string_view s) {
    std::uint64_t v = 0;
    for (char c : s) {
      int d;
      if (c >= '0' && c <= '9') d = c - '0';
      else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
      else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
      else fail(ErrorCode::Parse, "bad hex digit in track id");
      v = (v << 4) | static_cast<std::uint64_t>(d);
    }
    return v;
  };
  return TrackId{value(hex.substr(0, 16)), static_cast<std::uint32_t>(value(hex.substr(16)))};
}

TrackId TrackIdGenerator::next() {
  const std::uint64_t a = rng_();
  const std::uint64_t b = rng_();
  return TrackId{a, static_cast<std::uint32_t>(b >> 32)};
}

double median_nearest_neighbor_spacing(std::span<const Point2> points) {
  if (points.size() < 2) return 0.0;
  std::vector<double> nn;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < points.size(); ++j)
      if (i != j) best = std::min(best, distance(points[i], points[j]));
    nn.push_back(best);
  }
  std::sort(nn.begin(), nn.end());
  const std::size_t n = nn.size();
  return n % 2 ? nn[n / 2] : 0.5 * (nn[n / 2 - 1] + nn[n / 2]);
}

std::vector<TrackId> associate(std::span<const Point2> prev_centers, std::span<const TrackId> prev_ids,
                               const Homography& prev_to_curr, std::span<const Point2> curr_centers,
                               TrackIdGenerator& ids, const AssociationParams& params) {
  if (prev_centers.size() != prev_ids.size()) fail(ErrorCode::InvalidArgument, "centers and ids differ in length");
  std::vector<Point2> projected;
  projected.reserve(prev_centers.size());
  for (const auto& p : prev_centers) projected.push_back(prev_to_curr.apply(p));

  double gate = std::numeric_limits<double>::infinity();
  if (params.gate_factor > 0.0) {
    double spacing = median_nearest_neighbor_spacing(curr_centers);
    if (curr_centers.size() < 2) spacing = median_nearest_neighbor_spacing(projected);
    if (spacing > 0.0) gate = params.gate_factor * spacing;
  }

  // For every current center keep the closest projected center that chose it.
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> winner(curr_centers.size(), kNone);
  std::vector<double> winner_dist(curr_centers.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < projected.size(); ++i) {
    std::size_t nearest = kNone;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < curr_centers.size(); ++j) {
      const double d = distance(projected[i], curr_centers[j]);
      if (d < best) {
        best = d;
        nearest = j;
      }
    }
    if (nearest == kNone || best > gate) continue;
    if (best < winner_dist[nearest]) {
      winner_dist[nearest] = best;
      winner[nearest] = i;
    }
  }
  std::vector<TrackId> out;
  out.reserve(curr_centers.size());
  for (std::size_t j = 0; j < curr_centers.size(); ++j)
    out.push_back(winner[j] == kNone ? ids.next() : prev_ids[winner[j]]);
  return out;
}

std::vector<TrackId> associate(std::span<const ModuleMask> prev_masks, std::span<const TrackId> prev_ids,
                               const InterFrameMotion& motion, std::span<const ModuleMask> curr_masks,
                               TrackIdGenerator& ids, const AssociationParams& params) {
  std::vector<Point2> prev, curr;
  for (const auto& m : prev_masks) prev.push_back(m.center());
  for (const auto& m : curr_masks) curr.push_back(m.center());
  return associate(prev, prev_ids, motion.h, curr, ids, params);
}

void TrackStore::add_frame(int frame_index, std::vector<TrackId> ids) {
  if (!frames_.empty() && frame_index <= frames_.back())
    fail(ErrorCode::InvalidArgument, "frames must be added in increasing order");
  frames_.push_back(frame_index);
  std::set<TrackId> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) continue;
    auto [it, fresh] = current_run_.try_emplace(id, frame_index, 0);
    auto& [last, run] = it->second;
    run = (!fresh && last == frame_index - 1) ? run + 1 : 1;
    last = frame_index;
    int& best = lengths_[id];
    best = std::max(best, run);
  }
  assignments_.emplace(frame_index, std::move(ids));
}

const std::vector<TrackId>& TrackStore::ids(int frame_index) const {
  const auto it = assignments_.find(frame_index);
  if (it == assignments_.end()) fail(ErrorCode::UnknownFrame, "frame " + std::to_string(frame_index) + " not tracked");
  return it->second;
}

int TrackStore::duplicate_violations() const {
  int violations = 0;
  for (const auto& [frame, ids] : assignments_) {
    std::set<TrackId> seen(ids.begin(), ids.end());
    if (seen.size() != ids.size()) ++violations;
  }
  return violations;
}

TrackStore track_sequence(std::span<const int> frame_indices, std::span<const std::vector<ModuleMask>> masks,
                          std::span<const InterFrameMotion> motions, std::uint64_t seed,
                          const AssociationParams& params) {
  if (frame_indices.size() != masks.size()) fail(ErrorCode::InvalidArgument, "one mask list per frame required");
  if (!frame_indices.empty() && motions.size() + 1 != frame_indices.size())
    fail(ErrorCode::InvalidArgument, "one motion per consecutive frame pair required");
  TrackIdGenerator gen(seed);
  TrackStore store;
  std::vector<TrackId> prev;
  for (std::size_t t = 0; t < frame_indices.size(); ++t) {
    std::vector<TrackId> ids;
    if (t == 0) {
      for (std::size_t k = 0; k < masks[0].size(); ++k) ids.push_back(gen.next());
    } else {
      ids = associate(masks[t - 1], prev, motions[t - 1], masks[t], gen, params);
    }
    store.add_frame(frame_indices[t], ids);
    prev = std::move(ids);
  }
  return store;
}

}  // namespace pvx
