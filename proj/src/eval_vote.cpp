#include "pvx/eval_vote.hpp"

#include <algorithm>
#include <charconv>
#include <random>
#include <set>

#include <json.hpp>

#include "pvx/error.hpp"

namespace pvx {

namespace {

constexpr std::array<std::string_view, kClassCount> kNames{"Healthy", "Mh",  "Mp", "Sh", "Sp", "Pid",
                                                           "Cm+",     "Cs+", "C",  "D",  "Chs"};

int ord(AnomalyClass c) { return static_cast<int>(c); }

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Non-empty lines after the header, split on commas.
std::vector<std::vector<std::string_view>> csv_rows(std::string_view text, std::string_view header) {
  std::vector<std::vector<std::string_view>> rows;
  std::size_t pos = 0;
  int line_no = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != header) fail(ErrorCode::MalformedRow, "expected header '" + std::string(header) + "'");
      header_seen = true;
      continue;
    }
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      fields.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(fields));
  }
  if (!header_seen) fail(ErrorCode::MalformedRow, "missing header '" + std::string(header) + "'");
  return rows;
}

}  // namespace

std::string_view to_string(AnomalyClass c) { return kNames[static_cast<std::size_t>(ord(c))]; }

AnomalyClass parse_anomaly_class(std::string_view label) {
  for (int k = 0; k < kClassCount; ++k)
    if (kNames[static_cast<std::size_t>(k)] == label) return static_cast<AnomalyClass>(k);
  fail(ErrorCode::Parse, "unknown anomaly class '" + std::string(label) + "'");
}

AnomalyClass majority_vote(std::span<const PatchPrediction> preds) {
  if (preds.empty()) fail(ErrorCode::InvalidArgument, "majority vote over no predictions");
  std::array<int, kClassCount> count{};
  std::array<double, kClassCount> conf{};
  for (const auto& p : preds) {
    ++count[static_cast<std::size_t>(ord(p.label))];
    conf[static_cast<std::size_t>(ord(p.label))] += p.confidence.value_or(0.0);
  }
  int best = 0;
  for (int k = 1; k < kClassCount; ++k) {
    const auto i = static_cast<std::size_t>(k), b = static_cast<std::size_t>(best);
    if (count[i] > count[b] || (count[i] == count[b] && conf[i] > conf[b])) best = k;
  }
  return static_cast<AnomalyClass>(best);
}

ClassificationReport classification_report(const std::map<std::string, AnomalyClass>& truth,
                                           const std::map<std::string, AnomalyClass>& predicted) {
  if (truth.size() != predicted.size()) fail(ErrorCode::KeyMismatch, "truth and predictions cover different keys");
  if (truth.empty()) fail(ErrorCode::InvalidArgument, "nothing to evaluate");
  ClassificationReport r;
  auto pit = predicted.begin();
  for (const auto& [key, t] : truth) {
    if (pit->first != key) fail(ErrorCode::KeyMismatch, "key '" + key + "' missing from predictions");
    ++r.confusion[static_cast<std::size_t>(ord(t))][static_cast<std::size_t>(ord(pit->second))];
    ++pit;
  }
  r.total = static_cast<int>(truth.size());
  int correct = 0, present = 0;
  for (std::size_t k = 0; k < kClassCount; ++k) {
    int row = 0, col = 0;
    for (std::size_t j = 0; j < kClassCount; ++j) {
      row += r.confusion[k][j];
      col += r.confusion[j][k];
    }
    const int tp = r.confusion[k][k];
    correct += tp;
    auto& m = r.per_class[k];
    m.support = row;
    m.present = row > 0 || col > 0;
    m.precision = col > 0 ? static_cast<double>(tp) / col : 0.0;
    m.recall = row > 0 ? static_cast<double>(tp) / row : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    if (m.present) {
      r.macro_f1 += m.f1;
      ++present;
    }
    r.weighted_f1 += m.f1 * row;
  }
  r.accuracy = static_cast<double>(correct) / r.total;
  r.macro_f1 /= present;
  r.weighted_f1 /= r.total;
  return r;
}

std::string ClassificationReport::to_json() const {
  nlohmann::ordered_json j;
  j["accuracy"] = accuracy;
  j["macro_f1"] = macro_f1;
  j["weighted_f1"] = weighted_f1;
  j["total"] = total;
  auto classes = nlohmann::ordered_json::object();
  for (int k = 0; k < kClassCount; ++k) {
    const auto& m = per_class[static_cast<std::size_t>(k)];
    if (!m.present) continue;
    classes[std::string(kNames[static_cast<std::size_t>(k)])] = {
        {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
  }
  j["classes"] = classes;
  j["labels"] = kNames;
  j["confusion"] = confusion;
  return j.dump(2);
}

VoteExperiment vote_improvement_experiment(int module_count, int patches_per_module, double flip_prob,
                                           std::uint64_t rng_seed) {
  if (module_count < 1 || patches_per_module < 1) fail(ErrorCode::InvalidArgument, "need at least one module and patch");
  if (!(flip_prob >= 0.0 && flip_prob < static_cast<double>(kClassCount - 1) / kClassCount))
    fail(ErrorCode::InvalidArgument, "flip probability out of range");
  std::mt19937_64 rng(rng_seed);
  std::uniform_int_distribution<int> label(0, kClassCount - 1);
  std::uniform_int_distribution<int> other(1, kClassCount - 1);
  std::bernoulli_distribution flip(flip_prob);
  long long patch_correct = 0, module_correct = 0;
  std::vector<PatchPrediction> preds(static_cast<std::size_t>(patches_per_module));
  for (int m = 0; m < module_count; ++m) {
    const int truth = label(rng);
    for (auto& p : preds) {
      const int l = flip(rng) ? (truth + other(rng)) % kClassCount : truth;
      p.label = static_cast<AnomalyClass>(l);
      patch_correct += l == truth;
    }
    module_correct += ord(majority_vote(preds)) == truth;
  }
  return {static_cast<double>(patch_correct) / (static_cast<double>(module_count) * patches_per_module),
          static_cast<double>(module_correct) / module_count};
}

std::vector<PatchPrediction> parse_predictions_csv(std::string_view text) {
  std::vector<PatchPrediction> out;
  for (const auto& f : csv_rows(text, "plant_id,ordinal,label,confidence")) {
    if (f.size() != 4) fail(ErrorCode::MalformedRow, "prediction row needs 4 fields");
    PatchPrediction p;
    p.plant_id = PlantId::parse(f[0]);
    auto [ptr, ec] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), p.ordinal);
    if (ec != std::errc{} || ptr != f[1].data() + f[1].size() || p.ordinal < 0)
      fail(ErrorCode::MalformedRow, "bad ordinal '" + std::string(f[1]) + "'");
    p.label = parse_anomaly_class(f[2]);
    if (!f[3].empty()) {
      double c = 0.0;
      auto [cp, cec] = std::from_chars(f[3].data(), f[3].data() + f[3].size(), c);
      if (cec != std::errc{} || cp != f[3].data() + f[3].size()) fail(ErrorCode::MalformedRow, "bad confidence");
      if (!(c >= 0.0 && c <= 1.0)) fail(ErrorCode::RangeViolation, "confidence outside [0, 1]");
      p.confidence = c;
    }
    out.push_back(p);
  }
  return out;
}

std::map<PlantId, AnomalyClass> parse_truth_csv(std::string_view text) {
  std::map<PlantId, AnomalyClass> out;
  for (const auto& f : csv_rows(text, "plant_id,label")) {
    if (f.size() != 2) fail(ErrorCode::MalformedRow, "truth row needs 2 fields");
    const PlantId id = PlantId::parse(f[0]);
    if (!out.emplace(id, parse_anomaly_class(f[1])).second) fail(ErrorCode::MalformedRow, "duplicate module " + id.str());
  }
  return out;
}

EvaluationResult evaluate_predictions(std::span<const PatchPrediction> preds,
                                      const std::map<PlantId, AnomalyClass>& truth) {
  std::map<PlantId, std::vector<PatchPrediction>> by_module;
  for (const auto& p : preds) by_module[p.plant_id].push_back(p);
  EvaluationResult r;
  std::map<std::string, AnomalyClass> pt, pp, mt, mp;
  for (const auto& [id, list] : by_module) {
    const auto it = truth.find(id);
    if (it == truth.end()) fail(ErrorCode::KeyMismatch, "module " + id.str() + " has no truth label");
    r.module_labels[id] = majority_vote(list);
    mt[id.str()] = it->second;
    mp[id.str()] = r.module_labels[id];
    for (const auto& p : list) {
      const std::string key = id.str() + "#" + std::to_string(p.ordinal);
      if (!pp.emplace(key, p.label).second) fail(ErrorCode::MalformedRow, "duplicate prediction " + key);
      pt[key] = it->second;
    }
  }
  if (by_module.size() != truth.size()) fail(ErrorCode::KeyMismatch, "some modules have no predictions");
  r.patch_level = classification_report(pt, pp);
  r.module_level = classification_report(mt, mp);
  return r;
}

std::string EvaluationResult::to_json() const {
  nlohmann::ordered_json j;
  j["patch_level"] = nlohmann::ordered_json::parse(patch_level.to_json());
  j["module_level"] = nlohmann::ordered_json::parse(module_level.to_json());
  auto labels = nlohmann::ordered_json::object();
  for (const auto& [id, c] : module_labels) labels[id.str()] = std::string(to_string(c));
  j["module_labels"] = labels;
  return j.dump(2) + "\n";
}

}  // namespace pvx
