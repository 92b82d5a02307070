#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pvx/plant_id.hpp"

namespace pvx {

enum class AnomalyClass { Healthy, Mh, Mp, Sh, Sp, Pid, CmPlus, CsPlus, C, D, Chs };
inline constexpr int kClassCount = 11;

std::string_view to_string(AnomalyClass c);
// Throws Parse for unknown labels.
AnomalyClass parse_anomaly_class(std::string_view label);

struct PatchPrediction {
  PlantId plant_id;
  int ordinal = 0;
  AnomalyClass label = AnomalyClass::Healthy;
  std::optional<double> confidence;
};

// Most frequent label; ties go to the higher summed confidence, then the
// smaller ordinal. Throws InvalidArgument for an empty list.
AnomalyClass majority_vote(std::span<const PatchPrediction> preds);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int support = 0;
  bool present = false;  // in truth or predictions
};

struct ClassificationReport {
  double accuracy = 0.0;
  std::array<ClassMetrics, kClassCount> per_class{};
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::array<std::array<int, kClassCount>, kClassCount> confusion{};  // [truth][predicted]
  int total = 0;

  std::string to_json() const;
};

// Throws KeyMismatch unless both maps share the same keys, InvalidArgument when empty.
ClassificationReport classification_report(const std::map<std::string, AnomalyClass>& truth,
                                           const std::map<std::string, AnomalyClass>& predicted);

struct VoteExperiment {
  double patch_accuracy = 0.0;
  double module_accuracy = 0.0;
};

// Uniform true labels; each patch keeps its label with probability 1 - flip_prob
// and otherwise takes one of the other classes uniformly.
// Throws InvalidArgument unless 0 <= flip_prob < (K-1)/K.
VoteExperiment vote_improvement_experiment(int module_count, int patches_per_module, double flip_prob,
                                           std::uint64_t rng_seed);

// Predictions CSV: plant_id,ordinal,label,confidence (confidence may be empty).
std::vector<PatchPrediction> parse_predictions_csv(std::string_view text);
// Truth CSV: plant_id,label.
std::map<PlantId, AnomalyClass> parse_truth_csv(std::string_view text);

struct EvaluationResult {
  ClassificationReport patch_level;
  ClassificationReport module_level;
  std::map<PlantId, AnomalyClass> module_labels;

  std::string to_json() const;
};

// Votes per module and scores both levels against the module truth.
// Throws KeyMismatch when modules differ between predictions and truth.
EvaluationResult evaluate_predictions(std::span<const PatchPrediction> preds,
                                      const std::map<PlantId, AnomalyClass>& truth);

}  // namespace pvx
