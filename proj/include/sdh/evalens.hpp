#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace sdh::evalens {

// Mann-Whitney AUC with ties counted half, via average ranks (O(n log n)).
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct BootstrapCi {
  double lo = 0.0, hi = 0.0;
  int degenerate_redraws = 0;  // constant-label draws that were redrawn
};

BootstrapCi bootstrap_ci(const std::vector<double>& scores,
                         const std::vector<int>& labels, int n_boot = 2000,
                         double alpha = 0.05, uint64_t seed = 0);

// Argmax of sensitivity + specificity - 1 over midpoints of adjacent sorted
// unique scores plus -inf/+inf sentinels; lowest threshold wins ties.
double youden_threshold(const std::vector<double>& scores,
                        const std::vector<int>& labels);

struct ThresholdMetrics {
  double threshold = 0.0;
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
};

// score >= t is called positive; F1 defined as 0 when nothing is predicted
// positive.
ThresholdMetrics threshold_metrics(const std::vector<double>& scores,
                                   const std::vector<int>& labels, double t);

// Overlap of binary masks; 1 when both empty.
double dice_score(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& truth);

double brier(const std::vector<double>& probs, const std::vector<int>& labels);

struct CalibrationBin {
  double mean_prob = 0.0;   // NaN for empty bins
  double observed_rate = 0.0;  // NaN for empty bins
  int64_t count = 0;
};

std::vector<CalibrationBin> calibration_curve(const std::vector<double>& probs,
                                              const std::vector<int>& labels,
                                              int bins = 10);

// ---------------------------------------------------------------------------
// Prediction matrices and greedy multi-seed ensemble selection

struct PredictionMatrix {
  std::vector<std::string> model_ids;
  std::vector<std::string> study_ids;
  std::vector<int> labels;              // per study
  std::vector<std::vector<double>> probs;  // [model][study]

  void validate() const;
  int model_index(const std::string& id) const;  // -1 if absent
};

// Unweighted mean of the selected model rows.
std::vector<double> average_probs(const PredictionMatrix& m,
                                  const std::vector<int>& subset);

struct EnsembleSelection {
  std::vector<int> member_indices;      // inclusion order, seed first
  std::vector<std::string> member_ids;
  std::vector<double> auc_trace;        // validation AUC after each inclusion
  int seed_index = -1;
  double final_val_auc = 0.0;
};

// Greedy forward selection restarted from each of the top-k single models;
// a candidate joins only on strict AUC improvement. Ties: lowest model
// index; across seeds: best final AUC, then fewest members, then earliest
// seed.
EnsembleSelection greedy_select(const PredictionMatrix& validation, int top_k = 5);

struct EvaluationReport {
  double test_auc = 0.0;
  BootstrapCi test_auc_ci;
  double validation_threshold = 0.0;  // Youden on validation ensemble probs
  ThresholdMetrics test_metrics;
  double test_brier = 0.0;
  std::vector<CalibrationBin> calibration;
  std::vector<std::pair<std::string, double>> member_test_aucs;
};

// Threshold fitted on the validation matrix, applied to the test matrix.
EvaluationReport evaluate_selection(const EnsembleSelection& sel,
                                    const PredictionMatrix& validation,
                                    const PredictionMatrix& test,
                                    int n_boot = 2000, uint64_t seed = 0);

// ROC points (fpr, tpr, threshold) for plotting, thresholds descending.
std::vector<std::array<double, 3>> roc_points(const std::vector<double>& scores,
                                              const std::vector<int>& labels);

}  // namespace sdh::evalens
