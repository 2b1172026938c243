#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sdh::gbt {

struct GbtConfig {
  int n_rounds = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  int min_samples_leaf = 1;
  double lambda_l2 = 1.0;
  uint64_t seed = 0;
};

// flat binary tree; children of node i sit at stored indices
struct TreeNode {
  bool is_leaf = true;
  int feature = -1;
  double threshold = 0.0;   // x < threshold goes left
  bool missing_left = true; // learned default direction for NaN
  double weight = 0.0;      // leaf value (pre-shrinkage)
  int left = -1, right = -1;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // node 0 is the root
  double predict(const std::vector<double>& x) const;
};

struct BoostedModel {
  double base_score = 0.0;  // log-odds
  double shrinkage = 0.1;
  std::vector<RegressionTree> trees;
  std::vector<std::string> feature_names;
  std::string model_id = "tabular";

  double predict_margin(const std::vector<double>& x) const;
  double predict_proba(const std::vector<double>& x) const;
};

using Matrix = std::vector<std::vector<double>>;  // row-major, rows = samples

struct FitDiagnostics {
  std::vector<double> train_loss;  // logistic loss after each round
  bool degenerate = false;         // single-class training labels
};

BoostedModel fit_tabular_classifier(const Matrix& X, const std::vector<int>& y,
                                    const GbtConfig& cfg,
                                    FitDiagnostics* diag = nullptr);

std::vector<double> predict_proba_tab(const BoostedModel& model, const Matrix& X);

struct CvResult {
  GbtConfig best;
  double best_mean_auc = 0.0;
  int skipped_folds = 0;
};

// Patient-grouped k-fold CV over the config grid; best mean AUC wins, ties
// broken by fewer rounds then shallower depth.
CvResult cross_validate(const Matrix& X, const std::vector<int>& y,
                        const std::vector<std::string>& patient_ids,
                        const std::vector<GbtConfig>& grid, int k = 5,
                        uint64_t seed = 0);

void save_model(const BoostedModel& m, const std::string& path);
BoostedModel load_model(const std::string& path);

}  // namespace sdh::gbt
