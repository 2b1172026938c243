#include "sdh/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sdh/evalens.hpp"
#include "sdh/rng.hpp"

namespace sdh::gbt {

using nlohmann::json;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double logistic_loss(double margin, int y) {
  // log(1 + exp(-|m|)) + max(m, 0) - m*y, numerically stable
  double m = margin;
  return std::log1p(std::exp(-std::abs(m))) + std::max(m, 0.0) -
         m * static_cast<double>(y);
}

struct Candidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
  bool missing_left = true;
  bool valid = false;
};

// preferred ordering for deterministic ties: higher gain, then lower feature
// index, then lower threshold, then missing-left first
bool better(const Candidate& a, const Candidate& b) {
  if (!b.valid) return a.valid;
  if (!a.valid) return false;
  if (a.gain != b.gain) return a.gain > b.gain;
  if (a.feature != b.feature) return a.feature < b.feature;
  if (a.threshold != b.threshold) return a.threshold < b.threshold;
  return a.missing_left && !b.missing_left;
}

struct NodeStats {
  double g = 0.0, h = 0.0;
  int count = 0;
};

Candidate scan_feature(const Matrix& X, const std::vector<double>& grad,
                       const std::vector<double>& hess,
                       const std::vector<int>& rows, int feature, double lambda,
                       int min_leaf, const NodeStats& total) {
  std::vector<std::pair<double, int>> vals;  // (value, row)
  vals.reserve(rows.size());
  double g_miss = 0.0, h_miss = 0.0;
  int n_miss = 0;
  for (int r : rows) {
    double v = X[static_cast<size_t>(r)][static_cast<size_t>(feature)];
    if (std::isnan(v)) {
      g_miss += grad[static_cast<size_t>(r)];
      h_miss += hess[static_cast<size_t>(r)];
      ++n_miss;
    } else {
      vals.emplace_back(v, r);
    }
  }
  Candidate best;
  if (vals.size() < 2) return best;
  std::sort(vals.begin(), vals.end());

  auto score = [&](double gl, double hl) {
    double gr = total.g - gl, hr = total.h - hl;
    return gl * gl / (hl + lambda) + gr * gr / (hr + lambda) -
           total.g * total.g / (total.h + lambda);
  };

  double gl = 0.0, hl = 0.0;
  int nl = 0;
  for (size_t i = 0; i + 1 < vals.size(); ++i) {
    gl += grad[static_cast<size_t>(vals[i].second)];
    hl += hess[static_cast<size_t>(vals[i].second)];
    ++nl;
    if (vals[i].first == vals[i + 1].first) continue;  // not a boundary
    double threshold = 0.5 * (vals[i].first + vals[i + 1].first);
    int nr = static_cast<int>(vals.size()) - nl;
    // missing routed right
    if (nl >= min_leaf && nr + n_miss >= min_leaf) {
      Candidate c{score(gl, hl), feature, threshold, false, true};
      if (better(c, best)) best = c;
    }
    // missing routed left
    if (nl + n_miss >= min_leaf && nr >= min_leaf) {
      Candidate c{score(gl + g_miss, hl + h_miss), feature, threshold, true, true};
      if (better(c, best)) best = c;
    }
  }
  return best;
}

struct TreeBuilder {
  const Matrix& X;
  const std::vector<double>& grad;
  const std::vector<double>& hess;
  const GbtConfig& cfg;
  RegressionTree tree;

  int build(const std::vector<int>& rows, int depth) {
    NodeStats total;
    for (int r : rows) {
      total.g += grad[static_cast<size_t>(r)];
      total.h += hess[static_cast<size_t>(r)];
      ++total.count;
    }
    int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[static_cast<size_t>(node_id)].weight =
        -total.g / (total.h + cfg.lambda_l2);
    if (depth >= cfg.max_depth || total.count < 2 * cfg.min_samples_leaf)
      return node_id;

    const int n_features = static_cast<int>(X.empty() ? 0 : X[0].size());
    std::vector<Candidate> per_feature(static_cast<size_t>(n_features));
#pragma omp parallel for schedule(dynamic)
    for (int f = 0; f < n_features; ++f)
      per_feature[static_cast<size_t>(f)] = scan_feature(
          X, grad, hess, rows, f, cfg.lambda_l2, cfg.min_samples_leaf, total);

    Candidate best;  // deterministic reduction: lowest feature wins ties
    for (const auto& c : per_feature)
      if (better(c, best)) best = c;
    if (!best.valid || best.gain <= 0.0) return node_id;

    std::vector<int> left_rows, right_rows;
    for (int r : rows) {
      double v = X[static_cast<size_t>(r)][static_cast<size_t>(best.feature)];
      bool go_left = std::isnan(v) ? best.missing_left : v < best.threshold;
      (go_left ? left_rows : right_rows).push_back(r);
    }
    int left = build(left_rows, depth + 1);
    int right = build(right_rows, depth + 1);
    TreeNode& node = tree.nodes[static_cast<size_t>(node_id)];
    node.is_leaf = false;
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.missing_left = best.missing_left;
    node.left = left;
    node.right = right;
    return node_id;
  }
};

}  // namespace

double RegressionTree::predict(const std::vector<double>& x) const {
  int cur = 0;
  for (;;) {
    const TreeNode& n = nodes[static_cast<size_t>(cur)];
    if (n.is_leaf) return n.weight;
    double v = x[static_cast<size_t>(n.feature)];
    bool go_left = std::isnan(v) ? n.missing_left : v < n.threshold;
    cur = go_left ? n.left : n.right;
  }
}

double BoostedModel::predict_margin(const std::vector<double>& x) const {
  double m = base_score;
  for (const auto& t : trees) m += shrinkage * t.predict(x);
  return m;
}

double BoostedModel::predict_proba(const std::vector<double>& x) const {
  return sigmoid(predict_margin(x));
}

BoostedModel fit_tabular_classifier(const Matrix& X, const std::vector<int>& y,
                                    const GbtConfig& cfg, FitDiagnostics* diag) {
  if (X.size() != y.size() || X.empty())
    throw std::runtime_error("fit_tabular_classifier: bad shapes");
  if (cfg.n_rounds < 1 || cfg.max_depth < 1)
    throw std::runtime_error("fit_tabular_classifier: bad config");
  const size_t n_features = X[0].size();
  for (const auto& row : X)
    if (row.size() != n_features)
      throw std::runtime_error("fit_tabular_classifier: ragged matrix");
  for (size_t f = 0; f < n_features; ++f) {
    bool any = false;
    for (const auto& row : X)
      if (!std::isnan(row[f])) {
        any = true;
        break;
      }
    if (!any)
      throw std::runtime_error("fit_tabular_classifier: feature " +
                               std::to_string(f) + " entirely missing");
  }

  const size_t n = X.size();
  double pos = 0.0;
  for (int v : y) {
    if (v != 0 && v != 1)
      throw std::runtime_error("fit_tabular_classifier: labels must be 0/1");
    pos += v;
  }
  double p_mean = std::clamp(pos / static_cast<double>(n), 1e-6, 1.0 - 1e-6);

  BoostedModel model;
  model.shrinkage = cfg.learning_rate;
  model.base_score = std::log(p_mean / (1.0 - p_mean));

  if (pos == 0.0 || pos == static_cast<double>(n)) {
    std::cerr << "[gbt] warning: single-class labels; returning base-score model\n";
    if (diag) diag->degenerate = true;
    return model;
  }

  std::vector<double> margin(n, model.base_score);
  std::vector<double> grad(n), hess(n);
  std::vector<int> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), 0);

  for (int round = 0; round < cfg.n_rounds; ++round) {
    for (size_t i = 0; i < n; ++i) {
      double p = sigmoid(margin[i]);
      grad[i] = p - static_cast<double>(y[i]);
      hess[i] = std::max(p * (1.0 - p), 1e-16);
    }
    TreeBuilder builder{X, grad, hess, cfg, {}};
    builder.build(all_rows, 0);
    model.trees.push_back(std::move(builder.tree));
    const RegressionTree& t = model.trees.back();
    for (size_t i = 0; i < n; ++i)
      margin[i] += cfg.learning_rate * t.predict(X[i]);
    if (diag) {
      double loss = 0.0;
      for (size_t i = 0; i < n; ++i) loss += logistic_loss(margin[i], y[i]);
      diag->train_loss.push_back(loss / static_cast<double>(n));
    }
  }
  return model;
}

std::vector<double> predict_proba_tab(const BoostedModel& model, const Matrix& X) {
  std::vector<double> out(X.size());
  if (!model.feature_names.empty())
    for (const auto& row : X)
      if (row.size() != model.feature_names.size())
        throw std::runtime_error("predict_proba_tab: feature count mismatch");
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < static_cast<int64_t>(X.size()); ++i)
    out[static_cast<size_t>(i)] = model.predict_proba(X[static_cast<size_t>(i)]);
  return out;
}

CvResult cross_validate(const Matrix& X, const std::vector<int>& y,
                        const std::vector<std::string>& patient_ids,
                        const std::vector<GbtConfig>& grid, int k, uint64_t seed) {
  if (k < 2) throw std::runtime_error("cross_validate: k must be >= 2");
  if (grid.empty()) throw std::runtime_error("cross_validate: empty grid");
  if (X.size() != y.size() || X.size() != patient_ids.size())
    throw std::runtime_error("cross_validate: shape mismatch");

  // patient-grouped folds: shuffle unique patients, deal contiguously
  std::vector<std::string> patients;
  {
    std::set<std::string> seen;
    for (const auto& p : patient_ids)
      if (seen.insert(p).second) patients.push_back(p);
  }
  Rng rng(seed);
  rng.shuffle(patients);
  std::map<std::string, int> fold_of;
  for (size_t i = 0; i < patients.size(); ++i)
    fold_of[patients[i]] = static_cast<int>(i * static_cast<size_t>(k) / patients.size());

  CvResult result;
  bool have_best = false;
  for (const auto& cfg : grid) {
    double auc_sum = 0.0;
    int auc_count = 0;
    for (int fold = 0; fold < k; ++fold) {
      Matrix Xtr, Xte;
      std::vector<int> ytr, yte;
      for (size_t i = 0; i < X.size(); ++i) {
        if (fold_of[patient_ids[i]] == fold) {
          Xte.push_back(X[i]);
          yte.push_back(y[i]);
        } else {
          Xtr.push_back(X[i]);
          ytr.push_back(y[i]);
        }
      }
      auto has_both = [](const std::vector<int>& v) {
        bool a = false, b = false;
        for (int x : v) (x ? a : b) = true;
        return a && b;
      };
      if (Xte.empty() || Xtr.empty() || !has_both(yte) || !has_both(ytr)) {
        std::cerr << "[gbt] warning: skipping single-class fold " << fold << "\n";
        result.skipped_folds++;
        continue;
      }
      BoostedModel m = fit_tabular_classifier(Xtr, ytr, cfg);
      auc_sum += evalens::auc(predict_proba_tab(m, Xte), yte);
      ++auc_count;
    }
    if (auc_count == 0) continue;
    double mean_auc = auc_sum / static_cast<double>(auc_count);
    bool take = false;
    if (!have_best || mean_auc > result.best_mean_auc) {
      take = true;
    } else if (mean_auc == result.best_mean_auc) {
      if (cfg.n_rounds < result.best.n_rounds ||
          (cfg.n_rounds == result.best.n_rounds &&
           cfg.max_depth < result.best.max_depth))
        take = true;
    }
    if (take) {
      result.best = cfg;
      result.best_mean_auc = mean_auc;
      have_best = true;
    }
  }
  if (!have_best) throw std::runtime_error("cross_validate: every fold degenerate");
  return result;
}

void save_model(const BoostedModel& m, const std::string& path) {
  json j;
  j["format"] = "sdh-gbt";
  j["version"] = 1;
  j["model_id"] = m.model_id;
  j["base_score"] = m.base_score;
  j["shrinkage"] = m.shrinkage;
  j["feature_names"] = m.feature_names;
  json trees = json::array();
  for (const auto& t : m.trees) {
    json nodes = json::array();
    for (const auto& n : t.nodes) {
      nodes.push_back({{"leaf", n.is_leaf},
                       {"feature", n.feature},
                       {"threshold", n.threshold},
                       {"missing_left", n.missing_left},
                       {"weight", n.weight},
                       {"left", n.left},
                       {"right", n.right}});
    }
    trees.push_back(std::move(nodes));
  }
  j["trees"] = std::move(trees);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write model: " + path);
  out << j.dump(2) << '\n';
}

BoostedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model: " + path);
  json j = json::parse(in);
  if (j.value("format", "") != "sdh-gbt")
    throw std::runtime_error("not a gbt model file: " + path);
  if (j.value("version", 0) != 1)
    throw std::runtime_error("unsupported gbt model version: " + path);
  BoostedModel m;
  m.model_id = j.value("model_id", "tabular");
  m.base_score = j.at("base_score").get<double>();
  m.shrinkage = j.at("shrinkage").get<double>();
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  for (const auto& tj : j.at("trees")) {
    RegressionTree t;
    for (const auto& nj : tj) {
      TreeNode n;
      n.is_leaf = nj.at("leaf").get<bool>();
      n.feature = nj.at("feature").get<int>();
      n.threshold = nj.at("threshold").get<double>();
      n.missing_left = nj.at("missing_left").get<bool>();
      n.weight = nj.at("weight").get<double>();
      n.left = nj.at("left").get<int>();
      n.right = nj.at("right").get<int>();
      t.nodes.push_back(n);
    }
    m.trees.push_back(std::move(t));
  }
  return m;
}

}  // namespace sdh::gbt
