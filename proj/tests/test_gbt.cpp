#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "sdh/evalens.hpp"
#include "sdh/gbt.hpp"
#include "sdh/rng.hpp"

using namespace sdh;
using namespace sdh::gbt;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct OracleSplit {
  double gain = -1.0;
  int feature = -1;
  double threshold = 0.0;
  bool missing_left = true;
};

// Exhaustive oracle: every (feature, adjacent-midpoint threshold, missing
// direction) candidate scored from scratch. Independent of the library's
// scan implementation.
OracleSplit exhaustive_best_split(const Matrix& X, const std::vector<double>& g,
                                  const std::vector<double>& h, double lambda,
                                  int min_leaf) {
  OracleSplit best;
  const int nf = static_cast<int>(X[0].size());
  double G = 0.0, H = 0.0;
  for (size_t i = 0; i < X.size(); ++i) {
    G += g[i];
    H += h[i];
  }
  double parent = G * G / (H + lambda);
  for (int f = 0; f < nf; ++f) {
    std::vector<double> vals;
    for (const auto& row : X)
      if (!std::isnan(row[static_cast<size_t>(f)]))
        vals.push_back(row[static_cast<size_t>(f)]);
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (size_t v = 0; v + 1 < vals.size(); ++v) {
      double t = 0.5 * (vals[v] + vals[v + 1]);
      for (int ml = 0; ml < 2; ++ml) {
        double GL = 0, HL = 0, GR = 0, HR = 0;
        int nl = 0, nr = 0;
        for (size_t i = 0; i < X.size(); ++i) {
          double xv = X[i][static_cast<size_t>(f)];
          bool left = std::isnan(xv) ? (ml == 1) : xv < t;
          if (left) {
            GL += g[i];
            HL += h[i];
            ++nl;
          } else {
            GR += g[i];
            HR += h[i];
            ++nr;
          }
        }
        if (nl < min_leaf || nr < min_leaf) continue;
        double gain = GL * GL / (HL + lambda) + GR * GR / (HR + lambda) - parent;
        if (gain > best.gain + 1e-12) {
          best = {gain, f, t, ml == 1};
        }
      }
    }
  }
  return best;
}

}  // namespace

TEST_CASE("separable 1-d data reaches training AUC 1 within 5 rounds") {
  Matrix X;
  std::vector<int> y;
  Rng rng(1);
  for (int i = 0; i < 60; ++i) {
    double v = rng.uniform();
    X.push_back({v});
    y.push_back(v > 0.5 ? 1 : 0);
  }
  GbtConfig cfg;
  cfg.n_rounds = 5;
  cfg.max_depth = 2;
  cfg.learning_rate = 0.5;
  BoostedModel m = fit_tabular_classifier(X, y, cfg);
  CHECK(evalens::auc(predict_proba_tab(m, X), y) == doctest::Approx(1.0));
}

TEST_CASE("depth-1 stump on {(0,0),(1,1)} x10: split inside (0,1), signed leaves") {
  Matrix X;
  std::vector<int> y;
  for (int i = 0; i < 10; ++i) {
    X.push_back({0.0});
    y.push_back(0);
    X.push_back({1.0});
    y.push_back(1);
  }
  GbtConfig cfg;
  cfg.n_rounds = 1;
  cfg.max_depth = 1;
  cfg.learning_rate = 1.0;
  cfg.lambda_l2 = 1.0;
  BoostedModel m = fit_tabular_classifier(X, y, cfg);
  REQUIRE(m.trees.size() == 1);
  const auto& root = m.trees[0].nodes[0];
  REQUIRE(!root.is_leaf);
  CHECK(root.threshold > 0.0);
  CHECK(root.threshold < 1.0);
  double wl = m.trees[0].nodes[static_cast<size_t>(root.left)].weight;
  double wr = m.trees[0].nodes[static_cast<size_t>(root.right)].weight;
  CHECK(wl < 0.0);
  CHECK(wr > 0.0);
  // hand oracle: base p = 0.5 so g_i = p - y, h_i = 0.25 per row;
  // left leaf: G = 10*0.5 = 5, H = 2.5 -> w = -5/3.5
  CHECK(wl == doctest::Approx(-5.0 / 3.5));
  CHECK(wr == doctest::Approx(5.0 / 3.5));
}

TEST_CASE("constant feature produces no split") {
  Matrix X;
  std::vector<int> y;
  for (int i = 0; i < 20; ++i) {
    X.push_back({3.25});
    y.push_back(i % 2);
  }
  GbtConfig cfg;
  cfg.n_rounds = 3;
  cfg.max_depth = 3;
  BoostedModel m = fit_tabular_classifier(X, y, cfg);
  for (const auto& t : m.trees) {
    REQUIRE(t.nodes.size() == 1);
    CHECK(t.nodes[0].is_leaf);
  }
  auto p = predict_proba_tab(m, X);
  CHECK(p[0] == doctest::Approx(sigmoid(m.base_score)).epsilon(1e-6));
}

TEST_CASE("chosen root split matches the exhaustive oracle") {
  Rng rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    int n = 8 + static_cast<int>(rng.uniform_int(43));  // <= 50 rows
    int nf = 1 + static_cast<int>(rng.uniform_int(4));
    Matrix X;
    std::vector<int> y;
    for (int i = 0; i < n; ++i) {
      std::vector<double> row;
      for (int f = 0; f < nf; ++f)
        row.push_back(rng.bernoulli(0.15) ? std::nan("")
                                          : std::round(rng.uniform() * 4) / 4.0);
      X.push_back(row);
      y.push_back(rng.bernoulli(0.5) ? 1 : 0);
    }
    bool pos = false, neg = false;
    for (int v : y) (v ? pos : neg) = true;
    if (!pos || !neg) continue;
    for (int f = 0; f < nf; ++f) {
      bool any = false;
      for (auto& row : X) any = any || !std::isnan(row[static_cast<size_t>(f)]);
      if (!any)
        for (auto& row : X) row[static_cast<size_t>(f)] = 0.0;
    }

    GbtConfig cfg;
    cfg.n_rounds = 1;
    cfg.max_depth = 1;
    cfg.lambda_l2 = 1.0;
    cfg.min_samples_leaf = 1;
    BoostedModel m = fit_tabular_classifier(X, y, cfg);

    double p0 = 0.0;
    for (int v : y) p0 += v;
    p0 /= n;
    p0 = std::clamp(p0, 1e-6, 1.0 - 1e-6);
    std::vector<double> g(static_cast<size_t>(n)), h(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      g[static_cast<size_t>(i)] = p0 - y[static_cast<size_t>(i)];
      h[static_cast<size_t>(i)] = std::max(p0 * (1 - p0), 1e-16);
    }
    OracleSplit oracle = exhaustive_best_split(X, g, h, cfg.lambda_l2, 1);
    const auto& root = m.trees[0].nodes[0];
    if (oracle.gain <= 0.0) {
      CHECK(root.is_leaf);
    } else {
      REQUIRE(!root.is_leaf);
      // the library split's gain must match the oracle's maximum
      double GL = 0, HL = 0, G = 0, H = 0;
      for (int i = 0; i < n; ++i) {
        G += g[static_cast<size_t>(i)];
        H += h[static_cast<size_t>(i)];
        double xv = X[static_cast<size_t>(i)][static_cast<size_t>(root.feature)];
        bool left = std::isnan(xv) ? root.missing_left : xv < root.threshold;
        if (left) {
          GL += g[static_cast<size_t>(i)];
          HL += h[static_cast<size_t>(i)];
        }
      }
      double gain = GL * GL / (HL + cfg.lambda_l2) +
                    (G - GL) * (G - GL) / (H - HL + cfg.lambda_l2) -
                    G * G / (H + cfg.lambda_l2);
      CHECK(gain == doctest::Approx(oracle.gain).epsilon(1e-9));
    }
  }
}

TEST_CASE("training loss never increases over rounds") {
  Rng rng(7);
  Matrix X;
  std::vector<int> y;
  for (int i = 0; i < 120; ++i) {
    double a = rng.uniform(), b = rng.uniform();
    X.push_back({a, b, rng.uniform()});
    double p = sigmoid(3.0 * a - 2.0 * b);
    y.push_back(rng.bernoulli(p) ? 1 : 0);
  }
  y[0] = 0;
  y[1] = 1;
  GbtConfig cfg;
  cfg.n_rounds = 40;
  cfg.max_depth = 3;
  cfg.learning_rate = 0.3;
  FitDiagnostics diag;
  fit_tabular_classifier(X, y, cfg, &diag);
  REQUIRE(diag.train_loss.size() == 40);
  for (size_t i = 1; i < diag.train_loss.size(); ++i)
    CHECK(diag.train_loss[i] <= diag.train_loss[i - 1] + 1e-12);
}

TEST_CASE("prediction is row-order invariant and NaN-safe") {
  Rng rng(13);
  Matrix X;
  std::vector<int> y;
  for (int i = 0; i < 80; ++i) {
    X.push_back({rng.uniform(), rng.bernoulli(0.3) ? std::nan("") : rng.uniform()});
    y.push_back(rng.bernoulli(0.5) ? 1 : 0);
  }
  y[0] = 0;
  y[1] = 1;
  GbtConfig cfg;
  cfg.n_rounds = 20;
  cfg.max_depth = 3;
  BoostedModel m = fit_tabular_classifier(X, y, cfg);

  Matrix rev(X.rbegin(), X.rend());
  auto p_fwd = predict_proba_tab(m, X);
  auto p_rev = predict_proba_tab(m, rev);
  for (size_t i = 0; i < X.size(); ++i) {
    CHECK(p_fwd[i] == p_rev[X.size() - 1 - i]);
    CHECK(p_fwd[i] > 0.0);
    CHECK(p_fwd[i] < 1.0);
  }
  // all-NaN row routes through default directions without throwing
  Matrix nan_row = {{std::nan(""), std::nan("")}};
  auto pn = predict_proba_tab(m, nan_row);
  CHECK(std::isfinite(pn[0]));
}

TEST_CASE("single-class labels degenerate to the base-score model") {
  Matrix X = {{0.1}, {0.5}, {0.9}};
  std::vector<int> y = {1, 1, 1};
  FitDiagnostics diag;
  BoostedModel m = fit_tabular_classifier(X, y, {}, &diag);
  CHECK(diag.degenerate);
  CHECK(m.trees.empty());
  auto p = predict_proba_tab(m, X);
  CHECK(p[0] == doctest::Approx(p[2]));
}

TEST_CASE("empty tree list predicts sigmoid(base)") {
  BoostedModel m;
  m.base_score = 0.7;
  auto p = predict_proba_tab(m, {{1.0}, {2.0}});
  CHECK(p[0] == doctest::Approx(sigmoid(0.7)));
  CHECK(p[1] == doctest::Approx(sigmoid(0.7)));
}

TEST_CASE("cross_validate: single config, interaction preference, seeded folds") {
  Rng rng(2025);
  Matrix X;
  std::vector<int> y;
  std::vector<std::string> patients;
  for (int i = 0; i < 240; ++i) {
    double a = rng.uniform(), b = rng.uniform();
    X.push_back({a, b});
    // XOR-ish interaction: depth 1 cannot capture it, depth 3 can
    bool label = (a > 0.5) != (b > 0.5);
    y.push_back(label ? 1 : 0);
    patients.push_back("p" + std::to_string(i / 2));
  }

  GbtConfig only;
  only.n_rounds = 10;
  auto res1 = cross_validate(X, y, patients, {only}, 4, 3);
  CHECK(res1.best.n_rounds == 10);

  GbtConfig shallow, deep;
  shallow.n_rounds = 30;
  shallow.max_depth = 1;
  shallow.learning_rate = 0.3;
  deep = shallow;
  deep.max_depth = 3;
  auto res = cross_validate(X, y, patients, {shallow, deep}, 4, 3);
  CHECK(res.best.max_depth == 3);

  auto res_again = cross_validate(X, y, patients, {shallow, deep}, 4, 3);
  CHECK(res_again.best_mean_auc == res.best_mean_auc);  // same folds, same seed
}

TEST_CASE("model JSON round trip") {
  Rng rng(5);
  Matrix X;
  std::vector<int> y;
  for (int i = 0; i < 50; ++i) {
    X.push_back({rng.uniform(), rng.uniform()});
    y.push_back(rng.bernoulli(0.5) ? 1 : 0);
  }
  y[0] = 0;
  y[1] = 1;
  GbtConfig cfg;
  cfg.n_rounds = 8;
  BoostedModel m = fit_tabular_classifier(X, y, cfg);
  m.feature_names = {"f0", "f1"};
  m.model_id = "tabular-test";

  auto dir = std::filesystem::temp_directory_path() / "sdh_gbt_tests";
  std::filesystem::create_directories(dir);
  std::string p = (dir / "model.json").string();
  save_model(m, p);
  BoostedModel r = load_model(p);
  CHECK(r.model_id == "tabular-test");
  CHECK(r.feature_names == m.feature_names);
  auto pa = predict_proba_tab(m, X);
  auto pb = predict_proba_tab(r, X);
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
}
