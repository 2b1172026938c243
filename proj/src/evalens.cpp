#include "sdh/evalens.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "sdh/rng.hpp"

namespace sdh::evalens {

namespace {

void check_binary(const std::vector<double>& scores, const std::vector<int>& labels,
                  const char* who) {
  if (scores.size() != labels.size())
    throw std::runtime_error(std::string(who) + ": scores/labels length mismatch");
  if (scores.empty()) throw std::runtime_error(std::string(who) + ": empty input");
  bool pos = false, neg = false;
  for (int l : labels) {
    if (l == 1) pos = true;
    else if (l == 0) neg = true;
    else throw std::runtime_error(std::string(who) + ": labels must be 0/1");
  }
  if (!pos || !neg)
    throw std::runtime_error(std::string(who) + ": both classes required");
}

}  // namespace

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_binary(scores, labels, "auc");
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // average ranks over tie groups
  double rank_sum_pos = 0.0;
  int64_t n_pos = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      }
    i = j;
  }
  int64_t n_neg = static_cast<int64_t>(n) - n_pos;
  double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

BootstrapCi bootstrap_ci(const std::vector<double>& scores,
                         const std::vector<int>& labels, int n_boot, double alpha,
                         uint64_t seed) {
  check_binary(scores, labels, "bootstrap_ci");
  if (n_boot < 100) throw std::runtime_error("bootstrap_ci: n_boot must be >= 100");
  const size_t n = scores.size();
  Rng rng(seed);
  std::vector<double> bs;
  bs.reserve(static_cast<size_t>(n_boot));
  std::vector<double> s(n);
  std::vector<int> l(n);
  BootstrapCi out;
  for (int b = 0; b < n_boot; ++b) {
    for (;;) {
      bool pos = false, neg = false;
      for (size_t i = 0; i < n; ++i) {
        size_t j = static_cast<size_t>(rng.uniform_int(n));
        s[i] = scores[j];
        l[i] = labels[j];
        pos |= l[i] == 1;
        neg |= l[i] == 0;
      }
      if (pos && neg) break;
      ++out.degenerate_redraws;
    }
    bs.push_back(auc(s, l));
  }
  std::sort(bs.begin(), bs.end());
  auto quantile = [&](double q) {
    double pos = q * static_cast<double>(bs.size() - 1);
    size_t i0 = static_cast<size_t>(pos);
    size_t i1 = std::min(i0 + 1, bs.size() - 1);
    double w = pos - static_cast<double>(i0);
    return bs[i0] + (bs[i1] - bs[i0]) * w;
  };
  out.lo = quantile(alpha / 2.0);
  out.hi = quantile(1.0 - alpha / 2.0);
  return out;
}

double youden_threshold(const std::vector<double>& scores,
                        const std::vector<int>& labels) {
  check_binary(scores, labels, "youden_threshold");
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  int64_t total_pos = 0;
  for (int l : labels) total_pos += l;
  int64_t total_neg = static_cast<int64_t>(n) - total_pos;

  const double inf = std::numeric_limits<double>::infinity();
  // candidates ascending: -inf, midpoints between distinct values, +inf.
  // pos_below/neg_below = counts with score < candidate.
  double best_t = -inf;
  double best_j = -2.0;
  int64_t pos_below = 0, neg_below = 0;
  auto consider = [&](double t) {
    double sens = static_cast<double>(total_pos - pos_below) /
                  static_cast<double>(total_pos);
    double spec = static_cast<double>(neg_below) / static_cast<double>(total_neg);
    double j = sens + spec - 1.0;
    if (j > best_j) {
      best_j = j;
      best_t = t;
    }
  };
  consider(-inf);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    for (size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) ++pos_below;
      else ++neg_below;
    }
    if (j < n) consider(0.5 * (scores[order[i]] + scores[order[j]]));
    i = j;
  }
  consider(inf);
  return best_t;
}

ThresholdMetrics threshold_metrics(const std::vector<double>& scores,
                                   const std::vector<int>& labels, double t) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::runtime_error("threshold_metrics: bad input");
  int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    bool pred = scores[i] >= t;
    if (labels[i] == 1) {
      pred ? ++tp : ++fn;
    } else {
      pred ? ++fp : ++tn;
    }
  }
  ThresholdMetrics m;
  m.threshold = t;
  double n = static_cast<double>(tp + fp + tn + fn);
  m.accuracy = static_cast<double>(tp + tn) / n;
  m.sensitivity = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.specificity = (tn + fp) > 0 ? static_cast<double>(tn) / static_cast<double>(tn + fp) : 0.0;
  m.f1 = (2 * tp + fp + fn) > 0
             ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn)
             : 0.0;
  return m;
}

double dice_score(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& truth) {
  if (pred.size() != truth.size())
    throw std::runtime_error("dice_score: shape mismatch");
  int64_t inter = 0, p = 0, g = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    p += pred[i] ? 1 : 0;
    g += truth[i] ? 1 : 0;
    inter += (pred[i] && truth[i]) ? 1 : 0;
  }
  if (p + g == 0) return 1.0;  // both empty: perfect agreement on controls
  return 2.0 * static_cast<double>(inter) / static_cast<double>(p + g);
}

double brier(const std::vector<double>& probs, const std::vector<int>& labels) {
  if (probs.size() != labels.size() || probs.empty())
    throw std::runtime_error("brier: bad input");
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    double d = probs[i] - static_cast<double>(labels[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(probs.size());
}

std::vector<CalibrationBin> calibration_curve(const std::vector<double>& probs,
                                              const std::vector<int>& labels,
                                              int bins) {
  if (probs.size() != labels.size() || probs.empty())
    throw std::runtime_error("calibration_curve: bad input");
  if (bins < 1) throw std::runtime_error("calibration_curve: bins must be >= 1");
  std::vector<CalibrationBin> out(static_cast<size_t>(bins));
  std::vector<double> prob_sum(static_cast<size_t>(bins), 0.0);
  std::vector<int64_t> pos(static_cast<size_t>(bins), 0);
  for (size_t i = 0; i < probs.size(); ++i) {
    int b = static_cast<int>(probs[i] * bins);
    if (b >= bins) b = bins - 1;  // p == 1 goes in the last bin
    if (b < 0) b = 0;
    out[b].count++;
    prob_sum[b] += probs[i];
    pos[b] += labels[i];
  }
  for (int b = 0; b < bins; ++b) {
    if (out[b].count > 0) {
      out[b].mean_prob = prob_sum[b] / static_cast<double>(out[b].count);
      out[b].observed_rate =
          static_cast<double>(pos[b]) / static_cast<double>(out[b].count);
    } else {
      out[b].mean_prob = std::nan("");
      out[b].observed_rate = std::nan("");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void PredictionMatrix::validate() const {
  if (model_ids.size() != probs.size())
    throw std::runtime_error("prediction matrix: model row count mismatch");
  if (study_ids.size() != labels.size())
    throw std::runtime_error("prediction matrix: study/label count mismatch");
  for (const auto& row : probs) {
    if (row.size() != study_ids.size())
      throw std::runtime_error("prediction matrix: a model is missing studies");
    for (double p : row)
      if (!(p >= 0.0 && p <= 1.0))
        throw std::runtime_error("prediction matrix: probability outside [0,1]");
  }
}

int PredictionMatrix::model_index(const std::string& id) const {
  for (size_t i = 0; i < model_ids.size(); ++i)
    if (model_ids[i] == id) return static_cast<int>(i);
  return -1;
}

std::vector<double> average_probs(const PredictionMatrix& m,
                                  const std::vector<int>& subset) {
  if (subset.empty()) throw std::runtime_error("average_probs: empty subset");
  std::vector<double> out(m.study_ids.size(), 0.0);
  for (int idx : subset) {
    const auto& row = m.probs.at(static_cast<size_t>(idx));
    for (size_t i = 0; i < out.size(); ++i) out[i] += row[i];
  }
  for (double& v : out) v /= static_cast<double>(subset.size());
  return out;
}

EnsembleSelection greedy_select(const PredictionMatrix& validation, int top_k) {
  validation.validate();
  const int n_models = static_cast<int>(validation.model_ids.size());
  if (n_models < 1) throw std::runtime_error("greedy_select: no models");

  std::vector<double> single(n_models);
  for (int m = 0; m < n_models; ++m)
    single[m] = auc(validation.probs[static_cast<size_t>(m)], validation.labels);

  // top-k seeds by single AUC, ties by lower index
  std::vector<int> seeds(static_cast<size_t>(n_models));
  std::iota(seeds.begin(), seeds.end(), 0);
  std::stable_sort(seeds.begin(), seeds.end(),
                   [&](int a, int b) { return single[a] > single[b]; });
  if (static_cast<int>(seeds.size()) > top_k) seeds.resize(static_cast<size_t>(top_k));

  EnsembleSelection best;
  bool have_best = false;
  for (int seed : seeds) {
    EnsembleSelection cur;
    cur.seed_index = seed;
    cur.member_indices = {seed};
    cur.auc_trace = {single[static_cast<size_t>(seed)]};
    double cur_auc = single[static_cast<size_t>(seed)];
    std::vector<bool> used(static_cast<size_t>(n_models), false);
    used[static_cast<size_t>(seed)] = true;

    for (;;) {
      int best_cand = -1;
      double best_cand_auc = cur_auc;
      for (int m = 0; m < n_models; ++m) {
        if (used[static_cast<size_t>(m)]) continue;
        std::vector<int> trial = cur.member_indices;
        trial.push_back(m);
        double a = auc(average_probs(validation, trial), validation.labels);
        if (a > best_cand_auc) {  // strict improvement only
          best_cand_auc = a;
          best_cand = m;
        }
      }
      if (best_cand < 0) break;
      used[static_cast<size_t>(best_cand)] = true;
      cur.member_indices.push_back(best_cand);
      cur.auc_trace.push_back(best_cand_auc);
      cur_auc = best_cand_auc;
    }
    cur.final_val_auc = cur_auc;

    bool better = false;
    if (!have_best) {
      better = true;
    } else if (cur.final_val_auc > best.final_val_auc) {
      better = true;
    } else if (cur.final_val_auc == best.final_val_auc &&
               cur.member_indices.size() < best.member_indices.size()) {
      better = true;
    }
    if (better) {
      best = cur;
      have_best = true;
    }
  }
  for (int idx : best.member_indices)
    best.member_ids.push_back(validation.model_ids[static_cast<size_t>(idx)]);
  return best;
}

EvaluationReport evaluate_selection(const EnsembleSelection& sel,
                                    const PredictionMatrix& validation,
                                    const PredictionMatrix& test, int n_boot,
                                    uint64_t seed) {
  if (sel.member_indices.empty())
    throw std::runtime_error("evaluate_selection: empty selection");
  validation.validate();
  test.validate();

  // the selection carries validation-matrix indices; map by id onto test
  std::vector<int> test_subset;
  for (const auto& id : sel.member_ids) {
    int idx = test.model_index(id);
    if (idx < 0)
      throw std::runtime_error("evaluate_selection: model missing from test: " + id);
    test_subset.push_back(idx);
  }

  EvaluationReport rep;
  std::vector<double> val_probs = average_probs(validation, sel.member_indices);
  rep.validation_threshold = youden_threshold(val_probs, validation.labels);

  std::vector<double> test_probs = average_probs(test, test_subset);
  rep.test_auc = auc(test_probs, test.labels);
  rep.test_auc_ci = bootstrap_ci(test_probs, test.labels, n_boot, 0.05, seed);
  rep.test_metrics = threshold_metrics(test_probs, test.labels,
                                       rep.validation_threshold);
  rep.test_brier = brier(test_probs, test.labels);
  rep.calibration = calibration_curve(test_probs, test.labels, 10);
  for (size_t m = 0; m < test.model_ids.size(); ++m)
    rep.member_test_aucs.emplace_back(test.model_ids[m],
                                      auc(test.probs[m], test.labels));
  return rep;
}

std::vector<std::array<double, 3>> roc_points(const std::vector<double>& scores,
                                              const std::vector<int>& labels) {
  check_binary(scores, labels, "roc_points");
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  int64_t total_pos = 0;
  for (int l : labels) total_pos += l;
  int64_t total_neg = static_cast<int64_t>(n) - total_pos;

  std::vector<std::array<double, 3>> pts;
  pts.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  int64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    for (size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) ++tp;
      else ++fp;
    }
    pts.push_back({static_cast<double>(fp) / static_cast<double>(total_neg),
                   static_cast<double>(tp) / static_cast<double>(total_pos),
                   scores[order[i]]});
    i = j;
  }
  return pts;
}

}  // namespace sdh::evalens
