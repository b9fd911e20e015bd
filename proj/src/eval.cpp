#include "d3g/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "d3g/error.hpp"

namespace d3g {

Prediction rank_moments(std::span<const double> scores, std::size_t clips,
                        std::optional<double> nms_threshold, std::size_t limit) {
  if (scores.size() != num_moments(clips) || scores.empty()) {
    throw Error(ErrorKind::dimension, "rank_moments: need one score per moment");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  Prediction pred;
  for (std::size_t z : order) {
    if (limit != 0 && pred.ranked.size() == limit) {
      break;
    }
    const Moment m = unflatten(z, clips);
    if (nms_threshold) {
      const bool suppressed =
          std::any_of(pred.ranked.begin(), pred.ranked.end(),
                      [&](const RankedMoment& kept) { return iou(kept.moment, m) > *nms_threshold; });
      if (suppressed) {
        continue;
      }
    }
    pred.ranked.push_back({z, m, scores[z]});
  }
  return pred;
}

double RecallTable::at(std::size_t n, double m) const {
  for (const auto& e : entries) {
    if (e.n == n && e.m == m) {
      return e.recall;
    }
  }
  throw Error(ErrorKind::index, "RecallTable: (n=" + std::to_string(n) +
                                    ", m=" + std::to_string(m) + ") not evaluated");
}

RecallTable recall_at(std::span<const Prediction> predictions,
                      std::span<const GroundTruth> truths,
                      std::span<const std::size_t> n_list,
                      std::span<const double> m_list) {
  if (truths.empty()) {
    throw Error(ErrorKind::empty_input, "recall_at: no queries to evaluate");
  }
  std::map<std::string, const Prediction*> by_id;
  for (const auto& p : predictions) {
    by_id[p.query_id] = &p;
  }
  RecallTable table;
  table.num_queries = truths.size();
  for (std::size_t n : n_list) {
    for (double m : m_list) {
      table.entries.push_back({n, m, 0.0, 0});
    }
  }
  for (const auto& gt : truths) {
    const auto it = by_id.find(gt.query_id);
    if (it == by_id.end() || it->second->ranked.empty()) {
      throw Error(ErrorKind::empty_input, "recall_at: missing prediction for " + gt.query_id);
    }
    const auto& ranked = it->second->ranked;
    for (auto& e : table.entries) {
      double best = 0.0;
      for (std::size_t r = 0; r < std::min(e.n, ranked.size()); ++r) {
        best = std::max(best, iou(ranked[r].moment, gt.span));
      }
      if (best >= e.m) {
        ++e.hits;
      }
    }
  }
  for (auto& e : table.entries) {
    e.recall = static_cast<double>(e.hits) / static_cast<double>(table.num_queries);
  }
  return table;
}

void EvalConfig::validate() const {
  if (n_list.empty() || m_list.empty()) {
    throw Error(ErrorKind::config, "eval: n and m lists must be non-empty");
  }
  for (std::size_t n : n_list) {
    if (n == 0) {
      throw Error(ErrorKind::config, "eval.n: values must be >= 1");
    }
  }
  for (double m : m_list) {
    if (!(m > 0.0 && m <= 1.0)) {
      throw Error(ErrorKind::config, "eval.m: value " + std::to_string(m) +
                                         " outside (0, 1]");
    }
  }
  if (nms_threshold && !(*nms_threshold >= 0.0 && *nms_threshold <= 1.0)) {
    throw Error(ErrorKind::config, "eval.nms: threshold outside [0, 1]");
  }
}

std::vector<Prediction> predict(const ModelParams& params,
                                std::span<const GroundingSample* const> samples,
                                const EvalConfig& config) {
  const std::size_t limit = *std::max_element(config.n_list.begin(), config.n_list.end());
  std::vector<Prediction> out;
  out.reserve(samples.size());
  for (const GroundingSample* s : samples) {
    const ForwardTrace trace = forward(params, *s->clip_features, s->query_feature);
    Prediction p = rank_moments(trace.scores, s->clip_features->rows(), config.nms_threshold,
                                limit);
    p.query_id = s->query_id;
    out.push_back(std::move(p));
  }
  return out;
}

RecallTable evaluate_model(const ModelParams& params, const Corpus& corpus,
                           const EvalConfig& config) {
  config.validate();
  const auto tests = corpus.split(Split::test);
  if (tests.empty()) {
    throw Error(ErrorKind::empty_input, "evaluate: no queries in the test split");
  }
  const auto predictions = predict(params, tests, config);
  std::vector<GroundTruth> truths;
  truths.reserve(tests.size());
  for (const GroundingSample* s : tests) {
    truths.push_back({s->query_id, s->gt_span});
  }
  return recall_at(predictions, truths, config.n_list, config.m_list);
}

double random_baseline(std::span<const GroundTruth> truths, std::size_t clips, double m) {
  if (truths.empty()) {
    throw Error(ErrorKind::empty_input, "random_baseline: no queries");
  }
  const std::size_t total = num_moments(clips);
  double acc = 0.0;
  for (const auto& gt : truths) {
    std::size_t hits = 0;
    for (std::size_t z = 0; z < total; ++z) {
      if (iou(unflatten(z, clips), gt.span) >= m) {
        ++hits;
      }
    }
    acc += static_cast<double>(hits) / static_cast<double>(total);
  }
  return acc / static_cast<double>(truths.size());
}

} // namespace d3g
