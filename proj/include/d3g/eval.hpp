#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "d3g/corpus.hpp"
#include "d3g/model.hpp"
#include "d3g/temporal_map.hpp"

namespace d3g {

struct RankedMoment {
  std::size_t index = 0; // flat index
  Moment moment;
  double score = 0.0;
};

struct Prediction {
  std::string query_id;
  std::vector<RankedMoment> ranked; // scores non-increasing
};

// Sort by score (ties to the lower flat index). With an NMS threshold a
// moment is kept only if its IoU with every kept moment is <= threshold.
// `limit` stops once that many moments are kept (0 = keep all).
Prediction rank_moments(std::span<const double> scores, std::size_t clips,
                        std::optional<double> nms_threshold = std::nullopt,
                        std::size_t limit = 0);

struct GroundTruth {
  std::string query_id;
  Moment span;
};

struct RecallEntry {
  std::size_t n = 0;
  double m = 0.0;
  double recall = 0.0;
  std::size_t hits = 0;
};

struct RecallTable {
  std::vector<RecallEntry> entries; // n-major, in the requested order
  std::size_t num_queries = 0;

  // Throws Error(index) for an (n, m) that was not evaluated.
  double at(std::size_t n, double m) const;
};

// Fraction of queries with some top-n moment at IoU >= m. Every ground
// truth needs a prediction with the same query id.
RecallTable recall_at(std::span<const Prediction> predictions,
                      std::span<const GroundTruth> truths,
                      std::span<const std::size_t> n_list,
                      std::span<const double> m_list);

struct EvalConfig {
  std::vector<std::size_t> n_list{1, 5};
  std::vector<double> m_list{0.3, 0.5, 0.7};
  // Only affects n > 1: greedy NMS never changes the top-1 moment.
  std::optional<double> nms_threshold = 0.5;

  void validate() const;
};

std::vector<Prediction> predict(const ModelParams& params,
                                std::span<const GroundingSample* const> samples,
                                const EvalConfig& config);

// Throws Error(empty_input) when there are no test queries.
RecallTable evaluate_model(const ModelParams& params, const Corpus& corpus,
                           const EvalConfig& config);

// Expected R@1 at IoU >= m when the top moment is uniform over all moments.
double random_baseline(std::span<const GroundTruth> truths, std::size_t clips, double m);

} // namespace d3g
