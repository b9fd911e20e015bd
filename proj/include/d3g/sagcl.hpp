#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "d3g/corpus.hpp"
#include "d3g/model.hpp"
#include "d3g/numerics.hpp"

namespace d3g {

struct PriorWeights {
  Vector w; // Gaussian triplet (or midpoint) weight per moment
  Vector s; // semantic consistency per moment
  Vector p; // calibrated prior w ⊙ s
};

// Cosine between the query embedding and every moment embedding.
Vector consistency_scores(std::span<const double> query_embedding, const Matrix& moments);

Vector calibrate(std::span<const double> w, std::span<const double> s);

// What positives are ranked by.
enum class SamplingMode {
  gaussian_only, // w
  semantic_only, // s
  calibrated,    // p = w ⊙ s
};

struct KeySelection {
  std::vector<std::size_t> positives; // flat indices, descending rank
  Vector positive_weights;            // w of each positive
  std::vector<std::size_t> intra_negatives;
  std::vector<std::size_t> inter_negative_videos; // batch slots of other videos
};

// Top-k of `ranking` (ties to the lower flat index) are positives; every
// other moment that does not contain the glance is an intra-video negative.
// `intra_cap`, when set, keeps an evenly strided subset of that many.
KeySelection select_keys(std::span<const double> ranking,
                         std::span<const double> w,
                         std::size_t glance,
                         std::size_t k,
                         std::size_t clips,
                         std::span<const std::size_t> other_videos = {},
                         std::optional<std::size_t> intra_cap = std::nullopt);

struct LossOutput {
  double loss = 0.0;
  // ∂loss/∂score, positives first then negatives, in input order.
  Vector upstream;
};

// Weighted group contrastive loss over similarity scores:
//   -(1/k) Σ_z W_z log(exp(pos_z/τ) / SUM)
// with SUM over every positive and negative exp(score/τ).
LossOutput group_contrastive_loss(std::span<const double> positive_scores,
                                  std::span<const double> positive_weights,
                                  std::span<const double> negative_scores,
                                  double tau);

// Same loss from embeddings; similarity is cosine.
LossOutput group_contrastive_loss(std::span<const double> query_embedding,
                                  const Matrix& positives,
                                  std::span<const double> positive_weights,
                                  const Matrix& negatives,
                                  double tau);

struct LossConfig {
  std::size_t k = 10;
  double tau = 0.1;
  SamplingMode sampling = SamplingMode::calibrated;
  std::optional<std::size_t> intra_negative_cap;
};

struct BatchItem {
  GlanceView view;
  std::span<const double> prior; // per-moment Gaussian weights w
};

struct BatchResult {
  double loss = 0.0; // mean over the batch
  Vector sample_losses;
  Gradients grads;   // of the mean loss
};

// Negatives from other samples are every moment of every other distinct
// video in the batch; samples sharing a video contribute it once and never
// to each other.
BatchResult batch_loss(const ModelParams& params,
                       std::span<const BatchItem> batch,
                       const LossConfig& config);

} // namespace d3g
