#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "d3g/numerics.hpp"
#include "d3g/temporal_map.hpp"

namespace d3g {

// Maps clip index i ∈ [0, N) linearly onto [-1, 1]. A single-clip video maps
// to 0.
double scale_index(std::size_t i, std::size_t clips);

// Gaussian bump centred at clip `center`, min-max normalised over the N grid
// positions so the peak is exactly 1 and the farthest clip is 0.
Vector gaussian_weights(std::size_t clips, std::size_t center, double sigma);

// Lazily cached gaussian_weights rows for every centre of a fixed (N, σ).
class GaussianGrid {
 public:
  GaussianGrid(std::size_t clips, double sigma);

  std::size_t clips() const noexcept { return clips_; }
  double sigma() const noexcept { return sigma_; }
  const Vector& at(std::size_t center) const;

 private:
  std::size_t clips_;
  double sigma_;
  mutable std::vector<Vector> rows_;
};

enum class WeightMode {
  triplet,  // mean of the curve at start, end and floor midpoint
  midpoint, // curve at the floor midpoint only
};

// `curve` is the per-clip prior: the glance-centred Gaussian, or the
// dynamically adjusted one.
double triplet_weight(std::size_t start, std::size_t end, std::span<const double> curve);
double midpoint_weight(std::size_t start, std::size_t end, std::span<const double> curve);

// Weight of every moment in canonical flat order.
Vector moment_weights(std::span<const double> curve, WeightMode mode);

// Cosine between clip `glance` and every clip.
Vector relevance(const Matrix& clip_features, std::size_t glance);

// Momentum-smoothed relevance for one (video, query) sample.
struct RelevanceState {
  Vector smoothed;
  bool initialized = false;
};

// The first call copies `current` verbatim; later calls blend
// (1 - alpha)·smoothed + alpha·current.
void momentum_update(RelevanceState& state, std::span<const double> current, double alpha);

std::vector<std::uint8_t> center_mask(std::span<const double> smoothed, double threshold);

enum class FeatureSource {
  raw,     // corpus clip features
  reduced, // clip features after the model's FC reduction
};

struct DgaConfig {
  double relevance_threshold = 0.9;
  double momentum = 0.7;
  // Min-max rescale the aggregated curve to [0, 1] before it replaces the
  // Gaussian in the moment weights.
  bool renormalize = true;
  // true: each term uses the relevance of the evaluated clip i.
  // false: each term uses the relevance of its centre z instead.
  bool literal_relevance = true;
  FeatureSource features = FeatureSource::reduced;

  bool operator==(const DgaConfig&) const = default;
};

// Mask-averaged mixture of Gaussians centred at the masked clips, scaled by
// relevance. No clamping or rescaling. Throws Error(empty_input) on an
// all-zero mask.
Vector dga_aggregate(std::span<const double> smoothed,
                     std::span<const std::uint8_t> mask,
                     const GaussianGrid& grid,
                     bool literal_relevance);

// dga_aggregate, clamped at zero and (optionally) renormalised to [0, 1].
Vector dga_weights(std::span<const double> smoothed,
                   std::span<const std::uint8_t> mask,
                   const GaussianGrid& grid,
                   const DgaConfig& config);

} // namespace d3g
