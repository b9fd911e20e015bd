#include "d3g/prior.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "d3g/error.hpp"

namespace d3g {

double scale_index(std::size_t i, std::size_t clips) {
  if (i >= clips) {
    throw Error(ErrorKind::index, "scale_index: clip " + std::to_string(i) +
                                      " out of range for " + std::to_string(clips));
  }
  if (clips == 1) {
    return 0.0;
  }
  return 2.0 * static_cast<double>(i) / static_cast<double>(clips - 1) - 1.0;
}

Vector gaussian_weights(std::size_t clips, std::size_t center, double sigma) {
  if (center >= clips) {
    throw Error(ErrorKind::index, "gaussian_weights: centre out of range");
  }
  if (!(sigma > 0.0)) {
    throw Error(ErrorKind::config, "gaussian_weights: sigma must be positive");
  }
  // The 1/(sqrt(2π)σ) prefactor cancels under min-max normalisation.
  const double mu = scale_index(center, clips);
  Vector raw(clips);
  for (std::size_t i = 0; i < clips; ++i) {
    const double diff = scale_index(i, clips) - mu;
    raw[i] = std::exp(-diff * diff / (2.0 * sigma * sigma));
  }
  return minmax_normalize(raw);
}

GaussianGrid::GaussianGrid(std::size_t clips, double sigma)
    : clips_(clips), sigma_(sigma), rows_(clips) {
  if (clips == 0) {
    throw Error(ErrorKind::empty_input, "GaussianGrid: zero clips");
  }
  if (!(sigma > 0.0)) {
    throw Error(ErrorKind::config, "GaussianGrid: sigma must be positive");
  }
}

const Vector& GaussianGrid::at(std::size_t center) const {
  if (center >= clips_) {
    throw Error(ErrorKind::index, "GaussianGrid::at: centre out of range");
  }
  if (rows_[center].empty()) {
    rows_[center] = gaussian_weights(clips_, center, sigma_);
  }
  return rows_[center];
}

double triplet_weight(std::size_t start, std::size_t end, std::span<const double> curve) {
  if (start > end || end >= curve.size()) {
    throw Error(ErrorKind::index, "triplet_weight: invalid moment");
  }
  const std::size_t mid = (start + end) / 2;
  return (curve[start] + curve[end] + curve[mid]) / 3.0;
}

double midpoint_weight(std::size_t start, std::size_t end, std::span<const double> curve) {
  if (start > end || end >= curve.size()) {
    throw Error(ErrorKind::index, "midpoint_weight: invalid moment");
  }
  return curve[(start + end) / 2];
}

Vector moment_weights(std::span<const double> curve, WeightMode mode) {
  const std::size_t n = curve.size();
  Vector out;
  out.reserve(num_moments(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      out.push_back(mode == WeightMode::triplet ? triplet_weight(i, j, curve)
                                                : midpoint_weight(i, j, curve));
    }
  }
  return out;
}

Vector relevance(const Matrix& clip_features, std::size_t glance) {
  if (glance >= clip_features.rows()) {
    throw Error(ErrorKind::index, "relevance: glance out of range");
  }
  Vector out(clip_features.rows());
  const auto anchor = clip_features.row(glance);
  for (std::size_t i = 0; i < clip_features.rows(); ++i) {
    try {
      out[i] = cosine(anchor, clip_features.row(i));
    } catch (const Error& e) {
      throw Error(e.kind(), "relevance: clip " + std::to_string(i) + " vs glance " +
                                std::to_string(glance) + ": " + e.what());
    }
  }
  out[glance] = 1.0; // self-cosine, without rounding
  return out;
}

void momentum_update(RelevanceState& state, std::span<const double> current, double alpha) {
  if (!state.initialized) {
    state.smoothed.assign(current.begin(), current.end());
    state.initialized = true;
    return;
  }
  if (state.smoothed.size() != current.size()) {
    throw Error(ErrorKind::dimension, "momentum_update: length mismatch");
  }
  for (std::size_t i = 0; i < current.size(); ++i) {
    // Same as (1 - alpha)·smoothed + alpha·current, but exact when the two agree.
    state.smoothed[i] += alpha * (current[i] - state.smoothed[i]);
  }
}

std::vector<std::uint8_t> center_mask(std::span<const double> smoothed, double threshold) {
  std::vector<std::uint8_t> mask(smoothed.size());
  for (std::size_t i = 0; i < smoothed.size(); ++i) {
    mask[i] = smoothed[i] >= threshold ? 1 : 0;
  }
  return mask;
}

Vector dga_aggregate(std::span<const double> smoothed,
                     std::span<const std::uint8_t> mask,
                     const GaussianGrid& grid,
                     bool literal_relevance) {
  const std::size_t n = grid.clips();
  if (smoothed.size() != n || mask.size() != n) {
    throw Error(ErrorKind::dimension, "dga_aggregate: length mismatch");
  }
  std::size_t count = 0;
  Vector out(n, 0.0);
  for (std::size_t z = 0; z < n; ++z) {
    if (mask[z] == 0) {
      continue;
    }
    ++count;
    const Vector& g = grid.at(z);
    for (std::size_t i = 0; i < n; ++i) {
      const double rel = literal_relevance ? smoothed[i] : smoothed[z];
      out[i] += rel * g[i];
    }
  }
  if (count == 0) {
    throw Error(ErrorKind::empty_input, "dga_aggregate: mask selects no centre");
  }
  for (double& v : out) {
    v /= static_cast<double>(count);
  }
  return out;
}

Vector dga_weights(std::span<const double> smoothed,
                   std::span<const std::uint8_t> mask,
                   const GaussianGrid& grid,
                   const DgaConfig& config) {
  Vector out = dga_aggregate(smoothed, mask, grid, config.literal_relevance);
  for (double& v : out) {
    v = std::max(v, 0.0);
  }
  if (config.renormalize) {
    return minmax_normalize(out);
  }
  return out;
}

} // namespace d3g
