#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "d3g/numerics.hpp"

namespace d3g {

// Candidate moment covering clips start..end inclusive, i.e. the half-open
// interval [start, end + 1) in clip units.
struct Moment {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const noexcept { return end - start + 1; }
  auto operator<=>(const Moment&) const = default;
};

std::size_t num_moments(std::size_t clips);

// Canonical order: ascending start, then ascending end.
std::size_t flat_index(std::size_t start, std::size_t end, std::size_t clips);
inline std::size_t flat_index(Moment m, std::size_t clips) {
  return flat_index(m.start, m.end, clips);
}
Moment unflatten(std::size_t index, std::size_t clips);

double iou(Moment a, Moment b);
bool contains(Moment m, std::size_t clip);

// Dense 2D temporal map: every valid (i, j) with its max-pooled feature row.
struct MomentMap {
  std::size_t clips = 0;
  Matrix features;                  // num_moments(clips) × feature dim
  std::vector<std::uint32_t> argmax; // same shape; clip index that won the max

  std::size_t size() const noexcept { return features.rows(); }
  Moment moment(std::size_t index) const { return unflatten(index, clips); }
  std::uint32_t winner(std::size_t index, std::size_t coord) const {
    return argmax[index * features.cols() + coord];
  }
};

// Element-wise max over clip rows i..j; ties resolve to the lowest clip.
MomentMap build_map(const Matrix& clip_features);

} // namespace d3g
