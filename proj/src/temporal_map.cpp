#include "d3g/temporal_map.hpp"

#include <algorithm>
#include <string>

#include "d3g/error.hpp"

namespace d3g {

std::size_t num_moments(std::size_t clips) { return clips * (clips + 1) / 2; }

std::size_t flat_index(std::size_t start, std::size_t end, std::size_t clips) {
  if (start > end || end >= clips) {
    throw Error(ErrorKind::index,
                "invalid moment (" + std::to_string(start) + ", " + std::to_string(end) +
                    ") for " + std::to_string(clips) + " clips");
  }
  // Rows before `start` hold clips, clips-1, ..., clips-start+1 entries.
  return start * (2 * clips - start + 1) / 2 + (end - start);
}

Moment unflatten(std::size_t index, std::size_t clips) {
  if (index >= num_moments(clips)) {
    throw Error(ErrorKind::index,
                "moment index " + std::to_string(index) + " out of range for " +
                    std::to_string(clips) + " clips");
  }
  std::size_t start = 0;
  std::size_t row_len = clips;
  while (index >= row_len) {
    index -= row_len;
    ++start;
    --row_len;
  }
  return {start, start + index};
}

double iou(Moment a, Moment b) {
  const std::size_t lo = std::max(a.start, b.start);
  const std::size_t hi = std::min(a.end, b.end) + 1;
  const std::size_t inter = hi > lo ? hi - lo : 0;
  const std::size_t uni = a.length() + b.length() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

bool contains(Moment m, std::size_t clip) { return m.start <= clip && clip <= m.end; }

MomentMap build_map(const Matrix& clip_features) {
  const std::size_t n = clip_features.rows();
  const std::size_t dim = clip_features.cols();
  if (n == 0 || dim == 0) {
    throw Error(ErrorKind::empty_input, "build_map: empty clip feature matrix");
  }
  MomentMap map;
  map.clips = n;
  map.features = Matrix(num_moments(n), dim);
  map.argmax.assign(num_moments(n) * dim, 0);

  std::size_t z = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j, ++z) {
      auto dst = map.features.row(z);
      auto src = clip_features.row(j);
      std::uint32_t* arg = map.argmax.data() + z * dim;
      if (j == i) {
        std::copy(src.begin(), src.end(), dst.begin());
        std::fill(arg, arg + dim, static_cast<std::uint32_t>(i));
        continue;
      }
      // (i, j) extends (i, j-1), which is the previous row.
      auto prev = map.features.row(z - 1);
      const std::uint32_t* prev_arg = map.argmax.data() + (z - 1) * dim;
      for (std::size_t c = 0; c < dim; ++c) {
        if (src[c] > prev[c]) {
          dst[c] = src[c];
          arg[c] = static_cast<std::uint32_t>(j);
        } else {
          dst[c] = prev[c];
          arg[c] = prev_arg[c];
        }
      }
    }
  }
  return map;
}

} // namespace d3g
