#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "d3g/corpus.hpp"
#include "d3g/model.hpp"
#include "d3g/numerics.hpp"
#include "d3g/sagcl.hpp"

namespace d3g::test {

namespace fs = std::filesystem;

// Fresh empty directory under the system temp dir.
fs::path temp_dir(const std::string& tag);
fs::path fixture_dir();

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0,
                     double hi = 1.0);
Vector random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0);

std::string read_file(const fs::path& path);
// Same relative file set with byte-identical contents.
bool same_tree(const fs::path& a, const fs::path& b);

// A small batch with everything it points at owned in one place.
struct BatchFixture {
  ModelParams params;
  LossConfig loss;
  std::deque<Matrix> clips;
  std::deque<Vector> queries;
  std::deque<Vector> priors;
  std::vector<BatchItem> items;
};

// `samples` items over random videos (N, dims and k drawn small), each with
// a glance-centred triplet prior. Samples i and i+1 share a video when
// `share_videos` is set.
std::unique_ptr<BatchFixture> random_batch(Rng& rng, std::size_t samples,
                                           bool share_videos = false);

struct GradientCheck {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t checked = 0;
};

// Compares batch_loss gradients with central differences over every
// parameter, step 1e-6·(1+|θ|). Relative error is |a−n| / max(|a|, |n|, floor).
GradientCheck check_batch_gradient(const BatchFixture& f, double floor = 1e-6);

} // namespace d3g::test
