#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

#include "d3g/prior.hpp"

namespace d3g::test {

fs::path temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const fs::path dir = fs::temp_directory_path() /
                       ("d3g_" + tag + "_" + std::to_string(::getpid()) + "_" +
                        std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path fixture_dir() { return D3G_FIXTURE_DIR; }

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

Vector random_vector(std::size_t n, Rng& rng, double lo, double hi) {
  Vector v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

namespace {

std::set<fs::path> relative_files(const fs::path& root) {
  std::set<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.insert(fs::relative(e.path(), root));
  }
  return out;
}

} // namespace

bool same_tree(const fs::path& a, const fs::path& b) {
  const auto fa = relative_files(a);
  if (fa != relative_files(b)) return false;
  return std::all_of(fa.begin(), fa.end(),
                     [&](const fs::path& p) { return read_file(a / p) == read_file(b / p); });
}

std::unique_ptr<BatchFixture> random_batch(Rng& rng, std::size_t samples, bool share_videos) {
  auto f = std::make_unique<BatchFixture>();
  const std::size_t n = 2 + rng.index(5); // 2..6 clips
  ModelDims dims;
  dims.video_in = 1 + rng.index(5);
  dims.video_hidden = 1 + rng.index(5);
  dims.query_in = 1 + rng.index(5);
  dims.joint = 2 + rng.index(4);
  f->params = init_params(dims, rng, 1.0);
  for (auto block : f->params.weights.blocks()) {
    for (double& v : block) v = rng.uniform(-1.0, 1.0); // biases too
  }
  f->loss.k = std::min<std::size_t>(1 + rng.index(3), num_moments(n));
  f->loss.tau = 0.1 + 0.4 * rng.uniform();

  const GaussianGrid grid(n, 0.3);
  for (std::size_t s = 0; s < samples; ++s) {
    if (!share_videos || s % 2 == 0) {
      f->clips.push_back(random_matrix(n, dims.video_in, rng));
    }
    f->queries.push_back(random_vector(dims.query_in, rng));
    const std::size_t glance = rng.index(n);
    f->priors.push_back(moment_weights(grid.at(glance), WeightMode::triplet));
    GlanceView view;
    view.video_id = "v" + std::to_string(f->clips.size() - 1);
    view.query_id = "q" + std::to_string(s);
    view.clip_features = &f->clips.back();
    view.query_feature = f->queries.back();
    view.glance = glance;
    f->items.push_back(BatchItem{view, f->priors.back()});
  }
  return f;
}

GradientCheck check_batch_gradient(const BatchFixture& f, double floor) {
  const BatchResult base = batch_loss(f.params, f.items, f.loss);
  const Vector analytic = base.grads.flatten();
  const Vector theta = f.params.weights.flatten();
  ModelParams probe = f.params;
  const ScalarFunction loss = [&](std::span<const double> x) {
    probe.weights.assign(x);
    return batch_loss(probe, f.items, f.loss).loss;
  };
  const Vector numeric = finite_diff_gradient(loss, theta, 1e-6, StepMode::relative);
  GradientCheck out;
  out.checked = theta.size();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double diff = std::abs(analytic[i] - numeric[i]);
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    out.max_abs_err = std::max(out.max_abs_err, diff);
    out.max_rel_err = std::max(out.max_rel_err, diff / scale);
  }
  return out;
}

} // namespace d3g::test
