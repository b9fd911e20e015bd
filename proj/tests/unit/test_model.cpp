#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "d3g/error.hpp"
#include "d3g/model.hpp"
#include "d3g/temporal_map.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace d3g;
namespace fs = std::filesystem;

namespace {

ModelDims small_dims(Rng& rng) {
  ModelDims d;
  d.video_in = 1 + rng.index(5);
  d.video_hidden = 1 + rng.index(5);
  d.query_in = 1 + rng.index(5);
  d.joint = 2 + rng.index(4);
  return d;
}

void randomise_biases(ModelParams& p, Rng& rng) {
  for (double& v : p.weights.clip_fc_b) v = rng.uniform(-1, 1);
  for (double& v : p.weights.moment_proj_b) v = rng.uniform(-1, 1);
  for (double& v : p.weights.query_proj_b) v = rng.uniform(-1, 1);
}

// max |analytic − numeric| / max(|a|, |n|, 1e-6) for Σ upstream·score.
double backward_rel_error(const ModelParams& params, const Matrix& clips, const Vector& query,
                          const Vector& upstream) {
  const Gradients g = backward(forward(params, clips, query), params, upstream);
  const Vector analytic = g.flatten();
  ModelParams probe = params;
  auto f = [&](std::span<const double> x) {
    probe.weights.assign(x);
    const Vector s = forward(probe, clips, query).scores;
    double total = 0.0;
    for (std::size_t z = 0; z < s.size(); ++z) total += upstream[z] * s[z];
    return total;
  };
  const Vector numeric =
      finite_diff_gradient(f, params.weights.flatten(), 1e-6, StepMode::relative);
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

} // namespace

TEST(InitParams, DeterministicAndScaled) {
  ModelDims dims{4, 3, 5, 6};
  Rng a(7);
  Rng b(7);
  const ModelParams pa = init_params(dims, a, 0.5);
  EXPECT_EQ(pa, init_params(dims, b, 0.5));
  for (double v : pa.weights.clip_fc_w.values()) {
    EXPECT_GE(v, -0.5);
    EXPECT_LE(v, 0.5);
  }
  for (double v : pa.weights.moment_proj_b) EXPECT_EQ(v, 0.0);
  Rng c(7);
  const ModelParams zero = init_params(dims, c, 0.0);
  for (auto block : zero.weights.blocks())
    for (double v : block) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(pa.weights.size(), 4u * 3 + 3 + 3u * 6 + 6 + 5u * 6 + 6);
}

TEST(Forward, ShapeMismatchIsDimensionError) {
  Rng rng(1);
  const ModelParams p = init_params({4, 3, 5, 6}, rng, 0.5);
  try {
    forward(p, Matrix(3, 5, 1.0), Vector(5, 1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dimension);
  }
  EXPECT_THROW(forward(p, Matrix(3, 4, 1.0), Vector(4, 1.0)), Error);
}

TEST(Forward, IdentityNetworkScoresAreRawCosines) {
  const std::size_t d = 4;
  ModelParams p;
  p.dims = {d, d, d, d};
  p.weights = ParamBlocks::zeros(p.dims);
  p.weights.clip_fc_w = Matrix::identity(d);
  p.weights.moment_proj_w = Matrix::identity(d);
  p.weights.query_proj_w = Matrix::identity(d);
  Rng rng(3);
  const Matrix clips = test::random_matrix(5, d, rng);
  const Vector q = test::random_vector(d, rng);
  const ForwardTrace t = forward(p, clips, q);
  ASSERT_EQ(t.scores.size(), num_moments(5));
  for (std::size_t z = 0; z < t.scores.size(); ++z) {
    const Moment m = unflatten(z, 5);
    EXPECT_NEAR(t.scores[z], cosine(q, oracle::pool(clips, m.start, m.end)), 1e-15);
  }
}

TEST(Forward, SingleClip) {
  Rng rng(2);
  const ModelParams p = init_params({3, 3, 3, 4}, rng, 0.5);
  const ForwardTrace t = forward(p, Matrix::from_rows({{1, 2, 3}}), Vector{1, 0, 1});
  EXPECT_EQ(t.scores.size(), 1u);
}

TEST(Forward, MatchesCompositionOfOps) {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    ModelParams p = init_params(small_dims(rng), rng, 1.0);
    randomise_biases(p, rng);
    const std::size_t n = 1 + rng.index(6);
    const Matrix clips = test::random_matrix(n, p.dims.video_in, rng);
    const Vector q = test::random_vector(p.dims.query_in, rng);
    const ForwardTrace t = forward(p, clips, q);
    const Matrix hidden = affine(clips, p.weights.clip_fc_w, p.weights.clip_fc_b);
    const Vector fs = affine(q, p.weights.query_proj_w, p.weights.query_proj_b);
    for (std::size_t z = 0; z < t.scores.size(); ++z) {
      const Moment m = unflatten(z, n);
      const Vector pooled = oracle::pool(hidden, m.start, m.end);
      const Vector fz = affine(pooled, p.weights.moment_proj_w, p.weights.moment_proj_b);
      EXPECT_NEAR(t.scores[z], cosine(fs, fz), 1e-13);
    }
  }
}

TEST(Forward, ScoresInvariantToQueryScale) {
  Rng rng(5);
  ModelParams p = init_params({3, 4, 3, 5}, rng, 1.0);
  const Matrix clips = test::random_matrix(5, 3, rng);
  const Vector q = test::random_vector(3, rng);
  const Vector base = forward(p, clips, q).scores;
  // Scaling the embedding by c: scale the query projection and its bias.
  for (double c : {0.01, 3.0, 250.0}) {
    ModelParams scaled = p;
    for (double& v : scaled.weights.query_proj_w.values()) v *= c;
    for (double& v : scaled.weights.query_proj_b) v *= c;
    const Vector s = forward(scaled, clips, q).scores;
    for (std::size_t z = 0; z < s.size(); ++z) EXPECT_NEAR(s[z], base[z], 1e-12);
  }
}

TEST(Backward, ZeroUpstreamZeroGradient) {
  Rng rng(6);
  const ModelParams p = init_params({3, 4, 3, 5}, rng, 1.0);
  const Matrix clips = test::random_matrix(4, 3, rng);
  const Vector q = test::random_vector(3, rng);
  const ForwardTrace t = forward(p, clips, q);
  const Gradients g = backward(t, p, Vector(t.scores.size(), 0.0));
  EXPECT_EQ(g, ParamBlocks::zeros(p.dims));
}

TEST(Backward, StaleTraceRejected) {
  Rng rng(6);
  const ModelParams p = init_params({3, 4, 3, 5}, rng, 1.0);
  const ForwardTrace t = forward(p, test::random_matrix(4, 3, rng), test::random_vector(3, rng));
  EXPECT_THROW(backward(t, p, Vector(3, 1.0)), Error);
  const ModelParams other = init_params({3, 4, 3, 6}, rng, 1.0);
  EXPECT_THROW(backward(t, other, Vector(t.scores.size(), 1.0)), Error);
}

TEST(Backward, MatchesFiniteDifferences) {
  Rng rng(23);
  for (int trial = 0; trial < 25; ++trial) {
    ModelParams p = init_params(small_dims(rng), rng, 1.0);
    randomise_biases(p, rng);
    const std::size_t n = 1 + rng.index(6);
    const Matrix clips = test::random_matrix(n, p.dims.video_in, rng);
    const Vector q = test::random_vector(p.dims.query_in, rng);
    const Vector up = test::random_vector(num_moments(n), rng);
    EXPECT_LE(backward_rel_error(p, clips, q, up), 1e-5) << "trial " << trial;
  }
}

TEST(Backward, RectifierAndDotVariants) {
  Rng rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    ModelOptions opts;
    opts.rectify = trial % 2 == 0;
    opts.similarity = trial % 3 == 0 ? Similarity::dot : Similarity::cosine;
    ModelParams p = init_params(small_dims(rng), rng, 1.0, opts);
    randomise_biases(p, rng);
    for (double& v : p.weights.clip_fc_b) v = 0.3 + std::abs(v); // keep units alive
    const std::size_t n = 2 + rng.index(5);
    const Matrix clips = test::random_matrix(n, p.dims.video_in, rng, 0.0, 1.0);
    const Vector q = test::random_vector(p.dims.query_in, rng);
    const Vector up = test::random_vector(num_moments(n), rng);
    EXPECT_LE(backward_rel_error(p, clips, q, up), 1e-5) << "trial " << trial;
  }
}

TEST(Backward, TiesRouteDeterministically) {
  Rng rng(31);
  const ModelParams p = init_params({3, 3, 3, 4}, rng, 1.0);
  Matrix clips = test::random_matrix(4, 3, rng);
  for (std::size_t c = 0; c < 3; ++c) clips(2, c) = clips(1, c); // duplicate row
  const Vector q = test::random_vector(3, rng);
  const Vector up = test::random_vector(num_moments(4), rng);
  const ForwardTrace t1 = forward(p, clips, q);
  const ForwardTrace t2 = forward(p, clips, q);
  for (std::size_t z = 0; z < t1.video.map.size(); ++z) {
    const Moment m = unflatten(z, 4);
    for (std::size_t c = 0; c < 3; ++c) {
      if (m.start <= 1 && m.end >= 2 && t1.video.map.winner(z, c) >= 1 &&
          t1.video.map.winner(z, c) <= 2) {
        EXPECT_EQ(t1.video.map.winner(z, c), 1u);
      }
    }
  }
  EXPECT_EQ(backward(t1, p, up), backward(t2, p, up));
}

TEST(Backward, NonArgmaxPerturbationLeavesPoolUnchanged) {
  Rng rng(37);
  const ModelParams p = init_params({3, 3, 3, 4}, rng, 1.0);
  const Matrix clips = test::random_matrix(6, 3, rng);
  const VideoTrace base = encode_video(p, clips);
  const Matrix& h = base.hidden;
  // Pick moment (0,5), coordinate 0 and any clip that is not the winner.
  const std::size_t z = flat_index(0, 5, 6);
  const std::size_t win = base.map.winner(z, 0);
  const std::size_t loser = win == 0 ? 1 : 0;
  const double gap = h(win, 0) - h(loser, 0);
  ASSERT_GT(gap, 0.0);
  Matrix bumped = h;
  bumped(loser, 0) += 0.5 * gap;
  const MomentMap again = build_map(bumped);
  EXPECT_EQ(again.features(z, 0), base.map.features(z, 0));
}

TEST(Checkpoint, RoundTrip) {
  Rng rng(41);
  ModelParams p = init_params({5, 4, 3, 6}, rng, 0.7, {true, Similarity::dot});
  randomise_biases(p, rng);
  const auto dir = test::temp_dir("ckpt");
  save_params(p, dir);
  const ModelParams q = load_params(dir);
  EXPECT_EQ(q, p);
  const Matrix clips = test::random_matrix(5, 5, rng);
  const Vector query = test::random_vector(3, rng);
  EXPECT_EQ(forward(p, clips, query).scores, forward(q, clips, query).scores);
}

TEST(Checkpoint, CorruptionDetected) {
  Rng rng(43);
  const ModelParams p = init_params({3, 3, 3, 4}, rng, 0.7);
  const auto dir = test::temp_dir("ckpt");
  save_params(p, dir);
  fs::path tensor;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".bin") tensor = e.path();
  }
  const std::string bytes = test::read_file(tensor);
  std::ofstream(tensor, std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() - 3);
  try {
    load_params(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::truncated);
  }
}

TEST(Checkpoint, HeaderDimsMismatch) {
  Rng rng(47);
  const ModelParams p = init_params({3, 3, 3, 4}, rng, 0.7);
  const auto dir = test::temp_dir("ckpt");
  save_params(p, dir);
  std::string header = test::read_file(dir / "model.json");
  const auto pos = header.find("\"joint\": 4");
  ASSERT_NE(pos, std::string::npos);
  header.replace(pos, 10, "\"joint\": 5");
  std::ofstream(dir / "model.json", std::ios::trunc) << header;
  try {
    load_params(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dimension);
  }
}

TEST(Checkpoint, MissingDirectory) {
  try {
    load_params(test::temp_dir("ckpt") / "nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::missing_file);
  }
}
