#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "d3g/corpus.hpp"
#include "d3g/model.hpp"
#include "d3g/prior.hpp"
#include "d3g/sagcl.hpp"

namespace d3g {

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  // Global-norm gradient clip; 0 disables.
  double grad_clip = 10.0;

  std::size_t k = 10;
  double tau = 0.1;
  double sigma = 0.3;
  bool dga_enabled = true;
  DgaConfig dga;
  SamplingMode sampling = SamplingMode::calibrated;
  WeightMode weight_mode = WeightMode::triplet;
  std::optional<std::size_t> intra_negative_cap;

  std::size_t video_hidden = 16;
  std::size_t joint_dim = 32;
  double init_scale = 0.25;
  ModelOptions model;
  std::uint64_t seed = 0;

  // Throws Error(config) naming the offending field.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct OptimizerState {
  ParamBlocks first_moment;
  ParamBlocks second_moment;
  std::size_t steps = 0;
};

// sgd: θ ← θ − lr·∇. adam: bias-corrected first/second moment update.
void optimizer_step(ModelParams& params, OptimizerState& state, const Gradients& grads,
                    const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainState {
  ModelParams params;
  OptimizerState optimizer;
  std::vector<RelevanceState> relevance; // one per training sample
  std::size_t epoch = 0;
  std::vector<EpochRecord> history;
};

// Per-sample prior for one epoch: the static or dynamically adjusted curve
// and the per-moment weights derived from it.
struct SamplePrior {
  Vector curve;
  Vector weights;
};

// Builds the epoch prior for `view` from its relevance state (which the
// caller has already updated when DGA is enabled).
SamplePrior sample_prior(const GlanceView& view, const RelevanceState* relevance,
                         const TrainConfig& config);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Training sees glance views only; target spans are not reachable from here.
TrainState train(std::span<const GlanceView> samples, const TrainConfig& config,
                 const EpochCallback& on_epoch = {});

// Fresh state with initialised parameters (what `train` starts from).
TrainState initial_state(std::span<const GlanceView> samples, const TrainConfig& config);

// Runs one epoch in place.
void train_epoch(TrainState& state, std::span<const GlanceView> samples,
                 const TrainConfig& config);

const char* to_string(OptimizerKind kind);
const char* to_string(SamplingMode mode);
const char* to_string(WeightMode mode);

} // namespace d3g
