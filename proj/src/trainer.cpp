#include "d3g/trainer.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "d3g/error.hpp"

namespace d3g {
namespace {

[[noreturn]] void config_error(const std::string& field, const std::string& why) {
  throw Error(ErrorKind::config, "train." + field + ": " + why);
}

// Distinct stream per epoch for the batch shuffle.
std::uint64_t shuffle_seed(std::uint64_t seed, std::size_t epoch) {
  return seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(epoch) + 1));
}

} // namespace

void TrainConfig::validate() const {
  if (epochs == 0) config_error("epochs", "must be at least 1");
  if (batch_size == 0) config_error("batch_size", "must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    config_error("learning_rate", "must be finite and non-negative");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) config_error("adam_beta1", "must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) config_error("adam_beta2", "must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) config_error("adam_epsilon", "must be positive");
  if (!(grad_clip >= 0.0)) config_error("grad_clip", "must be non-negative");
  if (k == 0) config_error("k", "must be at least 1");
  if (!(tau > 0.0)) config_error("tau", "must be positive");
  if (!(sigma > 0.0)) config_error("sigma", "must be positive");
  if (!(dga.relevance_threshold > 0.0 && dga.relevance_threshold <= 1.0)) {
    config_error("dga.relevance_threshold", "must lie in (0, 1]");
  }
  if (!(dga.momentum >= 0.0 && dga.momentum <= 1.0)) {
    config_error("dga.momentum", "must lie in [0, 1]");
  }
  if (video_hidden == 0) config_error("video_hidden", "must be at least 1");
  if (joint_dim == 0) config_error("joint_dim", "must be at least 1");
  if (!(init_scale > 0.0)) config_error("init_scale", "must be positive");
  if (intra_negative_cap && *intra_negative_cap == 0) {
    config_error("intra_negative_cap", "must be positive when set");
  }
}

void optimizer_step(ModelParams& params, OptimizerState& state, const Gradients& grads,
                    const TrainConfig& config) {
  if (config.optimizer == OptimizerKind::sgd) {
    add_scaled(params.weights, grads, -config.learning_rate);
    ++state.steps;
    return;
  }
  if (state.first_moment.size() != params.weights.size()) {
    state.first_moment = ParamBlocks::zeros(params.dims);
    state.second_moment = ParamBlocks::zeros(params.dims);
  }
  ++state.steps;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double correct1 = 1.0 - std::pow(b1, static_cast<double>(state.steps));
  const double correct2 = 1.0 - std::pow(b2, static_cast<double>(state.steps));
  auto theta = params.weights.blocks();
  auto m = state.first_moment.blocks();
  auto v = state.second_moment.blocks();
  auto g = grads.blocks();
  for (std::size_t b = 0; b < theta.size(); ++b) {
    if (g[b].size() != theta[b].size()) {
      throw Error(ErrorKind::dimension, "optimizer_step: gradient shape mismatch");
    }
    for (std::size_t i = 0; i < theta[b].size(); ++i) {
      m[b][i] = b1 * m[b][i] + (1.0 - b1) * g[b][i];
      v[b][i] = b2 * v[b][i] + (1.0 - b2) * g[b][i] * g[b][i];
      const double m_hat = m[b][i] / correct1;
      const double v_hat = v[b][i] / correct2;
      theta[b][i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
    }
  }
}

SamplePrior sample_prior(const GlanceView& view, const RelevanceState* relevance,
                         const TrainConfig& config) {
  const std::size_t n = view.clip_features->rows();
  const GaussianGrid grid(n, config.sigma);
  SamplePrior out;
  if (config.dga_enabled && relevance != nullptr && relevance->initialized) {
    const auto mask = center_mask(relevance->smoothed, config.dga.relevance_threshold);
    out.curve = dga_weights(relevance->smoothed, mask, grid, config.dga);
  } else {
    out.curve = grid.at(view.glance);
  }
  out.weights = moment_weights(out.curve, config.weight_mode);
  return out;
}

TrainState initial_state(std::span<const GlanceView> samples, const TrainConfig& config) {
  config.validate();
  if (samples.empty()) {
    throw Error(ErrorKind::empty_input, "train: no training samples");
  }
  const auto& first = samples.front();
  ModelDims dims;
  dims.video_in = first.clip_features->cols();
  dims.video_hidden = config.video_hidden;
  dims.query_in = first.query_feature.size();
  dims.joint = config.joint_dim;
  Rng rng(config.seed);
  TrainState state;
  state.params = init_params(dims, rng, config.init_scale, config.model);
  state.relevance.resize(samples.size());
  return state;
}

void train_epoch(TrainState& state, std::span<const GlanceView> samples,
                 const TrainConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t epoch = state.epoch + 1;
  if (state.relevance.size() != samples.size()) {
    throw Error(ErrorKind::dimension, "train_epoch: relevance state does not match samples");
  }

  // Priors are fixed for the epoch; relevance uses the epoch-start snapshot.
  std::vector<SamplePrior> priors(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& view = samples[i];
    if (config.dga_enabled) {
      const Matrix features = config.dga.features == FeatureSource::raw
                                  ? *view.clip_features
                                  : reduce_clips(state.params, *view.clip_features);
      const Vector r = relevance(features, view.glance);
      momentum_update(state.relevance[i], r, config.dga.momentum);
    }
    priors[i] = sample_prior(view, &state.relevance[i], config);
  }

  Rng shuffle(shuffle_seed(config.seed, epoch));
  const auto order = shuffle.permutation(samples.size());
  double loss_sum = 0.0;
  const LossConfig loss_config{config.k, config.tau, config.sampling, config.intra_negative_cap};
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t stop = std::min(order.size(), start + config.batch_size);
    std::vector<BatchItem> batch;
    for (std::size_t i = start; i < stop; ++i) {
      batch.push_back({samples[order[i]], priors[order[i]].weights});
    }
    BatchResult result;
    try {
      result = batch_loss(state.params, batch, loss_config);
    } catch (const Error& e) {
      throw Error(e.kind(), "epoch " + std::to_string(epoch) + ": " + e.what());
    }
    for (std::size_t b = 0; b < result.sample_losses.size(); ++b) {
      if (!std::isfinite(result.sample_losses[b])) {
        throw Error(ErrorKind::numeric, "epoch " + std::to_string(epoch) +
                                            ": non-finite loss for sample " +
                                            batch[b].view.query_id);
      }
      loss_sum += result.sample_losses[b];
    }
    if (config.grad_clip > 0.0) {
      const double norm = std::sqrt(squared_norm(result.grads));
      if (norm > config.grad_clip) {
        const double scale = config.grad_clip / norm;
        for (auto block : result.grads.blocks()) {
          for (double& g : block) {
            g *= scale;
          }
        }
      }
    }
    optimizer_step(state.params, state.optimizer, result.grads, config);
    if (!all_finite(state.params.weights)) {
      throw Error(ErrorKind::numeric, "epoch " + std::to_string(epoch) +
                                          ": parameters diverged after batch starting with " +
                                          samples[order[start]].query_id);
    }
  }
  state.epoch = epoch;
  const double elapsed =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
          .count();
  state.history.push_back({epoch, loss_sum / static_cast<double>(samples.size()), elapsed});
}

TrainState train(std::span<const GlanceView> samples, const TrainConfig& config,
                 const EpochCallback& on_epoch) {
  TrainState state = initial_state(samples, config);
  for (std::size_t e = 0; e < config.epochs; ++e) {
    train_epoch(state, samples, config);
    if (on_epoch) {
      on_epoch(state.history.back());
    }
  }
  return state;
}

const char* to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

const char* to_string(SamplingMode mode) {
  switch (mode) {
    case SamplingMode::gaussian_only: return "gaussian_only";
    case SamplingMode::semantic_only: return "semantic_only";
    case SamplingMode::calibrated: return "calibrated";
  }
  return "calibrated";
}

const char* to_string(WeightMode mode) {
  return mode == WeightMode::triplet ? "triplet" : "midpoint";
}

} // namespace d3g
