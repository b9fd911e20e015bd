#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>

#include "d3g/numerics.hpp"
#include "d3g/temporal_map.hpp"

namespace d3g {

struct ModelDims {
  std::size_t video_in = 16;   // raw clip feature width
  std::size_t video_hidden = 16; // width after the clip FC reduction
  std::size_t query_in = 16;   // raw query feature width
  std::size_t joint = 32;      // shared embedding width

  bool operator==(const ModelDims&) const = default;
};

enum class Similarity {
  cosine,
  dot, // raw inner product, kept for ablation
};

struct ModelOptions {
  bool rectify = false; // ReLU after the clip FC layer
  Similarity similarity = Similarity::cosine;

  bool operator==(const ModelOptions&) const = default;
};

// Every trainable tensor. Also used as the gradient and optimiser-moment
// container, since those mirror the parameter shapes.
struct ParamBlocks {
  Matrix clip_fc_w;     // video_in × video_hidden
  Vector clip_fc_b;     // video_hidden
  Matrix moment_proj_w; // video_hidden × joint
  Vector moment_proj_b; // joint
  Matrix query_proj_w;  // query_in × joint
  Vector query_proj_b;  // joint

  static ParamBlocks zeros(const ModelDims& dims);

  std::array<std::span<double>, 6> blocks();
  std::array<std::span<const double>, 6> blocks() const;
  std::size_t size() const;

  // Flat copy in block order, and the inverse.
  Vector flatten() const;
  void assign(std::span<const double> flat);

  bool operator==(const ParamBlocks&) const = default;
};

using Gradients = ParamBlocks;

void add_scaled(ParamBlocks& target, const ParamBlocks& delta, double scale);
double squared_norm(const ParamBlocks& p);
bool all_finite(const ParamBlocks& p);

struct ModelParams {
  ModelDims dims;
  ModelOptions options;
  ParamBlocks weights;

  bool operator==(const ModelParams&) const = default;
};

// Weights i.i.d. uniform in [-scale, scale]; biases zero.
ModelParams init_params(const ModelDims& dims, Rng& rng, double scale,
                        ModelOptions options = {});

// Video tower intermediates for one video.
struct VideoTrace {
  Matrix clips;    // N × video_in
  Matrix hidden;   // FC output after the optional rectifier (N × video_hidden)
  Matrix pre_act;  // FC output before the rectifier (only kept when rectifying)
  MomentMap map;   // max pool over `hidden`
  Matrix moments;  // projected moment embeddings (M × joint)
};

struct QueryTrace {
  Vector input;
  Vector embedding;
};

// FC reduction of the clip features (the features relevance is computed on).
Matrix reduce_clips(const ModelParams& params, const Matrix& clips);
VideoTrace encode_video(const ModelParams& params, const Matrix& clips);
QueryTrace encode_query(const ModelParams& params, std::span<const double> query);

double similarity(Similarity kind, std::span<const double> a, std::span<const double> b);
// Adds upstream·∂sim/∂a into grad_a and upstream·∂sim/∂b into grad_b.
void similarity_backward(Similarity kind,
                         std::span<const double> a,
                         std::span<const double> b,
                         double upstream,
                         std::span<double> grad_a,
                         std::span<double> grad_b);

// Accumulate parameter gradients given ∂L/∂(moment embeddings).
void backward_video(const ModelParams& params, const VideoTrace& trace,
                    const Matrix& grad_moments, Gradients& grads);
// Accumulate parameter gradients given ∂L/∂(query embedding).
void backward_query(const ModelParams& params, const QueryTrace& trace,
                    std::span<const double> grad_embedding, Gradients& grads);

// One (video, query) pair: both towers plus a score per candidate moment.
struct ForwardTrace {
  VideoTrace video;
  QueryTrace query;
  Vector scores;
};

ForwardTrace forward(const ModelParams& params, const Matrix& clips,
                     std::span<const double> query);

// Exact gradient of Σ_z upstream_z · score_z.
Gradients backward(const ForwardTrace& trace, const ModelParams& params,
                   std::span<const double> upstream);

// Checkpoint directory: model.json (dims, options, tensor files) plus one
// float64 matrix file per tensor.
void save_params(const ModelParams& params, const std::filesystem::path& dir);
ModelParams load_params(const std::filesystem::path& dir);

} // namespace d3g
