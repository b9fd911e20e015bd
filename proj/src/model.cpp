#include "d3g/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include <json.hpp>

#include "d3g/d3gf.hpp"
#include "d3g/error.hpp"

namespace d3g {
namespace {

void check_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw Error(ErrorKind::dimension,
                std::string(what) + ": expected " + std::to_string(rows) + "x" +
                    std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                    std::to_string(m.cols()));
  }
}

void check_params(const ModelParams& p) {
  const auto& d = p.dims;
  const auto& w = p.weights;
  check_shape(w.clip_fc_w, d.video_in, d.video_hidden, "clip_fc_w");
  check_shape(w.moment_proj_w, d.video_hidden, d.joint, "moment_proj_w");
  check_shape(w.query_proj_w, d.query_in, d.joint, "query_proj_w");
  if (w.clip_fc_b.size() != d.video_hidden || w.moment_proj_b.size() != d.joint ||
      w.query_proj_b.size() != d.joint) {
    throw Error(ErrorKind::dimension, "model bias length does not match dims");
  }
}

const char* const kTensorNames[6] = {
    "clip_fc_w", "clip_fc_b", "moment_proj_w", "moment_proj_b", "query_proj_w", "query_proj_b",
};

} // namespace

ParamBlocks ParamBlocks::zeros(const ModelDims& dims) {
  ParamBlocks p;
  p.clip_fc_w = Matrix(dims.video_in, dims.video_hidden);
  p.clip_fc_b.assign(dims.video_hidden, 0.0);
  p.moment_proj_w = Matrix(dims.video_hidden, dims.joint);
  p.moment_proj_b.assign(dims.joint, 0.0);
  p.query_proj_w = Matrix(dims.query_in, dims.joint);
  p.query_proj_b.assign(dims.joint, 0.0);
  return p;
}

std::array<std::span<double>, 6> ParamBlocks::blocks() {
  return {clip_fc_w.values(), clip_fc_b, moment_proj_w.values(),
          moment_proj_b, query_proj_w.values(), query_proj_b};
}

std::array<std::span<const double>, 6> ParamBlocks::blocks() const {
  return {clip_fc_w.values(), clip_fc_b, moment_proj_w.values(),
          moment_proj_b, query_proj_w.values(), query_proj_b};
}

std::size_t ParamBlocks::size() const {
  std::size_t n = 0;
  for (auto b : blocks()) {
    n += b.size();
  }
  return n;
}

Vector ParamBlocks::flatten() const {
  Vector out;
  out.reserve(size());
  for (auto b : blocks()) {
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

void ParamBlocks::assign(std::span<const double> flat) {
  if (flat.size() != size()) {
    throw Error(ErrorKind::dimension, "ParamBlocks::assign: length mismatch");
  }
  std::size_t off = 0;
  for (auto b : blocks()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), b.size(), b.begin());
    off += b.size();
  }
}

void add_scaled(ParamBlocks& target, const ParamBlocks& delta, double scale) {
  auto dst = target.blocks();
  auto src = delta.blocks();
  for (std::size_t b = 0; b < dst.size(); ++b) {
    if (dst[b].size() != src[b].size()) {
      throw Error(ErrorKind::dimension, "add_scaled: block shape mismatch");
    }
    for (std::size_t i = 0; i < dst[b].size(); ++i) {
      dst[b][i] += scale * src[b][i];
    }
  }
}

double squared_norm(const ParamBlocks& p) {
  double acc = 0.0;
  for (auto b : p.blocks()) {
    for (double v : b) {
      acc += v * v;
    }
  }
  return acc;
}

bool all_finite(const ParamBlocks& p) {
  for (auto b : p.blocks()) {
    if (!all_finite(b)) {
      return false;
    }
  }
  return true;
}

ModelParams init_params(const ModelDims& dims, Rng& rng, double scale, ModelOptions options) {
  if (dims.video_in == 0 || dims.video_hidden == 0 || dims.query_in == 0 || dims.joint == 0) {
    throw Error(ErrorKind::config, "init_params: all dims must be positive");
  }
  ModelParams p{dims, options, ParamBlocks::zeros(dims)};
  for (Matrix* m : {&p.weights.clip_fc_w, &p.weights.moment_proj_w, &p.weights.query_proj_w}) {
    for (double& v : m->values()) {
      v = rng.uniform(-scale, scale);
    }
  }
  return p;
}

Matrix reduce_clips(const ModelParams& params, const Matrix& clips) {
  if (clips.cols() != params.dims.video_in) {
    throw Error(ErrorKind::dimension,
                "clip features have width " + std::to_string(clips.cols()) +
                    ", model expects " + std::to_string(params.dims.video_in));
  }
  Matrix hidden = affine(clips, params.weights.clip_fc_w, params.weights.clip_fc_b);
  if (params.options.rectify) {
    for (double& v : hidden.values()) {
      v = std::max(v, 0.0);
    }
  }
  return hidden;
}

VideoTrace encode_video(const ModelParams& params, const Matrix& clips) {
  check_params(params);
  if (clips.rows() == 0) {
    throw Error(ErrorKind::empty_input, "encode_video: video has no clips");
  }
  VideoTrace t;
  t.clips = clips;
  if (params.options.rectify) {
    t.pre_act = affine(clips, params.weights.clip_fc_w, params.weights.clip_fc_b);
  }
  t.hidden = reduce_clips(params, clips);
  t.map = build_map(t.hidden);
  t.moments = affine(t.map.features, params.weights.moment_proj_w, params.weights.moment_proj_b);
  return t;
}

QueryTrace encode_query(const ModelParams& params, std::span<const double> query) {
  check_params(params);
  if (query.size() != params.dims.query_in) {
    throw Error(ErrorKind::dimension,
                "query feature has width " + std::to_string(query.size()) +
                    ", model expects " + std::to_string(params.dims.query_in));
  }
  QueryTrace t;
  t.input.assign(query.begin(), query.end());
  t.embedding = affine(query, params.weights.query_proj_w, params.weights.query_proj_b);
  return t;
}

double similarity(Similarity kind, std::span<const double> a, std::span<const double> b) {
  return kind == Similarity::cosine ? cosine(a, b) : dot(a, b);
}

void similarity_backward(Similarity kind,
                         std::span<const double> a,
                         std::span<const double> b,
                         double upstream,
                         std::span<double> grad_a,
                         std::span<double> grad_b) {
  if (upstream == 0.0) {
    return;
  }
  if (kind == Similarity::dot) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      grad_a[i] += upstream * b[i];
      grad_b[i] += upstream * a[i];
    }
    return;
  }
  // d cos/da = b/(|a||b|) - cos·a/|a|², symmetric in b.
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw Error(ErrorKind::zero_norm, "similarity_backward: zero-norm embedding");
  }
  const double inv = 1.0 / (na * nb);
  const double cos = dot(a, b) * inv;
  const double ca = cos / (na * na);
  const double cb = cos / (nb * nb);
  for (std::size_t i = 0; i < a.size(); ++i) {
    grad_a[i] += upstream * (b[i] * inv - ca * a[i]);
    grad_b[i] += upstream * (a[i] * inv - cb * b[i]);
  }
}

void backward_video(const ModelParams& params, const VideoTrace& trace,
                    const Matrix& grad_moments, Gradients& grads) {
  const auto& d = params.dims;
  const std::size_t n = trace.clips.rows();
  if (grad_moments.rows() != trace.map.size() || grad_moments.cols() != d.joint ||
      trace.hidden.cols() != d.video_hidden || trace.clips.cols() != d.video_in) {
    throw Error(ErrorKind::dimension, "backward_video: trace does not match params");
  }
  // moments = pooled·Wv + bv
  accumulate_at_b(trace.map.features, grad_moments, grads.moment_proj_w);
  for (std::size_t z = 0; z < grad_moments.rows(); ++z) {
    auto g = grad_moments.row(z);
    for (std::size_t c = 0; c < d.joint; ++c) {
      grads.moment_proj_b[c] += g[c];
    }
  }
  const Matrix grad_pooled = matmul_a_bt(grad_moments, params.weights.moment_proj_w);

  // Max pool routes each coordinate's gradient to the winning clip.
  Matrix grad_hidden(n, d.video_hidden);
  for (std::size_t z = 0; z < grad_pooled.rows(); ++z) {
    auto g = grad_pooled.row(z);
    for (std::size_t c = 0; c < d.video_hidden; ++c) {
      grad_hidden(trace.map.winner(z, c), c) += g[c];
    }
  }
  if (params.options.rectify) {
    for (std::size_t i = 0; i < grad_hidden.size(); ++i) {
      if (trace.pre_act.values()[i] <= 0.0) {
        grad_hidden.values()[i] = 0.0;
      }
    }
  }
  accumulate_at_b(trace.clips, grad_hidden, grads.clip_fc_w);
  for (std::size_t i = 0; i < n; ++i) {
    auto g = grad_hidden.row(i);
    for (std::size_t c = 0; c < d.video_hidden; ++c) {
      grads.clip_fc_b[c] += g[c];
    }
  }
}

void backward_query(const ModelParams& params, const QueryTrace& trace,
                    std::span<const double> grad_embedding, Gradients& grads) {
  const auto& d = params.dims;
  if (grad_embedding.size() != d.joint || trace.input.size() != d.query_in) {
    throw Error(ErrorKind::dimension, "backward_query: trace does not match params");
  }
  for (std::size_t k = 0; k < d.query_in; ++k) {
    const double x = trace.input[k];
    auto row = grads.query_proj_w.row(k);
    for (std::size_t c = 0; c < d.joint; ++c) {
      row[c] += x * grad_embedding[c];
    }
  }
  for (std::size_t c = 0; c < d.joint; ++c) {
    grads.query_proj_b[c] += grad_embedding[c];
  }
}

ForwardTrace forward(const ModelParams& params, const Matrix& clips,
                     std::span<const double> query) {
  ForwardTrace t;
  t.video = encode_video(params, clips);
  t.query = encode_query(params, query);
  t.scores.resize(t.video.moments.rows());
  for (std::size_t z = 0; z < t.scores.size(); ++z) {
    try {
      t.scores[z] = similarity(params.options.similarity, t.query.embedding,
                               t.video.moments.row(z));
    } catch (const Error& e) {
      const Moment m = t.video.map.moment(z);
      throw Error(e.kind(), "forward: moment (" + std::to_string(m.start) + ", " +
                                std::to_string(m.end) + "): " + e.what());
    }
  }
  return t;
}

Gradients backward(const ForwardTrace& trace, const ModelParams& params,
                   std::span<const double> upstream) {
  if (upstream.size() != trace.scores.size() ||
      trace.video.moments.rows() != trace.scores.size() ||
      trace.query.embedding.size() != params.dims.joint) {
    throw Error(ErrorKind::dimension, "backward: stale trace or upstream length mismatch");
  }
  check_params(params);
  Gradients grads = ParamBlocks::zeros(params.dims);
  Matrix grad_moments(trace.video.moments.rows(), params.dims.joint);
  Vector grad_query(params.dims.joint, 0.0);
  for (std::size_t z = 0; z < upstream.size(); ++z) {
    similarity_backward(params.options.similarity, trace.query.embedding,
                        trace.video.moments.row(z), upstream[z], grad_query,
                        grad_moments.row(z));
  }
  backward_video(params, trace.video, grad_moments, grads);
  backward_query(params, trace.query, grad_query, grads);
  return grads;
}

namespace {

Matrix row_matrix(std::span<const double> v) {
  Matrix m(1, v.size());
  std::copy(v.begin(), v.end(), m.values().begin());
  return m;
}

// On-disk tensors in block order; biases are stored as 1×n matrices.
std::array<Matrix, 6> tensors_of(const ParamBlocks& w) {
  return {w.clip_fc_w, row_matrix(w.clip_fc_b), w.moment_proj_w,
          row_matrix(w.moment_proj_b), w.query_proj_w, row_matrix(w.query_proj_b)};
}

} // namespace

void save_params(const ModelParams& params, const std::filesystem::path& dir) {
  check_params(params);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorKind::io, "cannot create checkpoint directory " + dir.string());
  }
  nlohmann::json header;
  header["format"] = "d3g-model";
  header["version"] = 1;
  header["dims"] = {{"video_in", params.dims.video_in},
                    {"video_hidden", params.dims.video_hidden},
                    {"query_in", params.dims.query_in},
                    {"joint", params.dims.joint}};
  header["options"] = {
      {"rectify", params.options.rectify},
      {"similarity", params.options.similarity == Similarity::cosine ? "cosine" : "dot"}};
  const auto tensors = tensors_of(params.weights);
  for (std::size_t b = 0; b < tensors.size(); ++b) {
    const std::string file = std::string("model_") + kTensorNames[b] + ".bin";
    header["tensors"][kTensorNames[b]] = file;
    write_matrix(dir / file, tensors[b], Precision::f64);
  }
  std::ofstream out(dir / "model.json", std::ios::trunc);
  if (!out) {
    throw Error(ErrorKind::io, "cannot write " + (dir / "model.json").string());
  }
  out << header.dump(2) << '\n';
}

ModelParams load_params(const std::filesystem::path& dir) {
  const auto header_path = dir / "model.json";
  if (!std::filesystem::exists(header_path)) {
    throw Error(ErrorKind::missing_file, "missing checkpoint header " + header_path.string());
  }
  nlohmann::json header;
  try {
    std::ifstream in(header_path);
    header = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, "malformed " + header_path.string() + ": " + e.what());
  }
  ModelParams p;
  try {
    if (header.at("format") != "d3g-model") {
      throw Error(ErrorKind::format, "not a d3g model header: " + header_path.string());
    }
    const auto& dims = header.at("dims");
    p.dims.video_in = dims.at("video_in").get<std::size_t>();
    p.dims.video_hidden = dims.at("video_hidden").get<std::size_t>();
    p.dims.query_in = dims.at("query_in").get<std::size_t>();
    p.dims.joint = dims.at("joint").get<std::size_t>();
    const auto& opts = header.at("options");
    p.options.rectify = opts.at("rectify").get<bool>();
    const auto sim = opts.at("similarity").get<std::string>();
    if (sim != "cosine" && sim != "dot") {
      throw Error(ErrorKind::format, "unknown similarity '" + sim + "'");
    }
    p.options.similarity = sim == "cosine" ? Similarity::cosine : Similarity::dot;
    p.weights = ParamBlocks::zeros(p.dims);
    const auto expected = tensors_of(p.weights);
    auto blocks = p.weights.blocks();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto file = header.at("tensors").at(kTensorNames[b]).get<std::string>();
      const Matrix m = read_matrix(dir / file);
      check_shape(m, expected[b].rows(), expected[b].cols(), kTensorNames[b]);
      std::copy(m.values().begin(), m.values().end(), blocks[b].begin());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, "malformed " + header_path.string() + ": " + e.what());
  }
  return p;
}

} // namespace d3g
