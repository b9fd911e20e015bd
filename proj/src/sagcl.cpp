#include "d3g/sagcl.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "d3g/error.hpp"
#include "d3g/temporal_map.hpp"

namespace d3g {

Vector consistency_scores(std::span<const double> query_embedding, const Matrix& moments) {
  Vector out(moments.rows());
  for (std::size_t z = 0; z < moments.rows(); ++z) {
    out[z] = cosine(query_embedding, moments.row(z));
  }
  return out;
}

Vector calibrate(std::span<const double> w, std::span<const double> s) {
  if (w.size() != s.size()) {
    throw Error(ErrorKind::dimension, "calibrate: length mismatch");
  }
  Vector p(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    p[i] = w[i] * s[i];
  }
  return p;
}

KeySelection select_keys(std::span<const double> ranking,
                         std::span<const double> w,
                         std::size_t glance,
                         std::size_t k,
                         std::size_t clips,
                         std::span<const std::size_t> other_videos,
                         std::optional<std::size_t> intra_cap) {
  const std::size_t m = num_moments(clips);
  if (ranking.size() != m || w.size() != m) {
    throw Error(ErrorKind::dimension, "select_keys: ranking/weights must cover every moment");
  }
  if (k == 0 || k > m) {
    throw Error(ErrorKind::config, "select_keys: k=" + std::to_string(k) +
                                       " outside [1, " + std::to_string(m) + "]");
  }
  if (glance >= clips) {
    throw Error(ErrorKind::index, "select_keys: glance out of range");
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return ranking[a] > ranking[b] || (ranking[a] == ranking[b] && a < b);
                    });
  KeySelection sel;
  sel.positives.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<bool> is_positive(m, false);
  for (std::size_t z : sel.positives) {
    is_positive[z] = true;
    sel.positive_weights.push_back(w[z]);
  }
  std::vector<std::size_t> intra;
  for (std::size_t z = 0; z < m; ++z) {
    if (!is_positive[z] && !contains(unflatten(z, clips), glance)) {
      intra.push_back(z);
    }
  }
  if (intra_cap && *intra_cap < intra.size()) {
    const std::size_t cap = *intra_cap;
    std::vector<std::size_t> kept;
    kept.reserve(cap);
    for (std::size_t i = 0; i < cap; ++i) {
      kept.push_back(intra[i * intra.size() / cap]);
    }
    intra = std::move(kept);
  }
  sel.intra_negatives = std::move(intra);
  sel.inter_negative_videos.assign(other_videos.begin(), other_videos.end());
  return sel;
}

LossOutput group_contrastive_loss(std::span<const double> positive_scores,
                                  std::span<const double> positive_weights,
                                  std::span<const double> negative_scores,
                                  double tau) {
  if (positive_scores.empty()) {
    throw Error(ErrorKind::empty_input, "group_contrastive_loss: no positive keys");
  }
  if (positive_scores.size() != positive_weights.size()) {
    throw Error(ErrorKind::dimension, "group_contrastive_loss: positive weight count mismatch");
  }
  if (!(tau > 0.0)) {
    throw Error(ErrorKind::config, "group_contrastive_loss: temperature must be positive");
  }
  const std::size_t k = positive_scores.size();
  const std::size_t total = k + negative_scores.size();
  Vector logits(total);
  for (std::size_t i = 0; i < k; ++i) {
    logits[i] = positive_scores[i] / tau;
  }
  for (std::size_t i = 0; i < negative_scores.size(); ++i) {
    logits[k + i] = negative_scores[i] / tau;
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  Vector shifted(total);
  for (std::size_t i = 0; i < total; ++i) {
    shifted[i] = std::exp(logits[i] - peak);
  }
  const double sum = compensated_sum(shifted);
  const double log_sum = peak + std::log(sum);

  const double inv_k = 1.0 / static_cast<double>(k);
  double weight_total = 0.0;
  Vector terms(k);
  for (std::size_t i = 0; i < k; ++i) {
    weight_total += positive_weights[i];
    terms[i] = positive_weights[i] * (logits[i] - log_sum);
  }
  LossOutput out;
  out.loss = -inv_k * compensated_sum(terms);
  out.upstream.resize(total);
  for (std::size_t j = 0; j < total; ++j) {
    const double softmax = shifted[j] / sum;
    const double own = j < k ? positive_weights[j] : 0.0;
    out.upstream[j] = inv_k * (weight_total * softmax - own) / tau;
  }
  return out;
}

LossOutput group_contrastive_loss(std::span<const double> query_embedding,
                                  const Matrix& positives,
                                  std::span<const double> positive_weights,
                                  const Matrix& negatives,
                                  double tau) {
  Vector pos(positives.rows());
  for (std::size_t i = 0; i < pos.size(); ++i) {
    pos[i] = cosine(query_embedding, positives.row(i));
  }
  Vector neg(negatives.rows());
  for (std::size_t i = 0; i < neg.size(); ++i) {
    neg[i] = cosine(query_embedding, negatives.row(i));
  }
  return group_contrastive_loss(pos, positive_weights, neg, tau);
}

BatchResult batch_loss(const ModelParams& params,
                       std::span<const BatchItem> batch,
                       const LossConfig& config) {
  if (batch.empty()) {
    throw Error(ErrorKind::empty_input, "batch_loss: empty batch");
  }
  // One slot per distinct video, in first-appearance order.
  std::map<std::string, std::size_t> slot_of;
  std::vector<const Matrix*> slot_clips;
  std::vector<std::size_t> item_slot(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& view = batch[b].view;
    if (view.clip_features == nullptr) {
      throw Error(ErrorKind::empty_input, "batch_loss: sample " + view.query_id +
                                              " has no clip features");
    }
    auto [it, inserted] = slot_of.emplace(view.video_id, slot_clips.size());
    if (inserted) {
      slot_clips.push_back(view.clip_features);
    } else if (*slot_clips[it->second] != *view.clip_features) {
      throw Error(ErrorKind::dimension, "batch_loss: video " + view.video_id +
                                            " appears with different clip features");
    }
    item_slot[b] = it->second;
  }
  std::vector<VideoTrace> videos;
  videos.reserve(slot_clips.size());
  for (const Matrix* clips : slot_clips) {
    videos.push_back(encode_video(params, *clips));
  }
  std::vector<Matrix> grad_moments;
  for (const auto& v : videos) {
    grad_moments.emplace_back(v.moments.rows(), params.dims.joint);
  }

  const Similarity kind = params.options.similarity;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  BatchResult result;
  result.grads = ParamBlocks::zeros(params.dims);
  result.sample_losses.resize(batch.size());

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& item = batch[b];
    const std::size_t own = item_slot[b];
    const VideoTrace& video = videos[own];
    const std::size_t clips = video.clips.rows();
    const QueryTrace query = encode_query(params, item.view.query_feature);
    if (item.prior.size() != video.moments.rows()) {
      throw Error(ErrorKind::dimension, "batch_loss: prior for " + item.view.query_id +
                                            " does not cover every moment");
    }

    Vector s;
    try {
      s = consistency_scores(query.embedding, video.moments);
    } catch (const Error& e) {
      throw Error(e.kind(), "batch_loss: sample " + item.view.query_id + ": " + e.what());
    }
    const Vector p = calibrate(item.prior, s);
    const std::span<const double> ranking = config.sampling == SamplingMode::gaussian_only
                                                ? item.prior
                                            : config.sampling == SamplingMode::semantic_only
                                                ? std::span<const double>(s)
                                                : std::span<const double>(p);
    std::vector<std::size_t> others;
    for (std::size_t v = 0; v < videos.size(); ++v) {
      if (v != own) {
        others.push_back(v);
      }
    }
    const KeySelection sel = select_keys(ranking, item.prior, item.view.glance, config.k,
                                         clips, others, config.intra_negative_cap);

    // Scored pairs: (slot, moment) in loss order.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t z : sel.positives) {
      pairs.emplace_back(own, z);
    }
    for (std::size_t z : sel.intra_negatives) {
      pairs.emplace_back(own, z);
    }
    for (std::size_t v : sel.inter_negative_videos) {
      for (std::size_t z = 0; z < videos[v].moments.rows(); ++z) {
        pairs.emplace_back(v, z);
      }
    }
    Vector scores(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto [v, z] = pairs[i];
      scores[i] = kind == Similarity::cosine && v == own ? s[z]
                  : similarity(kind, query.embedding, videos[v].moments.row(z));
    }
    const std::size_t k = sel.positives.size();
    const LossOutput out = group_contrastive_loss(
        std::span<const double>(scores).first(k), sel.positive_weights,
        std::span<const double>(scores).subspan(k), config.tau);
    if (!std::isfinite(out.loss)) {
      throw Error(ErrorKind::numeric, "batch_loss: non-finite loss for sample " +
                                          item.view.query_id);
    }
    result.sample_losses[b] = out.loss;
    result.loss += out.loss * inv_batch;

    Vector grad_query(params.dims.joint, 0.0);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto [v, z] = pairs[i];
      similarity_backward(kind, query.embedding, videos[v].moments.row(z),
                          out.upstream[i] * inv_batch, grad_query, grad_moments[v].row(z));
    }
    backward_query(params, query, grad_query, result.grads);
  }
  for (std::size_t v = 0; v < videos.size(); ++v) {
    backward_video(params, videos[v], grad_moments[v], result.grads);
  }
  return result;
}

} // namespace d3g
