#include "d3g/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "d3g/config.hpp"
#include "d3g/d3gf.hpp"
#include "d3g/error.hpp"

namespace d3g {
namespace {

std::string padded(const char* prefix, std::size_t value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%04zu", prefix, value);
  return buf;
}

[[noreturn]] void config_error(const std::string& field, const std::string& why) {
  throw Error(ErrorKind::config, "corpus." + field + ": " + why);
}

struct PlannedMoment {
  Moment span;
  std::vector<std::size_t> prototypes; // one per event block, in temporal order
};

// Disjoint spans for one video, in temporal order.
std::vector<PlannedMoment> plan_video(const CorpusConfig& cfg, Rng& rng) {
  const std::size_t n = cfg.clips_per_video;
  const std::size_t count = cfg.moments_per_video;
  const std::size_t max_len = cfg.effective_max_span();

  std::vector<std::size_t> events(count);
  std::vector<std::size_t> lengths(count);
  std::vector<std::size_t> min_lengths(count);
  for (std::size_t m = 0; m < count; ++m) {
    events[m] = 1 + rng.index(cfg.max_events_per_moment);
    min_lengths[m] = std::max(cfg.min_span_length, events[m]);
    lengths[m] = min_lengths[m] + rng.index(max_len - min_lengths[m] + 1);
  }
  std::size_t total = 0;
  std::size_t min_total = 0;
  for (std::size_t m = 0; m < count; ++m) {
    total += lengths[m];
    min_total += min_lengths[m];
  }
  if (min_total > n) {
    throw Error(ErrorKind::config,
                "cannot pack " + std::to_string(count) + " moments needing at least " +
                    std::to_string(min_total) + " clips into " + std::to_string(n) +
                    " clips per video");
  }
  // Shrink the longest shrinkable span until everything fits.
  while (total > n) {
    std::size_t pick = count;
    for (std::size_t m = 0; m < count; ++m) {
      if (lengths[m] > min_lengths[m] && (pick == count || lengths[m] > lengths[pick])) {
        pick = m;
      }
    }
    --lengths[pick];
    --total;
  }
  // Spread the free clips over the count + 1 gaps.
  std::vector<std::size_t> gaps(count + 1, 0);
  for (std::size_t f = 0; f < n - total; ++f) {
    ++gaps[rng.index(count + 1)];
  }

  std::vector<PlannedMoment> out(count);
  std::size_t cursor = 0;
  for (std::size_t m = 0; m < count; ++m) {
    cursor += gaps[m];
    out[m].span = {cursor, cursor + lengths[m] - 1};
    out[m].prototypes.resize(events[m]);
    cursor += lengths[m];
  }
  // Distinct prototypes across the whole video.
  std::size_t needed = 0;
  for (std::size_t e : events) {
    needed += e;
  }
  if (needed > cfg.num_event_prototypes) {
    throw Error(ErrorKind::config,
                "video needs " + std::to_string(needed) + " distinct event prototypes but only " +
                    std::to_string(cfg.num_event_prototypes) + " exist");
  }
  const auto order = rng.permutation(cfg.num_event_prototypes);
  std::size_t next = 0;
  for (auto& pm : out) {
    for (auto& p : pm.prototypes) {
      p = order[next++];
    }
  }
  return out;
}

std::size_t draw_glance(const CorpusConfig& cfg, Moment span, Rng& rng) {
  const std::size_t len = span.length();
  if (cfg.glance_mode == GlanceMode::uniform) {
    return span.start + rng.index(len);
  }
  const auto margin = static_cast<std::size_t>(
      std::ceil(cfg.extreme_margin_fraction * static_cast<double>(len)));
  const std::size_t width = std::clamp<std::size_t>(margin, 1, len);
  const std::size_t offset = rng.index(width);
  const bool near_start = rng.index(2) == 0;
  return near_start ? span.start + offset : span.end - offset;
}

} // namespace

std::size_t CorpusConfig::effective_max_span() const {
  if (max_span_length != 0) {
    return max_span_length;
  }
  return moments_per_video == 0 ? clips_per_video : clips_per_video / moments_per_video;
}

void CorpusConfig::validate() const {
  if (num_videos == 0) config_error("num_videos", "must be at least 1");
  if (clips_per_video < 2) config_error("clips_per_video", "must be at least 2");
  if (feature_dim == 0) config_error("feature_dim", "must be at least 1");
  if (query_dim == 0) config_error("query_dim", "must be at least 1");
  if (moments_per_video == 0) config_error("moments_per_video", "must be at least 1");
  if (max_events_per_moment == 0) config_error("max_events_per_moment", "must be at least 1");
  if (num_event_prototypes == 0) config_error("num_event_prototypes", "must be at least 1");
  if (min_span_length == 0) config_error("min_span_length", "must be at least 1");
  const std::size_t max_len = effective_max_span();
  if (max_len < min_span_length) {
    config_error("max_span_length", "effective maximum " + std::to_string(max_len) +
                                        " is below min_span_length " +
                                        std::to_string(min_span_length));
  }
  if (max_len > clips_per_video) config_error("max_span_length", "exceeds clips_per_video");
  if (max_events_per_moment > max_len) {
    config_error("max_events_per_moment", "exceeds the maximum span length");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    config_error("noise_sigma", "must be finite and non-negative");
  }
  if (!(extreme_margin_fraction > 0.0 && extreme_margin_fraction <= 0.5)) {
    config_error("extreme_margin_fraction", "must lie in (0, 0.5]");
  }
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    config_error("test_fraction", "must lie in [0, 1)");
  }
  if (moments_per_video * max_events_per_moment > num_event_prototypes) {
    config_error("num_event_prototypes",
                 "need at least moments_per_video * max_events_per_moment = " +
                     std::to_string(moments_per_video * max_events_per_moment) +
                     " distinct prototypes per video");
  }
  if (moments_per_video * min_span_length > clips_per_video) {
    config_error("moments_per_video",
                 "spans of length >= " + std::to_string(min_span_length) +
                     " cannot be packed into " + std::to_string(clips_per_video) + " clips");
  }
}

GlanceView GroundingSample::glance_view() const {
  return {video_id, query_id, clip_features.get(), query_feature, glance};
}

bool GroundingSample::operator==(const GroundingSample& other) const {
  const bool clips_equal =
      (clip_features == other.clip_features) ||
      (clip_features && other.clip_features && *clip_features == *other.clip_features);
  return clips_equal && video_id == other.video_id && query_id == other.query_id &&
         query_feature == other.query_feature && glance == other.glance &&
         gt_span == other.gt_span && split == other.split && num_events == other.num_events;
}

std::vector<const GroundingSample*> Corpus::split(Split which) const {
  std::vector<const GroundingSample*> out;
  for (const auto& s : samples) {
    if (s.split == which) {
      out.push_back(&s);
    }
  }
  return out;
}

std::vector<GlanceView> Corpus::glance_views(Split which) const {
  std::vector<GlanceView> out;
  for (const auto& s : samples) {
    if (s.split == which) {
      out.push_back(s.glance_view());
    }
  }
  return out;
}

static CorpusBasis draw_basis(const CorpusConfig& config, Rng& rng) {
  const std::size_t dv = config.feature_dim;
  CorpusBasis basis;
  // Non-negative prototypes, like rectified CNN features.
  basis.prototypes = Matrix(config.num_event_prototypes, dv);
  for (double& v : basis.prototypes.values()) {
    v = rng.uniform();
  }
  basis.background.resize(dv);
  for (double& v : basis.background) {
    v = rng.uniform();
  }
  // Fixed random linear code from prototype space into query space.
  basis.code = Matrix(dv, config.query_dim);
  const double code_scale = 1.0 / std::sqrt(static_cast<double>(dv));
  for (double& v : basis.code.values()) {
    v = rng.normal() * code_scale;
  }
  return basis;
}

CorpusBasis corpus_basis(const CorpusConfig& config) {
  config.validate();
  Rng rng(config.seed);
  return draw_basis(config, rng);
}

Corpus generate(const CorpusConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const std::size_t dv = config.feature_dim;
  const std::size_t ds = config.query_dim;
  const std::size_t n = config.clips_per_video;
  const CorpusBasis basis = draw_basis(config, rng);
  const Matrix& prototypes = basis.prototypes;
  const Vector& background = basis.background;
  const Matrix& code = basis.code;
  const Vector zero_bias(ds, 0.0);

  const auto num_test = static_cast<std::size_t>(
      std::llround(config.test_fraction * static_cast<double>(config.num_videos)));
  const auto video_order = rng.permutation(config.num_videos);
  std::vector<Split> video_split(config.num_videos, Split::train);
  for (std::size_t t = 0; t < num_test; ++t) {
    video_split[video_order[t]] = Split::test;
  }

  Corpus corpus;
  corpus.config = config;
  for (std::size_t v = 0; v < config.num_videos; ++v) {
    const auto plan = plan_video(config, rng);
    auto clips = std::make_shared<Matrix>(n, dv);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(background.begin(), background.end(), clips->row(i).begin());
    }
    for (const auto& pm : plan) {
      const std::size_t len = pm.span.length();
      const std::size_t blocks = pm.prototypes.size();
      // Split the span into `blocks` contiguous runs, earlier runs one longer.
      std::size_t cursor = pm.span.start;
      for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t run = len / blocks + (b < len % blocks ? 1 : 0);
        const auto proto = prototypes.row(pm.prototypes[b]);
        for (std::size_t i = cursor; i < cursor + run; ++i) {
          std::copy(proto.begin(), proto.end(), clips->row(i).begin());
        }
        cursor += run;
      }
    }
    for (double& x : clips->values()) {
      x += config.noise_sigma * rng.normal();
    }
    quantize_f32(*clips);

    const std::string video_id = padded("v", v);
    for (std::size_t q = 0; q < plan.size(); ++q) {
      const auto& pm = plan[q];
      Vector mean(dv, 0.0);
      for (std::size_t p : pm.prototypes) {
        const auto row = prototypes.row(p);
        for (std::size_t c = 0; c < dv; ++c) {
          mean[c] += row[c] / static_cast<double>(pm.prototypes.size());
        }
      }
      Vector query = affine(mean, code, zero_bias);
      for (double& x : query) {
        x = static_cast<double>(static_cast<float>(x + config.noise_sigma * rng.normal()));
      }
      GroundingSample s;
      s.video_id = video_id;
      s.query_id = video_id + "_q" + std::to_string(q);
      s.clip_features = clips;
      s.query_feature = std::move(query);
      s.gt_span = pm.span;
      s.glance = draw_glance(config, pm.span, rng);
      s.split = video_split[v];
      s.num_events = pm.prototypes.size();
      corpus.samples.push_back(std::move(s));
    }
  }
  return corpus;
}

const char* to_string(GlanceMode mode) {
  return mode == GlanceMode::uniform ? "uniform" : "extreme";
}

const char* to_string(Split split) { return split == Split::train ? "train" : "test"; }

void save(const Corpus& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "features", ec);
  if (ec) {
    throw Error(ErrorKind::io, "cannot create " + (dir / "features").string());
  }
  nlohmann::json manifest;
  manifest["format"] = "d3g-corpus";
  manifest["version"] = 1;
  manifest["config"] = to_json(corpus.config);

  Matrix queries(corpus.samples.size(),
                 corpus.samples.empty() ? corpus.config.query_dim
                                        : corpus.samples.front().query_feature.size());
  nlohmann::json videos = nlohmann::json::array();
  nlohmann::json samples = nlohmann::json::array();
  std::map<std::string, std::string> written;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const auto& s = corpus.samples[i];
    if (s.query_feature.size() != queries.cols()) {
      throw Error(ErrorKind::dimension, "save: inconsistent query feature widths");
    }
    std::copy(s.query_feature.begin(), s.query_feature.end(), queries.row(i).begin());
    if (!written.contains(s.video_id)) {
      const std::string rel = "features/" + s.video_id + ".bin";
      write_matrix(dir / rel, *s.clip_features, Precision::f32);
      written.emplace(s.video_id, rel);
      videos.push_back({{"video_id", s.video_id},
                        {"features", rel},
                        {"clips", s.clip_features->rows()},
                        {"split", to_string(s.split)}});
    }
    samples.push_back({{"query_id", s.query_id},
                       {"video_id", s.video_id},
                       {"query_row", i},
                       {"glance", s.glance},
                       {"gt_span", {s.gt_span.start, s.gt_span.end}},
                       {"num_events", s.num_events},
                       {"split", to_string(s.split)}});
  }
  write_matrix(dir / "features/queries.bin", queries, Precision::f32);
  manifest["queries"] = "features/queries.bin";
  manifest["videos"] = std::move(videos);
  manifest["samples"] = std::move(samples);

  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) {
    throw Error(ErrorKind::io, "cannot write " + (dir / "manifest.json").string());
  }
  out << manifest.dump(2) << '\n';
}

Corpus load(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) {
    throw Error(ErrorKind::missing_file, "missing corpus manifest " + manifest_path.string());
  }
  nlohmann::json manifest;
  try {
    std::ifstream in(manifest_path);
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, "malformed manifest " + manifest_path.string() + ": " +
                                       e.what());
  }

  Corpus corpus;
  try {
    if (manifest.at("format") != "d3g-corpus") {
      throw Error(ErrorKind::format, "not a d3g corpus manifest: " + manifest_path.string());
    }
    corpus.config = corpus_config_from_json(manifest.at("config"));
    const std::size_t n = corpus.config.clips_per_video;
    const std::size_t dv = corpus.config.feature_dim;

    std::map<std::string, std::shared_ptr<const Matrix>> clips_by_video;
    for (const auto& v : manifest.at("videos")) {
      const auto id = v.at("video_id").get<std::string>();
      auto m = std::make_shared<Matrix>(read_matrix(dir / v.at("features").get<std::string>()));
      if (m->rows() != n || m->cols() != dv) {
        throw Error(ErrorKind::dimension,
                    "video " + id + " features are " + std::to_string(m->rows()) + "x" +
                        std::to_string(m->cols()) + ", manifest config says " +
                        std::to_string(n) + "x" + std::to_string(dv));
      }
      clips_by_video.emplace(id, std::move(m));
    }
    const Matrix queries = read_matrix(dir / manifest.at("queries").get<std::string>());
    if (queries.cols() != corpus.config.query_dim) {
      throw Error(ErrorKind::dimension, "query features have width " +
                                            std::to_string(queries.cols()) + ", expected " +
                                            std::to_string(corpus.config.query_dim));
    }
    for (const auto& js : manifest.at("samples")) {
      GroundingSample s;
      s.query_id = js.at("query_id").get<std::string>();
      s.video_id = js.at("video_id").get<std::string>();
      const auto it = clips_by_video.find(s.video_id);
      if (it == clips_by_video.end()) {
        throw Error(ErrorKind::format, "sample " + s.query_id + " references unknown video " +
                                           s.video_id);
      }
      s.clip_features = it->second;
      const auto row = js.at("query_row").get<std::size_t>();
      if (row >= queries.rows()) {
        throw Error(ErrorKind::dimension, "sample " + s.query_id + " query row out of range");
      }
      s.query_feature.assign(queries.row(row).begin(), queries.row(row).end());
      s.glance = js.at("glance").get<std::size_t>();
      const auto span = js.at("gt_span");
      s.gt_span = {span.at(0).get<std::size_t>(), span.at(1).get<std::size_t>()};
      s.num_events = js.at("num_events").get<std::size_t>();
      const auto split = js.at("split").get<std::string>();
      if (split != "train" && split != "test") {
        throw Error(ErrorKind::format, "sample " + s.query_id + " has unknown split " + split);
      }
      s.split = split == "train" ? Split::train : Split::test;
      if (s.gt_span.start > s.gt_span.end || s.gt_span.end >= n ||
          !contains(s.gt_span, s.glance)) {
        throw Error(ErrorKind::format, "sample " + s.query_id +
                                           " violates t_s <= g <= t_e < N");
      }
      corpus.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, "malformed manifest " + manifest_path.string() + ": " +
                                       e.what());
  }
  return corpus;
}

} // namespace d3g
