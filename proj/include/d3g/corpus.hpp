#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "d3g/numerics.hpp"
#include "d3g/temporal_map.hpp"

namespace d3g {

enum class GlanceMode {
  uniform, // anywhere inside the target span
  extreme, // only near the span's start or end
};

enum class Split { train, test };

struct CorpusConfig {
  std::size_t num_videos = 24;
  std::size_t clips_per_video = 16;
  std::size_t feature_dim = 16;
  std::size_t query_dim = 16;
  std::size_t num_event_prototypes = 12;
  std::size_t moments_per_video = 2;
  std::size_t max_events_per_moment = 1;
  std::size_t min_span_length = 2;
  // 0 selects clips_per_video / moments_per_video.
  std::size_t max_span_length = 0;
  double noise_sigma = 0.1;
  GlanceMode glance_mode = GlanceMode::uniform;
  double extreme_margin_fraction = 0.1;
  double test_fraction = 1.0 / 3.0;
  std::uint64_t seed = 0;

  std::size_t effective_max_span() const;
  // Throws Error(config) naming the offending field.
  void validate() const;

  bool operator==(const CorpusConfig&) const = default;
};

// Glance-only view of a sample: everything training may see. The target
// span is deliberately absent.
struct GlanceView {
  std::string video_id;
  std::string query_id;
  const Matrix* clip_features = nullptr;
  std::span<const double> query_feature;
  std::size_t glance = 0;
};

struct GroundingSample {
  std::string video_id;
  std::string query_id;
  std::shared_ptr<const Matrix> clip_features; // shared by a video's queries
  Vector query_feature;
  std::size_t glance = 0;
  Moment gt_span;
  Split split = Split::train;
  std::size_t num_events = 1;

  GlanceView glance_view() const;
  bool operator==(const GroundingSample& other) const;
};

struct Corpus {
  CorpusConfig config;
  std::vector<GroundingSample> samples;

  std::vector<const GroundingSample*> split(Split which) const;
  std::vector<GlanceView> glance_views(Split which) const;
  bool operator==(const Corpus&) const = default;
};

// The fixed random quantities every video and query of a corpus is built
// from: event prototypes (rows), the background clip and the query code.
struct CorpusBasis {
  Matrix prototypes;
  Vector background;
  Matrix code; // feature_dim × query_dim
};

// Regenerates the basis `generate` uses for this config.
CorpusBasis corpus_basis(const CorpusConfig& config);

// Throws Error(config) when the spans cannot be packed into the clips.
Corpus generate(const CorpusConfig& config);

// Writes <dir>/manifest.json and <dir>/features/*.bin.
void save(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load(const std::filesystem::path& dir);

const char* to_string(GlanceMode mode);
const char* to_string(Split split);

} // namespace d3g
