#include "d3g/config.hpp"

#include <fstream>
#include <set>
#include <string>
#include <type_traits>

#include "d3g/error.hpp"

namespace d3g {
namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::string& where,
                    std::initializer_list<const char*> allowed) {
  if (!j.is_object()) {
    throw Error(ErrorKind::config,
                (where.empty() ? std::string("config") : where) + ": expected a JSON object");
  }
  const std::set<std::string> known(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) {
      throw Error(ErrorKind::config, "unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <typename T>
void read(const json& j, const char* key, const std::string& where, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) {
    return;
  }
  if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
    if (!it->is_number_unsigned()) {
      throw Error(ErrorKind::config,
                  where + "." + key + ": expected a non-negative integer, got " + it->dump());
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!it->is_number()) {
      throw Error(ErrorKind::config, where + "." + key + ": expected a number, got " + it->dump());
    }
  }
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, where + "." + key + ": " + e.what());
  }
}

template <typename Enum>
void read_enum(const json& j, const char* key, const std::string& where, Enum& out,
               std::initializer_list<std::pair<const char*, Enum>> names) {
  std::string text;
  const auto it = j.find(key);
  if (it == j.end()) {
    return;
  }
  if (!it->is_string()) {
    throw Error(ErrorKind::config, where + "." + key + ": expected a string");
  }
  text = it->get<std::string>();
  std::string valid;
  for (const auto& [name, value] : names) {
    if (text == name) {
      out = value;
      return;
    }
    valid += valid.empty() ? name : std::string(", ") + name;
  }
  throw Error(ErrorKind::config,
              where + "." + key + ": unknown value '" + text + "' (valid: " + valid + ")");
}

const char* feature_source_name(FeatureSource s) {
  return s == FeatureSource::raw ? "raw" : "reduced";
}

} // namespace

json to_json(const CorpusConfig& c) {
  return {{"num_videos", c.num_videos},
          {"clips_per_video", c.clips_per_video},
          {"feature_dim", c.feature_dim},
          {"query_dim", c.query_dim},
          {"num_event_prototypes", c.num_event_prototypes},
          {"moments_per_video", c.moments_per_video},
          {"max_events_per_moment", c.max_events_per_moment},
          {"min_span_length", c.min_span_length},
          {"max_span_length", c.max_span_length},
          {"noise_sigma", c.noise_sigma},
          {"glance_mode", to_string(c.glance_mode)},
          {"extreme_margin_fraction", c.extreme_margin_fraction},
          {"test_fraction", c.test_fraction},
          {"seed", c.seed}};
}

json to_json(const TrainConfig& c) {
  json j = {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"optimizer", to_string(c.optimizer)},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_epsilon", c.adam_epsilon},
            {"grad_clip", c.grad_clip},
            {"k", c.k},
            {"tau", c.tau},
            {"sigma", c.sigma},
            {"dga_enabled", c.dga_enabled},
            {"dga",
             {{"relevance_threshold", c.dga.relevance_threshold},
              {"momentum", c.dga.momentum},
              {"renormalize", c.dga.renormalize},
              {"literal_relevance", c.dga.literal_relevance},
              {"features", feature_source_name(c.dga.features)}}},
            {"sampling_mode", to_string(c.sampling)},
            {"weight_mode", to_string(c.weight_mode)},
            {"video_hidden", c.video_hidden},
            {"joint_dim", c.joint_dim},
            {"init_scale", c.init_scale},
            {"model",
             {{"rectify", c.model.rectify},
              {"similarity", c.model.similarity == Similarity::cosine ? "cosine" : "dot"}}},
            {"seed", c.seed}};
  j["intra_negative_cap"] =
      c.intra_negative_cap ? json(*c.intra_negative_cap) : json(nullptr);
  return j;
}

json to_json(const EvalConfig& c) {
  json j = {{"n", c.n_list}, {"m", c.m_list}};
  j["nms"] = c.nms_threshold ? json(*c.nms_threshold) : json(nullptr);
  return j;
}

json to_json(const ExperimentConfig& c) {
  return {{"corpus", to_json(c.corpus)}, {"train", to_json(c.train)}, {"eval", to_json(c.eval)}};
}

CorpusConfig corpus_config_from_json(const json& j, CorpusConfig c) {
  const std::string w = "corpus";
  reject_unknown(j, w,
                 {"num_videos", "clips_per_video", "feature_dim", "query_dim",
                  "num_event_prototypes", "moments_per_video", "max_events_per_moment",
                  "min_span_length", "max_span_length", "noise_sigma", "glance_mode",
                  "extreme_margin_fraction", "test_fraction", "seed"});
  read(j, "num_videos", w, c.num_videos);
  read(j, "clips_per_video", w, c.clips_per_video);
  read(j, "feature_dim", w, c.feature_dim);
  read(j, "query_dim", w, c.query_dim);
  read(j, "num_event_prototypes", w, c.num_event_prototypes);
  read(j, "moments_per_video", w, c.moments_per_video);
  read(j, "max_events_per_moment", w, c.max_events_per_moment);
  read(j, "min_span_length", w, c.min_span_length);
  read(j, "max_span_length", w, c.max_span_length);
  read(j, "noise_sigma", w, c.noise_sigma);
  read_enum(j, "glance_mode", w, c.glance_mode,
            {{"uniform", GlanceMode::uniform}, {"extreme", GlanceMode::extreme}});
  read(j, "extreme_margin_fraction", w, c.extreme_margin_fraction);
  read(j, "test_fraction", w, c.test_fraction);
  read(j, "seed", w, c.seed);
  return c;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  const std::string w = "train";
  reject_unknown(j, w,
                 {"epochs", "batch_size", "learning_rate", "optimizer", "adam_beta1",
                  "adam_beta2", "adam_epsilon", "grad_clip", "k", "tau", "sigma", "dga_enabled",
                  "dga", "sampling_mode", "weight_mode", "intra_negative_cap", "video_hidden",
                  "joint_dim", "init_scale", "model", "seed"});
  read(j, "epochs", w, c.epochs);
  read(j, "batch_size", w, c.batch_size);
  read(j, "learning_rate", w, c.learning_rate);
  read_enum(j, "optimizer", w, c.optimizer,
            {{"sgd", OptimizerKind::sgd}, {"adam", OptimizerKind::adam}});
  read(j, "adam_beta1", w, c.adam_beta1);
  read(j, "adam_beta2", w, c.adam_beta2);
  read(j, "adam_epsilon", w, c.adam_epsilon);
  read(j, "grad_clip", w, c.grad_clip);
  read(j, "k", w, c.k);
  read(j, "tau", w, c.tau);
  read(j, "sigma", w, c.sigma);
  read(j, "dga_enabled", w, c.dga_enabled);
  if (const auto it = j.find("dga"); it != j.end()) {
    const std::string wd = "train.dga";
    reject_unknown(*it, wd,
                   {"relevance_threshold", "momentum", "renormalize", "literal_relevance",
                    "features"});
    read(*it, "relevance_threshold", wd, c.dga.relevance_threshold);
    read(*it, "momentum", wd, c.dga.momentum);
    read(*it, "renormalize", wd, c.dga.renormalize);
    read(*it, "literal_relevance", wd, c.dga.literal_relevance);
    read_enum(*it, "features", wd, c.dga.features,
              {{"raw", FeatureSource::raw}, {"reduced", FeatureSource::reduced}});
  }
  read_enum(j, "sampling_mode", w, c.sampling,
            {{"gaussian_only", SamplingMode::gaussian_only},
             {"semantic_only", SamplingMode::semantic_only},
             {"calibrated", SamplingMode::calibrated}});
  read_enum(j, "weight_mode", w, c.weight_mode,
            {{"triplet", WeightMode::triplet}, {"midpoint", WeightMode::midpoint}});
  if (const auto it = j.find("intra_negative_cap"); it != j.end()) {
    if (it->is_null()) {
      c.intra_negative_cap.reset();
    } else {
      std::size_t cap = 0;
      read(j, "intra_negative_cap", w, cap);
      c.intra_negative_cap = cap;
    }
  }
  read(j, "video_hidden", w, c.video_hidden);
  read(j, "joint_dim", w, c.joint_dim);
  read(j, "init_scale", w, c.init_scale);
  if (const auto it = j.find("model"); it != j.end()) {
    const std::string wm = "train.model";
    reject_unknown(*it, wm, {"rectify", "similarity"});
    read(*it, "rectify", wm, c.model.rectify);
    read_enum(*it, "similarity", wm, c.model.similarity,
              {{"cosine", Similarity::cosine}, {"dot", Similarity::dot}});
  }
  read(j, "seed", w, c.seed);
  return c;
}

EvalConfig eval_config_from_json(const json& j, EvalConfig c) {
  const std::string w = "eval";
  reject_unknown(j, w, {"n", "m", "nms"});
  read(j, "n", w, c.n_list);
  read(j, "m", w, c.m_list);
  if (const auto it = j.find("nms"); it != j.end()) {
    if (it->is_null()) {
      c.nms_threshold.reset();
    } else {
      double t = 0.0;
      read(j, "nms", w, t);
      c.nms_threshold = t;
    }
  }
  return c;
}

ExperimentConfig experiment_from_json(const json& j) {
  reject_unknown(j, "", {"corpus", "train", "eval"});
  ExperimentConfig c;
  if (const auto it = j.find("corpus"); it != j.end()) {
    c.corpus = corpus_config_from_json(*it);
  }
  if (const auto it = j.find("train"); it != j.end()) {
    c.train = train_config_from_json(*it);
  }
  if (const auto it = j.find("eval"); it != j.end()) {
    c.eval = eval_config_from_json(*it);
  }
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::missing_file, "config file not found: " + path.string());
  }
  json j;
  try {
    std::ifstream in(path);
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, "malformed config " + path.string() + ": " + e.what());
  }
  return experiment_from_json(j);
}

} // namespace d3g
