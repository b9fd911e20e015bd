#include "cli.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "d3g/config.hpp"
#include "d3g/corpus.hpp"
#include "d3g/error.hpp"
#include "d3g/eval.hpp"
#include "d3g/model.hpp"
#include "d3g/prior.hpp"
#include "d3g/sagcl.hpp"
#include "d3g/trainer.hpp"

namespace d3g::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Shortest representation that parses back to the same double.
std::string real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::index:
    case ErrorKind::empty_input:
      return kUsage;
    case ErrorKind::io:
    case ErrorKind::missing_file:
    case ErrorKind::format:
    case ErrorKind::truncated:
    case ErrorKind::dimension:
      return kIo;
    case ErrorKind::numeric:
    case ErrorKind::zero_norm:
      return kNumeric;
  }
  return kIo;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw Error(ErrorKind::io, "cannot write " + path.string());
  }
  out << text;
  if (!out) {
    throw Error(ErrorKind::io, "write failed: " + path.string());
  }
}

// "<dir>/<stem><suffix>" next to `path`.
fs::path sibling(const fs::path& path, const std::string& suffix) {
  return path.parent_path() / (path.stem().string() + suffix);
}

ExperimentConfig base_config(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : load_experiment(path);
}

struct TrainOverrides {
  std::optional<std::size_t> k;
  std::optional<double> sigma;
  std::optional<double> tau;
  std::optional<double> tr;
  std::optional<double> alpha;
  std::optional<std::string> dga;
  std::optional<std::string> weight_mode;
  std::optional<std::string> sampling_mode;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* sub) {
    sub->add_option("--k", k, "Positive keys per query (default 10)");
    sub->add_option("--sigma", sigma, "Gaussian prior width on the [-1,1] grid (default 0.3)");
    sub->add_option("--tau", tau, "Contrastive temperature (default 0.1)");
    sub->add_option("--tr", tr, "DGA relevance threshold T_r (default 0.9)");
    sub->add_option("--alpha", alpha, "DGA relevance momentum (default 0.7)");
    sub->add_option("--dga", dga, "Dynamic prior adjustment on|off (default on)")
        ->check(CLI::IsMember({"on", "off"}));
    sub->add_option("--weight-mode", weight_mode, "triplet|midpoint (default triplet)")
        ->check(CLI::IsMember({"triplet", "midpoint"}));
    sub->add_option("--sampling-mode", sampling_mode,
                    "calibrated|gaussian_only|semantic_only (default calibrated)")
        ->check(CLI::IsMember({"calibrated", "gaussian_only", "semantic_only"}));
    sub->add_option("--epochs", epochs, "Training epochs (default 30)");
    sub->add_option("--batch-size", batch_size, "Samples per batch (default 8)");
    sub->add_option("--lr", lr, "Learning rate (default 1e-3)");
    sub->add_option("--seed", seed, "Training seed (default 0)");
  }

  void apply(TrainConfig& c) const {
    if (k) c.k = *k;
    if (sigma) c.sigma = *sigma;
    if (tau) c.tau = *tau;
    if (tr) c.dga.relevance_threshold = *tr;
    if (alpha) c.dga.momentum = *alpha;
    if (dga) c.dga_enabled = *dga == "on";
    if (weight_mode) {
      c.weight_mode = *weight_mode == "midpoint" ? WeightMode::midpoint : WeightMode::triplet;
    }
    if (sampling_mode) {
      c.sampling = *sampling_mode == "gaussian_only"   ? SamplingMode::gaussian_only
                   : *sampling_mode == "semantic_only" ? SamplingMode::semantic_only
                                                       : SamplingMode::calibrated;
    }
    if (epochs) c.epochs = *epochs;
    if (batch_size) c.batch_size = *batch_size;
    if (lr) c.learning_rate = *lr;
    if (seed) c.seed = *seed;
  }
};

struct EvalOverrides {
  std::vector<std::size_t> n;
  std::vector<double> m;
  std::optional<std::string> nms;

  void attach(CLI::App* sub) {
    sub->add_option("--n", n, "Top-n cut-offs, comma separated (default 1,5)")->delimiter(',');
    sub->add_option("--m", m, "IoU thresholds in (0,1], comma separated (default 0.3,0.5,0.7)")
        ->delimiter(',');
    sub->add_option("--nms", nms, "NMS IoU threshold for n > 1, or 'none' (default 0.5)");
  }

  void apply(EvalConfig& c) const {
    if (!n.empty()) c.n_list = n;
    if (!m.empty()) c.m_list = m;
    if (nms) {
      if (*nms == "none") {
        c.nms_threshold.reset();
      } else {
        try {
          std::size_t used = 0;
          c.nms_threshold = std::stod(*nms, &used);
          if (used != nms->size()) {
            throw std::invalid_argument(*nms);
          }
        } catch (const std::exception&) {
          throw Error(ErrorKind::config, "--nms: expected a number or 'none', got '" + *nms + "'");
        }
      }
    }
    c.validate();
  }
};

std::string recall_csv(const RecallTable& table) {
  std::ostringstream os;
  os << "n,m,recall,num_queries\n";
  for (const auto& e : table.entries) {
    os << e.n << ',' << real(e.m) << ',' << real(e.recall) << ',' << table.num_queries << '\n';
  }
  return os.str();
}

void print_table(std::ostream& out, const RecallTable& table) {
  out << "queries: " << table.num_queries << '\n';
  for (const auto& e : table.entries) {
    out << "  R@" << e.n << ",IoU=" << real(e.m) << ": " << std::fixed << std::setprecision(2)
        << 100.0 * e.recall << "%  (" << e.hits << '/' << table.num_queries << ")\n";
    out.unsetf(std::ios::floatfield);
  }
}

// ----------------------------------------------------------------------------

struct GenArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_gen_data(const GenArgs& a, std::ostream& out) {
  ExperimentConfig cfg = load_experiment(a.config);
  if (a.seed) cfg.corpus.seed = *a.seed;
  const Corpus corpus = generate(cfg.corpus);
  save(corpus, a.out);
  std::size_t multi = 0;
  std::map<std::string, int> videos;
  for (const auto& s : corpus.samples) {
    videos[s.video_id] = 1;
    multi += s.num_events > 1 ? 1 : 0;
  }
  out << "videos: " << videos.size() << '\n'
      << "queries: " << corpus.samples.size() << " (train "
      << corpus.split(Split::train).size() << ", test " << corpus.split(Split::test).size()
      << ")\n"
      << "multi-event queries: " << multi << '\n';
  return kOk;
}

struct TrainArgs {
  std::string corpus;
  std::string config;
  std::string out;
  TrainOverrides overrides;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  ExperimentConfig cfg = base_config(a.config);
  a.overrides.apply(cfg.train);
  cfg.train.validate();
  const Corpus corpus = load(a.corpus);
  cfg.corpus = corpus.config;
  const auto views = corpus.glance_views(Split::train);
  if (views.empty()) {
    throw Error(ErrorKind::empty_input, "train: corpus has no training queries");
  }
  std::ostringstream log;
  log << "epoch,mean_loss,wall_ms\n";
  const TrainState state = train(views, cfg.train, [&](const EpochRecord& r) {
    log << r.epoch << ',' << real(r.mean_loss) << ',' << real(r.wall_ms) << '\n';
  });
  const fs::path dir = a.out;
  save_params(state.params, dir);
  write_text(dir / "train_log.csv", log.str());
  const std::string resolved = to_json(cfg).dump(2) + "\n";
  write_text(dir / "config.json", resolved);
  out << resolved;
  out << "final mean loss: " << real(state.history.back().mean_loss) << '\n';
  return kOk;
}

struct EvalArgs {
  std::string corpus;
  std::string model;
  std::string config;
  std::string out;
  EvalOverrides overrides;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  ExperimentConfig cfg = base_config(a.config);
  a.overrides.apply(cfg.eval);
  const ModelParams params = load_params(a.model);
  const Corpus corpus = load(a.corpus);
  const RecallTable table = evaluate_model(params, corpus, cfg.eval);
  print_table(out, table);
  const std::string csv = recall_csv(table);
  out << csv;
  if (!a.out.empty()) {
    write_text(a.out, csv);
    write_text(sibling(a.out, "_config.json"), to_json(cfg.eval).dump(2) + "\n");
  }
  return kOk;
}

struct InspectArgs {
  std::string corpus;
  std::string sample;
  std::string out;
  std::string model;
  std::string config;
  TrainOverrides overrides;
};

int cmd_inspect_prior(const InspectArgs& a, std::ostream& out) {
  ExperimentConfig cfg = base_config(a.config);
  a.overrides.apply(cfg.train);
  cfg.train.validate();
  const Corpus corpus = load(a.corpus);
  const GroundingSample* sample = nullptr;
  for (const auto& s : corpus.samples) {
    if (s.query_id == a.sample) {
      sample = &s;
    }
  }
  if (sample == nullptr) {
    throw Error(ErrorKind::index, "unknown sample id '" + a.sample + "'");
  }
  std::optional<ModelParams> params;
  if (!a.model.empty()) {
    params = load_params(a.model);
  }
  const TrainConfig& tc = cfg.train;
  const Matrix& clips = *sample->clip_features;
  const std::size_t n = clips.rows();
  const GaussianGrid grid(n, tc.sigma);
  const Vector& curve = grid.at(sample->glance);

  const Matrix features = params && tc.dga.features == FeatureSource::reduced
                              ? reduce_clips(*params, clips)
                              : clips;
  RelevanceState rel;
  momentum_update(rel, relevance(features, sample->glance), tc.dga.momentum);
  const auto mask = center_mask(rel.smoothed, tc.dga.relevance_threshold);
  const Vector adjusted = dga_weights(rel.smoothed, mask, grid, tc.dga);

  std::ostringstream clip_csv;
  clip_csv << "i,h,G,r_bar,mask,G_dga\n";
  for (std::size_t i = 0; i < n; ++i) {
    clip_csv << i << ',' << real(scale_index(i, n)) << ',' << real(curve[i]) << ','
             << real(rel.smoothed[i]) << ',' << static_cast<int>(mask[i]) << ','
             << real(adjusted[i]) << '\n';
  }

  const Vector w_static = moment_weights(curve, tc.weight_mode);
  const Vector w_dga = moment_weights(adjusted, tc.weight_mode);
  std::optional<Vector> s;
  if (params) {
    const ForwardTrace trace = forward(*params, clips, sample->query_feature);
    s = consistency_scores(trace.query.embedding, trace.video.moments);
  }
  std::ostringstream moment_csv;
  moment_csv << "i,j,flat_index,w_static,w_dga" << (s ? ",s,p" : "") << '\n';
  for (std::size_t z = 0; z < w_static.size(); ++z) {
    const Moment m = unflatten(z, n);
    moment_csv << m.start << ',' << m.end << ',' << z << ',' << real(w_static[z]) << ','
               << real(w_dga[z]);
    if (s) {
      const double w = tc.dga_enabled ? w_dga[z] : w_static[z];
      moment_csv << ',' << real((*s)[z]) << ',' << real(w * (*s)[z]);
    }
    moment_csv << '\n';
  }
  const fs::path path = a.out;
  write_text(path, moment_csv.str());
  write_text(sibling(path, "_clips.csv"), clip_csv.str());
  write_text(sibling(path, "_config.json"), to_json(cfg.train).dump(2) + "\n");
  out << "sample " << sample->query_id << ": N=" << n << ", glance=" << sample->glance
      << ", centres=" << std::count(mask.begin(), mask.end(), 1) << '\n'
      << "moments -> " << path.string() << '\n'
      << "clips   -> " << sibling(path, "_clips.csv").string() << '\n';
  return kOk;
}

struct Variant {
  std::string name;
  TrainConfig train;
};

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names{"top1",          "midpoint", "gaussian_only",
                                              "semantic_only", "full",     "full+dga"};
  return names;
}

Variant make_ablation(const std::string& name, const TrainConfig& base) {
  Variant v{name, base};
  TrainConfig& c = v.train;
  c.dga_enabled = false;
  c.sampling = SamplingMode::calibrated;
  c.weight_mode = WeightMode::triplet;
  if (name == "top1") {
    c.k = 1;
  } else if (name == "midpoint") {
    c.weight_mode = WeightMode::midpoint;
  } else if (name == "gaussian_only") {
    c.sampling = SamplingMode::gaussian_only;
  } else if (name == "semantic_only") {
    c.sampling = SamplingMode::semantic_only;
  } else if (name == "full+dga") {
    c.dga_enabled = true;
  } else if (name != "full") {
    std::string valid;
    for (const auto& n : ablation_names()) {
      valid += (valid.empty() ? "" : ", ") + n;
    }
    throw Error(ErrorKind::config, "unknown ablation '" + name + "' (valid: " + valid + ")");
  }
  return v;
}

// "key=v1,v2,..." over the base training config.
std::vector<Variant> make_sweep(const std::string& arg, const TrainConfig& base) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size()) {
    throw Error(ErrorKind::config, "--sweep expects key=v1,v2,... got '" + arg + "'");
  }
  const std::string key = arg.substr(0, eq);
  if (key != "k" && key != "sigma" && key != "tau" && key != "tr" && key != "alpha") {
    throw Error(ErrorKind::config,
                "--sweep: unknown key '" + key + "' (valid: k, sigma, tau, tr, alpha)");
  }
  std::vector<Variant> out;
  std::stringstream values(arg.substr(eq + 1));
  std::string item;
  while (std::getline(values, item, ',')) {
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(item, &used);
      if (used != item.size()) {
        throw std::invalid_argument(item);
      }
    } catch (const std::exception&) {
      throw Error(ErrorKind::config, "--sweep: bad value '" + item + "' for " + key);
    }
    Variant v{key + "=" + item, base};
    if (key == "k") {
      if (value < 1 || value != static_cast<double>(static_cast<std::size_t>(value))) {
        throw Error(ErrorKind::config, "--sweep: k must be a positive integer");
      }
      v.train.k = static_cast<std::size_t>(value);
    } else if (key == "sigma") {
      v.train.sigma = value;
    } else if (key == "tau") {
      v.train.tau = value;
    } else if (key == "tr") {
      v.train.dga.relevance_threshold = value;
    } else {
      v.train.dga.momentum = value;
    }
    v.train.validate();
    out.push_back(std::move(v));
  }
  return out;
}

struct CompareArgs {
  std::string corpus;
  std::string config;
  std::vector<std::string> ablations;
  std::vector<std::string> sweeps;
  std::string out;
  TrainOverrides overrides;
  EvalOverrides eval;
};

int cmd_compare(const CompareArgs& a, std::ostream& out) {
  ExperimentConfig cfg = base_config(a.config);
  a.overrides.apply(cfg.train);
  a.eval.apply(cfg.eval);
  cfg.train.validate();
  std::vector<Variant> variants;
  for (const auto& name : a.ablations) {
    variants.push_back(make_ablation(name, cfg.train));
  }
  for (const auto& arg : a.sweeps) {
    for (auto& v : make_sweep(arg, cfg.train)) {
      variants.push_back(std::move(v));
    }
  }
  if (variants.empty()) {
    throw Error(ErrorKind::config, "compare: give --ablations and/or --sweep");
  }
  const Corpus corpus = load(a.corpus);
  const auto views = corpus.glance_views(Split::train);
  if (views.empty()) {
    throw Error(ErrorKind::empty_input, "compare: corpus has no training queries");
  }
  std::ostringstream csv;
  csv << "variant,n,m,recall,num_queries\n";
  json echo = to_json(cfg);
  for (const auto& v : variants) {
    const TrainState state = train(views, v.train);
    const RecallTable table = evaluate_model(state.params, corpus, cfg.eval);
    out << "== " << v.name << " (final loss " << real(state.history.back().mean_loss) << ")\n";
    print_table(out, table);
    for (const auto& e : table.entries) {
      csv << v.name << ',' << e.n << ',' << real(e.m) << ',' << real(e.recall) << ','
          << table.num_queries << '\n';
    }
    echo["variants"][v.name] = to_json(v.train);
  }
  const fs::path path = a.out;
  write_text(path, csv.str());
  write_text(sibling(path, "_config.json"), echo.dump(2) + "\n");
  return kOk;
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Glance-supervised temporal sentence grounding on synthetic corpora",
               "d3g"};
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 ok, 1 usage/config error, 2 I/O or file-format error, "
      "3 numeric failure.\nFlags override the --config file, which overrides built-in "
      "defaults.");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic grounding corpus");
  gen_cmd->add_option("--config", gen.config, "Experiment JSON (its corpus section is used)")
      ->required();
  gen_cmd->add_option("--out", gen.out, "Output corpus directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Override corpus.seed");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a corpus's train split");
  train_cmd->add_option("--corpus", tr.corpus, "Corpus directory")->required();
  train_cmd->add_option("--config", tr.config, "Experiment JSON (train section)");
  train_cmd->add_option("--out", tr.out, "Checkpoint directory")->required();
  tr.overrides.attach(train_cmd);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate R@n,IoU=m on the test split");
  eval_cmd->add_option("--corpus", ev.corpus, "Corpus directory")->required();
  eval_cmd->add_option("--model", ev.model, "Checkpoint directory")->required();
  eval_cmd->add_option("--config", ev.config, "Experiment JSON (eval section)");
  eval_cmd->add_option("--out", ev.out, "Write the recall table as CSV (n,m,recall,num_queries)");
  ev.overrides.attach(eval_cmd);

  InspectArgs in;
  auto* inspect_cmd = app.add_subcommand(
      "inspect-prior",
      "Dump one sample's prior. <out>: i,j,flat_index,w_static,w_dga[,s,p] per moment "
      "(s,p only with --model). <out stem>_clips.csv: i,h,G,r_bar,mask,G_dga per clip.");
  inspect_cmd->add_option("--corpus", in.corpus, "Corpus directory")->required();
  inspect_cmd->add_option("--sample", in.sample, "Query id, e.g. v0003_q1")->required();
  inspect_cmd->add_option("--out", in.out, "Per-moment CSV path")->required();
  inspect_cmd->add_option("--model", in.model, "Checkpoint for s, p and reduced features");
  inspect_cmd->add_option("--config", in.config, "Experiment JSON (train section)");
  in.overrides.attach(inspect_cmd);

  CompareArgs cmp;
  auto* compare_cmd =
      app.add_subcommand("compare", "Train and evaluate ablations / sweeps with shared seeds");
  compare_cmd->add_option("--corpus", cmp.corpus, "Corpus directory")->required();
  compare_cmd->add_option("--config", cmp.config, "Experiment JSON");
  compare_cmd
      ->add_option("--ablations", cmp.ablations,
                   "Comma separated: top1, midpoint, gaussian_only, semantic_only, full, "
                   "full+dga")
      ->delimiter(',');
  compare_cmd->add_option("--sweep", cmp.sweeps,
                          "key=v1,v2,... over the base train config; keys k, sigma, tau, tr, "
                          "alpha (repeatable)");
  compare_cmd->add_option("--out", cmp.out, "Consolidated CSV (variant,n,m,recall,num_queries)")
      ->required();
  cmp.overrides.attach(compare_cmd);
  cmp.eval.attach(compare_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen, out);
    if (*train_cmd) return cmd_train(tr, out);
    if (*eval_cmd) return cmd_eval(ev, out);
    if (*inspect_cmd) return cmd_inspect_prior(in, out);
    if (*compare_cmd) return cmd_compare(cmp, out);
  } catch (const Error& e) {
    err << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  }
  return kUsage;
}

} // namespace d3g::cli
