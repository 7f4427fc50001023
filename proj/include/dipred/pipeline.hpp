#pragma once

// File-based pipeline stages behind the `dipred` command line:
//
//   out/data/<split>/<video>/frame_XXXXX.ppm, timeline.csv
//   out/di/<split>/<video>/di_XXXX.ditf (+ .ppm preview), out/di/<split>/manifest.csv
//   out/models/*.ckpt, *_loss.csv
//   out/reports/metrics.csv, horizon.csv
//   out/logs/<command>.log

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dipred/checkpoint.hpp"
#include "dipred/classifier.hpp"
#include "dipred/evaluation.hpp"
#include "dipred/labels.hpp"
#include "dipred/numerics/ditf.hpp"
#include "dipred/prednet/model.hpp"
#include "dipred/prednet/train.hpp"
#include "dipred/rank_pooling.hpp"
#include "dipred/seed.hpp"
#include "dipred/video/pnm.hpp"
#include "dipred/video/synthetic.hpp"

namespace dipred::pipeline {

namespace fs = std::filesystem;

// Flat key = value configuration. Every key has a default; unknown keys are errors.
class RunConfig {
 public:
  RunConfig() : values_(defaults()) {}

  static std::map<std::string, std::string> defaults() {
    return {
        {"seed", "1"},
        {"data.train_videos", "20"},
        {"data.val_videos", "3"},
        {"data.test_videos", "6"},
        {"data.height", "32"},
        {"data.width", "40"},
        {"data.actions", "5"},
        {"data.min_duration", "50"},
        {"data.max_duration", "90"},
        {"data.min_gap", "0"},
        {"data.max_gap", "20"},
        {"data.max_lead_in", "10"},
        {"data.radius", "4"},
        {"data.speed", "0.5"},
        {"data.grow_rate", "0.12"},
        {"rankpool.window", "30"},
        {"rankpool.stride", "5"},
        {"rankpool.lambda", "1"},
        {"rankpool.solver", "dual"},
        {"rankpool.iterations", "20000"},
        {"rankpool.tolerance", "1e-9"},
        {"prednet.channels", "3,8,16,32"},
        {"prednet.kernel", "3"},
        {"prednet.error_mode", "split_log"},
        {"prednet.sigma", "0.03"},
        {"prednet.layer_weights", ""},
        {"prednet.lr", "0.001"},
        {"prednet.lr_late", "0.0001"},
        {"prednet.epochs", "10"},
        {"prednet.batch_size", "4"},
        {"prednet.sequence_length", "10"},
        {"prednet.subsequence_stride", "1"},
        {"prednet.context", "10"},
        {"prednet.finetune_epochs", "4"},
        {"prednet.finetune_horizon", "5"},
        {"prednet.stop_after", "0"},
        {"classifier.channels", "8,16,32"},
        {"classifier.epochs", "30"},
        {"classifier.lr", "0.01"},
        {"classifier.momentum", "0.9"},
        {"classifier.weight_decay", "0.0005"},
        {"classifier.batch_size", "16"},
        {"classifier.lr_step", "500"},
        {"classifier.input", "predicted"},
        {"classifier.target", "next"},
        {"eval.horizon", "5"},
    };
  }

  void set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error("unknown config key '" + key + "'");
    it->second = value;
  }

  // Parses `key = value` lines; '#' starts a comment.
  void load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot read config file " + path);
    std::string line;
    for (std::size_t no = 1; std::getline(is, line); ++no) {
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      const auto eq = line.find('=');
      if (trim(line).empty()) continue;
      if (eq == std::string::npos) throw Error(path + ":" + std::to_string(no) + ": expected key = value");
      const auto key = trim(line.substr(0, eq));
      try {
        set(key, trim(line.substr(eq + 1)));
      } catch (const Error& e) {
        throw Error(path + ":" + std::to_string(no) + ": " + e.what());
      }
    }
  }

  // `key=value` from the command line.
  void set_assignment(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error("unknown config key '" + key + "'");
    return it->second;
  }

  std::size_t size(const std::string& key) const {
    const auto& s = str(key);
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &pos);
    } catch (const std::exception&) {
      pos = std::string::npos;
    }
    if (pos != s.size() || v < 0) throw Error("config key " + key + " expects a non-negative integer, got '" + s + "'");
    return static_cast<std::size_t>(v);
  }

  std::uint64_t u64(const std::string& key) const {
    const auto& s = str(key);
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &pos);
    } catch (const std::exception&) {
      pos = std::string::npos;
    }
    if (pos != s.size()) throw Error("config key " + key + " expects an unsigned integer, got '" + s + "'");
    return v;
  }

  double real(const std::string& key) const {
    const auto& s = str(key);
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(s, &pos);
    } catch (const std::exception&) {
      pos = std::string::npos;
    }
    if (pos != s.size()) throw Error("config key " + key + " expects a number, got '" + s + "'");
    return v;
  }

  std::vector<std::size_t> sizes(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& tok : split(str(key))) {
      std::size_t pos = 0;
      try {
        out.push_back(std::stoul(tok, &pos));
      } catch (const std::exception&) {
        pos = std::string::npos;
      }
      if (pos != tok.size()) throw Error("config key " + key + " expects a comma-separated integer list");
    }
    return out;
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& tok : split(str(key))) out.push_back(std::stod(tok));
    return out;
  }

  std::string dump() const {
    std::string s;
    for (const auto& [k, v] : values_) s += k + " = " + v + "\n";
    return s;
  }

  std::uint64_t stage_seed(const std::string& stage) const { return fork_seed(u64("seed"), stage); }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(trim(tok));
    return out;
  }

  std::map<std::string, std::string> values_;
};

// Appends timestamped lines to out/logs/<command>.log and echoes them to stderr.
class Logger {
 public:
  Logger(const fs::path& out, const std::string& command, bool echo = true) : echo_(echo) {
    fs::create_directories(out / "logs");
    os_.open(out / "logs" / (command + ".log"), std::ios::app);
    if (!os_) throw Error("cannot open log file in " + (out / "logs").string());
  }

  void info(const std::string& msg) { write("INFO", msg); }
  void warn(const std::string& msg) { write("WARN", msg); }

 private:
  void write(const char* level, const std::string& msg) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    os_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << level << ' ' << msg << '\n';
    os_.flush();
    if (echo_) std::fprintf(stderr, "[%s] %s\n", level, msg.c_str());
  }

  std::ofstream os_;
  bool echo_;
};

struct Context {
  RunConfig cfg;
  fs::path out = "out";
  bool force = false;
  bool echo = true;
};

inline const std::vector<std::string>& splits() {
  static const std::vector<std::string> s{"train", "val", "test"};
  return s;
}

inline std::string video_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "video_%03zu", i);
  return buf;
}

inline void write_text_atomic(const fs::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open for writing: " + tmp);
    os << text;
    if (!os) throw Error("write failed: " + tmp);
  }
  fs::rename(tmp, path);
}

inline void log_config(const Context& ctx, Logger& log, const std::string& command) {
  log.info(command + " with resolved config:\n" + ctx.cfg.dump());
  fs::create_directories(ctx.out / "logs");
  write_text_atomic(ctx.out / "logs" / (command + ".config"), ctx.cfg.dump());
}

inline bool non_empty_dir(const fs::path& p) { return fs::is_directory(p) && !fs::is_empty(p); }

inline void prepare_output(const fs::path& dir, bool force, const std::string& what) {
  if (non_empty_dir(dir)) {
    if (!force) throw Error(what + " output " + dir.string() + " already exists and is not empty (use --force)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

// ---- gen ----

inline ScriptSampler sampler_from(const RunConfig& c) {
  ScriptSampler s;
  s.actions = c.size("data.actions");
  s.min_duration = c.size("data.min_duration");
  s.max_duration = c.size("data.max_duration");
  s.min_gap = c.size("data.min_gap");
  s.max_gap = c.size("data.max_gap");
  s.max_lead_in = c.size("data.max_lead_in");
  s.radius = c.real("data.radius");
  s.speed = c.real("data.speed");
  s.grow_rate = c.real("data.grow_rate");
  return s;
}

inline void cmd_gen(const Context& ctx) {
  Logger log(ctx.out, "gen", ctx.echo);
  log_config(ctx, log, "gen");
  const auto& c = ctx.cfg;
  const std::map<std::string, std::size_t> counts{{"train", c.size("data.train_videos")},
                                                  {"val", c.size("data.val_videos")},
                                                  {"test", c.size("data.test_videos")}};
  std::size_t total = 0;
  for (auto& [s, n] : counts) total += n;
  if (total == 0) throw Error("gen: zero videos requested");
  if (counts.at("train") == 0) throw Error("gen: at least one training video is required");
  const auto sampler = sampler_from(c);
  const std::size_t H = c.size("data.height"), W = c.size("data.width");
  const fs::path root = ctx.out / "data";
  prepare_output(root, ctx.force, "gen");
  const std::uint64_t seed = c.stage_seed("gen");
  for (const auto& split : splits()) {
    fs::create_directories(root / split);
    for (std::size_t i = 0; i < counts.at(split); ++i) {
      const auto script = sample_script(sampler, fork_seed(fork_seed(seed, split), i));
      const auto video = gen_synthetic(script, H, W, video_name(i));
      const fs::path dir = root / split / video.name;
      pnm::save_frames(video, dir.string());
      write_timeline_csv((dir / "timeline.csv").string(), video.timeline());
      log.info("generated " + split + "/" + video.name + " (" + std::to_string(video.length()) + " frames)");
    }
  }
}

// ---- di ----

inline RankPoolConfig rankpool_from(const RunConfig& c) {
  RankPoolConfig r;
  const auto& solver = c.str("rankpool.solver");
  if (solver == "dual")
    r.solver = RankPoolSolver::kDualCoordinate;
  else if (solver == "subgradient")
    r.solver = RankPoolSolver::kSubgradient;
  else
    throw Error("rankpool.solver must be dual or subgradient, got '" + solver + "'");
  r.lambda = c.real("rankpool.lambda");
  r.iterations = c.size("rankpool.iterations");
  r.tolerance = c.real("rankpool.tolerance");
  return r;
}

inline WindowSpec window_from(const RunConfig& c) {
  WindowSpec w{c.size("rankpool.window"), c.size("rankpool.stride")};
  w.validate();
  return w;
}

inline std::vector<fs::path> sorted_subdirs(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline std::string di_filename(std::size_t i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "di_%04zu.%s", i, ext);
  return buf;
}

inline void cmd_di(const Context& ctx) {
  Logger log(ctx.out, "di", ctx.echo);
  log_config(ctx, log, "di");
  const auto spec = window_from(ctx.cfg);
  const auto rp = rankpool_from(ctx.cfg);
  const fs::path data = ctx.out / "data";
  if (!fs::is_directory(data)) throw Error("di: missing input frames under " + data.string() + " (run gen first)");
  const fs::path root = ctx.out / "di";
  prepare_output(root, ctx.force, "di");
  for (const auto& split : splits()) {
    fs::create_directories(root / split);
    std::string manifest = "video,start_frame,di_path,label,next_label\n";
    for (const auto& vdir : sorted_subdirs(data / split)) {
      auto video = pnm::load_frames(vdir.string(), "frame_*.ppm");
      const auto tpath = vdir / "timeline.csv";
      if (fs::exists(tpath)) video.labels = read_timeline_csv(tpath.string()).frames();
      video.validate();
      if (video.length() < spec.window) {
        log.warn("skipping " + split + "/" + video.name + ": " + std::to_string(video.length()) +
                 " frames is shorter than the window of " + std::to_string(spec.window));
        continue;
      }
      auto dis = di_sequence(video, spec, rp);
      if (!video.labels.empty()) dis = next_action_labels(std::move(dis), video.timeline());
      const fs::path odir = root / split / video.name;
      fs::create_directories(odir);
      for (std::size_t i = 0; i < dis.size(); ++i) {
        ditf::save((odir / di_filename(i, "ditf")).string(), dis[i].values);
        pnm::write_ppm((odir / di_filename(i, "ppm")).string(), dis[i].normalized());
        manifest += video.name + "," + std::to_string(dis[i].start_frame) + "," + split + "/" + video.name + "/" +
                    di_filename(i, "ditf") + "," + std::to_string(dis[i].label.value_or(kGap)) + "," +
                    std::to_string(dis[i].next_label.value_or(kEnd)) + "\n";
      }
      log.info("pooled " + split + "/" + video.name + ": " + std::to_string(dis.size()) + " DIs");
    }
    write_text_atomic(root / split / "manifest.csv", manifest);
  }
}

// Loads a split's DIs (grouped per video, in manifest order) and label timelines.
inline std::vector<eval::VideoDIs> load_split(const fs::path& out, const std::string& split, std::size_t window) {
  const fs::path manifest = out / "di" / split / "manifest.csv";
  std::ifstream is(manifest);
  if (!is) throw Error("missing DI manifest " + manifest.string() + " (run di first)");
  std::string line;
  if (!std::getline(is, line) || line != "video,start_frame,di_path,label,next_label")
    throw Error("malformed DI manifest " + manifest.string());
  std::vector<eval::VideoDIs> videos;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string video, start, path, label, next;
    if (!std::getline(ss, video, ',') || !std::getline(ss, start, ',') || !std::getline(ss, path, ',') ||
        !std::getline(ss, label, ',') || !std::getline(ss, next))
      throw Error("malformed manifest row: " + line);
    if (videos.empty() || videos.back().name != video) {
      eval::VideoDIs v;
      v.name = video;
      const auto tpath = out / "data" / split / video / "timeline.csv";
      if (fs::exists(tpath)) v.timeline = read_timeline_csv(tpath.string());
      v.frames = v.timeline.size();
      videos.push_back(std::move(v));
    }
    DynamicImage di;
    di.values = ditf::load<float>((out / "di" / path).string());
    di.set_bounds();
    di.video = video;
    di.start_frame = std::stoul(start);
    di.window = window;
    di.label = std::stoi(label);
    di.next_label = std::stoi(next);
    videos.back().dis.push_back(std::move(di));
  }
  return videos;
}

// ---- prednet training ----

inline prednet::PredNetConfig prednet_from(const RunConfig& c) {
  prednet::PredNetConfig p;
  p.channels = c.sizes("prednet.channels");
  p.kernel = c.size("prednet.kernel");
  p.height = c.size("data.height");
  p.width = c.size("data.width");
  p.error_mode = prednet::parse_error_mode(c.str("prednet.error_mode"));
  p.sigma = c.real("prednet.sigma");
  p.layer_weights = c.reals("prednet.layer_weights");
  p.lr = c.real("prednet.lr");
  p.lr_late = c.real("prednet.lr_late");
  p.epochs = c.size("prednet.epochs");
  p.batch_size = c.size("prednet.batch_size");
  p.sequence_length = c.size("prednet.sequence_length");
  p.context = c.size("prednet.context");
  p.finetune_epochs = c.size("prednet.finetune_epochs");
  p.finetune_horizon = c.size("prednet.finetune_horizon");
  p.seed = c.stage_seed("prednet");
  p.validate();
  return p;
}

inline std::vector<prednet::Sequence<float>> training_sequences(const std::vector<eval::VideoDIs>& videos,
                                                                std::size_t length, std::size_t stride) {
  std::vector<prednet::Sequence<float>> out;
  for (const auto& v : videos) {
    std::vector<Tensor<float>> norm;
    for (const auto& d : v.dis) norm.push_back(d.normalized());
    for (auto& s : prednet::subsequences(norm, length, stride)) out.push_back(std::move(s));
  }
  return out;
}

inline void write_loss_csv(const fs::path& path, const std::vector<prednet::EpochStats>& history) {
  std::string s = "epoch,lr,loss\n";
  for (const auto& h : history)
    s += std::to_string(h.epoch) + "," + eval::format_value(h.lr) + "," + eval::format_value(h.loss) + "\n";
  write_text_atomic(path, s);
}

inline fs::path models_dir(const Context& ctx) { return ctx.out / "models"; }

// Shared driver for train and finetune: resumes from `ckpt` when present.
inline void run_prednet_stage(const Context& ctx, Logger& log, const std::string& stage, const fs::path& ckpt,
                              const fs::path& loss_csv, prednet::PredNetModel<float> model, bool finetune) {
  const auto& c = ctx.cfg;
  prednet::TrainProgress<float> progress;
  if (fs::exists(ckpt) && !ctx.force) {
    model = prednet::from_checkpoint(load_checkpoint<float>(ckpt.string()), model.cfg, &progress);
    log.info("resuming " + stage + " from " + ckpt.string() + " after epoch " + std::to_string(progress.history.size()));
  }
  const std::size_t length = finetune ? model.cfg.rollout_length() : model.cfg.sequence_length;
  const auto videos = load_split(ctx.out, "train", c.size("rankpool.window"));
  const auto seqs = training_sequences(videos, length, c.size("prednet.subsequence_stride"));
  if (seqs.empty()) throw Error(stage + ": no training sequences of length " + std::to_string(length));
  log.info(stage + ": " + std::to_string(seqs.size()) + " sequences of " + std::to_string(length) + " DIs");
  const prednet::EpochCallback<float> on_epoch = [&](const prednet::PredNetModel<float>& m,
                                                      const prednet::TrainProgress<float>& p) {
    save_checkpoint(ckpt.string(), prednet::to_checkpoint(m, &p));
    write_loss_csv(loss_csv, p.history);
    const auto& h = p.history.back();
    log.info(stage + " epoch " + std::to_string(h.epoch) + " lr " + eval::format_value(h.lr) + " loss " +
             eval::format_value(h.loss));
  };
  const std::size_t stop = c.size("prednet.stop_after");
  const std::size_t budget = stop ? stop : std::numeric_limits<std::size_t>::max();
  if (finetune)
    prednet::finetune_rollout(model, seqs, progress, on_epoch, budget);
  else
    prednet::train(model, seqs, progress, on_epoch, budget);
  if (!fs::exists(ckpt)) save_checkpoint(ckpt.string(), prednet::to_checkpoint(model, &progress));
  write_loss_csv(loss_csv, progress.history);
}

inline void cmd_train(const Context& ctx) {
  Logger log(ctx.out, "train", ctx.echo);
  log_config(ctx, log, "train");
  const auto cfg = prednet_from(ctx.cfg);
  fs::create_directories(models_dir(ctx));
  run_prednet_stage(ctx, log, "train", models_dir(ctx) / "prednet.ckpt", models_dir(ctx) / "prednet_loss.csv",
                    prednet::init_model<float>(cfg, fork_seed(cfg.seed, "init")), false);
}

inline bool training_complete(const Checkpoint<float>& c, std::size_t epochs) {
  return c.meta.count("epochs_done") && std::stoul(c.meta_at("epochs_done")) >= epochs;
}

inline prednet::PredNetModel<float> load_trained_prednet(const Context& ctx, bool prefer_finetuned) {
  const auto cfg = prednet_from(ctx.cfg);
  const auto base = models_dir(ctx) / "prednet.ckpt";
  const auto ft = models_dir(ctx) / "prednet_ft.ckpt";
  if (prefer_finetuned && fs::exists(ft)) return prednet::from_checkpoint(load_checkpoint<float>(ft.string()), cfg);
  if (!fs::exists(base)) throw Error("missing checkpoint " + base.string() + " (run train first)");
  return prednet::from_checkpoint(load_checkpoint<float>(base.string()), cfg);
}

inline void cmd_finetune(const Context& ctx) {
  Logger log(ctx.out, "finetune", ctx.echo);
  log_config(ctx, log, "finetune");
  const auto base = models_dir(ctx) / "prednet.ckpt";
  if (!fs::exists(base)) throw Error("missing checkpoint " + base.string() + " (run train first)");
  const auto ck = load_checkpoint<float>(base.string());
  if (!training_complete(ck, ctx.cfg.size("prednet.epochs")))
    throw Error("finetune: " + base.string() + " has not finished single-step training");
  run_prednet_stage(ctx, log, "finetune", models_dir(ctx) / "prednet_ft.ckpt", models_dir(ctx) / "finetune_loss.csv",
                    prednet::from_checkpoint(ck, prednet_from(ctx.cfg)), true);
}

// ---- classifier ----

inline classifier::ClassifierConfig classifier_from(const RunConfig& c) {
  classifier::ClassifierConfig k;
  k.channels = c.sizes("classifier.channels");
  k.epochs = c.size("classifier.epochs");
  k.lr = c.real("classifier.lr");
  k.momentum = c.real("classifier.momentum");
  k.weight_decay = c.real("classifier.weight_decay");
  k.batch_size = c.size("classifier.batch_size");
  k.lr_step = c.size("classifier.lr_step");
  k.seed = c.stage_seed("classifier");
  k.validate();
  return k;
}

// Labeled examples from a split. With predicted inputs, the example for DI j
// (j >= C) is the prediction from DIs j-C..j-1. END and GAP targets are skipped.
inline std::vector<classifier::LabeledExample> classifier_examples(const std::vector<eval::VideoDIs>& videos,
                                                                   const prednet::PredNetModel<float>* model,
                                                                   bool next_target) {
  std::vector<classifier::LabeledExample> out;
  for (const auto& v : videos) {
    const std::size_t first = model ? model->cfg.context : 0;
    for (std::size_t j = first; j < v.dis.size(); ++j) {
      const auto& di = v.dis[j];
      const ClassId target = next_target ? di.next_label.value_or(kEnd) : di.label.value_or(kGap);
      if (!is_action(target)) continue;
      Tensor<float> x = model ? prednet::predict_next<float>(*model, eval::detail::normalized(v.dis, j - first, first))
                              : di.normalized();
      out.push_back({std::move(x), target});
    }
  }
  return out;
}

inline void cmd_train_classifier(const Context& ctx) {
  Logger log(ctx.out, "train-classifier", ctx.echo);
  log_config(ctx, log, "train-classifier");
  const auto& c = ctx.cfg;
  const auto input = c.str("classifier.input"), target = c.str("classifier.target");
  if (input != "predicted" && input != "actual") throw Error("classifier.input must be predicted or actual");
  if (target != "next" && target != "current") throw Error("classifier.target must be next or current");
  const auto kcfg = classifier_from(c);
  const auto videos = load_split(ctx.out, "train", c.size("rankpool.window"));
  std::optional<prednet::PredNetModel<float>> model;
  if (input == "predicted") model = load_trained_prednet(ctx, true);
  const auto examples = classifier_examples(videos, model ? &*model : nullptr, target == "next");
  log.info("classifier: " + std::to_string(examples.size()) + " examples (input " + input + ", target " + target + ")");
  auto res = classifier::train_classifier<float>(examples, kcfg);
  fs::create_directories(models_dir(ctx));
  save_checkpoint((models_dir(ctx) / "classifier.ckpt").string(), classifier::to_checkpoint(res.model));
  std::string csv = "epoch,lr,loss\n";
  for (const auto& h : res.history)
    csv += std::to_string(h.epoch) + "," + eval::format_value(h.lr) + "," + eval::format_value(h.loss) + "\n";
  write_text_atomic(models_dir(ctx) / "classifier_loss.csv", csv);
  log.info("classifier training accuracy " + eval::format_value(classifier::accuracy(res.model, examples)));
}

// ---- eval ----

inline eval::MetricsReport cmd_eval(const Context& ctx) {
  Logger log(ctx.out, "eval", ctx.echo);
  log_config(ctx, log, "eval");
  const auto& c = ctx.cfg;
  const auto model = load_trained_prednet(ctx, true);
  const auto videos = load_split(ctx.out, "test", c.size("rankpool.window"));
  const std::size_t K = c.size("eval.horizon");
  if (K == 0) throw Error("eval.horizon must be at least 1");
  eval::MetricsReport report;
  eval::evaluate_prediction(model, videos, report);
  eval::rollout_mse(model, videos, K, report);
  const auto clf_path = models_dir(ctx) / "classifier.ckpt";
  if (fs::exists(clf_path)) {
    const auto clf = classifier::from_checkpoint(load_checkpoint<float>(clf_path.string()));
    eval::horizon_accuracy(model, clf, videos, K, report);
    eval::temporal_distance(model, clf, videos, report);
  } else {
    log.warn("no classifier checkpoint; writing an MSE-only report");
  }
  fs::create_directories(ctx.out / "reports");
  eval::write_report(report, (ctx.out / "reports" / "metrics.csv").string());
  if (report.classifier_present) eval::write_horizon_csv(report, (ctx.out / "reports" / "horizon.csv").string());
  log.info("model_mse " + eval::format_value(report.model_mse) + " prev_mse " + eval::format_value(report.prev_mse) +
           " over " + std::to_string(report.mse_count) + " positions");
  return report;
}

inline const std::map<std::string, std::function<void(const Context&)>>& commands() {
  static const std::map<std::string, std::function<void(const Context&)>> m{
      {"gen", cmd_gen},
      {"di", cmd_di},
      {"train", cmd_train},
      {"finetune", cmd_finetune},
      {"train-classifier", cmd_train_classifier},
      {"eval", [](const Context& c) { cmd_eval(c); }},
  };
  return m;
}

}  // namespace dipred::pipeline
