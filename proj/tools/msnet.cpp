// Command-line front end: feature extraction, training, melody extraction,
// evaluation, and synthetic-dataset generation.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "msnet/cfp.hpp"
#include "msnet/dataset.hpp"
#include "msnet/eval.hpp"
#include "msnet/model.hpp"
#include "msnet/train.hpp"
#include "msnet/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int default_jobs() {
  if (const char* env = std::getenv("MSNET_JOBS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

// Index-sharded parallel loop; output slots are preallocated per index, so
// the result is independent of the worker count.
template <class Fn>
void parallel_for(std::size_t count, int jobs, Fn fn) {
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(count)));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  std::exception_ptr error;
  std::mutex error_mu;
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

void atomic_write(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp);
    os << contents;
  }
  fs::rename(tmp, path);
}

std::string resolve_path(const std::string& base_dir, const std::string& p) {
  if (fs::path(p).is_absolute() || fs::exists(p)) return p;
  return (fs::path(base_dir) / p).string();
}

struct RunConfig {
  std::string task = "vocal";
  msnet::TrainConfig train;
  int jobs = default_jobs();

  json to_json() const {
    return json{{"task", task},
                {"jobs", jobs},
                {"train",
                 {{"batch_size", train.batch_size},
                  {"learning_rate", train.learning_rate},
                  {"max_epochs", train.max_epochs},
                  {"patience", train.patience},
                  {"seed", train.seed},
                  {"grad_clip_norm", train.grad_clip_norm}}}};
  }
};

// defaults <- config file <- flags. Flag values are applied by CLI11 after
// this runs, so the file only overwrites fields the user did not pin.
void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  const json j = json::parse(is);
  if (j.contains("task")) cfg.task = j["task"].get<std::string>();
  if (j.contains("jobs")) cfg.jobs = j["jobs"].get<int>();
  if (j.contains("train")) {
    const json& t = j["train"];
    if (t.contains("batch_size")) cfg.train.batch_size = t["batch_size"].get<int>();
    if (t.contains("learning_rate")) cfg.train.learning_rate = t["learning_rate"].get<double>();
    if (t.contains("max_epochs")) cfg.train.max_epochs = t["max_epochs"].get<int>();
    if (t.contains("patience")) cfg.train.patience = t["patience"].get<int>();
    if (t.contains("seed")) cfg.train.seed = t["seed"].get<unsigned>();
    if (t.contains("grad_clip_norm")) cfg.train.grad_clip_norm = t["grad_clip_norm"].get<double>();
  }
}

msnet::CfpFeature features_for(const std::string& audio_path,
                               const msnet::CfpConfig& cfp,
                               const msnet::StftConfig& stft) {
  const std::vector<double> audio = msnet::load_audio(audio_path, stft.sample_rate);
  return msnet::compute_cfp(audio, cfp, stft);
}

struct LoadedClip {
  std::string id;
  msnet::EvalClip eval;
  std::vector<msnet::Segment> segments;
  bool ok = false;
  std::string error;
};

LoadedClip load_clip(const msnet::ManifestEntry& entry,
                     const std::string& base_dir, const msnet::CfpConfig& cfp,
                     const msnet::StftConfig& stft,
                     const msnet::ModelConfig& model_cfg) {
  LoadedClip clip;
  clip.id = fs::path(entry.audio_path).stem().string();
  try {
    const msnet::CfpFeature feature =
        features_for(resolve_path(base_dir, entry.audio_path), cfp, stft);
    std::vector<double> ann_times, ann_f0;
    msnet::load_annotation(resolve_path(base_dir, entry.annotation_path),
                           ann_times, ann_f0);
    const msnet::TargetMatrix target =
        msnet::annotation_to_target(ann_times, ann_f0, feature.frame_times, model_cfg);
    clip.segments = msnet::make_segments(feature, target, clip.id);
    clip.eval.id = clip.id;
    clip.eval.segments = clip.segments;
    clip.eval.ref_times = ann_times;
    clip.eval.ref_f0 = ann_f0;
    clip.eval.hop_seconds = stft.hop_size / stft.sample_rate;
    clip.ok = true;
  } catch (const std::exception& e) {
    clip.error = e.what();
  }
  return clip;
}

std::vector<LoadedClip> load_split(const std::string& manifest_path,
                                   const std::string& split,
                                   const msnet::CfpConfig& cfp,
                                   const msnet::StftConfig& stft,
                                   const msnet::ModelConfig& model_cfg, int jobs) {
  const auto entries = msnet::read_manifest(manifest_path);
  const std::string base_dir = fs::path(manifest_path).parent_path().string();
  std::vector<const msnet::ManifestEntry*> wanted;
  for (const auto& e : entries) {
    if (e.split == split) wanted.push_back(&e);
  }
  std::vector<LoadedClip> clips(wanted.size());
  parallel_for(wanted.size(), jobs, [&](std::size_t i) {
    clips[i] = load_clip(*wanted[i], base_dir, cfp, stft, model_cfg);
  });
  return clips;
}

int cmd_features(const std::string& audio, const std::string& task,
                 const std::string& out) {
  const msnet::CfpConfig cfp = task == "general" ? msnet::CfpConfig::general()
                                                 : msnet::CfpConfig::vocal();
  const msnet::StftConfig stft;
  const msnet::CfpFeature feature = features_for(audio, cfp, stft);
  const std::string tmp = out + ".tmp";
  msnet::write_cfp_cache(tmp, feature, cfp, stft);
  fs::rename(tmp, out);
  RunConfig rc;
  rc.task = task;
  atomic_write(out + ".run.json", rc.to_json().dump(2) + "\n");
  return 0;
}

int cmd_synth(const std::string& out_dir, int clips, double duration,
              unsigned seed, const std::string& task) {
  const msnet::CfpConfig cfp = task == "general" ? msnet::CfpConfig::general()
                                                 : msnet::CfpConfig::vocal();
  const std::string manifest =
      msnet::write_synth_dataset(out_dir, clips, duration, seed, cfp);
  std::cerr << "wrote " << manifest << "\n";
  return 0;
}

int cmd_train(const std::string& manifest, const RunConfig& rc,
              const std::string& out_dir, bool ablated) {
  const msnet::ModelConfig model_cfg =
      msnet::ModelConfig::for_task(msnet::task_from_name(rc.task));
  const msnet::CfpConfig cfp = rc.task == "general"
                                   ? msnet::CfpConfig::general()
                                   : msnet::CfpConfig::vocal();
  const msnet::StftConfig stft;

  auto train_clips = load_split(manifest, "train", cfp, stft, model_cfg, rc.jobs);
  auto val_clips = load_split(manifest, "val", cfp, stft, model_cfg, rc.jobs);
  for (const auto& c : train_clips) {
    if (!c.ok) throw std::runtime_error("clip " + c.id + ": " + c.error);
  }
  for (const auto& c : val_clips) {
    if (!c.ok) throw std::runtime_error("clip " + c.id + ": " + c.error);
  }
  if (train_clips.empty()) throw std::runtime_error("train split empty");
  if (val_clips.empty()) throw std::runtime_error("validation split empty");

  std::vector<msnet::Segment> train_segments;
  for (auto& c : train_clips) {
    for (auto& seg : c.segments) train_segments.push_back(std::move(seg));
  }
  std::vector<msnet::EvalClip> val;
  for (auto& c : val_clips) val.push_back(std::move(c.eval));

  fs::create_directories(out_dir);
  msnet::MSNet<float> model(model_cfg, rc.train.seed);
  const msnet::TrainReport report =
      msnet::train(model, std::move(train_segments), val, rc.train, ablated, &std::cerr);

  msnet::Checkpoint meta;
  meta.model = model_cfg;
  meta.cfp = cfp;
  meta.stft = stft;
  meta.ablated = ablated;
  if (ablated) meta.threshold = msnet::grid_search_threshold(model, val).first;
  const std::string ckpt = (fs::path(out_dir) / "model.msnw").string();
  msnet::save_checkpoint(ckpt + ".tmp", model, meta);
  fs::rename(ckpt + ".tmp", ckpt);
  fs::rename(ckpt + ".tmp.json", ckpt + ".json");
  atomic_write((fs::path(out_dir) / "train_report.txt").string(),
               msnet::format_train_report(report));
  atomic_write((fs::path(out_dir) / "run_config.json").string(),
               rc.to_json().dump(2) + "\n");
  return 0;
}

int cmd_extract(const std::string& ckpt_path, const std::string& audio,
                const std::string& out) {
  msnet::Checkpoint meta;
  msnet::MSNet<float> model = msnet::load_checkpoint(ckpt_path, &meta);
  const msnet::CfpFeature feature = features_for(audio, meta.cfp, meta.stft);
  const double hop = meta.stft.hop_size / meta.stft.sample_rate;
  msnet::MelodyContour contour;
  if (meta.ablated) {
    if (!meta.threshold.has_value()) {
      throw std::runtime_error("ablated checkpoint has no stored threshold");
    }
    contour = msnet::extract_melody_ablated(model, feature, hop, *meta.threshold);
  } else {
    contour = msnet::extract_melody(model, feature, hop);
  }
  std::string csv;
  char buf[64];
  for (std::size_t i = 0; i < contour.times.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.3f\n", contour.times[i], contour.f0[i]);
    csv += buf;
  }
  atomic_write(out, csv);
  RunConfig rc;
  rc.task = msnet::task_name(meta.model.task);
  atomic_write(out + ".run.json", rc.to_json().dump(2) + "\n");
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& manifest,
                 const std::string& split, bool ablated,
                 std::optional<double> threshold, bool grid_search, int jobs) {
  msnet::Checkpoint meta;
  msnet::MSNet<float> model = msnet::load_checkpoint(ckpt_path, &meta);

  const auto clips = load_split(manifest, split, meta.cfp, meta.stft, meta.model, jobs);
  if (clips.empty()) throw std::runtime_error("split '" + split + "' is empty");

  double theta = threshold.value_or(0.5);
  if (ablated && grid_search) {
    const auto val = load_split(manifest, "val", meta.cfp, meta.stft, meta.model, jobs);
    std::vector<msnet::EvalClip> val_clips;
    for (const auto& c : val) {
      if (c.ok) val_clips.push_back(c.eval);
    }
    if (val_clips.empty()) throw std::runtime_error("val split empty for grid search");
    theta = msnet::grid_search_threshold(model, val_clips).first;
    std::cerr << "grid-search threshold: " << theta << "\n";
  }

  std::vector<std::string> ids;
  std::vector<msnet::Scores> scores;
  for (const auto& clip : clips) {
    if (!clip.ok) {
      std::cerr << "clip " << clip.id << " skipped: " << clip.error << "\n";
      ids.push_back(clip.id + " (skipped)");
      scores.push_back(msnet::Scores{});
      continue;
    }
    if (ablated) {
      scores.push_back(msnet::score_ablated(
          msnet::compute_ablated_salience(model, clip.eval), theta));
    } else {
      msnet::MSNet<float>& m = model;
      scores.push_back(msnet::score_clip(m, clip.eval));
    }
    ids.push_back(clip.id);
  }
  std::cout << msnet::format_score_table(ids, scores);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CFP + pooling-index encoder/decoder melody extraction toolkit"};
  app.require_subcommand(1);

  RunConfig rc;
  std::string config_path;

  // features
  auto* features = app.add_subcommand("features", "Compute a CFP feature cache for one audio file");
  std::string f_audio, f_out, f_task = "vocal";
  features->add_option("audio", f_audio, "Input audio (wav)")->required();
  features->add_option("--task", f_task, "vocal|general")->check(CLI::IsMember({"vocal", "general"}));
  features->add_option("--out", f_out, "Output cache path")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with a manifest");
  std::string s_out, s_task = "vocal";
  int s_clips = 60;
  double s_duration = 8.0;
  unsigned s_seed = 1;
  synth->add_option("--out", s_out, "Output directory")->required();
  synth->add_option("--clips", s_clips, "Number of clips")->check(CLI::PositiveNumber);
  synth->add_option("--duration", s_duration, "Clip duration in seconds");
  synth->add_option("--seed", s_seed, "Random seed");
  synth->add_option("--task", s_task, "vocal|general")->check(CLI::IsMember({"vocal", "general"}));

  // train
  auto* train = app.add_subcommand("train", "Train a model from a manifest");
  std::string t_manifest, t_out;
  bool t_ablated = false;
  train->add_option("--manifest", t_manifest, "Dataset manifest")->required();
  train->add_option("--out", t_out, "Output directory")->required();
  train->add_option("--config", config_path, "JSON config file");
  train->add_option("--task", rc.task, "vocal|general")->check(CLI::IsMember({"vocal", "general"}));
  train->add_option("--batch-size", rc.train.batch_size, "Mini-batch size");
  train->add_option("--lr", rc.train.learning_rate, "Adam learning rate");
  train->add_option("--max-epochs", rc.train.max_epochs, "Epoch cap");
  train->add_option("--patience", rc.train.patience, "Early-stop patience");
  train->add_option("--seed", rc.train.seed, "Random seed");
  train->add_option("--jobs", rc.jobs, "Worker threads for clip preprocessing");
  train->add_flag("--ablated", t_ablated, "Train the no-detector variant (sigmoid + threshold)");

  // extract
  auto* extract = app.add_subcommand("extract", "Extract a melody contour to CSV");
  std::string e_model, e_audio, e_out;
  extract->add_option("--model", e_model, "Checkpoint path")->required();
  extract->add_option("audio", e_audio, "Input audio (wav)")->required();
  extract->add_option("--out", e_out, "Output CSV")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score a model against a manifest split");
  std::string v_model, v_manifest, v_split = "test";
  bool v_ablated = false, v_grid = false;
  double v_threshold = -1.0;
  evaluate->add_option("--model", v_model, "Checkpoint path")->required();
  evaluate->add_option("--manifest", v_manifest, "Dataset manifest")->required();
  evaluate->add_option("--split", v_split, "Manifest split to score");
  evaluate->add_flag("--ablated", v_ablated, "Score with thresholded salience instead of the detector");
  evaluate->add_option("--threshold", v_threshold, "Voicing threshold for --ablated");
  evaluate->add_flag("--grid-search", v_grid, "Pick the threshold on the val split first");
  evaluate->add_option("--jobs", rc.jobs, "Worker threads for clip preprocessing");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*features) return cmd_features(f_audio, f_task, f_out);
    if (*synth) return cmd_synth(s_out, s_clips, s_duration, s_seed, s_task);
    if (*train) {
      // precedence: defaults < config file < flags
      if (!config_path.empty()) {
        RunConfig file_rc = rc;
        apply_config_file(file_rc, config_path);
        for (const std::string flag : {"--task", "--batch-size", "--lr",
                                       "--max-epochs", "--patience", "--seed",
                                       "--jobs"}) {
          if (train->count(flag) > 0) continue;  // flag wins, keep parsed value
          // otherwise adopt the file's value
          if (flag == "--task") rc.task = file_rc.task;
          else if (flag == "--batch-size") rc.train.batch_size = file_rc.train.batch_size;
          else if (flag == "--lr") rc.train.learning_rate = file_rc.train.learning_rate;
          else if (flag == "--max-epochs") rc.train.max_epochs = file_rc.train.max_epochs;
          else if (flag == "--patience") rc.train.patience = file_rc.train.patience;
          else if (flag == "--seed") rc.train.seed = file_rc.train.seed;
          else if (flag == "--jobs") rc.jobs = file_rc.jobs;
        }
      }
      return cmd_train(t_manifest, rc, t_out, t_ablated);
    }
    if (*extract) return cmd_extract(e_model, e_audio, e_out);
    if (*evaluate) {
      if (v_ablated && !v_grid && v_threshold < 0.0) {
        std::cerr << "error: --ablated requires --threshold or --grid-search\n";
        return 2;
      }
      std::optional<double> threshold;
      if (v_threshold >= 0.0) threshold = v_threshold;
      return cmd_evaluate(v_model, v_manifest, v_split, v_ablated, threshold,
                          v_grid, rc.jobs);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
