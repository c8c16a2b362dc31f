#include "msnet/model.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace msnet {

std::string task_name(Task task) {
  return task == Task::kVocal ? "vocal" : "general";
}

Task task_from_name(const std::string& name) {
  if (name == "vocal") return Task::kVocal;
  if (name == "general") return Task::kGeneral;
  throw std::invalid_argument("unknown task: " + name + " (expected vocal|general)");
}

ModelConfig ModelConfig::vocal() { return ModelConfig{}; }

ModelConfig ModelConfig::general() {
  ModelConfig cfg;
  cfg.task = Task::kGeneral;
  cfg.num_bins = 400;
  cfg.pool_plan = {4, 4, 5};
  cfg.f_min = 20.0;
  return cfg;
}

ModelConfig ModelConfig::for_task(Task task) {
  return task == Task::kVocal ? vocal() : general();
}

void ModelConfig::validate() const {
  int f = num_bins;
  for (int k : pool_plan) {
    if (k <= 0 || f % k != 0) {
      throw std::invalid_argument("model config: freq dim not divisible by pool plan");
    }
    f /= k;
  }
  if (f != 5) {
    throw std::invalid_argument("model config: bottleneck must keep 5 frequency bins");
  }
  if (kernel_h != 2 * pad_h + 1 || kernel_w != 2 * pad_w + 1) {
    throw std::invalid_argument("model config: padding must preserve spatial dims");
  }
}

double ModelConfig::bin_to_hz(int bin) const {
  if (bin == kNoMelodyBin) return 0.0;
  return f_min * std::exp2(static_cast<double>(bin) / bins_per_octave);
}

std::vector<double> bins_to_hz(const std::vector<int>& bins,
                               const ModelConfig& cfg) {
  std::vector<double> out(bins.size());
  for (std::size_t i = 0; i < bins.size(); ++i) out[i] = cfg.bin_to_hz(bins[i]);
  return out;
}

namespace {

using nlohmann::json;

json model_config_to_json(const ModelConfig& m) {
  return json{{"task", task_name(m.task)},
              {"num_bins", m.num_bins},
              {"pool_plan", m.pool_plan},
              {"encoder_channels", m.encoder_channels},
              {"kernel", {m.kernel_h, m.kernel_w}},
              {"pad", {m.pad_h, m.pad_w}},
              {"f_min", m.f_min},
              {"bins_per_octave", m.bins_per_octave}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig m;
  m.task = task_from_name(j.at("task").get<std::string>());
  m.num_bins = j.at("num_bins").get<int>();
  j.at("pool_plan").get_to(m.pool_plan);
  j.at("encoder_channels").get_to(m.encoder_channels);
  m.kernel_h = j.at("kernel")[0].get<int>();
  m.kernel_w = j.at("kernel")[1].get<int>();
  m.pad_h = j.at("pad")[0].get<int>();
  m.pad_w = j.at("pad")[1].get<int>();
  m.f_min = j.at("f_min").get<double>();
  m.bins_per_octave = j.at("bins_per_octave").get<int>();
  return m;
}

json cfp_config_to_json(const CfpConfig& c) {
  return json{{"gamma", c.gamma},
              {"freq_cutoff", c.freq_cutoff},
              {"quefrency_cutoff", c.quefrency_cutoff},
              {"bins_per_octave", c.bins_per_octave},
              {"num_bins", c.num_bins},
              {"f_min", c.f_min},
              {"f_max", c.f_max}};
}

CfpConfig cfp_config_from_json(const json& j) {
  CfpConfig c;
  j.at("gamma").get_to(c.gamma);
  c.freq_cutoff = j.at("freq_cutoff").get<double>();
  c.quefrency_cutoff = j.at("quefrency_cutoff").get<double>();
  c.bins_per_octave = j.at("bins_per_octave").get<int>();
  c.num_bins = j.at("num_bins").get<int>();
  c.f_min = j.at("f_min").get<double>();
  c.f_max = j.at("f_max").get<double>();
  return c;
}

json stft_config_to_json(const StftConfig& s) {
  return json{{"sample_rate", s.sample_rate},
              {"window_size", s.window_size},
              {"hop_size", s.hop_size},
              {"window_function", s.window_function}};
}

StftConfig stft_config_from_json(const json& j) {
  StftConfig s;
  s.sample_rate = j.at("sample_rate").get<double>();
  s.window_size = j.at("window_size").get<int>();
  s.hop_size = j.at("hop_size").get<int>();
  s.window_function = j.at("window_function").get<std::string>();
  return s;
}

std::string sidecar_path(const std::string& path) { return path + ".json"; }

}  // namespace

void save_checkpoint(const std::string& path, MSNet<float>& model,
                     const Checkpoint& meta) {
  write_tensor_container(path, model.state_tensors(!meta.ablated));
  json j{{"format", "msnet-checkpoint"},
         {"version", 1},
         {"model", model_config_to_json(meta.model)},
         {"cfp", cfp_config_to_json(meta.cfp)},
         {"stft", stft_config_to_json(meta.stft)},
         {"ablated", meta.ablated}};
  if (meta.threshold.has_value()) j["threshold"] = *meta.threshold;
  std::ofstream os(sidecar_path(path));
  if (!os) throw std::runtime_error("cannot write sidecar: " + sidecar_path(path));
  os << j.dump(2) << "\n";
}

Checkpoint load_checkpoint_meta(const std::string& path) {
  std::ifstream is(sidecar_path(path));
  if (!is) throw std::runtime_error("missing checkpoint sidecar: " + sidecar_path(path));
  json j = json::parse(is);
  Checkpoint meta;
  meta.model = model_config_from_json(j.at("model"));
  meta.cfp = cfp_config_from_json(j.at("cfp"));
  meta.stft = stft_config_from_json(j.at("stft"));
  meta.ablated = j.value("ablated", false);
  if (j.contains("threshold")) meta.threshold = j["threshold"].get<double>();
  return meta;
}

MSNet<float> load_checkpoint(const std::string& path, Checkpoint* meta_out) {
  Checkpoint meta = load_checkpoint_meta(path);
  MSNet<float> model(meta.model);
  model.load_state(read_tensor_container(path));
  if (meta_out != nullptr) *meta_out = meta;
  return model;
}

}  // namespace msnet
