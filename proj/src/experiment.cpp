#include "ntmm/experiment.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ntmm/serialize.hpp"

namespace ntmm {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& section, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw std::invalid_argument("config: section '" + section + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key))
      throw std::invalid_argument("config: unknown key '" + key + "' in section '" + section + "'");
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ModelDims ExperimentConfig::model_dims() const {
  ModelDims dims;
  dims.d_v = generator.d_v;
  dims.d_a = generator.d_a;
  dims.K = generator.K;
  dims.d = model.d;
  dims.enc_hidden = model.enc_hidden;
  dims.clf_hidden = model.clf_hidden;
  dims.ae_input = train.batch_size;
  dims.ae_hidden = model.ae_hidden;
  return dims;
}

void ExperimentConfig::validate() const {
  generator.validate();
  noise.validate();
  train.validate();
  model_dims().validate();
  if (label.empty()) throw std::invalid_argument("config: label must be non-empty");
}

namespace {
ExperimentConfig parse_experiment_config_impl(const std::string& json_text);
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  try {
    return parse_experiment_config_impl(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
}

namespace {
ExperimentConfig parse_experiment_config_impl(const std::string& json_text) {
  json j = json::parse(json_text);
  check_keys(j, "(root)",
             {"format_version", "label", "generator", "noise", "train", "model", "dataset_path", "out_dir"});
  ExperimentConfig cfg;
  if (j.contains("format_version") && j.at("format_version").get<int>() != kConfigFormatVersion) {
    throw std::invalid_argument("config: unsupported format_version " +
                                std::to_string(j.at("format_version").get<int>()));
  }
  maybe(j, "label", cfg.label);
  maybe(j, "dataset_path", cfg.dataset_path);
  maybe(j, "out_dir", cfg.out_dir);

  if (j.contains("generator")) {
    const json& g = j.at("generator");
    check_keys(g, "generator",
               {"K", "per_class", "d_v", "d_a", "class_separation", "modality_correlation", "seed"});
    maybe(g, "K", cfg.generator.K);
    maybe(g, "per_class", cfg.generator.per_class);
    maybe(g, "d_v", cfg.generator.d_v);
    maybe(g, "d_a", cfg.generator.d_a);
    maybe(g, "class_separation", cfg.generator.class_separation);
    maybe(g, "modality_correlation", cfg.generator.modality_correlation);
    maybe(g, "seed", cfg.generator.seed);
  }
  if (j.contains("noise")) {
    const json& n = j.at("noise");
    check_keys(n, "noise", {"label_mode", "label_rate", "correspondence_rate", "seed", "allow_overlap"});
    if (n.contains("label_mode")) cfg.noise.label_mode = label_noise_mode_from_string(n.at("label_mode").get<std::string>());
    maybe(n, "label_rate", cfg.noise.label_rate);
    maybe(n, "correspondence_rate", cfg.noise.correspondence_rate);
    maybe(n, "seed", cfg.noise.seed);
    maybe(n, "allow_overlap", cfg.noise.allow_overlap);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, "train",
               {"epochs", "warmup_epochs", "batch_size", "lr", "lr_contrastive", "tau1", "tau2", "eps_v", "eps_a",
                "similar_cap", "sinkhorn_iterations", "sinkhorn_reg", "sinkhorn_mode", "knn_k", "gamma_initial",
                "gamma_final", "gamma_switch_epoch", "seed", "variant", "correction"});
    maybe(t, "epochs", cfg.train.epochs);
    maybe(t, "warmup_epochs", cfg.train.warmup_epochs);
    maybe(t, "batch_size", cfg.train.batch_size);
    maybe(t, "lr", cfg.train.lr);
    maybe(t, "lr_contrastive", cfg.train.lr_contrastive);
    maybe(t, "tau1", cfg.train.tau1);
    maybe(t, "tau2", cfg.train.tau2);
    maybe(t, "eps_v", cfg.train.eps_v);
    maybe(t, "eps_a", cfg.train.eps_a);
    maybe(t, "similar_cap", cfg.train.similar_cap);
    maybe(t, "sinkhorn_iterations", cfg.train.sinkhorn_iterations);
    maybe(t, "sinkhorn_reg", cfg.train.sinkhorn_reg);
    if (t.contains("sinkhorn_mode")) {
      const std::string mode = t.at("sinkhorn_mode").get<std::string>();
      if (mode == "soft")
        cfg.train.sinkhorn_mode = SinkhornMode::kSoft;
      else if (mode == "hard")
        cfg.train.sinkhorn_mode = SinkhornMode::kHard;
      else
        throw std::invalid_argument("config: sinkhorn_mode must be 'soft' or 'hard'");
    }
    maybe(t, "knn_k", cfg.train.knn_k);
    maybe(t, "gamma_initial", cfg.train.gamma.initial);
    maybe(t, "gamma_final", cfg.train.gamma.final_value);
    maybe(t, "gamma_switch_epoch", cfg.train.gamma.switch_epoch);
    maybe(t, "seed", cfg.train.seed);
    if (t.contains("variant")) cfg.train.variant = variant_from_string(t.at("variant").get<std::string>());
    maybe(t, "correction", cfg.train.correction);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, "model", {"d", "enc_hidden", "clf_hidden", "ae_hidden", "init_seed"});
    maybe(m, "d", cfg.model.d);
    maybe(m, "enc_hidden", cfg.model.enc_hidden);
    maybe(m, "clf_hidden", cfg.model.clf_hidden);
    maybe(m, "ae_hidden", cfg.model.ae_hidden);
    maybe(m, "init_seed", cfg.model.init_seed);
  }
  cfg.validate();
  return cfg;
}
}  // namespace

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("config: cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_experiment_config(ss.str());
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["format_version"] = kConfigFormatVersion;
  j["label"] = cfg.label;
  j["dataset_path"] = cfg.dataset_path;
  j["out_dir"] = cfg.out_dir;
  j["generator"] = {{"K", cfg.generator.K},
                    {"per_class", cfg.generator.per_class},
                    {"d_v", cfg.generator.d_v},
                    {"d_a", cfg.generator.d_a},
                    {"class_separation", cfg.generator.class_separation},
                    {"modality_correlation", cfg.generator.modality_correlation},
                    {"seed", cfg.generator.seed}};
  j["noise"] = {{"label_mode", to_string(cfg.noise.label_mode)},
                {"label_rate", cfg.noise.label_rate},
                {"correspondence_rate", cfg.noise.correspondence_rate},
                {"seed", cfg.noise.seed},
                {"allow_overlap", cfg.noise.allow_overlap}};
  j["train"] = {{"epochs", cfg.train.epochs},
                {"warmup_epochs", cfg.train.warmup_epochs},
                {"batch_size", cfg.train.batch_size},
                {"lr", cfg.train.lr},
                {"lr_contrastive", cfg.train.lr_contrastive},
                {"tau1", cfg.train.tau1},
                {"tau2", cfg.train.tau2},
                {"eps_v", cfg.train.eps_v},
                {"eps_a", cfg.train.eps_a},
                {"similar_cap", cfg.train.similar_cap},
                {"sinkhorn_iterations", cfg.train.sinkhorn_iterations},
                {"sinkhorn_reg", cfg.train.sinkhorn_reg},
                {"sinkhorn_mode", cfg.train.sinkhorn_mode == SinkhornMode::kSoft ? "soft" : "hard"},
                {"knn_k", cfg.train.knn_k},
                {"gamma_initial", cfg.train.gamma.initial},
                {"gamma_final", cfg.train.gamma.final_value},
                {"gamma_switch_epoch", cfg.train.gamma.switch_epoch},
                {"seed", cfg.train.seed},
                {"variant", to_string(cfg.train.variant)},
                {"correction", cfg.train.correction}};
  j["model"] = {{"d", cfg.model.d},
                {"enc_hidden", cfg.model.enc_hidden},
                {"clf_hidden", cfg.model.clf_hidden},
                {"ae_hidden", cfg.model.ae_hidden},
                {"init_seed", cfg.model.init_seed}};
  return j.dump(2) + "\n";
}

void save_experiment_config(const ExperimentConfig& config, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("config: cannot write '" + path.string() + "'");
  f << experiment_config_to_json(config);
}

std::string config_hash(const ExperimentConfig& config) {
  const std::uint64_t h = fnv1a64_str(experiment_config_to_json(config));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace ntmm
