#pragma once

// JSON reading and writing for cohort specs and training configs. Readers
// reject unknown keys and wrong types with the offending field path.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rvmaudit/synth.hpp"
#include "rvmaudit/train.hpp"

namespace rvm {

using Json = nlohmann::json;

/// Invalid user configuration (malformed JSON, bad field). CLI exit code 2.
class ConfigError : public Error {
public:
  using Error::Error;
};

inline Json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(origin + ": malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

inline Json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_json_text(text, path.string());
}

inline void write_json_file(const Json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

/// Typed field access on one JSON object, tracking which keys were used.
class JsonReader {
public:
  JsonReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "expected an object");
  }

  [[nodiscard]] bool has(const std::string& key) const { return j_.contains(key); }

  [[nodiscard]] std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const Json* get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void read(const std::string& key, double& out) {
    if (const Json* v = get(key)) {
      if (!v->is_number()) throw ConfigError(field(key) + ": expected a number");
      out = v->get<double>();
    }
  }

  void read(const std::string& key, int& out) {
    if (const Json* v = get(key)) {
      if (!v->is_number_integer()) throw ConfigError(field(key) + ": expected an integer");
      const auto x = v->get<std::int64_t>();
      if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(field(key) + ": out of range");
      out = static_cast<int>(x);
    }
  }

  void read(const std::string& key, std::uint64_t& out) {
    if (const Json* v = get(key)) {
      if (!v->is_number_unsigned())
        throw ConfigError(field(key) + ": expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void read(const std::string& key, bool& out) {
    if (const Json* v = get(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }

  void read(const std::string& key, std::string& out) {
    if (const Json* v = get(key)) {
      if (!v->is_string()) throw ConfigError(field(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }

  void read(const std::string& key, std::vector<int>& out) {
    if (const Json* v = get(key)) {
      if (!v->is_array()) throw ConfigError(field(key) + ": expected an array of integers");
      std::vector<int> r;
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number_integer())
          throw ConfigError(field(key) + "[" + std::to_string(i) + "]: expected an integer");
        r.push_back((*v)[i].get<int>());
      }
      out = std::move(r);
    }
  }

  void read(const std::string& key, std::vector<std::string>& out) {
    if (const Json* v = get(key)) {
      if (!v->is_array()) throw ConfigError(field(key) + ": expected an array of strings");
      std::vector<std::string> r;
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_string())
          throw ConfigError(field(key) + "[" + std::to_string(i) + "]: expected a string");
        r.push_back((*v)[i].get<std::string>());
      }
      out = std::move(r);
    }
  }

  /// Marks a key as handled elsewhere.
  void allow(const std::string& key) { seen_.insert(key); }

  /// Rejects keys that were never looked up.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()) + ": unknown field");
  }

private:
  [[nodiscard]] std::string where() const { return path_.empty() ? "" : path_ + ": "; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// ---- CohortSpec ----

inline CohortSpec cohort_spec_from_json(const Json& j, CohortSpec spec = {}) {
  JsonReader r(j, "");
  r.read("groups", spec.groups);
  if (const Json* v = r.get("n_subjects")) {
    if (v->is_number_integer()) {
      spec.n_subjects.assign(spec.groups.size(), v->get<int>());
    } else {
      const Json wrapped = {{"n_subjects", *v}};
      JsonReader tmp(wrapped, "");
      tmp.read("n_subjects", spec.n_subjects);
    }
  }
  if (const Json* v = r.get("images_per_subject")) {
    if (v->is_number_integer()) {
      spec.images_min = spec.images_max = v->get<int>();
    } else if (v->is_array() && v->size() == 2 && (*v)[0].is_number_integer() &&
               (*v)[1].is_number_integer()) {
      spec.images_min = (*v)[0].get<int>();
      spec.images_max = (*v)[1].get<int>();
    } else {
      throw ConfigError("images_per_subject: expected an integer or [min, max]");
    }
  }
  if (const Json* v = r.get("image_size")) {
    if (!(v->is_array() && v->size() == 2 && (*v)[0].is_number_integer() && (*v)[1].is_number_integer()))
      throw ConfigError("image_size: expected [width, height]");
    spec.width = (*v)[0].get<int>();
    spec.height = (*v)[1].get<int>();
  }
  r.read("tint_offset", spec.tint_offset);
  r.read("caliber_delta", spec.caliber_delta);
  r.read("confidence_bias", spec.confidence_bias);
  r.read("branch_delta", spec.branch_delta);
  r.read("noise", spec.noise);
  r.read("expected_branches", spec.expected_branches);
  r.read("max_depth", spec.max_depth);
  r.read("root_width", spec.root_width);
  r.read("taper", spec.taper);
  r.read("quality_spread", spec.quality_spread);
  r.read("piv_sd", spec.piv_sd);
  r.read("seed", spec.seed);
  r.finish();
  try {
    spec.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

inline Json to_json(const CohortSpec& s) {
  return Json{{"groups", s.groups},
              {"n_subjects", s.n_subjects},
              {"images_per_subject", {s.images_min, s.images_max}},
              {"image_size", {s.width, s.height}},
              {"tint_offset", s.tint_offset},
              {"caliber_delta", s.caliber_delta},
              {"confidence_bias", s.confidence_bias},
              {"branch_delta", s.branch_delta},
              {"noise", s.noise},
              {"expected_branches", s.expected_branches},
              {"max_depth", s.max_depth},
              {"root_width", s.root_width},
              {"taper", s.taper},
              {"quality_spread", s.quality_spread},
              {"piv_sd", s.piv_sd},
              {"seed", s.seed}};
}

// ---- TrainConfig ----

inline OptimizerKind parse_optimizer(const std::string& s, const std::string& field) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError(field + ": expected \"sgd\" or \"adam\"");
}

inline SelectOn parse_select_on(const std::string& s, const std::string& field) {
  if (s == "loss") return SelectOn::Loss;
  if (s == "auc_roc") return SelectOn::AucRoc;
  throw ConfigError(field + ": expected \"loss\" or \"auc_roc\"");
}

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }
inline const char* to_string(SelectOn s) { return s == SelectOn::Loss ? "loss" : "auc_roc"; }

/// Overlays the fields present in `j` onto `cfg`.
inline TrainConfig train_config_from_json(const Json& j, TrainConfig cfg = {},
                                          const std::string& path = "train") {
  JsonReader r(j, path);
  r.read("batch_size", cfg.batch_size);
  r.read("lr", cfg.lr);
  r.read("max_epochs", cfg.max_epochs);
  r.read("patience", cfg.patience);
  std::string s;
  if (r.has("optimizer")) {
    r.read("optimizer", s);
    cfg.optimizer = parse_optimizer(s, r.field("optimizer"));
  }
  r.read("adam_lr", cfg.adam_lr);
  r.read("adam_beta1", cfg.adam_beta1);
  r.read("adam_beta2", cfg.adam_beta2);
  r.read("adam_eps", cfg.adam_eps);
  r.read("weighted_sampling", cfg.weighted_sampling);
  r.read("input_size", cfg.input_size);
  r.read("channels", cfg.channels);
  if (r.has("select_on")) {
    r.read("select_on", s);
    cfg.select_on = parse_select_on(s, r.field("select_on"));
  }
  if (const Json* a = r.get("augment")) {
    JsonReader ar(*a, r.field("augment"));
    ar.read("flip_h_prob", cfg.augment.flip_h_prob);
    ar.read("flip_v_prob", cfg.augment.flip_v_prob);
    ar.read("rot90_prob", cfg.augment.rot90_prob);
    ar.finish();
  }
  r.read("seed", cfg.seed);
  r.finish();
  return cfg;
}

inline Json to_json(const TrainConfig& c) {
  return Json{{"batch_size", c.batch_size},
              {"lr", c.lr},
              {"max_epochs", c.max_epochs},
              {"patience", c.patience},
              {"optimizer", to_string(c.optimizer)},
              {"adam_lr", c.adam_lr},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"weighted_sampling", c.weighted_sampling},
              {"input_size", c.input_size},
              {"channels", c.channels},
              {"select_on", to_string(c.select_on)},
              {"augment",
               {{"flip_h_prob", c.augment.flip_h_prob},
                {"flip_v_prob", c.augment.flip_v_prob},
                {"rot90_prob", c.augment.rot90_prob}}},
              {"seed", c.seed}};
}

inline Json to_json(const MetricsReport& r) {
  Json roc = Json::array();
  for (const auto& p : r.roc) roc.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", p.threshold}});
  Json pr = Json::array();
  for (const auto& p : r.pr)
    pr.push_back({{"recall", p.recall}, {"precision", p.precision}, {"threshold", p.threshold}});
  return Json{{"level", to_string(r.level)}, {"auc_pr", r.auc_pr},     {"auc_roc", r.auc_roc},
              {"prevalence", r.prevalence},  {"n_pos", r.n_pos},       {"n_neg", r.n_neg},
              {"roc", roc},                  {"pr", pr}};
}

}  // namespace rvm
