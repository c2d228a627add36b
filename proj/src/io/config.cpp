// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "catkd/io/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "catkd/error.hpp"

namespace catkd::io {

namespace {

using nlohmann::json;

const char* to_string(cam::SubsetPolicy::Kind k) {
  switch (k) {
    case cam::SubsetPolicy::Kind::top_n: return "top-n";
    case cam::SubsetPolicy::Kind::bottom_n: return "bottom-n";
    case cam::SubsetPolicy::Kind::explicit_list: return "explicit-list";
  }
  return "?";
}

cam::SubsetPolicy::Kind subset_policy_kind_from(const std::string& s) {
  if (s == "top-n") return cam::SubsetPolicy::Kind::top_n;
  if (s == "bottom-n") return cam::SubsetPolicy::Kind::bottom_n;
  if (s == "explicit-list") return cam::SubsetPolicy::Kind::explicit_list;
  fail(ErrorKind::Config, "unknown category-subset kind '" + s + "'");
}

const char* to_string(data::ClassSubset::Kind k) {
  switch (k) {
    case data::ClassSubset::Kind::all: return "all";
    case data::ClassSubset::Kind::first_n: return "first-n";
    case data::ClassSubset::Kind::explicit_list: return "explicit-list";
  }
  return "?";
}

data::ClassSubset::Kind class_subset_kind_from(const std::string& s) {
  if (s == "all") return data::ClassSubset::Kind::all;
  if (s == "first-n") return data::ClassSubset::Kind::first_n;
  if (s == "explicit-list") return data::ClassSubset::Kind::explicit_list;
  fail(ErrorKind::Config, "unknown class-subset kind '" + s + "'");
}

cam::NormOrder norm_order_from(const std::string& s) {
  if (s == "none") return cam::NormOrder::none;
  if (s == "l1") return cam::NormOrder::l1;
  if (s == "l2") return cam::NormOrder::l2;
  fail(ErrorKind::Config, "unknown normalization order '" + s + "'");
}

losses::NormalizeRule normalize_rule_from(const std::string& s) {
  if (s == "always") return losses::NormalizeRule::always;
  if (s == "never") return losses::NormalizeRule::never;
  if (s == "auto-by-architecture") return losses::NormalizeRule::auto_by_architecture;
  fail(ErrorKind::Config, "unknown normalize rule '" + s + "'");
}

// Rejects keys outside the schema so typos fail loudly, naming the key.
void check_keys(const json& j, const std::string& section, const std::set<std::string>& allowed) {
  if (!j.is_object())
    fail(ErrorKind::Config, "config: '" + section + "' must be an object");
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      fail(ErrorKind::Config, "config: unknown key '" +
                                  (section.empty() ? item.key() : section + "." + item.key()) +
                                  "'");
}

// Typed field access with the offending key in every failure message.
template <typename T>
void read_field(const json& j, const std::string& section, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, "config: key '" + section + "." + key + "': " + e.what());
  }
}

void read_string_field(const json& j, const std::string& section, const char* key,
                       const std::function<void(const std::string&)>& apply) {
  if (!j.contains(key)) return;
  std::string s;
  read_field(j, section, key, s);
  try {
    apply(s);
  } catch (const Error& e) {
    fail(ErrorKind::Config, "config: key '" + section + "." + key + "': " + e.what());
  }
}

json backbone_to_json(const nn::BackboneSpec& s) {
  return json{{"family", s.family}, {"depth", s.depth},        {"width", s.width},
              {"in_channels", s.in_channels}, {"in_h", s.in_h}, {"in_w", s.in_w}};
}

nn::BackboneSpec backbone_from_json(const json& j, const std::string& section,
                                    nn::BackboneSpec base) {
  check_keys(j, section, {"family", "depth", "width", "in_channels", "in_h", "in_w"});
  read_field(j, section, "family", base.family);
  read_field(j, section, "depth", base.depth);
  read_field(j, section, "width", base.width);
  read_field(j, section, "in_channels", base.in_channels);
  read_field(j, section, "in_h", base.in_h);
  read_field(j, section, "in_w", base.in_w);
  return base;
}

json schedule_to_json(const trainer::TrainSchedule& s) {
  return json{{"epochs", s.epochs},
              {"batch_size", s.batch_size},
              {"momentum", s.momentum},
              {"weight_decay", s.weight_decay},
              {"lr", s.lr},
              {"milestones", s.milestones},
              {"decay_factor", s.decay_factor},
              {"seed", s.seed}};
}

trainer::TrainSchedule schedule_from_json(const json& j, const std::string& section,
                                          trainer::TrainSchedule base) {
  check_keys(j, section,
             {"epochs", "batch_size", "momentum", "weight_decay", "lr", "milestones",
              "decay_factor", "seed"});
  read_field(j, section, "epochs", base.epochs);
  read_field(j, section, "batch_size", base.batch_size);
  read_field(j, section, "momentum", base.momentum);
  read_field(j, section, "weight_decay", base.weight_decay);
  read_field(j, section, "lr", base.lr);
  read_field(j, section, "milestones", base.milestones);
  read_field(j, section, "decay_factor", base.decay_factor);
  read_field(j, section, "seed", base.seed);
  return base;
}

json dataset_to_json(const data::DatasetSpec& d) {
  json subset{{"kind", to_string(d.subset.kind)}, {"n", d.subset.n}, {"list", d.subset.list}};
  return json{{"name", data::to_string(d.name)},
              {"subset", subset},
              {"ratio", d.ratio},
              {"augmentation", data::to_string(d.augmentation)},
              {"seed", d.seed},
              {"root", d.root},
              {"per_class", d.synthetic_per_class}};
}

data::DatasetSpec dataset_from_json(const json& j, const std::string& section,
                                    data::DatasetSpec base) {
  check_keys(j, section, {"name", "subset", "ratio", "augmentation", "seed", "root", "per_class"});
  read_string_field(j, section, "name",
                    [&](const std::string& s) { base.name = data::dataset_name_from(s); });
  read_string_field(j, section, "augmentation",
                    [&](const std::string& s) { base.augmentation = data::augmentation_from(s); });
  read_field(j, section, "ratio", base.ratio);
  read_field(j, section, "seed", base.seed);
  read_field(j, section, "root", base.root);
  read_field(j, section, "per_class", base.synthetic_per_class);
  if (j.contains("subset")) {
    const json& s = j.at("subset");
    const std::string sub_section = section + ".subset";
    check_keys(s, sub_section, {"kind", "n", "list"});
    read_string_field(s, sub_section, "kind", [&](const std::string& k) {
      base.subset.kind = class_subset_kind_from(k);
    });
    read_field(s, sub_section, "n", base.subset.n);
    read_field(s, sub_section, "list", base.subset.list);
  }
  return base;
}

json distill_to_json(const losses::DistillConfig& d) {
  json transform{{"pool_w", d.transform.pool_w},
                 {"pool_h", d.transform.pool_h},
                 {"norm", cam::to_string(d.transform.norm)},
                 {"epsilon", d.transform.epsilon},
                 {"binarize", d.transform.binarize}};
  if (d.transform.subset) {
    transform["subset"] = json{{"kind", to_string(d.transform.subset->kind)},
                               {"n", d.transform.subset->n},
                               {"list", d.transform.subset->list}};
  }
  return json{{"beta", d.beta},
              {"transform", transform},
              {"normalize_rule", losses::to_string(d.normalize_rule)},
              {"temperature", d.temperature},
              {"kd_weight", d.kd_weight}};
}

losses::DistillConfig distill_from_json(const json& j, const std::string& section,
                                        losses::DistillConfig base) {
  check_keys(j, section, {"beta", "transform", "normalize_rule", "temperature", "kd_weight"});
  read_field(j, section, "beta", base.beta);
  read_string_field(j, section, "normalize_rule", [&](const std::string& s) {
    base.normalize_rule = normalize_rule_from(s);
  });
  read_field(j, section, "temperature", base.temperature);
  read_field(j, section, "kd_weight", base.kd_weight);
  if (j.contains("transform")) {
    const json& t = j.at("transform");
    const std::string sub = section + ".transform";
    check_keys(t, sub, {"pool_w", "pool_h", "norm", "epsilon", "binarize", "subset"});
    read_field(t, sub, "pool_w", base.transform.pool_w);
    read_field(t, sub, "pool_h", base.transform.pool_h);
    read_string_field(t, sub, "norm", [&](const std::string& s) {
      base.transform.norm = norm_order_from(s);
    });
    read_field(t, sub, "epsilon", base.transform.epsilon);
    read_field(t, sub, "binarize", base.transform.binarize);
    if (t.contains("subset")) {
      if (t.at("subset").is_null()) {
        base.transform.subset.reset();
      } else {
        const json& s = t.at("subset");
        const std::string subsub = sub + ".subset";
        check_keys(s, subsub, {"kind", "n", "list"});
        cam::SubsetPolicy policy;
        read_string_field(s, subsub, "kind", [&](const std::string& k) {
          policy.kind = subset_policy_kind_from(k);
        });
        read_field(s, subsub, "n", policy.n);
        read_field(s, subsub, "list", policy.list);
        base.transform.subset = policy;
      }
    }
  }
  return base;
}

}  // namespace

void RunConfig::validate() const {
  static const std::set<std::string> kMethods{"ce", "cat", "catkd", "kd-baseline"};
  if (!kMethods.count(method))
    fail(ErrorKind::Config, "config: unknown method '" + method +
                                "' (expected ce | cat | catkd | kd-baseline)");
  if (synthetic_eval_per_class < 1)
    fail(ErrorKind::Config, "config: synthetic_eval_per_class must be at least 1");
  dataset.validate();
  schedule.validate();
  teacher_schedule.validate();
  distill.validate();
}

nlohmann::json to_json(const RunConfig& cfg) {
  return json{{"schema_version", kConfigSchemaVersion},
              {"method", cfg.method},
              {"head_bias", cfg.head_bias},
              {"run_root", cfg.run_root},
              {"teacher_checkpoint", cfg.teacher_checkpoint},
              {"teacher", backbone_to_json(cfg.teacher)},
              {"student", backbone_to_json(cfg.student)},
              {"dataset", dataset_to_json(cfg.dataset)},
              {"eval_per_class", cfg.synthetic_eval_per_class},
              {"schedule", schedule_to_json(cfg.schedule)},
              {"teacher_schedule", schedule_to_json(cfg.teacher_schedule)},
              {"distill", distill_to_json(cfg.distill)}};
}

RunConfig config_from_json(const nlohmann::json& j) {
  check_keys(j, "",
             {"schema_version", "method", "head_bias", "run_root", "teacher_checkpoint",
              "teacher", "student", "dataset", "eval_per_class", "schedule", "teacher_schedule",
              "distill"});
  if (j.contains("schema_version")) {
    int v = 0;
    read_field(j, "", "schema_version", v);
    if (v != kConfigSchemaVersion)
      fail(ErrorKind::Schema, "config: schema_version " + std::to_string(v) +
                                  " not supported (expected " +
                                  std::to_string(kConfigSchemaVersion) + ")");
  }
  RunConfig cfg;
  read_field(j, "", "method", cfg.method);
  read_field(j, "", "head_bias", cfg.head_bias);
  read_field(j, "", "run_root", cfg.run_root);
  read_field(j, "", "teacher_checkpoint", cfg.teacher_checkpoint);
  read_field(j, "", "eval_per_class", cfg.synthetic_eval_per_class);
  if (j.contains("teacher")) cfg.teacher = backbone_from_json(j.at("teacher"), "teacher", cfg.teacher);
  if (j.contains("student")) cfg.student = backbone_from_json(j.at("student"), "student", cfg.student);
  if (j.contains("dataset")) cfg.dataset = dataset_from_json(j.at("dataset"), "dataset", cfg.dataset);
  if (j.contains("schedule"))
    cfg.schedule = schedule_from_json(j.at("schedule"), "schedule", cfg.schedule);
  if (j.contains("teacher_schedule"))
    cfg.teacher_schedule =
        schedule_from_json(j.at("teacher_schedule"), "teacher_schedule", cfg.teacher_schedule);
  if (j.contains("distill")) cfg.distill = distill_from_json(j.at("distill"), "distill", cfg.distill);
  cfg.validate();
  return cfg;
}

RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("config: ") + e.what());
  }
  return config_from_json(j);
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "config file '" + path + "' not readable");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

namespace {

template <typename F>
void env_apply(const char* name, F&& setter) {
  const char* raw = std::getenv(name);
  if (!raw) return;
  try {
    setter(std::string(raw));
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    fail(ErrorKind::Config, std::string("config: environment variable ") + name +
                                " has unparseable value '" + raw + "'");
  }
}

int env_int(const std::string& v) { return std::stoi(v); }
double env_double(const std::string& v) { return std::stod(v); }
std::uint64_t env_u64(const std::string& v) { return std::stoull(v); }

bool env_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw std::invalid_argument("not a boolean");
}

void schedule_env(const std::string& prefix, trainer::TrainSchedule& s) {
  env_apply((prefix + "EPOCHS").c_str(), [&](const std::string& v) { s.epochs = env_int(v); });
  env_apply((prefix + "BATCH_SIZE").c_str(),
            [&](const std::string& v) { s.batch_size = env_int(v); });
  env_apply((prefix + "LR").c_str(), [&](const std::string& v) { s.lr = env_double(v); });
  env_apply((prefix + "MOMENTUM").c_str(),
            [&](const std::string& v) { s.momentum = env_double(v); });
  env_apply((prefix + "WEIGHT_DECAY").c_str(),
            [&](const std::string& v) { s.weight_decay = env_double(v); });
  env_apply((prefix + "DECAY_FACTOR").c_str(),
            [&](const std::string& v) { s.decay_factor = env_double(v); });
  env_apply((prefix + "SEED").c_str(), [&](const std::string& v) { s.seed = env_u64(v); });
}

void backbone_env(const std::string& prefix, nn::BackboneSpec& b) {
  env_apply((prefix + "FAMILY").c_str(), [&](const std::string& v) { b.family = v; });
  env_apply((prefix + "DEPTH").c_str(), [&](const std::string& v) { b.depth = env_int(v); });
  env_apply((prefix + "WIDTH").c_str(), [&](const std::string& v) { b.width = env_int(v); });
}

}  // namespace

void apply_env_overrides(RunConfig& cfg) {
  env_apply("CATKD_METHOD", [&](const std::string& v) { cfg.method = v; });
  env_apply("CATKD_HEAD_BIAS", [&](const std::string& v) { cfg.head_bias = env_bool(v); });
  env_apply("CATKD_RUN_ROOT", [&](const std::string& v) { cfg.run_root = v; });
  env_apply("CATKD_TEACHER_CHECKPOINT",
            [&](const std::string& v) { cfg.teacher_checkpoint = v; });
  env_apply("CATKD_EVAL_PER_CLASS",
            [&](const std::string& v) { cfg.synthetic_eval_per_class = env_int(v); });

  backbone_env("CATKD_TEACHER_", cfg.teacher);
  backbone_env("CATKD_STUDENT_", cfg.student);

  env_apply("CATKD_DATASET_NAME",
            [&](const std::string& v) { cfg.dataset.name = data::dataset_name_from(v); });
  env_apply("CATKD_DATASET_RATIO",
            [&](const std::string& v) { cfg.dataset.ratio = env_double(v); });
  env_apply("CATKD_DATASET_AUGMENTATION", [&](const std::string& v) {
    cfg.dataset.augmentation = data::augmentation_from(v);
  });
  env_apply("CATKD_DATASET_SEED",
            [&](const std::string& v) { cfg.dataset.seed = env_u64(v); });
  env_apply("CATKD_DATASET_ROOT", [&](const std::string& v) { cfg.dataset.root = v; });
  env_apply("CATKD_DATASET_PER_CLASS",
            [&](const std::string& v) { cfg.dataset.synthetic_per_class = env_int(v); });

  schedule_env("CATKD_SCHEDULE_", cfg.schedule);
  schedule_env("CATKD_TEACHER_SCHEDULE_", cfg.teacher_schedule);

  env_apply("CATKD_DISTILL_BETA",
            [&](const std::string& v) { cfg.distill.beta = env_double(v); });
  env_apply("CATKD_DISTILL_TEMPERATURE",
            [&](const std::string& v) { cfg.distill.temperature = env_double(v); });
  env_apply("CATKD_DISTILL_KD_WEIGHT",
            [&](const std::string& v) { cfg.distill.kd_weight = env_double(v); });
  env_apply("CATKD_DISTILL_NORMALIZE_RULE", [&](const std::string& v) {
    cfg.distill.normalize_rule = normalize_rule_from(v);
  });
  env_apply("CATKD_TRANSFORM_POOL_W",
            [&](const std::string& v) { cfg.distill.transform.pool_w = env_int(v); });
  env_apply("CATKD_TRANSFORM_POOL_H",
            [&](const std::string& v) { cfg.distill.transform.pool_h = env_int(v); });
  env_apply("CATKD_TRANSFORM_NORM", [&](const std::string& v) {
    cfg.distill.transform.norm = norm_order_from(v);
  });
  env_apply("CATKD_TRANSFORM_EPSILON",
            [&](const std::string& v) { cfg.distill.transform.epsilon = env_double(v); });
  env_apply("CATKD_TRANSFORM_BINARIZE",
            [&](const std::string& v) { cfg.distill.transform.binarize = env_bool(v); });
  cfg.validate();
}

std::string config_hash(const RunConfig& cfg) {
  nlohmann::json j = to_json(cfg);
  j.erase("run_root");
  const std::string dump = j.dump();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

nlohmann::json json_merge(nlohmann::json base, const nlohmann::json& patch) {
  if (!base.is_object() || !patch.is_object()) return patch;
  for (const auto& item : patch.items()) {
    if (base.contains(item.key()))
      base[item.key()] = json_merge(base[item.key()], item.value());
    else
      base[item.key()] = item.value();
  }
  return base;
}

}  // namespace catkd::io
