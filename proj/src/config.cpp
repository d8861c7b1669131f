#include "demix/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace demix {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

template <typename Enum>
Enum parse_enum(const std::string& key, const std::string& v, const std::map<std::string, Enum>& names) {
  const auto it = names.find(v);
  if (it == names.end()) throw ConfigError(key + ": unknown value '" + v + "'");
  return it->second;
}

const std::map<std::string, MixPolicy> kPolicies{{"none", MixPolicy::none},
                                                 {"linear", MixPolicy::linear},
                                                 {"cutmix", MixPolicy::cutmix},
                                                 {"manifold", MixPolicy::manifold},
                                                 {"resizemix", MixPolicy::resizemix}};
const std::map<std::string, LossKind> kLosses{{"mce", LossKind::mce},
                                              {"dm_ce", LossKind::dm_ce},
                                              {"mbce_one", LossKind::mbce_one},
                                              {"mbce_two", LossKind::mbce_two},
                                              {"dm_bce", LossKind::dm_bce}};
const std::map<std::string, DataSource> kSources{
    {"idx", DataSource::idx}, {"csv", DataSource::csv}, {"blobs", DataSource::blobs}, {"two_moons", DataSource::two_moons}};
const std::map<std::string, Architecture> kArchitectures{{"mlp", Architecture::mlp}, {"conv", Architecture::conv}};

template <typename Enum>
std::string name_of(Enum e, const std::map<std::string, Enum>& names) {
  for (const auto& [k, v] : names) {
    if (v == e) return k;
  }
  throw std::logic_error("unnamed enum value");
}

std::string join_reals(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_real(values[i]);
  return out;
}

SSLConfig& ssl_of(ExperimentConfig& c) {
  if (!c.ssl) c.ssl = SSLConfig{};
  return *c.ssl;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

// Paths are stored raw; parse_config resolves them afterwards.
const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["run.name"] = [](auto& c, auto&, auto& v) { c.name = v; };
    t["run.seeds"] = [](auto& c, auto& k, auto& v) {
      c.seeds.clear();
      for (const auto& s : split(v, ',')) c.seeds.push_back(parse_int<std::uint64_t>(k, s));
    };
    t["run.out"] = [](auto& c, auto&, auto& v) { c.out = v; };
    t["run.save_checkpoints"] = [](auto& c, auto& k, auto& v) { c.save_checkpoints = parse_bool(k, v); };

    t["dataset.source"] = [](auto& c, auto& k, auto& v) { c.dataset.source = parse_enum(k, v, kSources); };
    t["dataset.train_images"] = [](auto& c, auto&, auto& v) { c.dataset.train_images = v; };
    t["dataset.train_labels"] = [](auto& c, auto&, auto& v) { c.dataset.train_labels = v; };
    t["dataset.val_images"] = [](auto& c, auto&, auto& v) { c.dataset.val_images = v; };
    t["dataset.val_labels"] = [](auto& c, auto&, auto& v) { c.dataset.val_labels = v; };
    t["dataset.train_csv"] = [](auto& c, auto&, auto& v) { c.dataset.train_csv = v; };
    t["dataset.val_csv"] = [](auto& c, auto&, auto& v) { c.dataset.val_csv = v; };
    t["dataset.n"] = [](auto& c, auto& k, auto& v) { c.dataset.n = parse_int<int>(k, v); };
    t["dataset.test_n"] = [](auto& c, auto& k, auto& v) { c.dataset.test_n = parse_int<int>(k, v); };
    t["dataset.noise"] = [](auto& c, auto& k, auto& v) { c.dataset.noise = parse_real(k, v); };
    t["dataset.seed"] = [](auto& c, auto& k, auto& v) { c.dataset.seed = parse_int<std::uint64_t>(k, v); };
    t["dataset.classes"] = [](auto& c, auto& k, auto& v) { c.dataset.classes = parse_int<int>(k, v); };
    t["dataset.subset"] = [](auto& c, auto& k, auto& v) { c.dataset.subset = parse_int<int>(k, v); };
    t["dataset.labels_per_class"] = [](auto& c, auto& k, auto& v) { c.dataset.labels_per_class = parse_int<int>(k, v); };

    t["mixer.policy"] = [](auto& c, auto& k, auto& v) { c.mixer.policy = parse_enum(k, v, kPolicies); };
    t["mixer.alpha"] = [](auto& c, auto& k, auto& v) { c.mixer.alpha = parse_real(k, v); };
    t["mixer.per_batch_lambda"] = [](auto& c, auto& k, auto& v) { c.mixer.per_batch_lambda = parse_bool(k, v); };

    t["loss.kind"] = [](auto& c, auto& k, auto& v) { c.loss.kind = parse_enum(k, v, kLosses); };
    t["loss.eta"] = [](auto& c, auto& k, auto& v) { c.loss.dm.eta = parse_real(k, v); };
    t["loss.t"] = [](auto& c, auto& k, auto& v) { c.loss.rescale.t = parse_real(k, v); };
    t["loss.xi"] = [](auto& c, auto& k, auto& v) { c.loss.rescale.xi = parse_real(k, v); };
    t["loss.bce_eta"] = [](auto& c, auto& k, auto& v) { c.loss.bce_eta = parse_real(k, v); };

    t["train.base_lr"] = [](auto& c, auto& k, auto& v) { c.train.base_lr = parse_real(k, v); };
    t["train.min_lr"] = [](auto& c, auto& k, auto& v) { c.train.min_lr = parse_real(k, v); };
    t["train.momentum"] = [](auto& c, auto& k, auto& v) { c.train.momentum = parse_real(k, v); };
    t["train.weight_decay"] = [](auto& c, auto& k, auto& v) { c.train.weight_decay = parse_real(k, v); };
    t["train.epochs"] = [](auto& c, auto& k, auto& v) { c.train.epochs = parse_int<int>(k, v); };
    t["train.batch_size"] = [](auto& c, auto& k, auto& v) { c.train.batch_size = parse_int<int>(k, v); };
    t["train.architecture"] = [](auto& c, auto& k, auto& v) { c.train.architecture = parse_enum(k, v, kArchitectures); };
    t["train.hidden"] = [](auto& c, auto& k, auto& v) { c.train.hidden = parse_int<int>(k, v); };

    t["ssl.enabled"] = [](auto& c, auto& k, auto& v) {
      if (parse_bool(k, v)) {
        ssl_of(c);
      } else {
        c.ssl.reset();
      }
    };
    t["ssl.tau"] = [](auto& c, auto& k, auto& v) { ssl_of(c).tau = parse_real(k, v); };
    t["ssl.unlabeled_weight"] = [](auto& c, auto& k, auto& v) { ssl_of(c).unlabeled_weight = parse_real(k, v); };
    t["ssl.eta"] = [](auto& c, auto& k, auto& v) { ssl_of(c).eta = parse_real(k, v); };
    t["ssl.alpha"] = [](auto& c, auto& k, auto& v) { ssl_of(c).alpha = parse_real(k, v); };
    t["ssl.steps"] = [](auto& c, auto& k, auto& v) { ssl_of(c).steps = parse_int<int>(k, v); };
    t["ssl.asymmetric_mix"] = [](auto& c, auto& k, auto& v) { ssl_of(c).asymmetric_mix = parse_bool(k, v); };
    t["ssl.unlabeled_batch"] = [](auto& c, auto& k, auto& v) { ssl_of(c).unlabeled_batch = parse_int<int>(k, v); };
    t["ssl.eval_interval"] = [](auto& c, auto& k, auto& v) { ssl_of(c).eval_interval = parse_int<int>(k, v); };

    t["eval.mixed_pairs"] = [](auto& c, auto& k, auto& v) { c.eval.mixed_pairs = parse_bool(k, v); };
    t["eval.mixed_pairs_count"] = [](auto& c, auto& k, auto& v) { c.eval.mixed_pairs_count = parse_int<int>(k, v); };
    t["eval.fgsm"] = [](auto& c, auto& k, auto& v) { c.eval.fgsm = parse_bool(k, v); };
    t["eval.epsilon"] = [](auto& c, auto& k, auto& v) { c.eval.epsilon = parse_real(k, v); };
    t["eval.occlusion"] = [](auto& c, auto& k, auto& v) { c.eval.occlusion = parse_bool(k, v); };
    t["eval.patch_size"] = [](auto& c, auto& k, auto& v) { c.eval.patch_size = parse_int<int>(k, v); };
    t["eval.ratios"] = [](auto& c, auto& k, auto& v) {
      c.eval.ratios.clear();
      for (const auto& s : split(v, ',')) c.eval.ratios.push_back(parse_real(k, s));
    };
    t["eval.histogram_bins"] = [](auto& c, auto& k, auto& v) { c.eval.histogram_bins = parse_int<int>(k, v); };
    t["eval.mask_seed"] = [](auto& c, auto& k, auto& v) { c.eval.mask_seed = parse_int<std::uint64_t>(k, v); };
    return t;
  }();
  return table;
}

std::string resolve(const std::string& path, const std::filesystem::path& base) {
  if (path.empty() || base.empty()) return path;
  const std::filesystem::path p(path);
  return p.is_absolute() ? path : (base / p).lexically_normal().string();
}

}  // namespace

RescaleParams default_rescale(MixPolicy policy) {
  if (policy == MixPolicy::cutmix || policy == MixPolicy::resizemix) return {1.0, 0.8};
  return {0.5, 1.0};
}

std::string to_string(MixPolicy policy) { return name_of(policy, kPolicies); }
std::string to_string(LossKind kind) { return name_of(kind, kLosses); }
std::string to_string(DataSource source) { return name_of(source, kSources); }

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  ExperimentConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  const auto& table = setters();
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    it->second(config, key, value);
  }
  if (!seen.contains("loss.t") && !seen.contains("loss.xi")) config.loss.rescale = default_rescale(config.mixer.policy);
  for (auto* p : {&config.dataset.train_images, &config.dataset.train_labels, &config.dataset.val_images,
                  &config.dataset.val_labels, &config.dataset.train_csv, &config.dataset.val_csv}) {
    *p = resolve(*p, base_dir);
  }
  validate(config, false);
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream out;
  auto kv = [&](const std::string& k, const std::string& v) { out << k << " = " << v << '\n'; };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  std::string seeds;
  for (std::size_t i = 0; i < c.seeds.size(); ++i) seeds += (i ? "," : "") + std::to_string(c.seeds[i]);
  kv("run.name", c.name);
  kv("run.seeds", seeds);
  kv("run.out", c.out);
  kv("run.save_checkpoints", b(c.save_checkpoints));
  kv("dataset.source", to_string(c.dataset.source));
  kv("dataset.train_images", c.dataset.train_images);
  kv("dataset.train_labels", c.dataset.train_labels);
  kv("dataset.val_images", c.dataset.val_images);
  kv("dataset.val_labels", c.dataset.val_labels);
  kv("dataset.train_csv", c.dataset.train_csv);
  kv("dataset.val_csv", c.dataset.val_csv);
  kv("dataset.n", std::to_string(c.dataset.n));
  kv("dataset.test_n", std::to_string(c.dataset.test_n));
  kv("dataset.noise", format_real(c.dataset.noise));
  kv("dataset.seed", std::to_string(c.dataset.seed));
  kv("dataset.classes", std::to_string(c.dataset.classes));
  kv("dataset.subset", std::to_string(c.dataset.subset));
  kv("dataset.labels_per_class", std::to_string(c.dataset.labels_per_class));
  kv("mixer.policy", to_string(c.mixer.policy));
  kv("mixer.alpha", format_real(c.mixer.alpha));
  kv("mixer.per_batch_lambda", b(c.mixer.per_batch_lambda));
  kv("loss.kind", to_string(c.loss.kind));
  kv("loss.eta", format_real(c.loss.dm.eta));
  kv("loss.t", format_real(c.loss.rescale.t));
  kv("loss.xi", format_real(c.loss.rescale.xi));
  kv("loss.bce_eta", format_real(c.loss.bce_eta));
  kv("train.base_lr", format_real(c.train.base_lr));
  kv("train.min_lr", format_real(c.train.min_lr));
  kv("train.momentum", format_real(c.train.momentum));
  kv("train.weight_decay", format_real(c.train.weight_decay));
  kv("train.epochs", std::to_string(c.train.epochs));
  kv("train.batch_size", std::to_string(c.train.batch_size));
  kv("train.architecture", name_of(c.train.architecture, kArchitectures));
  kv("train.hidden", std::to_string(c.train.hidden));
  kv("ssl.enabled", b(c.ssl.has_value()));
  if (c.ssl) {
    kv("ssl.tau", format_real(c.ssl->tau));
    kv("ssl.unlabeled_weight", format_real(c.ssl->unlabeled_weight));
    kv("ssl.eta", format_real(c.ssl->eta));
    kv("ssl.alpha", format_real(c.ssl->alpha));
    kv("ssl.steps", std::to_string(c.ssl->steps));
    kv("ssl.asymmetric_mix", b(c.ssl->asymmetric_mix));
    kv("ssl.unlabeled_batch", std::to_string(c.ssl->unlabeled_batch));
    kv("ssl.eval_interval", std::to_string(c.ssl->eval_interval));
  }
  kv("eval.mixed_pairs", b(c.eval.mixed_pairs));
  kv("eval.mixed_pairs_count", std::to_string(c.eval.mixed_pairs_count));
  kv("eval.fgsm", b(c.eval.fgsm));
  kv("eval.epsilon", format_real(c.eval.epsilon));
  kv("eval.occlusion", b(c.eval.occlusion));
  kv("eval.patch_size", std::to_string(c.eval.patch_size));
  kv("eval.ratios", join_reals(c.eval.ratios));
  kv("eval.histogram_bins", std::to_string(c.eval.histogram_bins));
  kv("eval.mask_seed", std::to_string(c.eval.mask_seed));
  return out.str();
}

void validate(const ExperimentConfig& c, bool require_data) {
  try {
    if (c.seeds.empty()) throw ConfigError("run.seeds must list at least one seed");
    if (c.mixer.policy != MixPolicy::none && !(c.mixer.alpha > 0.0)) throw ConfigError("mixer.alpha must be positive");
    if (c.mixer.policy == MixPolicy::manifold && !c.mixer.per_batch_lambda) {
      throw ConfigError("manifold mixing needs mixer.per_batch_lambda = true");
    }
    validate(c.loss);
    validate(c.train);
    if (c.ssl) validate(*c.ssl);
    if (c.dataset.n < 2 || c.dataset.test_n < 1) throw ConfigError("dataset.n must be >= 2 and test_n >= 1");
    if (c.dataset.subset < 0) throw ConfigError("dataset.subset must be nonnegative");
    if (c.eval.mixed_pairs_count < 1) throw ConfigError("eval.mixed_pairs_count must be positive");
    if (c.eval.epsilon < 0.0) throw ConfigError("eval.epsilon must be nonnegative");
    if (c.eval.histogram_bins < 0) throw ConfigError("eval.histogram_bins must be nonnegative");
    for (double r : c.eval.ratios) {
      if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("eval.ratios must lie in [0, 1]");
    }
    if (!require_data) return;
    if (c.dataset.source == DataSource::idx && (c.dataset.train_images.empty() || c.dataset.train_labels.empty())) {
      throw ConfigError("idx source needs dataset.train_images and dataset.train_labels");
    }
    if (c.dataset.source == DataSource::csv && c.dataset.train_csv.empty()) {
      throw ConfigError("csv source needs dataset.train_csv");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

Dataset load_dataset_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw ConfigError("dataset spec needs a kind prefix: " + spec);
  const std::string kind = spec.substr(0, colon);
  const std::string rest = spec.substr(colon + 1);
  if (kind == "idx") {
    const auto parts = split(rest, ',');
    if (parts.size() != 2) throw ConfigError("idx spec is idx:<images>,<labels>");
    return load_idx(parts[0], parts[1]);
  }
  if (kind == "csv") return load_csv(rest);
  if (kind == "two_moons" || kind == "blobs") {
    const auto parts = split(rest, ':');
    if (parts.size() < 3 || parts.size() > 4) throw ConfigError(kind + " spec is " + kind + ":<n>:<noise>:<seed>");
    const int classes = parts.size() == 4 ? parse_int<int>("classes", parts[3]) : 2;
    return make_synthetic(kind == "blobs" ? SyntheticKind::blobs : SyntheticKind::two_moons,
                          parse_int<int>("n", parts[0]), parse_real("noise", parts[1]),
                          parse_int<std::uint64_t>("seed", parts[2]), classes);
  }
  throw ConfigError("unknown dataset kind '" + kind + "'");
}

}  // namespace demix
