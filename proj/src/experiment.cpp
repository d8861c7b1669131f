#include "demix/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include "demix/checkpoint.hpp"
#include "demix/evaluation.hpp"
#include "demix/training.hpp"

namespace demix {

namespace {

struct LoadedData {
  Dataset train;
  Dataset validation;
};

LoadedData load_data(const DatasetConfig& d) {
  LoadedData out;
  switch (d.source) {
    case DataSource::idx:
      out.train = load_idx(d.train_images, d.train_labels);
      if (!d.val_images.empty()) out.validation = load_idx(d.val_images, d.val_labels);
      break;
    case DataSource::csv:
      out.train = load_csv(d.train_csv);
      if (!d.val_csv.empty()) out.validation = load_csv(d.val_csv);
      break;
    case DataSource::blobs:
    case DataSource::two_moons: {
      const auto kind = d.source == DataSource::blobs ? SyntheticKind::blobs : SyntheticKind::two_moons;
      out.train = make_synthetic(kind, d.n, d.noise, d.seed, d.classes);
      out.validation = make_synthetic(kind, d.test_n, d.noise, d.seed + 1, d.classes);
      break;
    }
  }
  if (d.subset > 0) out.train = take_first(out.train, static_cast<std::size_t>(d.subset));
  const int classes = std::max(out.train.num_classes, out.validation.num_classes);
  out.train.num_classes = classes;
  out.validation.num_classes = classes;
  if (!out.validation.empty() && out.validation.shape != out.train.shape) {
    throw DatasetError("validation samples do not match the training shape");
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

class RowSink {
 public:
  RowSink(std::string run, std::uint64_t seed, std::vector<MetricRow>& rows) : run_(std::move(run)), seed_(seed), rows_(rows) {}
  void add(long step, const std::string& metric, double value) {
    if (!is_registered_metric(metric)) throw std::logic_error("unregistered metric " + metric);
    rows_.push_back({run_, seed_, step, metric, value});
  }

 private:
  std::string run_;
  std::uint64_t seed_;
  std::vector<MetricRow>& rows_;
};

}  // namespace

const std::vector<std::string>& metric_registry() {
  static const std::vector<std::string> names{
      "train_loss",      "val_top1",        "median_top1_last10", "final_val_top1", "test_acc",
      "accepted_fraction", "best_test_acc", "final_test_acc",     "mixed_top1_pair", "mixed_top2_pair",
      "mixed_mean_confidence", "fgsm_clean_top1", "fgsm_top1",     "fgsm_error",     "occlusion_top1",
      "confidence_hist"};
  return names;
}

bool is_registered_metric(const std::string& name) {
  const auto& r = metric_registry();
  return std::find(r.begin(), r.end(), name) != r.end();
}

std::string format_metric_value(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "run,seed,step,metric,value\n";
  for (const auto& r : rows) {
    if (!is_registered_metric(r.metric)) throw std::invalid_argument("unregistered metric '" + r.metric + "'");
    out << r.run << ',' << r.seed << ',' << r.step << ',' << r.metric << ',' << format_metric_value(r.value) << '\n';
  }
}

ExperimentOutcome run_experiment(const ExperimentConfig& config, bool write_files) {
  validate(config);
  const LoadedData data = load_data(config.dataset);
  const Dataset& eval_set = data.validation.empty() ? data.train : data.validation;
  const bool ssl = config.ssl.has_value();
  const std::string headline = ssl ? "best_test_acc" : "median_top1_last10";

  ExperimentOutcome outcome;
  nlohmann::json per_seed = nlohmann::json::array();
  nlohmann::json curves = nlohmann::json::array();
  std::map<std::string, std::vector<double>> finals;

  if (write_files) std::filesystem::create_directories(config.out);

  for (std::uint64_t seed : config.seeds) {
    RowSink sink(config.name, seed, outcome.rows);
    TrainConfig tc = config.train;
    tc.seed = seed;
    nlohmann::json record{{"seed", seed}};
    nlohmann::json seed_curves{{"seed", seed}};
    Parameters params;
    long last_step = 0;
    auto final_metric = [&](const std::string& name, double value) {
      sink.add(last_step, name, value);
      record[name] = value;
      finals[name].push_back(value);
    };

    if (ssl) {
      Rng split_rng(seed);
      const LabeledSplit split = split_labeled(data.train, config.dataset.labels_per_class, split_rng);
      const SslResult res = train_ssl(split.labeled, split.unlabeled, eval_set, *config.ssl, tc);
      for (const auto& e : res.log) {
        sink.add(e.step, "train_loss", e.train_loss);
        sink.add(e.step, "test_acc", e.test_acc);
        sink.add(e.step, "accepted_fraction", e.accepted_fraction);
      }
      last_step = res.log.back().step;
      params = res.params;
      final_metric("best_test_acc", res.best_test_acc);
      final_metric("final_test_acc", res.log.back().test_acc);
    } else {
      const TrainResult res = train_supervised(data.train, data.validation, config.mixer, config.loss, tc);
      for (const auto& e : res.log) {
        sink.add(e.epoch, "train_loss", e.train_loss);
        sink.add(e.epoch, "val_top1", e.val_top1);
      }
      last_step = res.log.back().epoch;
      params = res.params;
      final_metric("median_top1_last10", median_last(res.log, 10));
      final_metric("final_val_top1", res.log.back().val_top1);
    }

    if (config.eval.mixed_pairs) {
      Rng rng(config.eval.mask_seed + seed);
      const MixedPairEval mp = mixed_pair_eval(params, make_hard_mixed_set(eval_set, config.eval.mixed_pairs_count, rng));
      final_metric("mixed_top1_pair", mp.top1_pair_acc);
      final_metric("mixed_top2_pair", mp.top2_pair_acc);
      final_metric("mixed_mean_confidence", mp.mean_max_confidence);
    }
    if (config.eval.fgsm) {
      const AttackResult ar = fgsm_attack(params, eval_set, {config.eval.epsilon, 0.0, 1.0});
      final_metric("fgsm_clean_top1", ar.clean_accuracy);
      final_metric("fgsm_top1", ar.adversarial_accuracy);
      final_metric("fgsm_error", ar.error_rate);
    }
    if (config.eval.occlusion) {
      Rng rng(config.eval.mask_seed + seed);
      nlohmann::json curve = nlohmann::json::array();
      for (const auto& p : occlusion_eval(params, eval_set, {config.eval.patch_size, config.eval.ratios}, rng)) {
        sink.add(p.masked_patches, "occlusion_top1", p.accuracy);
        curve.push_back({{"ratio", p.ratio}, {"masked_patches", p.masked_patches}, {"top1", p.accuracy}});
      }
      seed_curves["occlusion"] = curve;
    }
    if (config.eval.histogram_bins > 0) {
      const auto hist = confidence_histogram(params, eval_set, config.eval.histogram_bins);
      for (std::size_t b = 0; b < hist.size(); ++b) {
        sink.add(static_cast<long>(b), "confidence_hist", static_cast<double>(hist[b]));
      }
      seed_curves["confidence_hist"] = hist;
    }
    if (write_files && config.save_checkpoints) {
      save_checkpoint(std::filesystem::path(config.out) / ("seed_" + std::to_string(seed) + ".dmx"), params);
    }
    per_seed.push_back(record);
    curves.push_back(seed_curves);
  }

  nlohmann::json mean = nlohmann::json::object();
  nlohmann::json stddev = nlohmann::json::object();
  for (const auto& [name, values] : finals) {
    mean[name] = mean_of(values);
    stddev[name] = sample_std(values);
  }
  outcome.summary = {{"run", config.name},   {"mode", ssl ? "ssl" : "supervised"}, {"headline", headline},
                     {"seeds", config.seeds}, {"per_seed", per_seed},             {"mean", mean},
                     {"std", stddev},         {"curves", curves}};

  if (write_files) {
    std::ofstream csv(std::filesystem::path(config.out) / "metrics.csv");
    write_metrics_csv(csv, outcome.rows);
    std::ofstream js(std::filesystem::path(config.out) / "summary.json");
    js << outcome.summary.dump(2) << '\n';
    std::ofstream cfg(std::filesystem::path(config.out) / "config.resolved");
    cfg << serialize_config(config);
  }
  return outcome;
}

PairedReport compare_runs(const nlohmann::json& summary_a, const nlohmann::json& summary_b) {
  const std::string metric = summary_a.at("headline").get<std::string>();
  if (summary_b.at("headline").get<std::string>() != metric) {
    throw std::invalid_argument("summaries report different headline metrics");
  }
  auto keyed = [&](const nlohmann::json& s) {
    std::map<std::uint64_t, double> out;
    for (const auto& r : s.at("per_seed")) out[r.at("seed").get<std::uint64_t>()] = r.at(metric).get<double>();
    return out;
  };
  const auto a = keyed(summary_a);
  const auto b = keyed(summary_b);
  std::set<std::uint64_t> ka;
  std::set<std::uint64_t> kb;
  for (const auto& [k, v] : a) ka.insert(k);
  for (const auto& [k, v] : b) kb.insert(k);
  if (ka != kb) throw std::invalid_argument("summaries cover different seed sets");

  PairedReport report;
  report.metric = metric;
  double total = 0.0;
  for (const auto& [seed, va] : a) {
    const double vb = b.at(seed);
    const double d = vb - va;
    report.per_seed.push_back({seed, va, vb, d});
    total += d;
    if (vb > va) {
      ++report.wins_b;
    } else if (va > vb) {
      ++report.wins_a;
    } else {
      ++report.ties;
    }
  }
  report.mean_delta = report.per_seed.empty() ? 0.0 : total / static_cast<double>(report.per_seed.size());
  return report;
}

nlohmann::json to_json(const PairedReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& d : report.per_seed) rows.push_back({{"seed", d.seed}, {"a", d.a}, {"b", d.b}, {"delta", d.delta}});
  return {{"metric", report.metric}, {"per_seed", rows}, {"mean_delta", report.mean_delta},
          {"wins_a", report.wins_a}, {"wins_b", report.wins_b}, {"ties", report.ties}};
}

}  // namespace demix
