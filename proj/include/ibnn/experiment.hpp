#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ibnn/credal.hpp"
#include "ibnn/datasets.hpp"
#include "ibnn/ensemble.hpp"
#include "ibnn/glucose.hpp"
#include "ibnn/ibnn.hpp"
#include "ibnn/metrics.hpp"
#include "ibnn/regions.hpp"
#include "ibnn/serialize.hpp"
#include "ibnn/trajectory.hpp"
#include "ibnn/vi.hpp"

namespace ibnn {

inline constexpr const char* kLibraryVersion = "0.1.0";
inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kCsvSchemaVersion = 1;

enum class Task {
  regression_uq,
  classification_uq,
  trajectory_coverage,
  glucose_control,
};

inline std::string to_string(Task t) {
  switch (t) {
    case Task::regression_uq: return "regression_uq";
    case Task::classification_uq: return "classification_uq";
    case Task::trajectory_coverage: return "trajectory_coverage";
    case Task::glucose_control: return "glucose_control";
  }
  throw std::logic_error("unreachable task");
}

inline Task task_from_string(const std::string& s) {
  if (s == "regression_uq") return Task::regression_uq;
  if (s == "classification_uq") return Task::classification_uq;
  if (s == "trajectory_coverage") return Task::trajectory_coverage;
  if (s == "glucose_control") return Task::glucose_control;
  throw std::invalid_argument("unknown task '" + s + "'");
}

inline std::string to_string(HdrMethod m) {
  switch (m) {
    case HdrMethod::gaussian: return "gaussian";
    case HdrMethod::empirical_shortest: return "empirical_shortest";
    case HdrMethod::grid_density: return "grid_density";
  }
  throw std::logic_error("unreachable hdr method");
}

inline HdrMethod hdr_method_from_string(const std::string& s) {
  if (s == "gaussian") return HdrMethod::gaussian;
  if (s == "empirical_shortest") return HdrMethod::empirical_shortest;
  if (s == "grid_density") return HdrMethod::grid_density;
  throw std::invalid_argument("unknown hdr_method '" + s + "'");
}

inline std::string to_string(MeanPattern p) {
  switch (p) {
    case MeanPattern::negative: return "negative";
    case MeanPattern::zero: return "zero";
    case MeanPattern::positive: return "positive";
  }
  throw std::logic_error("unreachable mean pattern");
}

inline MeanPattern mean_pattern_from_string(const std::string& s) {
  if (s == "negative") return MeanPattern::negative;
  if (s == "zero") return MeanPattern::zero;
  if (s == "positive") return MeanPattern::positive;
  throw std::invalid_argument("unknown mean_pattern '" + s + "'");
}

// Entropy-abstention rule configuration; threshold is phi, optionally
// loosened by log(n_members) when treating the members as hull extremes.
struct AuCheckConfig {
  bool enabled = false;
  double phi = 0.0;
  bool use_hull_bound = false;
};

struct ControlConfig {
  std::size_t episodes = 10;
  std::size_t episode_steps = 120;
  std::size_t train_episodes = 40;
  std::size_t train_steps = 80;
  std::size_t n_mc = 10;
  std::size_t mpc_candidates = 256;
  std::size_t mpc_horizon = 5;
  double max_dose = 1.5;
  MealSchedule meals = default_meals();
  int meal_shift_max = 10;
  double meal_scale_min = 1.0;
  double meal_scale_max = 1.5;
};

struct ExperimentConfig {
  Task task = Task::regression_uq;
  std::string experiment_id;
  PriorSet priors;
  LikelihoodSet likelihoods;
  std::vector<double> alphas{0.1, 0.05, 0.01};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<int> severities{1, 2, 3, 4, 5};
  std::size_t train_size = 500;
  std::size_t test_size = 500;
  std::size_t n_mc = 20;
  HdrMethod hdr_method = HdrMethod::gaussian;
  AuCheckConfig au_check;
  TrainConfig train;
  ControlConfig control;

  void validate() const {
    priors.validate();
    likelihoods.validate();
    train.validate();
    detail::require(!experiment_id.empty(), "config: empty experiment_id");
    for (char c : experiment_id)
      detail::require(std::isalnum(static_cast<unsigned char>(c)) ||
                          c == '_' || c == '-' || c == '.' || c == ':',
                      "config: experiment_id may use [A-Za-z0-9_.:-] only");
    detail::require(!alphas.empty(), "config: alphas must be nonempty");
    for (double a : alphas)
      detail::require(a > 0.0 && a < 1.0, "config: alpha must be in (0,1)");
    detail::require(!seeds.empty(), "config: seeds must be nonempty");
    detail::require(train_size >= 10 && test_size >= 1,
                    "config: train_size >= 10 and test_size >= 1 required");
    detail::require(n_mc >= 2, "config: n_mc must be >= 2");
    const Head want_head = task == Task::classification_uq
                               ? Head::categorical_softmax
                               : Head::gaussian_regression;
    for (const auto& lik : likelihoods.members) {
      detail::require(lik.arch.head == want_head,
                      "config: likelihood head does not match the task");
      switch (task) {
        case Task::regression_uq:
          detail::require(lik.arch.input_dim() == 1 &&
                              lik.arch.output_dim() == 1,
                          "config: regression_uq needs a 1 -> 1 network");
          break;
        case Task::classification_uq:
          detail::require(lik.arch.input_dim() == 2 &&
                              lik.arch.output_dim() == 2,
                          "config: classification_uq needs a 2 -> 2 network");
          break;
        case Task::trajectory_coverage:
          detail::require(
              lik.arch.input_dim() == kTrajectoryFeatureDim &&
                  lik.arch.output_dim() == 2,
              "config: trajectory_coverage needs a 20 -> 2 network");
          break;
        case Task::glucose_control:
          detail::require(lik.arch.input_dim() == kGlucoseFeatureDim &&
                              lik.arch.output_dim() == 1,
                          "config: glucose_control needs a 4 -> 1 network");
          break;
      }
    }
    if (task == Task::classification_uq) {
      detail::require(!severities.empty(), "config: severities nonempty");
      for (int s : severities)
        detail::require(s >= 0 && s <= 5, "config: severity must be in 0..5");
    }
    if (task == Task::glucose_control) {
      detail::require(control.episodes >= 1 && control.episode_steps >= 1,
                      "config: control episodes/steps must be >= 1");
      detail::require(control.n_mc >= 2, "config: control n_mc >= 2");
      detail::require(control.mpc_candidates >= 1 && control.mpc_horizon >= 1,
                      "config: mpc candidates/horizon must be >= 1");
      detail::require(control.meal_scale_min <= control.meal_scale_max &&
                          control.meal_scale_min > 0.0,
                      "config: bad meal scale range");
      detail::require(control.meal_shift_max >= 0,
                      "config: meal_shift_max must be >= 0");
    }
    if (au_check.enabled)
      detail::require(std::isfinite(au_check.phi), "config: phi must be finite");
  }
};

inline json to_json(const GaussianPriorSpec& p) {
  return json{{"mean_pattern", to_string(p.mean_pattern)},
              {"magnitude", p.magnitude},
              {"var", p.var}};
}

inline json to_json(const LikelihoodSpec& l) {
  return json{{"architecture", to_json(l.arch)}, {"noise_var", l.noise_var}};
}

inline json to_json(const ExperimentConfig& cfg) {
  json priors = json::array();
  for (const auto& p : cfg.priors.members) priors.push_back(to_json(p));
  json likelihoods = json::array();
  for (const auto& l : cfg.likelihoods.members) likelihoods.push_back(to_json(l));
  json meals = json::array();
  for (const auto& m : cfg.control.meals)
    meals.push_back(json::array({m.step, m.carbs}));
  return json{
      {"schema_version", kConfigSchemaVersion},
      {"experiment_id", cfg.experiment_id},
      {"task", to_string(cfg.task)},
      {"priors", priors},
      {"likelihoods", likelihoods},
      {"alphas", cfg.alphas},
      {"seeds", cfg.seeds},
      {"severities", cfg.severities},
      {"train_size", cfg.train_size},
      {"test_size", cfg.test_size},
      {"n_mc", cfg.n_mc},
      {"hdr_method", to_string(cfg.hdr_method)},
      {"au_check",
       {{"enabled", cfg.au_check.enabled},
        {"phi", cfg.au_check.phi},
        {"use_hull_bound", cfg.au_check.use_hull_bound}}},
      {"train",
       {{"epochs", cfg.train.epochs},
        {"learning_rate", cfg.train.learning_rate},
        {"batch_size", cfg.train.batch_size},
        {"mc_samples_per_step", cfg.train.mc_samples_per_step}}},
      {"control",
       {{"episodes", cfg.control.episodes},
        {"episode_steps", cfg.control.episode_steps},
        {"train_episodes", cfg.control.train_episodes},
        {"train_steps", cfg.control.train_steps},
        {"n_mc", cfg.control.n_mc},
        {"mpc_candidates", cfg.control.mpc_candidates},
        {"mpc_horizon", cfg.control.mpc_horizon},
        {"max_dose", cfg.control.max_dose},
        {"meals", meals},
        {"meal_shift_max", cfg.control.meal_shift_max},
        {"meal_scale_min", cfg.control.meal_scale_min},
        {"meal_scale_max", cfg.control.meal_scale_max}}}};
}

inline GaussianPriorSpec prior_from_json(const json& j) {
  detail::require_keys(j, {"mean_pattern", "magnitude", "var"}, "prior");
  GaussianPriorSpec p;
  p.mean_pattern = mean_pattern_from_string(
      detail::require_field(j, "mean_pattern", "prior").get<std::string>());
  if (j.contains("magnitude")) p.magnitude = j["magnitude"].get<double>();
  if (j.contains("var")) p.var = j["var"].get<double>();
  p.validate();
  return p;
}

inline LikelihoodSpec likelihood_from_json(const json& j) {
  detail::require_keys(j, {"architecture", "noise_var"}, "likelihood");
  LikelihoodSpec l;
  l.arch = architecture_from_json(
      detail::require_field(j, "architecture", "likelihood"));
  if (j.contains("noise_var")) l.noise_var = j["noise_var"].get<double>();
  detail::require(l.noise_var > 0.0 && std::isfinite(l.noise_var),
                  "likelihood: noise_var must be positive");
  return l;
}

inline ExperimentConfig config_from_json(const json& j) {
  detail::require_keys(
      j,
      {"schema_version", "experiment_id", "task", "priors", "likelihoods",
       "alphas", "seeds", "severities", "train_size", "test_size", "n_mc",
       "hdr_method", "au_check", "train", "control"},
      "config");
  const int version =
      detail::require_field(j, "schema_version", "config").get<int>();
  if (version != kConfigSchemaVersion)
    throw std::invalid_argument("config: unsupported schema_version " +
                                std::to_string(version));
  ExperimentConfig cfg;
  cfg.task =
      task_from_string(detail::require_field(j, "task", "config").get<std::string>());
  cfg.experiment_id =
      j.contains("experiment_id") ? j["experiment_id"].get<std::string>()
                                  : to_string(cfg.task);
  cfg.priors.members.clear();
  for (const auto& p : detail::require_field(j, "priors", "config"))
    cfg.priors.members.push_back(prior_from_json(p));
  cfg.likelihoods.members.clear();
  for (const auto& l : detail::require_field(j, "likelihoods", "config"))
    cfg.likelihoods.members.push_back(likelihood_from_json(l));
  if (j.contains("alphas")) cfg.alphas = j["alphas"].get<std::vector<double>>();
  if (j.contains("seeds"))
    cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.contains("severities"))
    cfg.severities = j["severities"].get<std::vector<int>>();
  if (j.contains("train_size"))
    cfg.train_size = j["train_size"].get<std::size_t>();
  if (j.contains("test_size")) cfg.test_size = j["test_size"].get<std::size_t>();
  if (j.contains("n_mc")) cfg.n_mc = j["n_mc"].get<std::size_t>();
  if (j.contains("hdr_method"))
    cfg.hdr_method = hdr_method_from_string(j["hdr_method"].get<std::string>());
  if (j.contains("au_check")) {
    const json& a = j["au_check"];
    detail::require_keys(a, {"enabled", "phi", "use_hull_bound"}, "au_check");
    if (a.contains("enabled")) cfg.au_check.enabled = a["enabled"].get<bool>();
    if (a.contains("phi")) cfg.au_check.phi = a["phi"].get<double>();
    if (a.contains("use_hull_bound"))
      cfg.au_check.use_hull_bound = a["use_hull_bound"].get<bool>();
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    detail::require_keys(
        t, {"epochs", "learning_rate", "batch_size", "mc_samples_per_step"},
        "train");
    if (t.contains("epochs")) cfg.train.epochs = t["epochs"].get<std::size_t>();
    if (t.contains("learning_rate"))
      cfg.train.learning_rate = t["learning_rate"].get<double>();
    if (t.contains("batch_size"))
      cfg.train.batch_size = t["batch_size"].get<std::size_t>();
    if (t.contains("mc_samples_per_step"))
      cfg.train.mc_samples_per_step =
          t["mc_samples_per_step"].get<std::size_t>();
  }
  if (j.contains("control")) {
    const json& c = j["control"];
    detail::require_keys(
        c,
        {"episodes", "episode_steps", "train_episodes", "train_steps", "n_mc",
         "mpc_candidates", "mpc_horizon", "max_dose", "meals",
         "meal_shift_max", "meal_scale_min", "meal_scale_max"},
        "control");
    ControlConfig& cc = cfg.control;
    if (c.contains("episodes")) cc.episodes = c["episodes"].get<std::size_t>();
    if (c.contains("episode_steps"))
      cc.episode_steps = c["episode_steps"].get<std::size_t>();
    if (c.contains("train_episodes"))
      cc.train_episodes = c["train_episodes"].get<std::size_t>();
    if (c.contains("train_steps"))
      cc.train_steps = c["train_steps"].get<std::size_t>();
    if (c.contains("n_mc")) cc.n_mc = c["n_mc"].get<std::size_t>();
    if (c.contains("mpc_candidates"))
      cc.mpc_candidates = c["mpc_candidates"].get<std::size_t>();
    if (c.contains("mpc_horizon"))
      cc.mpc_horizon = c["mpc_horizon"].get<std::size_t>();
    if (c.contains("max_dose")) cc.max_dose = c["max_dose"].get<double>();
    if (c.contains("meals")) {
      cc.meals.clear();
      for (const auto& m : c["meals"]) {
        if (!m.is_array() || m.size() != 2)
          throw std::invalid_argument("control.meals: entries are [step, carbs]");
        cc.meals.push_back({m[0].get<int>(), m[1].get<double>()});
      }
    }
    if (c.contains("meal_shift_max"))
      cc.meal_shift_max = c["meal_shift_max"].get<int>();
    if (c.contains("meal_scale_min"))
      cc.meal_scale_min = c["meal_scale_min"].get<double>();
    if (c.contains("meal_scale_max"))
      cc.meal_scale_max = c["meal_scale_max"].get<double>();
  }
  cfg.validate();
  return cfg;
}

// FNV-1a over the canonical dump; stable across runs and platforms.
inline std::string config_hash(const json& canonical) {
  const std::string s = canonical.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

struct CsvRow {
  std::string experiment_id;
  double alpha = 0.0;
  std::string model;  // "ibnn" or "ebnn"
  double one_step = 0.0;
  double multi_step = 0.0;
  double mean_width = 0.0;
  double au = 0.0;
  double eu = 0.0;
  std::uint64_t seed = 0;
};

struct ControlCsvRow {
  std::string experiment_id;
  double alpha = 0.0;
  std::string model;
  std::uint64_t seed = 0;
  std::size_t episode = 0;
  double t_unsafe = 0.0;
};

struct AbstainCsvRow {
  std::string experiment_id;
  std::uint64_t seed = 0;
  std::size_t query_index = 0;
  double lower_entropy = 0.0;
  bool abstained = false;
};

struct ExperimentResult {
  std::vector<CsvRow> rows;
  std::vector<ControlCsvRow> control_rows;
  std::vector<AbstainCsvRow> abstain_rows;
  json manifest;
};

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return std::string(buf);
}

inline void write_results_csv(const std::vector<CsvRow>& rows,
                              const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "experiment_id,alpha,model,one_step,multi_step,mean_width,au,eu,seed\n";
  for (const auto& r : rows)
    out << r.experiment_id << ',' << format_double(r.alpha) << ',' << r.model
        << ',' << format_double(r.one_step) << ','
        << format_double(r.multi_step) << ',' << format_double(r.mean_width)
        << ',' << format_double(r.au) << ',' << format_double(r.eu) << ','
        << r.seed << '\n';
}

inline void write_control_csv(const std::vector<ControlCsvRow>& rows,
                              const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "experiment_id,alpha,model,seed,episode,t_unsafe\n";
  for (const auto& r : rows)
    out << r.experiment_id << ',' << format_double(r.alpha) << ',' << r.model
        << ',' << r.seed << ',' << r.episode << ','
        << format_double(r.t_unsafe) << '\n';
}

inline void write_abstain_csv(const std::vector<AbstainCsvRow>& rows,
                              const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "experiment_id,seed,query_index,lower_entropy,abstained\n";
  for (const auto& r : rows)
    out << r.experiment_id << ',' << r.seed << ',' << r.query_index << ','
        << format_double(r.lower_entropy) << ',' << (r.abstained ? 1 : 0)
        << '\n';
}

// Entropy decomposition of a moment-matched ensemble: aleatoric entropy at
// the average member variance, epistemic lift from adding the mean spread.
inline AuEu ebnn_au_eu(const EnsembleSummary& s) {
  double au = 0.0;
  double eu = 0.0;
  for (std::size_t d = 0; d < s.mu_ens.size(); ++d) {
    const double ha = entropy_gaussian_1d(std::max(s.aleatoric_part[d], 1e-300));
    const double ht = entropy_gaussian_1d(std::max(s.var_ens[d], 1e-300));
    au += ha;
    eu += ht - ha;
  }
  return AuEu{au, eu};
}

// Classification counterpart: mean member entropy is aleatoric, the Jensen
// gap of the averaged distribution is epistemic.
inline AuEu ebnn_au_eu_classification(
    const std::vector<ClassificationPredictive>& members) {
  detail::require(!members.empty(), "ebnn_au_eu_classification: no members");
  const std::size_t d = members.front().probs.size();
  std::vector<double> mean(d, 0.0);
  double mean_h = 0.0;
  for (const auto& m : members) {
    for (std::size_t i = 0; i < d; ++i)
      mean[i] += m.probs.probs[i] / static_cast<double>(members.size());
    mean_h += entropy_categorical(m.probs) / static_cast<double>(members.size());
  }
  const double h_total = entropy_categorical(CategoricalDist(mean));
  return AuEu{mean_h, std::max(0.0, h_total - mean_h)};
}

// Training data for one run seed; the experiment loops and the train
// subcommand share this so a saved posterior bundle matches the experiment.
inline Dataset build_training_data(const ExperimentConfig& cfg,
                                   std::uint64_t seed) {
  switch (cfg.task) {
    case Task::regression_uq:
      return gen_regression(cfg.train_size, hash_combine(seed, 101));
    case Task::classification_uq:
      return gen_classification(cfg.train_size, hash_combine(seed, 101), 0);
    case Task::trajectory_coverage:
      return trajectory_dataset(gen_trajectories(
          cfg.train_size, hash_combine(seed, 101), TrajectorySplit::in_dist));
    case Task::glucose_control:
      return build_glucose_training(cfg.control.train_episodes,
                                    cfg.control.train_steps,
                                    hash_combine(seed, 101), GlucoseParams{},
                                    cfg.control.max_dose);
  }
  throw std::logic_error("unreachable task");
}

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double au_threshold(const AuCheckConfig& a, std::size_t n_members) {
  return a.phi + (a.use_hull_bound
                      ? std::log(static_cast<double>(n_members))
                      : 0.0);
}

inline void run_regression_task(const ExperimentConfig& cfg,
                                ExperimentResult& res) {
  for (std::uint64_t seed : cfg.seeds) {
    const Dataset train = build_training_data(cfg, seed);
    const Dataset test = gen_regression(cfg.test_size, hash_combine(seed, 202));
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    const PosteriorCredalSet pcs =
        train_ibnn(cfg.priors, cfg.likelihoods, train, tc);
    if (pcs.degenerate) res.manifest["warnings"].push_back(pcs.warning);

    const std::size_t n = test.size();
    std::vector<PredictiveCredalSet> preds;
    preds.reserve(n);
    std::vector<AuEu> ib_ue;
    std::vector<EnsembleSummary> ens;
    std::vector<AuEu> eb_ue;
    RngStream pred_rng(hash_combine(seed, 303), 0);
    for (std::size_t i = 0; i < n; ++i) {
      RngStream r = pred_rng.substream(i);
      preds.push_back(predictive_credal_set(pcs, test.inputs[i], cfg.n_mc, r));
      ib_ue.push_back(predictive_au_eu(preds.back()));
      ens.push_back(ebnn_combine(preds.back()));
      eb_ue.push_back(ebnn_au_eu(ens.back()));
    }

    std::vector<bool> keep(n, true);
    if (cfg.au_check.enabled) {
      const double thr = au_threshold(cfg.au_check, pcs.posteriors.size());
      for (std::size_t i = 0; i < n; ++i) {
        const bool abstain = ib_ue[i].au > thr;
        keep[i] = !abstain;
        res.abstain_rows.push_back(
            {cfg.experiment_id, seed, i, ib_ue[i].au, abstain});
      }
    }
    std::size_t kept = 0;
    for (bool k : keep) kept += k ? 1 : 0;
    if (kept == 0) {
      res.manifest["warnings"].push_back(
          "seed " + std::to_string(seed) +
          ": every query abstained; no coverage rows emitted");
      continue;
    }

    double ib_au = 0.0, ib_eu = 0.0, eb_au = 0.0, eb_eu = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!keep[i]) continue;
      ib_au += ib_ue[i].au;
      ib_eu += ib_ue[i].eu;
      eb_au += eb_ue[i].au;
      eb_eu += eb_ue[i].eu;
    }
    ib_au /= static_cast<double>(kept);
    ib_eu /= static_cast<double>(kept);
    eb_au /= static_cast<double>(kept);
    eb_eu /= static_cast<double>(kept);

    for (double alpha : cfg.alphas) {
      double ib_cov = 0.0, ib_w = 0.0, eb_cov = 0.0, eb_w = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!keep[i]) continue;
        const double y = test.targets[i][0];
        const Region1D ib = ihdr(preds[i], alpha, cfg.hdr_method, 0);
        ib_cov += ib.contains(y) ? 1.0 : 0.0;
        ib_w += ib.total_width();
        const Region1D eb = ebnn_hdr(ens[i], alpha, 0);
        eb_cov += eb.contains(y) ? 1.0 : 0.0;
        eb_w += eb.total_width();
      }
      const double dk = static_cast<double>(kept);
      res.rows.push_back({cfg.experiment_id, alpha, "ibnn", ib_cov / dk,
                          ib_cov / dk, ib_w / dk, ib_au, ib_eu, seed});
      res.rows.push_back({cfg.experiment_id, alpha, "ebnn", eb_cov / dk,
                          eb_cov / dk, eb_w / dk, eb_au, eb_eu, seed});
    }
  }
}

inline void run_classification_task(const ExperimentConfig& cfg,
                                    ExperimentResult& res) {
  json trends = json::array();
  for (std::uint64_t seed : cfg.seeds) {
    const Dataset train = build_training_data(cfg, seed);
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    const PosteriorCredalSet pcs =
        train_ibnn(cfg.priors, cfg.likelihoods, train, tc);
    if (pcs.degenerate) res.manifest["warnings"].push_back(pcs.warning);

    std::vector<std::pair<int, std::array<double, 3>>> trend_points;
    for (int severity : cfg.severities) {
      const std::string cell_id =
          cfg.experiment_id + "-s" + std::to_string(severity);
      const Dataset test = gen_classification(
          cfg.test_size, hash_combine(seed, 202 + 1000 * severity), severity);
      const std::size_t n = test.size();
      std::vector<PredictiveCredalSet> preds;
      preds.reserve(n);
      std::vector<AuEu> ib_ue, eb_ue;
      std::vector<EnsembleClassification> ens;
      RngStream pred_rng(hash_combine(seed, 303 + 1000 * severity), 0);
      for (std::size_t i = 0; i < n; ++i) {
        RngStream r = pred_rng.substream(i);
        preds.push_back(
            predictive_credal_set(pcs, test.inputs[i], cfg.n_mc, r));
        ib_ue.push_back(predictive_au_eu(preds.back()));
        ens.push_back(ebnn_combine_classification(preds.back().classification));
        eb_ue.push_back(ebnn_au_eu_classification(preds.back().classification));
      }

      std::vector<bool> keep(n, true);
      if (cfg.au_check.enabled) {
        const double thr = au_threshold(cfg.au_check, pcs.posteriors.size());
        for (std::size_t i = 0; i < n; ++i) {
          const bool abstain = ib_ue[i].au > thr;
          keep[i] = !abstain;
          res.abstain_rows.push_back({cell_id, seed, i, ib_ue[i].au, abstain});
        }
      }
      std::size_t kept = 0;
      for (bool k : keep) kept += k ? 1 : 0;
      if (kept == 0) {
        res.manifest["warnings"].push_back(
            cell_id + " seed " + std::to_string(seed) +
            ": every query abstained; no coverage rows emitted");
        continue;
      }

      double ib_au = 0.0, ib_eu = 0.0, eb_au = 0.0, eb_eu = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!keep[i]) continue;
        ib_au += ib_ue[i].au;
        ib_eu += ib_ue[i].eu;
        eb_au += eb_ue[i].au;
        eb_eu += eb_ue[i].eu;
      }
      const double dk = static_cast<double>(kept);
      ib_au /= dk;
      ib_eu /= dk;
      eb_au /= dk;
      eb_eu /= dk;
      trend_points.push_back({severity, {ib_au, ib_eu, eb_au}});

      for (double alpha : cfg.alphas) {
        double ib_cov = 0.0, ib_w = 0.0, eb_cov = 0.0, eb_w = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (!keep[i]) continue;
          const int label = test.labels[i];
          const CredibleLabelSet ics = imprecise_credible_set(preds[i], alpha);
          const bool ib_hit = std::find(ics.labels.begin(), ics.labels.end(),
                                        label) != ics.labels.end();
          ib_cov += ib_hit ? 1.0 : 0.0;
          ib_w += static_cast<double>(ics.labels.size());
          const CredibleLabelSet cs = credible_set(ens[i].probs, alpha);
          const bool eb_hit = std::find(cs.labels.begin(), cs.labels.end(),
                                        label) != cs.labels.end();
          eb_cov += eb_hit ? 1.0 : 0.0;
          eb_w += static_cast<double>(cs.labels.size());
        }
        res.rows.push_back({cell_id, alpha, "ibnn", ib_cov / dk, ib_cov / dk,
                            ib_w / dk, ib_au, ib_eu, seed});
        res.rows.push_back({cell_id, alpha, "ebnn", eb_cov / dk, eb_cov / dk,
                            eb_w / dk, eb_au, eb_eu, seed});
      }
    }

    if (trend_points.size() >= 3) {
      std::sort(trend_points.begin(), trend_points.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      std::vector<double> sev, au_i, eu_i, au_e;
      for (const auto& [s, v] : trend_points) {
        sev.push_back(static_cast<double>(s));
        au_i.push_back(v[0]);
        eu_i.push_back(v[1]);
        au_e.push_back(v[2]);
      }
      json t;
      t["seed"] = seed;
      t["severities"] = sev;
      t["ibnn_au"] = au_i;
      t["ibnn_eu"] = eu_i;
      t["ebnn_au"] = au_e;
      t["ibnn_au_spearman"] = monotone_trend(au_i).spearman;
      t["ibnn_eu_spearman"] = monotone_trend(eu_i).spearman;
      t["ebnn_au_spearman"] = monotone_trend(au_e).spearman;
      trends.push_back(t);
    }
  }
  res.manifest["classification_trends"] = trends;
}

inline void run_trajectory_task(const ExperimentConfig& cfg,
                                ExperimentResult& res) {
  res.manifest["bonferroni"] =
      json{{"total_dims", 2 * kTrajectoryHorizon}, {"split", "alpha/dims"}};
  for (std::uint64_t seed : cfg.seeds) {
    const Dataset train = build_training_data(cfg, seed);
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    const PosteriorCredalSet pcs =
        train_ibnn(cfg.priors, cfg.likelihoods, train, tc);
    if (pcs.degenerate) res.manifest["warnings"].push_back(pcs.warning);

    for (TrajectorySplit split :
         {TrajectorySplit::in_dist, TrajectorySplit::ood}) {
      const bool ood = split == TrajectorySplit::ood;
      const std::string cell_id =
          cfg.experiment_id + (ood ? "-ood" : "-in_dist");
      const auto tests = gen_trajectories(
          cfg.test_size, hash_combine(seed, ood ? 303 : 202), split);
      std::vector<std::vector<MemberRollout>> rollouts;
      rollouts.reserve(tests.size());
      std::vector<StepTruth> truths;
      truths.reserve(tests.size());
      double ib_au = 0.0, ib_eu = 0.0, eb_au = 0.0, eb_eu = 0.0;
      RngStream roll_rng(hash_combine(seed, ood ? 404 : 505), 0);
      for (std::size_t i = 0; i < tests.size(); ++i) {
        RngStream r = roll_rng.substream(i);
        rollouts.push_back(rollout_credal(pcs, tests[i], cfg.n_mc, r));
        truths.push_back(trajectory_truth(tests[i]));
        const TrajectoryAuEu iue = trajectory_au_eu(rollouts.back());
        const TrajectoryAuEu eue = trajectory_ebnn_au_eu(rollouts.back());
        ib_au += iue.au;
        ib_eu += iue.eu;
        eb_au += eue.au;
        eb_eu += eue.eu;
      }
      const double dn = static_cast<double>(tests.size());
      ib_au /= dn;
      ib_eu /= dn;
      eb_au /= dn;
      eb_eu /= dn;

      for (double alpha : cfg.alphas) {
        std::vector<StepBoxes> ib, eb;
        ib.reserve(tests.size());
        eb.reserve(tests.size());
        for (const auto& roll : rollouts) {
          ib.push_back(trajectory_boxes_ibnn(roll, alpha));
          eb.push_back(trajectory_boxes_ebnn(roll, alpha));
        }
        const CoverageReport ibr = coverage_report(ib, truths, alpha);
        const CoverageReport ebr = coverage_report(eb, truths, alpha);
        res.rows.push_back({cell_id, alpha, "ibnn", ibr.one_step,
                            ibr.multi_step, ibr.mean_region_width, ib_au,
                            ib_eu, seed});
        res.rows.push_back({cell_id, alpha, "ebnn", ebr.one_step,
                            ebr.multi_step, ebr.mean_region_width, eb_au,
                            eb_eu, seed});
      }
    }
  }
}

inline void run_control_task(const ExperimentConfig& cfg,
                             ExperimentResult& res) {
  const ControlConfig& cc = cfg.control;
  const GlucoseParams params;
  MpcParams mp;
  mp.n_candidates = cc.mpc_candidates;
  mp.horizon = cc.mpc_horizon;
  mp.max_dose = cc.max_dose;

  for (std::uint64_t seed : cfg.seeds) {
    const Dataset train = build_training_data(cfg, seed);
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    const PosteriorCredalSet pcs =
        train_ibnn(cfg.priors, cfg.likelihoods, train, tc);
    if (pcs.degenerate) res.manifest["warnings"].push_back(pcs.warning);

    for (double alpha : cfg.alphas) {
      for (UqMode mode : {UqMode::ibnn, UqMode::ebnn}) {
        const std::string model = mode == UqMode::ibnn ? "ibnn" : "ebnn";
        PosteriorRolloutModel rollout(pcs, cc.n_mc, alpha, mode, params);
        double cov = 0.0, width = 0.0, au = 0.0, eu = 0.0;
        std::size_t steps_total = 0;
        for (std::size_t e = 0; e < cc.episodes; ++e) {
          // Episode setup depends only on (seed, episode), so both models
          // and every alpha face identical meals, start states, and noise.
          RngStream ep_rng(hash_combine(seed, 606), e);
          MealSchedule meals;
          const int shift = static_cast<int>(
              std::floor(ep_rng.uniform(-cc.meal_shift_max,
                                        cc.meal_shift_max + 1.0)));
          const double scale =
              ep_rng.uniform(cc.meal_scale_min, cc.meal_scale_max);
          for (const auto& m : cc.meals)
            meals.push_back({std::max(1, m.step + shift), m.carbs * scale});
          const double g0 = ep_rng.uniform(100.0, 180.0);
          const ControlEpisode ep = run_control_episode(
              rollout, meals, cc.episode_steps, seed, e, g0, params, mp);
          res.control_rows.push_back(
              {cfg.experiment_id, alpha, model, seed, e, ep.t_unsafe});
          for (std::size_t t = 0; t < ep.planned.size(); ++t) {
            const double realized = ep.trace[t + 1];
            cov += (realized >= ep.planned[t].lo &&
                    realized <= ep.planned[t].hi)
                       ? 1.0
                       : 0.0;
            width += ep.planned[t].hi - ep.planned[t].lo;
            au += ep.planned[t].au;
            eu += ep.planned[t].eu;
            ++steps_total;
          }
        }
        const double dn = static_cast<double>(steps_total);
        res.rows.push_back({cfg.experiment_id, alpha, model, cov / dn,
                            cov / dn, width / dn, au / dn, eu / dn, seed});
      }
    }
  }

  // Paired safety summary per alpha over all (seed, episode) pairs.
  json summary = json::array();
  for (double alpha : cfg.alphas) {
    double mean_i = 0.0, mean_e = 0.0;
    std::size_t n_pairs = 0;
    double diff_sum = 0.0;
    std::size_t n_defined = 0;
    for (std::uint64_t seed : cfg.seeds) {
      for (std::size_t e = 0; e < cc.episodes; ++e) {
        double ti = -1.0, te = -1.0;
        for (const auto& r : res.control_rows) {
          if (r.alpha == alpha && r.seed == seed && r.episode == e) {
            if (r.model == "ibnn") ti = r.t_unsafe;
            if (r.model == "ebnn") te = r.t_unsafe;
          }
        }
        if (ti < 0.0 || te < 0.0) continue;
        mean_i += ti;
        mean_e += te;
        ++n_pairs;
        const std::optional<double> pd = perf_diff(te, ti);
        if (pd) {
          diff_sum += *pd;
          ++n_defined;
        }
      }
    }
    json s;
    s["alpha"] = alpha;
    s["n_pairs"] = n_pairs;
    s["mean_t_unsafe_ibnn"] = mean_i / std::max<std::size_t>(n_pairs, 1);
    s["mean_t_unsafe_ebnn"] = mean_e / std::max<std::size_t>(n_pairs, 1);
    s["n_perf_diff_defined"] = n_defined;
    if (n_defined > 0)
      s["mean_perf_diff"] = diff_sum / static_cast<double>(n_defined);
    else
      s["mean_perf_diff"] = nullptr;
    summary.push_back(s);
  }
  res.manifest["control_summary"] = summary;
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const std::string& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult res;
  res.manifest["warnings"] = json::array();
  switch (cfg.task) {
    case Task::regression_uq:
      detail::run_regression_task(cfg, res);
      break;
    case Task::classification_uq:
      detail::run_classification_task(cfg, res);
      break;
    case Task::trajectory_coverage:
      detail::run_trajectory_task(cfg, res);
      break;
    case Task::glucose_control:
      detail::run_control_task(cfg, res);
      break;
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  res.manifest["task"] = to_string(cfg.task);
  res.manifest["config_hash"] = config_hash(to_json(cfg));
  res.manifest["seeds"] = cfg.seeds;
  res.manifest["versions"] = json{{"library", kLibraryVersion},
                                  {"config_schema", kConfigSchemaVersion},
                                  {"csv_schema", kCsvSchemaVersion}};
  res.manifest["wall_time"] = wall;
  write_results_csv(res.rows, out_dir + "/results.csv");
  if (cfg.task == Task::glucose_control)
    write_control_csv(res.control_rows, out_dir + "/control.csv");
  if (cfg.au_check.enabled)
    write_abstain_csv(res.abstain_rows, out_dir + "/abstentions.csv");
  write_json_file(res.manifest, out_dir + "/manifest.json");
  return res;
}

}  // namespace ibnn
