// Command-line front end: train posterior bundles, predict with them, run
// the UQ and control experiments, and summarize result directories.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ibnn/experiment.hpp"
#include "ibnn/serialize.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "results";
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
};

ibnn::ExperimentConfig load_config(const CommonArgs& args) {
  ibnn::ExperimentConfig cfg =
      ibnn::config_from_json(ibnn::read_json_file(args.config_path));
  if (args.seed) cfg.seeds = {*args.seed};
  if (args.alpha) cfg.alphas = {*args.alpha};
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool need_config = true) {
  auto* opt = cmd->add_option("--config", args.config_path,
                              "experiment config JSON");
  if (need_config) opt->required();
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "override the config seed list");
  cmd->add_option("--alpha", args.alpha, "override the config alpha list");
}

int cmd_train(const CommonArgs& args) {
  const ibnn::ExperimentConfig cfg = load_config(args);
  const std::uint64_t seed = cfg.seeds.front();
  const auto t0 = std::chrono::steady_clock::now();
  const ibnn::Dataset train = ibnn::build_training_data(cfg, seed);
  ibnn::TrainConfig tc = cfg.train;
  tc.seed = seed;
  const ibnn::PosteriorCredalSet pcs =
      ibnn::train_ibnn(cfg.priors, cfg.likelihoods, train, tc);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  std::filesystem::create_directories(args.out_dir);
  ibnn::write_json_file(ibnn::to_json(pcs), args.out_dir + "/posteriors.json");
  ibnn::json manifest;
  manifest["config_hash"] = ibnn::config_hash(ibnn::to_json(cfg));
  manifest["seeds"] = std::vector<std::uint64_t>{seed};
  manifest["versions"] = ibnn::json{{"library", ibnn::kLibraryVersion},
                                    {"config_schema", ibnn::kConfigSchemaVersion},
                                    {"csv_schema", ibnn::kCsvSchemaVersion}};
  manifest["wall_time"] = wall;
  ibnn::write_json_file(manifest, args.out_dir + "/manifest.json");
  std::cout << "trained " << pcs.posteriors.size() << " members ("
            << cfg.priors.members.size() << " priors x "
            << cfg.likelihoods.members.size() << " likelihoods) in " << wall
            << "s\n";
  if (pcs.degenerate) std::cout << "warning: " << pcs.warning << "\n";
  std::cout << "wrote " << args.out_dir << "/posteriors.json\n";
  return 0;
}

int cmd_predict(const CommonArgs& args, const std::string& posteriors_path,
                const std::string& inputs_path) {
  const ibnn::ExperimentConfig cfg = load_config(args);
  const ibnn::PosteriorCredalSet pcs =
      ibnn::credal_set_from_json(ibnn::read_json_file(posteriors_path));
  const ibnn::json in = ibnn::read_json_file(inputs_path);
  ibnn::detail::require_keys(in, {"points"}, "inputs");
  const auto points = ibnn::detail::require_field(in, "points", "inputs")
                          .get<std::vector<std::vector<double>>>();
  const double alpha = args.alpha.value_or(cfg.alphas.front());
  const std::uint64_t seed = args.seed.value_or(cfg.seeds.front());

  ibnn::json out;
  out["alpha"] = alpha;
  ibnn::json preds = ibnn::json::array();
  ibnn::RngStream rng(seed, 42);
  for (std::size_t i = 0; i < points.size(); ++i) {
    ibnn::RngStream r = rng.substream(i);
    const ibnn::PredictiveCredalSet pred =
        ibnn::predictive_credal_set(pcs, points[i], cfg.n_mc, r);
    const ibnn::AuEu ue = ibnn::predictive_au_eu(pred);
    ibnn::json p;
    p["input"] = points[i];
    p["au"] = ue.au;
    p["eu"] = ue.eu;
    if (!pred.regression.empty()) {
      ibnn::json members = ibnn::json::array();
      for (const auto& m : pred.regression)
        members.push_back({{"mean", m.mean}, {"var", m.var}});
      p["members"] = members;
      const std::size_t d_out = pred.regression.front().mean.size();
      const auto box = ibnn::ihdr_box(pred, alpha, cfg.hdr_method, d_out);
      ibnn::json regions = ibnn::json::array();
      for (const auto& rgn : box) regions.push_back(ibnn::to_json(rgn));
      p["regions"] = regions;
    } else {
      ibnn::json members = ibnn::json::array();
      for (const auto& m : pred.classification)
        members.push_back({{"probs", m.probs.probs}});
      p["members"] = members;
      const ibnn::CredibleLabelSet ics =
          ibnn::imprecise_credible_set(pred, alpha);
      p["labels"] = ics.labels;
      p["achieved_mass"] = ics.achieved_mass;
    }
    preds.push_back(p);
  }
  out["predictions"] = preds;
  std::filesystem::create_directories(args.out_dir);
  ibnn::write_json_file(out, args.out_dir + "/predictions.json");
  std::cout << "wrote " << args.out_dir << "/predictions.json ("
            << points.size() << " points, alpha " << alpha << ")\n";
  return 0;
}

int run_and_report(const CommonArgs& args, bool want_control) {
  const ibnn::ExperimentConfig cfg = load_config(args);
  const bool is_control = cfg.task == ibnn::Task::glucose_control;
  if (want_control != is_control)
    throw std::invalid_argument(
        want_control ? "control: config task must be glucose_control"
                     : "uq: config task must not be glucose_control");
  const ibnn::ExperimentResult res = ibnn::run_experiment(cfg, args.out_dir);
  std::cout << "wrote " << args.out_dir << "/results.csv (" << res.rows.size()
            << " rows)\n";
  if (is_control)
    std::cout << "wrote " << args.out_dir << "/control.csv ("
              << res.control_rows.size() << " rows)\n";
  if (cfg.au_check.enabled)
    std::cout << "wrote " << args.out_dir << "/abstentions.csv ("
              << res.abstain_rows.size() << " rows)\n";
  std::cout << "wrote " << args.out_dir << "/manifest.json\n";
  for (const auto& w : res.manifest["warnings"])
    std::cout << "warning: " << w.get<std::string>() << "\n";
  return 0;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    rows.push_back(std::move(fields));
  }
  return rows;
}

int cmd_report(const std::string& out_dir) {
  const auto rows = read_csv(out_dir + "/results.csv");
  if (rows.size() <= 1) {
    std::cout << "no result rows in " << out_dir << "\n";
    return 0;
  }
  // Aggregate over seeds per (experiment_id, alpha, model).
  struct Agg {
    double one = 0, multi = 0, width = 0, au = 0, eu = 0;
    int n = 0;
  };
  std::map<std::string, Agg> agg;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    Agg& a = agg[r[0] + "," + r[1] + "," + r[2]];
    a.one += std::stod(r[3]);
    a.multi += std::stod(r[4]);
    a.width += std::stod(r[5]);
    a.au += std::stod(r[6]);
    a.eu += std::stod(r[7]);
    a.n += 1;
  }
  std::cout << "experiment_id,alpha,model: one_step multi_step mean_width au "
               "eu (mean over seeds)\n";
  for (const auto& [key, a] : agg) {
    const double n = a.n;
    std::printf("%s: %.4f %.4f %.4f %.4f %.4f\n", key.c_str(), a.one / n,
                a.multi / n, a.width / n, a.au / n, a.eu / n);
  }

  const std::string control_path = out_dir + "/control.csv";
  if (std::filesystem::exists(control_path)) {
    const auto crows = read_csv(control_path);
    // Pair by (alpha, seed, episode); report safety per alpha.
    std::map<std::string, std::pair<double, double>> pairs;  // key -> (ibnn, ebnn)
    for (std::size_t i = 1; i < crows.size(); ++i) {
      const auto& r = crows[i];
      const std::string key = r[1] + "," + r[3] + "," + r[4];
      if (r[2] == "ibnn")
        pairs[key].first = std::stod(r[5]);
      else
        pairs[key].second = std::stod(r[5]);
    }
    std::map<std::string, std::array<double, 4>> by_alpha;  // ti, te, pd, n_pd
    std::map<std::string, int> n_by_alpha;
    for (const auto& [key, te_ti] : pairs) {
      const std::string alpha = key.substr(0, key.find(','));
      auto& acc = by_alpha[alpha];
      acc[0] += te_ti.first;
      acc[1] += te_ti.second;
      const auto pd = ibnn::perf_diff(te_ti.second, te_ti.first);
      if (pd) {
        acc[2] += *pd;
        acc[3] += 1;
      }
      n_by_alpha[alpha] += 1;
    }
    std::cout << "\ncontrol safety (alpha: mean t_unsafe ibnn / ebnn, mean "
                 "perf_diff over defined pairs)\n";
    for (const auto& [alpha, acc] : by_alpha) {
      const double n = n_by_alpha[alpha];
      std::printf("%s: %.3f / %.3f", alpha.c_str(), acc[0] / n, acc[1] / n);
      if (acc[3] > 0)
        std::printf(", perf_diff %.4f (%d pairs)\n", acc[2] / acc[3],
                    static_cast<int>(acc[3]));
      else
        std::printf(", perf_diff undefined (no unsafe baseline episodes)\n");
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"imprecise Bayesian neural network experiments"};
  app.require_subcommand(1);

  CommonArgs train_args, predict_args, uq_args, control_args;
  std::string posteriors_path, inputs_path, report_dir = "results";

  CLI::App* train = app.add_subcommand("train", "train a posterior bundle");
  add_common(train, train_args);

  CLI::App* predict =
      app.add_subcommand("predict", "predict with a posterior bundle");
  add_common(predict, predict_args);
  predict->add_option("--posteriors", posteriors_path, "posterior bundle JSON")
      ->required();
  predict->add_option("--inputs", inputs_path, "query points JSON")->required();

  CLI::App* uq = app.add_subcommand("uq", "run a UQ experiment");
  add_common(uq, uq_args);

  CLI::App* control = app.add_subcommand("control", "run the control benchmark");
  add_common(control, control_args);

  CLI::App* report = app.add_subcommand("report", "summarize a result directory");
  report->add_option("--out", report_dir, "result directory to summarize");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_args);
    if (predict->parsed())
      return cmd_predict(predict_args, posteriors_path, inputs_path);
    if (uq->parsed()) return run_and_report(uq_args, false);
    if (control->parsed()) return run_and_report(control_args, true);
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
