#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ibnn/ibnn.hpp"
#include "ibnn/net.hpp"
#include "ibnn/regions.hpp"
#include "ibnn/vi.hpp"

namespace ibnn {

using json = nlohmann::json;

namespace detail {

inline void require_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
  if (!j.is_object())
    throw std::invalid_argument(where + ": expected a JSON object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const auto& k : allowed)
      if (item.key() == k) {
        ok = true;
        break;
      }
    if (!ok)
      throw std::invalid_argument(where + ": unknown key '" + item.key() + "'");
  }
}

inline const json& require_field(const json& j, const std::string& key,
                                 const std::string& where) {
  auto it = j.find(key);
  if (it == j.end())
    throw std::invalid_argument(where + ": missing key '" + key + "'");
  return *it;
}

}  // namespace detail

inline std::string to_string(Activation a) {
  return a == Activation::relu ? "relu" : "tanh";
}

inline std::string to_string(Head h) {
  return h == Head::gaussian_regression ? "gaussian_regression"
                                        : "categorical_softmax";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

inline Head head_from_string(const std::string& s) {
  if (s == "gaussian_regression") return Head::gaussian_regression;
  if (s == "categorical_softmax") return Head::categorical_softmax;
  throw std::invalid_argument("unknown head '" + s + "'");
}

inline json to_json(const MlpArchitecture& arch) {
  return json{{"layer_widths", arch.layer_widths},
              {"activation", to_string(arch.activation)},
              {"head", to_string(arch.head)}};
}

inline MlpArchitecture architecture_from_json(const json& j) {
  detail::require_keys(j, {"layer_widths", "activation", "head"},
                       "architecture");
  MlpArchitecture arch;
  arch.layer_widths = detail::require_field(j, "layer_widths", "architecture")
                          .get<std::vector<int>>();
  arch.activation = activation_from_string(
      detail::require_field(j, "activation", "architecture")
          .get<std::string>());
  arch.head = head_from_string(
      detail::require_field(j, "head", "architecture").get<std::string>());
  arch.validate();
  return arch;
}

inline json to_json(const MeanFieldPosterior& q) {
  return json{{"architecture", to_json(q.arch)},
              {"mean", q.mean},
              {"log_var", q.log_var},
              {"noise_var", q.noise_var},
              {"metadata",
               {{"seed", q.metadata.seed},
                {"final_elbo", q.metadata.final_elbo},
                {"epochs", q.metadata.epochs}}}};
}

inline MeanFieldPosterior posterior_from_json(const json& j) {
  detail::require_keys(
      j, {"architecture", "mean", "log_var", "noise_var", "metadata"},
      "posterior");
  MeanFieldPosterior q;
  q.arch = architecture_from_json(
      detail::require_field(j, "architecture", "posterior"));
  q.mean =
      detail::require_field(j, "mean", "posterior").get<std::vector<double>>();
  q.log_var = detail::require_field(j, "log_var", "posterior")
                  .get<std::vector<double>>();
  q.noise_var =
      detail::require_field(j, "noise_var", "posterior").get<double>();
  const json& meta = detail::require_field(j, "metadata", "posterior");
  detail::require_keys(meta, {"seed", "final_elbo", "epochs"},
                       "posterior.metadata");
  q.metadata.seed =
      detail::require_field(meta, "seed", "posterior.metadata")
          .get<std::uint64_t>();
  q.metadata.final_elbo =
      detail::require_field(meta, "final_elbo", "posterior.metadata")
          .get<double>();
  q.metadata.epochs =
      detail::require_field(meta, "epochs", "posterior.metadata")
          .get<std::size_t>();
  q.validate();
  return q;
}

inline json to_json(const PosteriorCredalSet& pcs) {
  json members = json::array();
  for (const auto& q : pcs.posteriors) members.push_back(to_json(q));
  json provenance = json::array();
  for (const auto& [i, j] : pcs.provenance)
    provenance.push_back(json::array({i, j}));
  return json{{"schema_version", 1},
              {"members", members},
              {"provenance", provenance},
              {"degenerate", pcs.degenerate},
              {"warning", pcs.warning}};
}

inline PosteriorCredalSet credal_set_from_json(const json& j) {
  detail::require_keys(
      j, {"schema_version", "members", "provenance", "degenerate", "warning"},
      "posterior bundle");
  const int version =
      detail::require_field(j, "schema_version", "posterior bundle")
          .get<int>();
  if (version != 1)
    throw std::invalid_argument("posterior bundle: unsupported schema_version " +
                                std::to_string(version));
  PosteriorCredalSet pcs;
  for (const auto& m :
       detail::require_field(j, "members", "posterior bundle"))
    pcs.posteriors.push_back(posterior_from_json(m));
  for (const auto& p :
       detail::require_field(j, "provenance", "posterior bundle")) {
    if (!p.is_array() || p.size() != 2)
      throw std::invalid_argument("posterior bundle: bad provenance entry");
    pcs.provenance.emplace_back(p[0].get<std::size_t>(),
                                p[1].get<std::size_t>());
  }
  pcs.degenerate =
      detail::require_field(j, "degenerate", "posterior bundle").get<bool>();
  pcs.warning =
      detail::require_field(j, "warning", "posterior bundle").get<std::string>();
  if (pcs.posteriors.empty())
    throw std::invalid_argument("posterior bundle: no members");
  if (pcs.provenance.size() != pcs.posteriors.size())
    throw std::invalid_argument(
        "posterior bundle: provenance size mismatch");
  return pcs;
}

inline json to_json(const Region1D& r) {
  json intervals = json::array();
  for (const auto& iv : r.intervals)
    intervals.push_back(json::array({iv.lo, iv.hi}));
  return json{{"level", r.level}, {"intervals", intervals}};
}

inline Region1D region_from_json(const json& j) {
  detail::require_keys(j, {"level", "intervals"}, "region");
  const double level = detail::require_field(j, "level", "region").get<double>();
  std::vector<Interval> ivs;
  for (const auto& iv : detail::require_field(j, "intervals", "region")) {
    if (!iv.is_array() || iv.size() != 2)
      throw std::invalid_argument("region: bad interval entry");
    ivs.push_back({iv[0].get<double>(), iv[1].get<double>()});
  }
  return Region1D(level, ivs);
}

inline void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return json::parse(in);
}

}  // namespace ibnn
