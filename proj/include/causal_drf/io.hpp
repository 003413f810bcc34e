#pragma once

// CSV ingestion, JSON configuration and model persistence.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "causal_drf/config.hpp"
#include "causal_drf/dataset.hpp"
#include "causal_drf/error.hpp"
#include "causal_drf/forest.hpp"
#include "causal_drf/inference.hpp"
#include "causal_drf/kernel.hpp"
#include "causal_drf/simulation.hpp"

namespace causal_drf::io {

using nlohmann::json;

inline constexpr std::string_view kModelSchema = "causal-drf-model/v1";

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

// ---------------------------------------------------------------------------
// Data schema and CSV ingestion

struct DataSchema {
  std::vector<std::string> covariate_columns;
  std::string treatment_column;
  std::vector<std::string> outcome_columns;
  bool standardize_outcomes = false;

  void validate() const {
    if (covariate_columns.empty()) throw InvalidConfig("schema needs at least one covariate column");
    if (outcome_columns.empty()) throw InvalidConfig("schema needs at least one outcome column");
    if (treatment_column.empty()) throw InvalidConfig("schema needs a treatment column");
    std::vector<std::string> all = covariate_columns;
    all.insert(all.end(), outcome_columns.begin(), outcome_columns.end());
    all.push_back(treatment_column);
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end())
      throw InvalidConfig("schema column sets must be disjoint");
  }
};

inline DataSchema schema_from_json(const json& j) {
  DataSchema s;
  s.covariate_columns = j.at("covariates").get<std::vector<std::string>>();
  s.treatment_column = j.at("treatment").get<std::string>();
  s.outcome_columns = j.at("outcomes").get<std::vector<std::string>>();
  s.standardize_outcomes = j.value("standardize_outcomes", false);
  s.validate();
  return s;
}

// Per-outcome-column affine transform y -> (y - mean) / sd.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> sd;

  double inverse(int column, double z) const {
    return z * sd[static_cast<std::size_t>(column)] + mean[static_cast<std::size_t>(column)];
  }
};

struct LoadedData {
  Dataset data;
  std::vector<std::string> covariate_names;
  std::vector<std::string> outcome_names;
  std::optional<Standardization> standardization;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) return out;
    start = comma + 1;
  }
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

// Rows are numbered from 1 (the first line after the header).
inline LoadedData read_csv(std::istream& in, const DataSchema& schema) {
  schema.validate();
  std::string line;
  if (!std::getline(in, line)) throw ParseError(0, "", "missing header row");
  std::vector<std::string> header;
  for (auto field : detail::split_fields(line)) header.emplace_back(field);
  auto column_index = [&](const std::string& name) {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return k;
    throw MissingColumn(name);
  };
  std::vector<std::size_t> cov_idx, out_idx;
  for (const auto& c : schema.covariate_columns) cov_idx.push_back(column_index(c));
  for (const auto& c : schema.outcome_columns) out_idx.push_back(column_index(c));
  const std::size_t treat_idx = column_index(schema.treatment_column);

  std::vector<double> xs, ys;
  std::vector<std::uint8_t> ws;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto fields = detail::split_fields(line);
    if (fields.size() != header.size())
      throw ParseError(row, "", "expected " + std::to_string(header.size()) + " fields, found " +
                                    std::to_string(fields.size()));
    auto number = [&](std::size_t idx) {
      const auto v = detail::parse_double(fields[idx]);
      if (!v) throw ParseError(row, header[idx], "not a finite number: '" + std::string(fields[idx]) + "'");
      return *v;
    };
    for (auto idx : cov_idx) xs.push_back(number(idx));
    for (auto idx : out_idx) ys.push_back(number(idx));
    const auto t = detail::parse_double(fields[treat_idx]);
    if (!t || (*t != 0.0 && *t != 1.0)) throw NonBinaryTreatment(row, std::string(fields[treat_idx]));
    ws.push_back(static_cast<std::uint8_t>(*t));
  }

  LoadedData out;
  const auto n = static_cast<Eigen::Index>(ws.size());
  const auto p = static_cast<Eigen::Index>(cov_idx.size());
  const auto d = static_cast<Eigen::Index>(out_idx.size());
  out.data.X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(xs.data(), n, p);
  out.data.Y = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(ys.data(), n, d);
  out.data.W = std::move(ws);
  out.covariate_names = schema.covariate_columns;
  out.outcome_names = schema.outcome_columns;

  if (schema.standardize_outcomes) {
    if (n < 2) throw InsufficientData("standardization needs at least two rows");
    Standardization s;
    for (Eigen::Index k = 0; k < d; ++k) {
      auto col = out.data.Y.col(k);
      const double mean = col.mean();
      const double sd = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(n - 1));
      if (!(sd > 0.0)) throw InvalidConfig("outcome column '" + schema.outcome_columns[static_cast<std::size_t>(k)] + "' is constant");
      col = (col.array() - mean) / sd;
      s.mean.push_back(mean);
      s.sd.push_back(sd);
    }
    out.standardization = std::move(s);
  }
  return out;
}

inline LoadedData load_csv(const std::string& path, const DataSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open data file: " + path);
  return read_csv(in, schema);
}

// ---------------------------------------------------------------------------
// Forest configuration

inline json to_json(const ForestConfig& c) {
  return json{{"num_trees", c.num_trees},
              {"num_groups", c.num_groups},
              {"min_leaf_per_arm", c.min_leaf_per_arm},
              {"alpha_regularity", c.alpha_regularity},
              {"subsample_exponent", c.subsample_exponent},
              {"mtry", c.mtry},
              {"fourier_features", c.fourier_features},
              {"honesty_fraction", c.honesty_fraction},
              {"split_mode", std::string(to_string(c.split_mode))},
              {"seed", c.seed},
              {"significance", c.significance},
              {"plain_min_node_size", c.plain_min_node_size}};
}

// Fields present in `j` override `base`; unknown keys are rejected.
inline ForestConfig config_from_json(const json& j, ForestConfig base = {}) {
  if (!j.is_object()) throw InvalidConfig("forest configuration must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "num_trees") base.num_trees = value.get<int>();
      else if (key == "num_groups") base.num_groups = value.get<int>();
      else if (key == "min_leaf_per_arm") base.min_leaf_per_arm = value.get<int>();
      else if (key == "alpha_regularity") base.alpha_regularity = value.get<double>();
      else if (key == "subsample_exponent") base.subsample_exponent = value.get<double>();
      else if (key == "mtry") base.mtry = value.get<int>();
      else if (key == "fourier_features") base.fourier_features = value.get<int>();
      else if (key == "honesty_fraction") base.honesty_fraction = value.get<double>();
      else if (key == "split_mode") base.split_mode = split_mode_from_string(value.get<std::string>());
      else if (key == "seed") base.seed = value.get<std::uint64_t>();
      else if (key == "significance") base.significance = value.get<double>();
      else if (key == "plain_min_node_size") base.plain_min_node_size = value.get<int>();
      else throw InvalidConfig("unknown configuration key: " + key);
    } catch (const json::exception& e) {
      throw InvalidConfig("bad value for '" + key + "': " + e.what());
    }
  }
  return base;
}

// ---------------------------------------------------------------------------
// Model persistence

struct ModelFile {
  CausalDRFModel model;
  std::vector<std::string> covariate_names;
  std::vector<std::string> outcome_names;
  std::optional<Standardization> standardization;
};

namespace detail {

inline json matrix_rows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_rows(const json& rows, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const auto& r = rows.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(r.size()) != cols) throw CorruptModel("ragged matrix in model file");
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r.at(static_cast<std::size_t>(j)).get<double>();
  }
  return m;
}

inline json tree_to_json(const Tree& t) {
  json nodes = json::array();
  for (const auto& n : t.nodes) {
    json rec{{"build_count", n.build_count}};
    if (n.is_leaf()) {
      rec["members"] = n.members;
    } else {
      rec["feature"] = n.feature;
      rec["threshold"] = n.threshold;
      rec["left"] = n.left;
      rec["right"] = n.right;
    }
    nodes.push_back(std::move(rec));
  }
  return json{{"mode", std::string(to_string(t.mode))},
              {"build_rows", t.build_rows},
              {"populate_rows", t.populate_rows},
              {"nodes", std::move(nodes)}};
}

inline Tree tree_from_json(const json& j, Eigen::Index n, int p) {
  Tree t;
  t.mode = split_mode_from_string(j.at("mode").get<std::string>());
  t.build_rows = j.at("build_rows").get<std::vector<int>>();
  t.populate_rows = j.at("populate_rows").get<std::vector<int>>();
  const auto& nodes = j.at("nodes");
  t.nodes.resize(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const auto& rec = nodes[k];
    auto& nd = t.nodes[k];
    nd.build_count = rec.at("build_count").get<int>();
    if (rec.contains("members")) {
      nd.members = rec.at("members").get<std::vector<int>>();
      if (nd.members.empty()) throw CorruptModel("empty leaf in model file");
      for (int i : nd.members)
        if (i < 0 || i >= n) throw CorruptModel("leaf member out of range");
    } else {
      nd.feature = rec.at("feature").get<int>();
      nd.threshold = rec.at("threshold").get<double>();
      nd.left = rec.at("left").get<int>();
      nd.right = rec.at("right").get<int>();
      const auto limit = static_cast<int>(nodes.size());
      if (nd.feature < 0 || nd.feature >= p || nd.left <= static_cast<int>(k) || nd.right <= static_cast<int>(k) ||
          nd.left >= limit || nd.right >= limit)
        throw CorruptModel("malformed tree node");
    }
  }
  if (t.nodes.empty()) throw CorruptModel("tree without nodes");
  return t;
}

}  // namespace detail

inline json model_payload(const CausalDRFModel& model, const std::vector<std::string>& covariate_names,
                          const std::vector<std::string>& outcome_names,
                          const std::optional<Standardization>& standardization) {
  const Dataset& d = model.dataset();
  json groups = json::array();
  for (const auto& g : model.groups()) {
    json trees = json::array();
    for (const auto& t : g.trees) trees.push_back(detail::tree_to_json(t));
    groups.push_back(json{{"half_sample", g.half_sample}, {"trees", std::move(trees)}});
  }
  json payload{{"config", to_json(model.config())},
               {"kernel", json{{"bandwidth", model.kernel().bandwidth}, {"outcome_dim", model.kernel().outcome_dim}}},
               {"groups", std::move(groups)},
               {"data", json{{"X", detail::matrix_rows(d.X)}, {"W", d.W}, {"Y", detail::matrix_rows(d.Y)}}},
               {"covariate_names", covariate_names},
               {"outcome_names", outcome_names}};
  if (standardization)
    payload["standardization"] = json{{"mean", standardization->mean}, {"sd", standardization->sd}};
  else
    payload["standardization"] = nullptr;
  return payload;
}

inline json model_to_json(const CausalDRFModel& model, const std::vector<std::string>& covariate_names = {},
                          const std::vector<std::string>& outcome_names = {},
                          const std::optional<Standardization>& standardization = std::nullopt) {
  json payload = model_payload(model, covariate_names, outcome_names, standardization);
  const std::string hash = hex64(fnv1a(payload.dump()));
  return json{{"schema", std::string(kModelSchema)}, {"content_hash", hash}, {"model", std::move(payload)}};
}

inline ModelFile model_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("schema")) throw SchemaVersionMismatch("model file has no schema tag");
  if (doc.at("schema") != kModelSchema)
    throw SchemaVersionMismatch("unsupported model schema: " + doc.at("schema").dump());
  try {
    const json& payload = doc.at("model");
    if (doc.at("content_hash").get<std::string>() != hex64(fnv1a(payload.dump())))
      throw CorruptModel("model content hash does not match");

    auto data = std::make_shared<Dataset>();
    const auto& jd = payload.at("data");
    const int dim = payload.at("kernel").at("outcome_dim").get<int>();
    const auto& xrows = jd.at("X");
    const auto p = xrows.empty() ? Eigen::Index{0} : static_cast<Eigen::Index>(xrows.at(0).size());
    data->X = detail::matrix_from_rows(xrows, p);
    data->Y = detail::matrix_from_rows(jd.at("Y"), dim);
    data->W = jd.at("W").get<std::vector<std::uint8_t>>();
    data->validate();

    const ForestConfig config = config_from_json(payload.at("config"));
    const KernelSpec kernel(payload.at("kernel").at("bandwidth").get<double>(), dim);
    std::vector<TreeGroup> groups;
    for (const auto& jg : payload.at("groups")) {
      TreeGroup g;
      g.half_sample = jg.at("half_sample").get<std::vector<int>>();
      for (const auto& jt : jg.at("trees")) g.trees.push_back(detail::tree_from_json(jt, data->size(), data->num_covariates()));
      if (g.trees.empty()) throw CorruptModel("group without trees");
      groups.push_back(std::move(g));
    }
    if (groups.empty()) throw CorruptModel("model without groups");

    ModelFile out{CausalDRFModel(std::move(data), kernel, config, std::move(groups)),
                  payload.at("covariate_names").get<std::vector<std::string>>(),
                  payload.at("outcome_names").get<std::vector<std::string>>(), std::nullopt};
    if (!payload.at("standardization").is_null()) {
      Standardization s;
      s.mean = payload.at("standardization").at("mean").get<std::vector<double>>();
      s.sd = payload.at("standardization").at("sd").get<std::vector<double>>();
      out.standardization = std::move(s);
    }
    return out;
  } catch (const json::exception& e) {
    throw CorruptModel(std::string("malformed model file: ") + e.what());
  } catch (const DimensionMismatch& e) {
    throw CorruptModel(std::string("inconsistent model file: ") + e.what());
  } catch (const InvalidConfig& e) {
    throw CorruptModel(std::string("inconsistent model file: ") + e.what());
  }
}

inline void save_model(const std::string& path, const CausalDRFModel& model,
                       const std::vector<std::string>& covariate_names = {},
                       const std::vector<std::string>& outcome_names = {},
                       const std::optional<Standardization>& standardization = std::nullopt) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write model file: " + path);
  out << model_to_json(model, covariate_names, outcome_names, standardization).dump() << '\n';
}

inline ModelFile load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw CorruptModel(std::string("model file is not valid JSON: ") + e.what());
  }
  return model_from_json(doc);
}

// ---------------------------------------------------------------------------
// Output writers

inline json to_json(const TestResult& t) {
  return json{{"statistic", t.statistic},
              {"q", t.quantile},
              {"alpha", t.alpha},
              {"reject", t.reject},
              {"num_groups", t.resample_values.size()},
              {"resample_values", t.resample_values}};
}

// First line: '#' followed by a JSON header with the test summary; then a
// CSV table y_1..y_d, estimate, lower, upper. Grid coordinates are mapped
// back to original units when a standardization is supplied; the witness
// values live in the kernel's (standardized) space.
inline void write_band_csv(std::ostream& out, const WitnessBand& band, const TestResult& test,
                           const std::optional<Standardization>& standardization = std::nullopt) {
  json header{{"statistic", test.statistic}, {"q", test.quantile}, {"alpha", test.alpha}, {"reject", test.reject},
              {"half_width", band.half_width}};
  out << "# " << header.dump() << '\n';
  const Eigen::Index d = band.grid.cols();
  for (Eigen::Index k = 0; k < d; ++k) out << "y_" << (k + 1) << ',';
  out << "estimate,lower,upper\n";
  for (Eigen::Index g = 0; g < band.grid.rows(); ++g) {
    for (Eigen::Index k = 0; k < d; ++k) {
      const double y = standardization ? standardization->inverse(static_cast<int>(k), band.grid(g, k)) : band.grid(g, k);
      out << format_double(y) << ',';
    }
    out << format_double(band.estimate[g]) << ',' << format_double(band.lower[g]) << ','
        << format_double(band.upper[g]) << '\n';
  }
}

inline void write_study_csv_header(std::ostream& out) {
  out << "regime,n,method,n_sims,mae,coverage,coverage_se,rejection_rate\n";
}

inline void write_study_csv_row(std::ostream& out, const sim::StudyReport& r) {
  out << sim::to_string(r.regime) << ',' << r.n << ',' << sim::to_string(r.method) << ',' << r.n_sims << ','
      << format_double(r.mae_mean) << ',' << format_double(r.coverage_rate) << ',' << format_double(r.coverage_se)
      << ',' << format_double(r.rejection_rate) << '\n';
}

inline json study_metadata(const sim::StudyReport& r, const ForestConfig& config) {
  return json{{"regime", sim::to_string(r.regime)},
              {"n", r.n},
              {"n_sims", r.n_sims},
              {"method", sim::to_string(r.method)},
              {"master_seed", r.seed},
              {"config", to_json(config)},
              {"runtime_seconds", r.runtime_seconds}};
}

}  // namespace causal_drf::io
