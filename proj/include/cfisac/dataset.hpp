#pragma once

// Line-delimited JSON datasets (one record per scenario, labelled by the
// modified BB search) and evaluation of externally produced predictions.
// Field-by-field layout: docs/dataset_format.md.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfisac/config.hpp"
#include "cfisac/metrics.hpp"
#include "cfisac/parallel.hpp"
#include "cfisac/scenario.hpp"
#include "cfisac/selector.hpp"
#include "json.hpp"

namespace cfisac {

using json = nlohmann::json;

inline constexpr int kDatasetSchemaVersion = 1;
inline constexpr int kPredictionSchemaVersion = 1;

namespace detail {

inline json matrix_json(const Eigen::MatrixXd& A) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < A.cols(); ++j) r.push_back(A(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline json points_json(const std::vector<Point>& pts) {
  json out = json::array();
  for (const Point& p : pts) out.push_back({p.x, p.y});
  return out;
}

inline double number(const json& j, const char* what) {
  if (j.is_null()) return std::numeric_limits<double>::infinity();  // +inf is written as null
  if (!j.is_number()) throw std::runtime_error(std::string("expected a number for '") + what + "'");
  return j.get<double>();
}

inline Eigen::MatrixXd matrix_from(const json& j, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw std::runtime_error(std::string("field '") + what + "' has the wrong number of rows");
  Eigen::MatrixXd A(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& r = j[static_cast<std::size_t>(i)];
    if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols)
      throw std::runtime_error(std::string("field '") + what + "' has the wrong number of columns");
    for (Eigen::Index c = 0; c < cols; ++c) A(i, c) = number(r[static_cast<std::size_t>(c)], what);
  }
  return A;
}

inline Eigen::VectorXd vector_from(const json& j, Eigen::Index n, const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
    throw std::runtime_error(std::string("field '") + what + "' has the wrong length");
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = number(j[static_cast<std::size_t>(i)], what);
  return v;
}

inline std::vector<Point> points_from(const json& j, std::size_t n, const char* what) {
  if (!j.is_array() || j.size() != n) throw std::runtime_error(std::string("field '") + what + "' has the wrong length");
  std::vector<Point> pts;
  for (const json& p : j) pts.push_back({number(p.at(0), what), number(p.at(1), what)});
  return pts;
}

inline std::vector<bool> mask_from_json(const json& j, std::size_t n, const char* what) {
  if (!j.is_array() || j.size() != n) throw std::runtime_error(std::string("field '") + what + "' has the wrong length");
  std::vector<bool> mask;
  for (const json& b : j) {
    if (b.is_boolean()) mask.push_back(b.get<bool>());
    else if (b.is_number_integer() && (b.get<int>() == 0 || b.get<int>() == 1)) mask.push_back(b.get<int>() == 1);
    else throw std::runtime_error(std::string("field '") + what + "' must hold 0/1 or booleans");
  }
  return mask;
}

inline json mask_json(const std::vector<bool>& mask) {
  json out = json::array();
  for (bool b : mask) out.push_back(b ? 1 : 0);
  return out;
}

inline json power_or_null(double w) { return std::isfinite(w) ? json(w) : json(nullptr); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Records

inline json trace_json(const BBTrace& trace) {
  json levels = json::array();
  for (const BBLevel& L : trace.levels) {
    json children = json::array();
    for (const BBChild& c : L.children)
      children.push_back({{"removed_ap", c.removed_ap},
                          {"status", to_string(c.status)},
                          {"solver_status", to_string(c.solver_status)},
                          {"total_power_w", detail::power_or_null(c.total_power_w)}});
    levels.push_back({{"active", L.incumbent},
                      {"incumbent_power_w", L.incumbent_power_w},
                      {"accepted_removal", L.accepted_removal},
                      {"children", std::move(children)}});
  }
  return levels;
}

// Builds the record of one labelled scenario. Timing is deliberately left
// out so that files are reproducible byte for byte.
inline json make_record(const Scenario& sc, const BBResult& bb) {
  const SystemConfig& cfg = sc.config;
  const int M = sc.num_aps(), K = sc.num_ues(), T = static_cast<int>(sc.sensing.chi2.cols());
  const SensingCoefficients& s = sc.sensing;
  json cfg_json = json::object();
  for (const auto& [k, v] : config_entries(cfg)) cfg_json[k] = v;

  Eigen::MatrixXd fading_db(M, K);
  for (int m = 0; m < M; ++m)
    for (int k = 0; k < K; ++k) fading_db(m, k) = linear_to_db(sc.channel.varsigma(m, k));

  json ap_features = json::array();
  for (int m = 0; m < M; ++m)
    ap_features.push_back({sc.geometry.ap[static_cast<std::size_t>(m)].x, sc.geometry.ap[static_cast<std::size_t>(m)].y,
                           s.q_a[m], s.q_b[m], s.q_c[m], cfg.sinr_threshold_linear(),
                           cfg.sensing_enabled() ? json(cfg.crlb_limit_m2) : json(nullptr)});

  json rec;
  rec["schema_version"] = kDatasetSchemaVersion;
  rec["index"] = sc.index;
  rec["master_seed"] = cfg.master_seed;
  rec["config"] = std::move(cfg_json);
  rec["dims"] = {{"M", M}, {"K", K}, {"T", T}};
  rec["features"] = {
      {"ap_columns", {"x_m", "y_m", "q_a", "q_b", "q_c", "gamma_thr", "nu_m2"}},
      {"ap", std::move(ap_features)},
      {"comm_fading_db", detail::matrix_json(fading_db)},
      {"radar_chi2", detail::matrix_json(s.chi2)},
  };
  rec["scenario"] = {
      {"ap_xy", detail::points_json(sc.geometry.ap)},
      {"sr_xy", detail::points_json(sc.geometry.sr)},
      {"ue_xy", detail::points_json(sc.geometry.ue)},
      {"target_xy", {sc.geometry.target.x, sc.geometry.target.y}},
      {"varsigma", detail::matrix_json(sc.channel.varsigma)},
      {"v", detail::matrix_json(sc.channel.v)},
      {"pilot_gram", detail::matrix_json(sc.channel.pilot_gram)},
      {"zeta", s.zeta},
      {"sigma2_dl", sc.sigma2_dl},
  };
  rec["label"] = {
      {"method", "bb"},
      {"active", detail::mask_json(bb.alloc.active)},
      {"P", detail::matrix_json(bb.alloc.P)},
      {"total_power_w", bb.report.total_power_w},
      {"transmit_power_w", bb.report.transmit_power_w},
      {"active_count", bb.report.active_count},
      {"crlb_m2", detail::power_or_null(bb.report.crlb_trace)},
      {"min_sinr", bb.report.sinr.minCoeff()},
  };
  rec["solver"] = {
      {"status", to_string(bb.status)},
      {"solves", bb.trace.solves},
      {"numerical_failures", bb.trace.numerical_failures},
      {"trace", trace_json(bb.trace)},
  };
  return rec;
}

struct DatasetRecord {
  std::uint64_t index = 0;
  SystemConfig config;
  Scenario scenario;  // rebuilt from the stored statistics, not regenerated
  PowerAllocation label;
  double label_total_power_w = 0;
  double label_transmit_power_w = 0;
};

// Parses and validates one record. A different schema_version is an error.
inline DatasetRecord parse_record(const json& rec) {
  if (!rec.is_object() || !rec.contains("schema_version")) throw std::runtime_error("record without schema_version");
  if (rec.at("schema_version") != kDatasetSchemaVersion)
    throw std::runtime_error("dataset schema_version " + rec.at("schema_version").dump() + " is not supported (expected " +
                             std::to_string(kDatasetSchemaVersion) + ")");
  DatasetRecord r;
  r.index = rec.at("index").get<std::uint64_t>();
  for (const auto& [k, v] : rec.at("config").items()) set_config_value(r.config, k, v.get<std::string>());
  const int M = rec.at("dims").at("M"), K = rec.at("dims").at("K"), T = rec.at("dims").at("T");
  if (M != r.config.M || K != r.config.K || T != r.config.T) throw std::runtime_error("dims disagree with config");

  const json& s = rec.at("scenario");
  Geometry geo;
  geo.ap = detail::points_from(s.at("ap_xy"), static_cast<std::size_t>(M), "ap_xy");
  geo.sr = detail::points_from(s.at("sr_xy"), static_cast<std::size_t>(T), "sr_xy");
  geo.ue = detail::points_from(s.at("ue_xy"), static_cast<std::size_t>(K), "ue_xy");
  geo.target = {detail::number(s.at("target_xy").at(0), "target_xy"), detail::number(s.at("target_xy").at(1), "target_xy")};
  r.scenario = make_scenario(r.config, std::move(geo), detail::matrix_from(s.at("varsigma"), M, K, "varsigma"),
                             detail::matrix_from(s.at("v"), M, K, "v"),
                             detail::matrix_from(s.at("pilot_gram"), K, K, "pilot_gram"),
                             detail::matrix_from(rec.at("features").at("radar_chi2"), M, T, "radar_chi2"),
                             detail::number(s.at("zeta"), "zeta"), detail::number(s.at("sigma2_dl"), "sigma2_dl"));
  r.scenario.index = r.index;

  const json& lab = rec.at("label");
  r.label.active = detail::mask_from_json(lab.at("active"), static_cast<std::size_t>(M), "label.active");
  r.label.P = detail::matrix_from(lab.at("P"), M, K, "label.P");
  r.label_total_power_w = detail::number(lab.at("total_power_w"), "label.total_power_w");
  r.label_transmit_power_w = detail::number(lab.at("transmit_power_w"), "label.transmit_power_w");
  return r;
}

inline std::vector<DatasetRecord> read_dataset(std::istream& in) {
  std::vector<DatasetRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(parse_record(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<DatasetRecord> read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset '" + path + "'");
  return read_dataset(in);
}

// ---------------------------------------------------------------------------
// Export

struct ExportOptions {
  std::uint64_t first_index = 0;
  int workers = 1;
  SelectorOptions selector;  // selector.workers is ignored: parallelism is per record
};

struct ExportSummary {
  int written = 0;
  std::vector<std::pair<std::uint64_t, std::string>> skipped;  // (index, reason)
};

// Scenarios first_index .. first_index + count - 1 are labelled and written
// in index order. Records whose label does not pass the exact check are
// skipped with a reason.
inline ExportSummary export_dataset(const SystemConfig& cfg, int count, std::ostream& out, const ExportOptions& opt = {}) {
  if (count < 0) throw std::invalid_argument("export_dataset: negative count");
  cfg.validate();
  SelectorOptions sel = opt.selector;
  sel.workers = 1;
  struct Item {
    std::string line;
    std::string skip_reason;
  };
  ExportSummary summary;
  const std::size_t batch = static_cast<std::size_t>(std::max(opt.workers, 1)) * 8;
  for (std::size_t start = 0; start < static_cast<std::size_t>(count); start += batch) {
    const std::size_t n = std::min(batch, static_cast<std::size_t>(count) - start);
    std::vector<Item> items = parallel_map(n, opt.workers, [&](std::size_t i) {
      const std::uint64_t index = opt.first_index + start + i;
      const Scenario sc = generate_scenario(cfg, index);
      const BBResult bb = modified_bb(sc, sel);
      Item it;
      if (!bb.ok()) it.skip_reason = to_string(bb.status);
      else if (!check_feasibility(sc, bb.alloc).feasible) it.skip_reason = "label-infeasible";
      else it.line = make_record(sc, bb).dump();
      return it;
    });
    for (std::size_t i = 0; i < n; ++i) {
      if (!items[i].skip_reason.empty()) {
        summary.skipped.emplace_back(opt.first_index + start + i, items[i].skip_reason);
        continue;
      }
      out << items[i].line << '\n';
      ++summary.written;
    }
    if (!out) throw std::runtime_error("export_dataset: write failed");
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Predictions

struct PredictionRecord {
  std::uint64_t index = 0;  // scenario reference
  std::string producer;
  std::vector<bool> active;
  Eigen::MatrixXd P;
};

inline json prediction_json(const PredictionRecord& p) {
  return {{"schema_version", kPredictionSchemaVersion},
          {"index", p.index},
          {"producer", p.producer},
          {"active", detail::mask_json(p.active)},
          {"P", detail::matrix_json(p.P)}};
}

inline PredictionRecord parse_prediction(const json& j) {
  if (!j.is_object() || !j.contains("schema_version")) throw std::runtime_error("prediction without schema_version");
  if (j.at("schema_version") != kPredictionSchemaVersion)
    throw std::runtime_error("prediction schema_version " + j.at("schema_version").dump() + " is not supported");
  PredictionRecord p;
  p.index = j.at("index").get<std::uint64_t>();
  p.producer = j.value("producer", std::string());
  const json& a = j.at("active");
  const json& P = j.at("P");
  if (!a.is_array() || !P.is_array()) throw std::runtime_error("prediction fields 'active' and 'P' must be arrays");
  p.active = detail::mask_from_json(a, a.size(), "active");
  const std::size_t cols = P.empty() ? 0 : P.at(0).size();
  p.P = detail::matrix_from(P, static_cast<Eigen::Index>(P.size()), static_cast<Eigen::Index>(cols), "P");
  return p;
}

inline std::vector<PredictionRecord> read_predictions(std::istream& in) {
  std::vector<PredictionRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(parse_prediction(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error("prediction line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<PredictionRecord> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open predictions '" + path + "'");
  return read_predictions(in);
}

struct PredictionEval {
  std::uint64_t index = 0;
  std::string producer;
  FeasibilityReport report;
  double label_total_power_w = 0;
  double power_ratio = 0;     // total / label total
  double transmit_ratio = 0;  // transmit / label transmit
};

struct EvalSummary {
  std::vector<PredictionEval> rows;  // prediction order
  int count = 0;
  int feasible = 0;
  double feasible_rate = 0;
  double mean_power_w = 0;           // all predictions
  double mean_feasible_power_w = 0;  // feasible predictions only (NaN if none)
  double mean_power_ratio = 0;       // feasible predictions only (NaN if none)
  double mean_transmit_ratio = 0;    // feasible predictions only (NaN if none)
};

// Scores predictions with the exact constraint set; nothing is repaired.
// Unknown scenario references and shape mismatches are errors.
inline EvalSummary evaluate_predictions(const std::vector<PredictionRecord>& preds,
                                        const std::vector<DatasetRecord>& data, double tol_rel = 1e-6) {
  std::map<std::uint64_t, const DatasetRecord*> by_index;
  for (const DatasetRecord& r : data) by_index[r.index] = &r;
  EvalSummary s;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  double sum_all = 0, sum_feas = 0, sum_ratio = 0, sum_tx = 0;
  for (const PredictionRecord& p : preds) {
    const auto it = by_index.find(p.index);
    if (it == by_index.end())
      throw std::runtime_error("prediction references scenario " + std::to_string(p.index) + " which is not in the dataset");
    const DatasetRecord& d = *it->second;
    const int M = d.scenario.num_aps(), K = d.scenario.num_ues();
    if (static_cast<int>(p.active.size()) != M || p.P.rows() != M || p.P.cols() != K)
      throw std::runtime_error("prediction for scenario " + std::to_string(p.index) + " has shape " +
                               std::to_string(p.P.rows()) + "x" + std::to_string(p.P.cols()) + ", expected " +
                               std::to_string(M) + "x" + std::to_string(K));
    PredictionEval e;
    e.index = p.index;
    e.producer = p.producer;
    e.report = check_feasibility(d.scenario, PowerAllocation{p.P, p.active}, tol_rel);
    e.label_total_power_w = d.label_total_power_w;
    e.power_ratio = e.report.total_power_w / d.label_total_power_w;
    e.transmit_ratio = e.report.transmit_power_w / d.label_transmit_power_w;
    sum_all += e.report.total_power_w;
    if (e.report.feasible) {
      ++s.feasible;
      sum_feas += e.report.total_power_w;
      sum_ratio += e.power_ratio;
      sum_tx += e.transmit_ratio;
    }
    s.rows.push_back(std::move(e));
  }
  s.count = static_cast<int>(preds.size());
  s.feasible_rate = s.count ? static_cast<double>(s.feasible) / s.count : nan;
  s.mean_power_w = s.count ? sum_all / s.count : nan;
  s.mean_feasible_power_w = s.feasible ? sum_feas / s.feasible : nan;
  s.mean_power_ratio = s.feasible ? sum_ratio / s.feasible : nan;
  s.mean_transmit_ratio = s.feasible ? sum_tx / s.feasible : nan;
  return s;
}

inline PredictionRecord label_as_prediction(const DatasetRecord& r, std::string producer = "label") {
  return {r.index, std::move(producer), r.label.active, r.label.P};
}

}  // namespace cfisac
