#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cfisac {

// Physical constants shared by the channel and sensing models.
inline constexpr double kSpeedOfLight = 3.0e8;
inline constexpr double kMinLinkDistanceM = 1.0;

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

// System parameters of one network family. Defaults follow the reference
// parameter table (20 MHz, 1.9 GHz, -174 dBm/Hz, ...).
struct SystemConfig {
  int M = 30;  // access points
  int K = 6;   // users
  int T = 3;   // sensing receivers
  double area_diameter_m = 500.0;
  double bandwidth_hz = 2.0e7;
  double carrier_hz = 1.9e9;
  double noise_density_dbm_hz = -174.0;
  double pilot_power_mw = 100.0;
  int pilot_len = 20;
  double dl_power_mw = 100.0;
  double circuit_power_mw = 200.0;
  double sinr_threshold_db = -5.6;
  double crlb_limit_m2 = 1.0;
  double shadow_sigma_db = 7.0;
  double rcs_sigma_m2 = 10.0;
  // The path-loss law -120.9 - 37.6 log10(d) is evaluated with d expressed
  // in units of this many metres (1000: d in km).
  double pathloss_distance_unit_m = 1000.0;
  std::uint64_t master_seed = 1;

  double noise_power_mw() const {
    return db_to_linear(noise_density_dbm_hz) * bandwidth_hz;
  }
  double sinr_threshold_linear() const { return db_to_linear(sinr_threshold_db); }
  double wavelength_m() const { return kSpeedOfLight / carrier_hz; }
  bool sensing_enabled() const { return std::isfinite(crlb_limit_m2); }

  void validate() const {
    auto fail = [](const std::string& what) {
      throw std::invalid_argument("invalid config: " + what);
    };
    if (M < 1) fail("M must be >= 1");
    if (K < 1) fail("K must be >= 1");
    if (T < 1) fail("T must be >= 1");
    if (pilot_len < 1) fail("pilot_len must be >= 1");
    if (!(area_diameter_m > 0)) fail("area_diameter_m must be > 0");
    if (!(bandwidth_hz > 0)) fail("bandwidth_hz must be > 0");
    if (!(carrier_hz > 0)) fail("carrier_hz must be > 0");
    if (!(pilot_power_mw > 0)) fail("pilot_power_mw must be > 0");
    if (!(dl_power_mw > 0)) fail("dl_power_mw must be > 0");
    if (!(circuit_power_mw >= 0)) fail("circuit_power_mw must be >= 0");
    if (!(crlb_limit_m2 > 0)) fail("crlb_limit_m2 must be > 0");
    if (!(shadow_sigma_db >= 0)) fail("shadow_sigma_db must be >= 0");
    if (!(rcs_sigma_m2 > 0)) fail("rcs_sigma_m2 must be > 0");
    if (!(pathloss_distance_unit_m > 0)) fail("pathloss_distance_unit_m must be > 0");
    if (!std::isfinite(noise_density_dbm_hz)) fail("noise_density_dbm_hz must be finite");
    if (!std::isfinite(sinr_threshold_db)) fail("sinr_threshold_db must be finite");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline double parse_double(const std::string& key, const std::string& value) {
  if (value == "inf" || value == "+inf") return std::numeric_limits<double>::infinity();
  std::size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(value, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': not a number: '" + value + "'");
  }
  if (pos != value.size())
    throw std::invalid_argument("config key '" + key + "': trailing characters in '" + value + "'");
  return out;
}

inline long long parse_int(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(value, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': not an integer: '" + value + "'");
  }
  if (pos != value.size())
    throw std::invalid_argument("config key '" + key + "': trailing characters in '" + value + "'");
  return out;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  unsigned long long out = 0;
  if (!value.empty() && value[0] == '-')
    throw std::invalid_argument("config key '" + key + "': must be non-negative");
  try {
    out = std::stoull(value, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': not an integer: '" + value + "'");
  }
  if (pos != value.size())
    throw std::invalid_argument("config key '" + key + "': trailing characters in '" + value + "'");
  return out;
}

}  // namespace detail

// Applies one `key = value` assignment. Unknown keys are an error so that
// typos in experiment files do not silently fall back to defaults.
inline void set_config_value(SystemConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_double;
  using detail::parse_int;
  auto as_int = [&](int& dst) {
    const long long v = parse_int(key, value);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
      throw std::invalid_argument("config key '" + key + "': out of range");
    dst = static_cast<int>(v);
  };
  if (key == "M") as_int(cfg.M);
  else if (key == "K") as_int(cfg.K);
  else if (key == "T") as_int(cfg.T);
  else if (key == "area_diameter_m") cfg.area_diameter_m = parse_double(key, value);
  else if (key == "bandwidth_hz") cfg.bandwidth_hz = parse_double(key, value);
  else if (key == "carrier_hz") cfg.carrier_hz = parse_double(key, value);
  else if (key == "noise_density_dbm_hz") cfg.noise_density_dbm_hz = parse_double(key, value);
  else if (key == "pilot_power_mw") cfg.pilot_power_mw = parse_double(key, value);
  else if (key == "pilot_len") as_int(cfg.pilot_len);
  else if (key == "dl_power_mw") cfg.dl_power_mw = parse_double(key, value);
  else if (key == "circuit_power_mw") cfg.circuit_power_mw = parse_double(key, value);
  else if (key == "sinr_threshold_db") cfg.sinr_threshold_db = parse_double(key, value);
  else if (key == "crlb_limit_m2") cfg.crlb_limit_m2 = parse_double(key, value);
  else if (key == "shadow_sigma_db") cfg.shadow_sigma_db = parse_double(key, value);
  else if (key == "rcs_sigma_m2") cfg.rcs_sigma_m2 = parse_double(key, value);
  else if (key == "pathloss_distance_unit_m") cfg.pathloss_distance_unit_m = parse_double(key, value);
  else if (key == "master_seed") cfg.master_seed = detail::parse_u64(key, value);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

// Reads `key = value` lines; '#' starts a comment. Missing keys keep defaults.
inline SystemConfig parse_config(std::istream& in) {
  SystemConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected 'key = value'");
    set_config_value(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

inline SystemConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  return parse_config(in);
}

// Snapshot in the same key-value format; doubles are written with enough
// digits to round-trip exactly.
inline std::map<std::string, std::string> config_entries(const SystemConfig& cfg) {
  auto num = [](double v) {
    if (std::isinf(v)) return std::string(v > 0 ? "inf" : "-inf");
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
  };
  return {
      {"M", std::to_string(cfg.M)},
      {"K", std::to_string(cfg.K)},
      {"T", std::to_string(cfg.T)},
      {"area_diameter_m", num(cfg.area_diameter_m)},
      {"bandwidth_hz", num(cfg.bandwidth_hz)},
      {"carrier_hz", num(cfg.carrier_hz)},
      {"noise_density_dbm_hz", num(cfg.noise_density_dbm_hz)},
      {"pilot_power_mw", num(cfg.pilot_power_mw)},
      {"pilot_len", std::to_string(cfg.pilot_len)},
      {"dl_power_mw", num(cfg.dl_power_mw)},
      {"circuit_power_mw", num(cfg.circuit_power_mw)},
      {"sinr_threshold_db", num(cfg.sinr_threshold_db)},
      {"crlb_limit_m2", num(cfg.crlb_limit_m2)},
      {"shadow_sigma_db", num(cfg.shadow_sigma_db)},
      {"rcs_sigma_m2", num(cfg.rcs_sigma_m2)},
      {"pathloss_distance_unit_m", num(cfg.pathloss_distance_unit_m)},
      {"master_seed", std::to_string(cfg.master_seed)},
  };
}

inline std::string format_config(const SystemConfig& cfg) {
  std::ostringstream os;
  for (const auto& [k, v] : config_entries(cfg)) os << k << " = " << v << '\n';
  return os.str();
}

}  // namespace cfisac
