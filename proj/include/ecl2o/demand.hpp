#ifndef ECL2O_DEMAND_HPP
#define ECL2O_DEMAND_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ecl2o/core.hpp"

namespace ecl2o::demand {

/// One hourly weather sample. Units: m/s, kW/m^2, degrees C, MW.
struct WeatherRecord {
  std::string timestamp;
  double wind_speed = 0.0;
  double ghi = 0.0;
  double temperature = 25.0;
  double base_shortage = 0.0;
};

struct RenewableParams {
  double kappa_wind = 0.30;
  double rho_air = 1.23;       // kg/m^3
  double a_swept = 500000.0;   // m^2
  double kappa_solar = 0.10;
  double a_array = 10000.0;    // m^2

  void validate() const {
    if (!(kappa_wind > 0.0 && kappa_wind <= 1.0 && kappa_solar > 0.0 && kappa_solar <= 1.0))
      throw ValidationError("RenewableParams: efficiencies must lie in (0, 1]");
    if (!(rho_air > 0.0 && a_swept > 0.0 && a_array > 0.0))
      throw ValidationError("RenewableParams: density and areas must be > 0");
  }
};

/// Cubic-law wind power in W for wind speed v in m/s.
inline double wind_power(const RenewableParams& p, double v) {
  if (!(v >= 0.0)) throw ValidationError("wind_power: negative wind speed");
  return 0.5 * p.kappa_wind * p.rho_air * p.a_swept * v * v * v;
}

/// Temperature-derated solar power in kW for irradiance in kW/m^2; never negative.
inline double solar_power(const RenewableParams& p, double irradiance, double temp_c) {
  if (!(irradiance >= 0.0)) throw ValidationError("solar_power: negative irradiance");
  const double derate = 1.0 - 0.05 * (temp_c - 25.0);
  return std::max(0.0, 0.5 * p.kappa_solar * p.a_array * irradiance * derate);
}

/// Renewable supply of one record in MW.
inline double renewable_mw(const RenewableParams& p, const WeatherRecord& r) {
  return wind_power(p, r.wind_speed) * 1e-6 + solar_power(p, r.ghi, r.temperature) * 1e-3;
}

/// Unscaled shortfall max(P_s - P_r, 0) in MW per record.
inline std::vector<double> raw_shortfall(const std::vector<WeatherRecord>& records,
                                         const RenewableParams& p) {
  p.validate();
  std::vector<double> out;
  out.reserve(records.size());
  double sum_s = 0.0, sum_r = 0.0;
  for (const auto& r : records) {
    const double pr = renewable_mw(p, r);
    sum_s += r.base_shortage;
    sum_r += pr;
    out.push_back(std::max(r.base_shortage - pr, 0.0));
  }
  if (sum_s > 0.0 && sum_r > 0.0) {
    const double ratio = sum_s / sum_r;
    if (ratio > 1e3 || ratio < 1e-3)
      throw ValidationError("build_contexts: base shortage and renewable supply differ by more "
                            "than 10^3 in magnitude; check units (expected MW)");
  }
  return out;
}

/// Nearest-rank percentile of a sample (pct in (0, 100]).
inline double nearest_rank(std::vector<double> v, double pct) {
  if (v.empty()) throw ValidationError("nearest_rank: empty sample");
  std::sort(v.begin(), v.end());
  auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(v.size())));
  rank = std::clamp<std::size_t>(rank, 1, v.size());
  return v[rank - 1];
}

/// Dataset-level context scale: the 95th percentile of the raw shortfall.
inline double context_scale(const std::vector<double>& raw) {
  const double s = nearest_rank(raw, 95.0);
  return s > 0.0 ? s : 1.0;
}

/// Normalized contexts y_t = max(P_s - P_r, 0) / scale.
inline std::vector<double> build_contexts(const std::vector<WeatherRecord>& records,
                                          const RenewableParams& p, double scale) {
  if (!(scale > 0.0)) throw ValidationError("build_contexts: scale must be > 0");
  auto y = raw_shortfall(records, p);
  for (auto& v : y) v /= scale;
  return y;
}

namespace detail {

/// Days since 1970-01-01 for a proleptic Gregorian date.
inline long days_from_civil(long y, unsigned m, unsigned d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

inline void civil_from_days(long z, long& y, unsigned& m, unsigned& d) {
  z += 719468;
  const long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

/// Hours since epoch for "YYYY-MM-DDTHH:MM" (a space separator is also accepted).
inline long parse_hour(const std::string& ts) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  char sep = 0;
  if (std::sscanf(ts.c_str(), "%d-%d-%d%c%d:%d", &y, &mo, &d, &sep, &h, &mi) != 6 ||
      (sep != 'T' && sep != ' ') || mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 ||
      mi != 0)
    throw ValidationError("bad timestamp '" + ts + "' (expected YYYY-MM-DDTHH:00)");
  return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 24 + h;
}

inline std::string format_hour(long hours) {
  long y = 0;
  unsigned m = 0, d = 0;
  long days = hours >= 0 ? hours / 24 : (hours - 23) / 24;
  civil_from_days(days, y, m, d);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04ld-%02u-%02uT%02d:00", y, m, d,
                static_cast<int>(hours - days * 24));
  return buf;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_cell(const std::string& cell, std::size_t row, const char* column) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != cell.size() || !std::isfinite(v))
    throw ValidationError("weather CSV: row " + std::to_string(row) + ", column '" + column +
                          "': non-numeric value '" + cell + "'");
  return v;
}

}  // namespace detail

inline constexpr const char* kWeatherHeader =
    "timestamp,wind_speed_mps,ghi_kw_m2,temp_c,base_shortage_mw";

inline std::vector<WeatherRecord> read_weather_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ValidationError("weather CSV: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kWeatherHeader) {
    static const char* cols[] = {"timestamp", "wind_speed_mps", "ghi_kw_m2", "temp_c",
                                 "base_shortage_mw"};
    for (const char* c : cols)
      if (line.find(c) == std::string::npos)
        throw ValidationError(std::string("weather CSV: missing column '") + c + "'");
    throw ValidationError(std::string("weather CSV: header must be exactly '") + kWeatherHeader +
                          "'");
  }
  std::vector<WeatherRecord> out;
  std::size_t row = 1;
  long prev_hour = 0;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != 5)
      throw ValidationError("weather CSV: row " + std::to_string(row) + " has " +
                            std::to_string(cells.size()) + " columns, expected 5");
    WeatherRecord r;
    r.timestamp = cells[0];
    long hour = 0;
    try {
      hour = detail::parse_hour(r.timestamp);
    } catch (const ValidationError& e) {
      throw ValidationError("weather CSV: row " + std::to_string(row) + ": " + e.what());
    }
    r.wind_speed = detail::parse_cell(cells[1], row, "wind_speed_mps");
    r.ghi = detail::parse_cell(cells[2], row, "ghi_kw_m2");
    r.temperature = detail::parse_cell(cells[3], row, "temp_c");
    r.base_shortage = detail::parse_cell(cells[4], row, "base_shortage_mw");
    if (r.wind_speed < 0.0)
      throw ValidationError("weather CSV: row " + std::to_string(row) + ": negative wind speed");
    if (r.ghi < 0.0)
      throw ValidationError("weather CSV: row " + std::to_string(row) + ": negative irradiance");
    if (!out.empty() && hour != prev_hour + 1)
      throw ValidationError("weather CSV: row " + std::to_string(row) +
                            ": timestamps must increase in one-hour steps");
    prev_hour = hour;
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<WeatherRecord> load_weather_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open weather file '" + path + "'");
  try {
    return read_weather_csv(is);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline void write_weather_csv(std::ostream& os, const std::vector<WeatherRecord>& records) {
  os << kWeatherHeader << '\n';
  for (const auto& r : records)
    os << r.timestamp << ',' << ecl2o::detail::fmt_real(r.wind_speed) << ','
       << ecl2o::detail::fmt_real(r.ghi) << ',' << ecl2o::detail::fmt_real(r.temperature) << ','
       << ecl2o::detail::fmt_real(r.base_shortage) << '\n';
}

/// Parameters of the synthetic hourly weather generator.
struct SynthConfig {
  std::string start = "2015-01-01T00:00";
  double wind_mean = 5.5;      // m/s
  double wind_seasonal = 0.5;  // m/s added in winter, subtracted in summer
  double wind_std = 2.0;
  double wind_persistence = 0.9;
  double ghi_peak_winter = 0.45;  // kW/m^2
  double ghi_peak_summer = 0.95;
  double temp_mean = 12.0;
  double temp_seasonal = 12.0;
  double temp_daily = 5.0;
  double shortage_mean = 40.0;   // MW
  double shortage_seasonal = 8.0;  // MW added in summer, subtracted in winter
  double shortage_daily = 12.0;  // MW amplitude of the diurnal sinusoid
  double shortage_noise = 3.0;   // MW
};

/// Hourly weather and base-shortage trace: AR(1) wind speed, diurnal and seasonal irradiance
/// with cloud attenuation, diurnal/seasonal temperature, sinusoidal base shortage plus noise.
inline std::vector<WeatherRecord> synthesize_weather(std::size_t hours, std::uint64_t seed,
                                                     const SynthConfig& cfg = {}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double pi = std::numbers::pi;
  const long h0 = detail::parse_hour(cfg.start);
  std::vector<WeatherRecord> out;
  out.reserve(hours);
  double wind_state = 0.0;
  double cloud = 0.3;
  const double innov = std::sqrt(1.0 - cfg.wind_persistence * cfg.wind_persistence);
  for (std::size_t i = 0; i < hours; ++i) {
    const long hour_abs = h0 + static_cast<long>(i);
    const double hod = static_cast<double>(((hour_abs % 24) + 24) % 24);
    const double doy = std::fmod(static_cast<double>(hour_abs) / 24.0, 365.0);
    const double season = 0.5 - 0.5 * std::cos(2.0 * pi * (doy - 10.0) / 365.0);  // 0 winter

    wind_state = cfg.wind_persistence * wind_state + innov * n01(rng);
    const double diurnal_wind = 0.6 * std::sin(2.0 * pi * (hod - 9.0) / 24.0);
    const double wind = std::max(0.0, cfg.wind_mean + cfg.wind_seasonal * (1.0 - 2.0 * season) + diurnal_wind + cfg.wind_std * wind_state);

    cloud = std::clamp(0.85 * cloud + 0.15 * u01(rng), 0.0, 1.0);
    const double elevation = std::sin(pi * (hod - 6.0) / 12.0);
    const double peak = cfg.ghi_peak_winter + (cfg.ghi_peak_summer - cfg.ghi_peak_winter) * season;
    const double ghi = elevation > 0.0 ? peak * elevation * (1.0 - 0.7 * cloud) : 0.0;

    const double temp = cfg.temp_mean + cfg.temp_seasonal * (season - 0.5) * 2.0 +
                        cfg.temp_daily * std::sin(2.0 * pi * (hod - 9.0) / 24.0) +
                        0.8 * n01(rng);

    const double shortage =
        std::max(0.0, cfg.shortage_mean + cfg.shortage_seasonal * (2.0 * season - 1.0) +
                          cfg.shortage_daily * std::sin(2.0 * pi * (hod - 8.0) / 24.0) +
                          cfg.shortage_noise * n01(rng));

    out.push_back({detail::format_hour(hour_abs), wind, ghi, temp, shortage});
  }
  return out;
}

struct AugmentConfig {
  std::size_t target_count = 0;  // total training episodes; 0 keeps raw episodes only
  double scale = 0.2;            // multiplicative factor drawn from U(1 - scale, 1 + scale)
  double jitter = 0.02;          // additive N(0, jitter^2) in normalized units
  std::size_t max_shift = 23;    // circular time shift in hours
};

struct DatasetConfig {
  std::size_t episode_len = 24;
  std::size_t train_days = 59;  // January and February
  std::size_t val_days = 31;    // March; everything after is test
  AugmentConfig augment;
  // Multiplies every test context; 1 leaves the test range untouched.
  double test_context_scale = 1.0;
  RenewableParams renewables;
};

struct Dataset {
  std::vector<ProblemInstance> train;
  std::vector<ProblemInstance> val;
  std::vector<ProblemInstance> test;
  double scale = 1.0;
};

namespace detail {

/// Consecutive non-overlapping episodes over [begin, end); x0 is the preceding hour's context
/// (the first context when there is none).
inline std::vector<ProblemInstance> tile(const std::vector<double>& y, std::size_t begin,
                                         std::size_t end, std::size_t len,
                                         const std::string& prefix, double mult = 1.0) {
  std::vector<ProblemInstance> out;
  for (std::size_t s = begin, k = 0; s + len <= end; s += len, ++k) {
    std::vector<double> ys(y.begin() + static_cast<long>(s), y.begin() + static_cast<long>(s + len));
    for (auto& v : ys) v *= mult;
    const double x0 = (s > 0 ? y[s - 1] : y[s]) * mult;
    out.push_back(ProblemInstance::scalar(x0, ys, prefix + std::to_string(k)));
  }
  return out;
}

}  // namespace detail

/// Splits records chronologically into train/val/test episodes and augments the training set.
inline Dataset make_dataset(const std::vector<WeatherRecord>& records, const DatasetConfig& cfg,
                            std::uint64_t seed) {
  const std::size_t len = cfg.episode_len;
  if (len == 0) throw ValidationError("make_dataset: episode_len must be >= 1");
  const std::size_t train_end = cfg.train_days * 24;
  const std::size_t val_end = train_end + cfg.val_days * 24;
  if (records.size() < val_end + len)
    throw ValidationError("make_dataset: need at least " + std::to_string(val_end + len) +
                          " hourly records, got " + std::to_string(records.size()));
  if (train_end < len) throw ValidationError("make_dataset: training range shorter than an episode");

  const auto raw = raw_shortfall(records, cfg.renewables);
  Dataset ds;
  ds.scale = context_scale(std::vector<double>(raw.begin(), raw.begin() + static_cast<long>(train_end)));
  std::vector<double> y(raw.size());
  std::transform(raw.begin(), raw.end(), y.begin(), [&](double v) { return v / ds.scale; });

  ds.train = detail::tile(y, 0, train_end, len, "train-");
  ds.val = detail::tile(y, train_end, val_end, len, "val-");
  ds.test = detail::tile(y, val_end, y.size(), len, "test-", cfg.test_context_scale);

  const auto& aug = cfg.augment;
  if (aug.target_count > ds.train.size()) {
    if (!(aug.scale >= 0.0 && aug.scale < 1.0 && aug.jitter >= 0.0))
      throw ValidationError("make_dataset: augmentation needs 0 <= scale < 1 and jitter >= 0");
    std::mt19937_64 rng(seed);
    const std::size_t raw_count = ds.train.size();
    std::uniform_int_distribution<std::size_t> pick(0, raw_count - 1);
    std::uniform_int_distribution<std::size_t> shift(0, aug.max_shift);
    std::uniform_real_distribution<double> mult(1.0 - aug.scale, 1.0 + aug.scale);
    std::normal_distribution<double> noise(0.0, aug.jitter);
    for (std::size_t k = raw_count; k < aug.target_count; ++k) {
      // Circular shift inside the training range keeps windows off the validation data.
      const std::size_t start = (pick(rng) * len + shift(rng)) % (train_end - len + 1);
      const double a = mult(rng);
      std::vector<double> ys(len);
      for (std::size_t t = 0; t < len; ++t) ys[t] = std::max(0.0, a * y[start + t] + noise(rng));
      const double x0 = std::max(0.0, a * (start > 0 ? y[start - 1] : y[start]));
      ds.train.push_back(ProblemInstance::scalar(x0, ys, "aug-" + std::to_string(k - raw_count)));
    }
  }
  return ds;
}

/// `episode_id,step,y`; step 0 carries the initial action x0. Vector entries joined by ';'.
inline void write_episodes_csv(std::ostream& os, const std::vector<ProblemInstance>& eps) {
  auto join = [](const Vec& v) {
    std::string s;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (i) s += ';';
      s += ecl2o::detail::fmt_real(v[i]);
    }
    return s;
  };
  os << "episode_id,step,y\n";
  for (const auto& e : eps) {
    os << e.id() << ",0," << join(e.x0()) << '\n';
    for (std::size_t t = 0; t < e.horizon(); ++t)
      os << e.id() << ',' << (t + 1) << ',' << join(e.context(t)) << '\n';
  }
}

inline std::vector<ProblemInstance> read_episodes_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || (line != "episode_id,step,y" && line != "episode_id,step,y\r"))
    throw ValidationError("episode CSV: header must be 'episode_id,step,y'");
  std::vector<ProblemInstance> out;
  std::string cur_id;
  Vec x0;
  std::vector<Vec> ys;
  std::size_t row = 1;
  auto flush = [&] {
    if (cur_id.empty()) return;
    out.emplace_back(x0, std::move(ys), cur_id);
    ys.clear();
  };
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != 3)
      throw ValidationError("episode CSV: row " + std::to_string(row) + " needs 3 columns");
    std::vector<double> vals;
    std::stringstream ss(cells[2]);
    std::string tok;
    while (std::getline(ss, tok, ';')) vals.push_back(detail::parse_cell(tok, row, "y"));
    Vec v = Eigen::Map<Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    const long step = std::stol(cells[1]);
    if (step == 0) {
      flush();
      cur_id = cells[0];
      x0 = v;
    } else {
      if (cells[0] != cur_id || step != static_cast<long>(ys.size()) + 1)
        throw ValidationError("episode CSV: row " + std::to_string(row) +
                              ": steps must follow a step-0 row in order");
      ys.push_back(std::move(v));
    }
  }
  flush();
  return out;
}

inline void save_episodes(const std::string& path, const std::vector<ProblemInstance>& eps) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_episodes_csv(os, eps);
}

inline std::vector<ProblemInstance> load_episodes(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open dataset file '" + path + "'");
  try {
    return read_episodes_csv(is);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

}  // namespace ecl2o::demand

#endif  // ECL2O_DEMAND_HPP
