#pragma once

// LoRa physical-layer model: airtime, measured send periods, log-distance link budget and
// per-SF reception thresholds.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "loratrack/geo.hpp"

namespace loratrack::phy {

inline constexpr int kMinSf = 7;
inline constexpr int kMaxSf = 12;
inline constexpr double kSpeedOfLight = 299'792'458.0;
inline constexpr double kThermalNoiseDbmHz = -174.0;
inline constexpr double kSendCurrentMa = 134.0;

constexpr bool valid_sf(int sf) { return sf >= kMinSf && sf <= kMaxSf; }

inline void require_sf(int sf) {
  if (!valid_sf(sf)) throw std::out_of_range("phy: spreading factor must be in [7, 12], got " + std::to_string(sf));
}

struct RadioConfig {
  int sf = 12;
  double bw_hz = 125'000.0;
  int cr_denominator = 5;
  int preamble_symbols = 8;
  double tx_power_dbm = 20.0;
  double freq_hz = 433'000'000.0;
  bool explicit_header = true;
  bool crc_on = true;
  std::optional<bool> ldro;  // unset: on iff sf >= 11 at 125 kHz

  bool low_data_rate_optimize() const {
    if (ldro) return *ldro;
    return sf >= 11 && bw_hz <= 125'000.0;
  }

  void validate() const {
    require_sf(sf);
    if (tx_power_dbm > 20.0) throw std::invalid_argument("phy: tx power above 20 dBm");
    if (cr_denominator < 5 || cr_denominator > 8)
      throw std::invalid_argument("phy: coding rate denominator must be in [5, 8]");
    if (!(bw_hz > 0.0)) throw std::invalid_argument("phy: bandwidth must be positive");
  }
};

inline double symbol_time_ms(const RadioConfig& cfg) {
  return std::ldexp(1.0, cfg.sf) / cfg.bw_hz * 1000.0;
}

inline int payload_symbols(const RadioConfig& cfg, int payload_len_bytes) {
  const int de = cfg.low_data_rate_optimize() ? 1 : 0;
  const int ih = cfg.explicit_header ? 0 : 1;
  const int crc = cfg.crc_on ? 1 : 0;
  const int num = 8 * payload_len_bytes - 4 * cfg.sf + 28 + 16 * crc - 20 * ih;
  const int den = 4 * (cfg.sf - 2 * de);
  const int blocks = num > 0 ? (num + den - 1) / den : 0;
  return 8 + blocks * cfg.cr_denominator;
}

// Analytic airtime of one packet.
inline double time_on_air(const RadioConfig& cfg, int payload_len_bytes) {
  require_sf(cfg.sf);
  if (payload_len_bytes < 1) throw std::invalid_argument("phy: payload must be at least 1 byte");
  const double ts = symbol_time_ms(cfg);
  const double preamble = (cfg.preamble_symbols + 4.25) * ts;
  return preamble + payload_symbols(cfg, payload_len_bytes) * ts;
}

// Measured duration of the sending period per SF (index 0 = SF7).
struct SendPeriodTable {
  std::array<double, 6> ms{70.0, 120.0, 230.0, 420.0, 910.0, 1650.0};

  double at(int sf) const {
    require_sf(sf);
    return ms[static_cast<std::size_t>(sf - kMinSf)];
  }
};

inline double send_period(int sf, const SendPeriodTable& table = {}) { return table.at(sf); }

// Demodulation SNR floor per SF (index 0 = SF7).
struct SnrLimits {
  std::array<double, 6> db{-7.5, -10.0, -12.5, -15.0, -17.5, -20.0};

  double at(int sf) const {
    require_sf(sf);
    return db[static_cast<std::size_t>(sf - kMinSf)];
  }
};

inline double snr_limit(int sf, const SnrLimits& limits = {}) { return limits.at(sf); }

inline double noise_floor_dbm(double bw_hz, double noise_figure_db) {
  return kThermalNoiseDbmHz + 10.0 * std::log10(bw_hz) + noise_figure_db;
}

inline double sensitivity_dbm(int sf, double bw_hz, double noise_figure_db,
                              const SnrLimits& limits = {}) {
  return noise_floor_dbm(bw_hz, noise_figure_db) + limits.at(sf);
}

inline double free_space_loss_db(double distance_m, double freq_hz) {
  return 20.0 * std::log10(4.0 * std::numbers::pi * distance_m * freq_hz / kSpeedOfLight);
}

// Circular region of excess loss, e.g. buildings around a test point.
struct Obstruction {
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  double radius_m = 0.0;
  double loss_db = 0.0;
};

struct LinkEnv {
  double ref_loss_db = 25.18;
  double path_loss_exp = 2.7;
  double shadowing_sigma_db = 0.0;
  double noise_figure_db = 6.0;
  double ant_gain_tx_dbi = 2.0;
  double ant_gain_rx_dbi = 2.0;
  std::vector<Obstruction> obstructions;
  SnrLimits snr_limits{};

  void validate() const {
    if (!(path_loss_exp >= 2.0)) throw std::invalid_argument("phy: path loss exponent must be >= 2");
    if (!(shadowing_sigma_db >= 0.0)) throw std::invalid_argument("phy: shadowing sigma must be >= 0");
  }
};

struct RxMeta {
  double rssi_dbm = 0.0;
  double snr_db = 0.0;
  double distance_m = 1.0;
};

inline double path_loss(const LinkEnv& env, double distance_m, double shadowing_db = 0.0,
                        double excess_db = 0.0) {
  if (!(distance_m >= 1.0)) throw std::invalid_argument("phy: distance must be >= 1 m");
  return env.ref_loss_db + 10.0 * env.path_loss_exp * std::log10(distance_m) + shadowing_db +
         excess_db;
}

inline double shadowing_draw(const LinkEnv& env, std::uint64_t seed) {
  if (env.shadowing_sigma_db == 0.0) return 0.0;
  std::mt19937_64 rng(seed);
  return std::normal_distribution<double>(0.0, env.shadowing_sigma_db)(rng);
}

inline double obstruction_db(const LinkEnv& env, geo::LatLon position) {
  double total = 0.0;
  for (const auto& o : env.obstructions)
    if (geo::haversine_m(position, {o.lat_deg, o.lon_deg}) <= o.radius_m) total += o.loss_db;
  return total;
}

inline RxMeta link_budget(const RadioConfig& cfg, const LinkEnv& env, double distance_m,
                          std::uint64_t seed, double excess_db = 0.0) {
  const double pl = path_loss(env, distance_m, shadowing_draw(env, seed), excess_db);
  RxMeta rx;
  rx.distance_m = distance_m;
  rx.rssi_dbm = cfg.tx_power_dbm + env.ant_gain_tx_dbi + env.ant_gain_rx_dbi - pl;
  rx.snr_db = rx.rssi_dbm - noise_floor_dbm(cfg.bw_hz, env.noise_figure_db);
  return rx;
}

// Budget between two positions; excess loss comes from obstructions covering the transmitter.
inline RxMeta link_budget_between(const RadioConfig& cfg, const LinkEnv& env, geo::LatLon device,
                                  geo::LatLon gateway, std::uint64_t seed) {
  const double d = std::max(1.0, geo::haversine_m(device, gateway));
  return link_budget(cfg, env, d, seed, obstruction_db(env, device));
}

inline bool receive_decision(const RxMeta& rx, int sf, double bw_hz = 125'000.0,
                             double noise_figure_db = 6.0, const SnrLimits& limits = {}) {
  return rx.rssi_dbm >= sensitivity_dbm(sf, bw_hz, noise_figure_db, limits) &&
         rx.snr_db >= limits.at(sf);
}

inline bool receive_decision(const RxMeta& rx, const RadioConfig& cfg, const LinkEnv& env) {
  return receive_decision(rx, cfg.sf, cfg.bw_hz, env.noise_figure_db, env.snr_limits);
}

// Largest distance still delivered with shadowing and obstructions ignored.
inline double max_range_m(const RadioConfig& cfg, const LinkEnv& env) {
  const double budget = cfg.tx_power_dbm + env.ant_gain_tx_dbi + env.ant_gain_rx_dbi -
                        sensitivity_dbm(cfg.sf, cfg.bw_hz, env.noise_figure_db, env.snr_limits);
  return std::pow(10.0, (budget - env.ref_loss_db) / (10.0 * env.path_loss_exp));
}

}  // namespace loratrack::phy
