#pragma once

// Per-phase charge accounting for one duty cycle:
//   Q = n_cycles * (Qc + Qs) + Qt
// with Qc one StepCount phase, Qs one Sleep phase and Qt the hourly branch
// (GpsAcquire + Send + Delay + Receive).

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "loratrack/lora_phy.hpp"
#include "loratrack/synthgen.hpp"

namespace loratrack::energy {

enum class Phase { StepCount, Sleep, GpsAcquire, Send, Delay, Receive };

inline constexpr std::array<Phase, 6> kAllPhases{Phase::StepCount, Phase::Sleep, Phase::GpsAcquire,
                                                 Phase::Send, Phase::Delay, Phase::Receive};

constexpr std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::StepCount: return "StepCount";
    case Phase::Sleep: return "Sleep";
    case Phase::GpsAcquire: return "GpsAcquire";
    case Phase::Send: return "Send";
    case Phase::Delay: return "Delay";
    case Phase::Receive: return "Receive";
  }
  return "?";
}

struct PhaseSpec {
  Phase phase = Phase::Sleep;
  double current_ma = 0.0;
  double duration_ms = 0.0;

  double charge_mas() const { return current_ma * duration_ms / 1000.0; }
};

// Currents and fixed durations; Sleep fills the rest of each FIFO period and Send lasts the
// measured send period of the active SF.
struct PhaseDefaults {
  double step_count_ma = 10.0;
  double step_count_ms = 20.0;
  double sleep_ma = 0.31;
  double gps_ma = 40.0;
  double gps_ms = 30'000.0;
  double send_ma = phy::kSendCurrentMa;
  double delay_ma = 14.0;
  double delay_ms = 2'000.0;
  double receive_ma = 46.0;
  double receive_ms = 400.0;
  phy::SendPeriodTable send_periods{};
};

inline std::vector<PhaseSpec> build_phases(int sf, double fs_hz, const PhaseDefaults& d = {}) {
  if (!(fs_hz > 0.0)) throw std::invalid_argument("energy: sampling rate must be positive");
  const double fifo_period_ms = static_cast<double>(synth::kFifoDepth) * 1000.0 / fs_hz;
  return {
      {Phase::StepCount, d.step_count_ma, d.step_count_ms},
      {Phase::Sleep, d.sleep_ma, std::max(0.0, fifo_period_ms - d.step_count_ms)},
      {Phase::GpsAcquire, d.gps_ma, d.gps_ms},
      {Phase::Send, d.send_ma, phy::send_period(sf, d.send_periods)},
      {Phase::Delay, d.delay_ma, d.delay_ms},
      {Phase::Receive, d.receive_ma, d.receive_ms},
  };
}

struct SolarBalance {
  double supply_mah = 0.0;
  double margin_mah = 0.0;
  bool sustainable = false;
};

struct EnergyReport {
  int sf = 12;
  double fs_hz = 6.0;
  std::int64_t duty_period_ms = 3'600'000;
  std::vector<PhaseSpec> phases;
  double q_c_mas = 0.0;
  double q_s_mas = 0.0;
  double q_t_mas = 0.0;
  std::int64_t n_cycles = 0;
  double q_duty_mas = 0.0;
  double daily_mah = 0.0;
  int tx_per_day = 0;
  std::optional<SolarBalance> solar;
  bool sustainable = false;
};

inline std::int64_t n_cycles(std::int64_t duty_period_ms, double fs_hz) {
  return static_cast<std::int64_t>(std::floor(static_cast<double>(duty_period_ms) * fs_hz /
                                              (1000.0 * static_cast<double>(synth::kFifoDepth)) +
                                              1e-9));
}

inline double duty_identity(std::int64_t n, double q_c, double q_s, double q_t) {
  return static_cast<double>(n) * (q_c + q_s) + q_t;
}

inline EnergyReport duty_cycle_energy(std::span<const PhaseSpec> phases, int sf, double fs_hz,
                                      std::int64_t duty_period_ms) {
  std::array<std::optional<PhaseSpec>, 6> by_phase;
  for (const auto& p : phases) {
    if (p.current_ma < 0.0 || p.duration_ms < 0.0)
      throw std::invalid_argument("energy: negative current or duration");
    by_phase[static_cast<std::size_t>(p.phase)] = p;
  }
  for (Phase p : kAllPhases)
    if (!by_phase[static_cast<std::size_t>(p)])
      throw std::invalid_argument("energy: missing phase spec " + std::string(to_string(p)));
  auto q = [&](Phase p) { return by_phase[static_cast<std::size_t>(p)]->charge_mas(); };

  EnergyReport r;
  r.sf = sf;
  r.fs_hz = fs_hz;
  r.duty_period_ms = duty_period_ms;
  for (Phase p : kAllPhases) r.phases.push_back(*by_phase[static_cast<std::size_t>(p)]);
  r.q_c_mas = q(Phase::StepCount);
  r.q_s_mas = q(Phase::Sleep);
  r.q_t_mas = q(Phase::GpsAcquire) + q(Phase::Send) + q(Phase::Delay) + q(Phase::Receive);
  r.n_cycles = n_cycles(duty_period_ms, fs_hz);
  r.q_duty_mas = duty_identity(r.n_cycles, r.q_c_mas, r.q_s_mas, r.q_t_mas);
  return r;
}

inline EnergyReport duty_cycle_energy(int sf, double fs_hz, std::int64_t duty_period_ms = 3'600'000,
                                      const PhaseDefaults& defaults = {}) {
  const auto phases = build_phases(sf, fs_hz, defaults);
  return duty_cycle_energy(phases, sf, fs_hz, duty_period_ms);
}

inline double daily_energy(const EnergyReport& report, int tx_per_day) {
  if (tx_per_day < 1) throw std::invalid_argument("energy: tx_per_day must be >= 1");
  return static_cast<double>(tx_per_day) * report.q_duty_mas / 3600.0;
}

inline SolarBalance solar_balance(double daily_mah, double panel_ma, double charge_hours) {
  if (daily_mah < 0.0 || panel_ma < 0.0 || charge_hours < 0.0)
    throw std::invalid_argument("energy: solar inputs must be non-negative");
  SolarBalance b;
  b.supply_mah = panel_ma * charge_hours;
  b.margin_mah = b.supply_mah - daily_mah;
  b.sustainable = b.supply_mah >= daily_mah;
  return b;
}

// Full report: duty cycle, daily total and the solar check.
inline EnergyReport energy_report(int sf, double fs_hz, int tx_per_day, double panel_ma = 40.0,
                                  double charge_hours = 0.5, const PhaseDefaults& defaults = {}) {
  const auto duty_ms = static_cast<std::int64_t>(std::llround(24.0 * 3'600'000.0 / tx_per_day));
  EnergyReport r = duty_cycle_energy(sf, fs_hz, duty_ms, defaults);
  r.tx_per_day = tx_per_day;
  r.daily_mah = daily_energy(r, tx_per_day);
  r.solar = solar_balance(r.daily_mah, panel_ma, charge_hours);
  r.sustainable = r.solar->sustainable;
  return r;
}

inline nlohmann::json to_json(const EnergyReport& r) {
  nlohmann::json phases = nlohmann::json::array();
  for (const auto& p : r.phases)
    phases.push_back({{"phase", to_string(p.phase)},
                      {"current_ma", p.current_ma},
                      {"duration_ms", p.duration_ms},
                      {"charge_mas", p.charge_mas()}});
  nlohmann::json j{{"sf", r.sf},
                   {"fs_hz", r.fs_hz},
                   {"duty_period_ms", r.duty_period_ms},
                   {"phases", phases},
                   {"q_c_mas", r.q_c_mas},
                   {"q_s_mas", r.q_s_mas},
                   {"q_t_mas", r.q_t_mas},
                   {"n_cycles", r.n_cycles},
                   {"q_duty_mas", r.q_duty_mas},
                   {"identity_exact", r.q_duty_mas == duty_identity(r.n_cycles, r.q_c_mas,
                                                                    r.q_s_mas, r.q_t_mas)},
                   {"tx_per_day", r.tx_per_day},
                   {"daily_mah", r.daily_mah},
                   {"sustainable", r.sustainable},
                   // Only the 134 mA send current is a measured value; the rest are calibration.
                   {"calibrated_phases", {"StepCount", "Sleep", "GpsAcquire", "Delay", "Receive"}}};
  if (r.solar)
    j["solar"] = {{"supply_mah", r.solar->supply_mah},
                  {"margin_mah", r.solar->margin_mah},
                  {"sustainable", r.solar->sustainable}};
  return j;
}

// Remaining battery percentage for a linear cell.
inline int battery_percent(double consumed_mah, double capacity_mah = 1000.0) {
  const double pct = 100.0 * (capacity_mah - consumed_mah) / capacity_mah;
  return static_cast<int>(std::clamp(std::lround(pct), 0L, 100L));
}

}  // namespace loratrack::energy
