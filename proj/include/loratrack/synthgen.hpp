#pragma once

// Ground-truth generators: accelerometer gait traces, movement paths, noisy GPS fixes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "loratrack/geo.hpp"

namespace loratrack::synth {

inline constexpr std::size_t kFifoDepth = 32;
inline constexpr double kGpsMaxErrorM = 10.0;
inline constexpr double kDefaultGpsSigmaM = 4.0;

struct AccelSample {
  double t_ms = 0.0;
  double x_g = 0.0;
  double y_g = 0.0;
  double z_g = 0.0;
  friend bool operator==(const AccelSample&, const AccelSample&) = default;
};

struct GaitProfile {
  double step_frequency_hz = 2.0;
  double amplitude_g = 0.5;
  double noise_sigma_g = 0.05;
  double bias_g = 1.0;

  void validate() const {
    if (!(step_frequency_hz > 0.0 && step_frequency_hz <= 3.0))
      throw std::invalid_argument("gait: step frequency must be in (0, 3] Hz");
    if (!(amplitude_g > 0.0)) throw std::invalid_argument("gait: amplitude must be positive");
    if (!(noise_sigma_g >= 0.0)) throw std::invalid_argument("gait: noise sigma must be >= 0");
  }
};

struct FifoBatch {
  std::array<AccelSample, kFifoDepth> samples{};

  double first_t_ms() const { return samples.front().t_ms; }
  double last_t_ms() const { return samples.back().t_ms; }
};

struct GaitTrace {
  std::vector<AccelSample> samples;
  std::int64_t true_step_count = 0;
};

struct GpsFix {
  double t_ms = 0.0;
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  bool valid = false;
  double error_m = 0.0;

  geo::LatLon position() const { return {lat_deg, lon_deg}; }
};

struct Waypoint {
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  std::int64_t t_ms = 0;
};

class MovementPath {
 public:
  MovementPath() = default;
  explicit MovementPath(std::vector<Waypoint> waypoints) : waypoints_(std::move(waypoints)) {
    if (waypoints_.empty()) throw std::invalid_argument("path: at least one waypoint required");
    for (std::size_t i = 1; i < waypoints_.size(); ++i)
      if (waypoints_[i].t_ms <= waypoints_[i - 1].t_ms)
        throw std::invalid_argument("path: waypoint times must be strictly increasing");
    for (const auto& w : waypoints_)
      if (std::abs(w.lat_deg) > 90.0 || std::abs(w.lon_deg) > 180.0)
        throw std::invalid_argument("path: waypoint outside WGS-84 range");
  }

  const std::vector<Waypoint>& waypoints() const { return waypoints_; }
  std::int64_t start_ms() const { return waypoints_.front().t_ms; }
  std::int64_t end_ms() const { return waypoints_.back().t_ms; }

 private:
  std::vector<Waypoint> waypoints_;
};

// Number of samples a trace of `duration_ms` holds at `fs_hz` (sample k sits at k*1000/fs ms).
inline std::size_t sample_count(double duration_ms, double fs_hz) {
  return static_cast<std::size_t>(std::floor(duration_ms * fs_hz / 1000.0 + 1e-9));
}

// Samples starting at absolute time t0_ms; the sinusoid phase follows absolute time so that
// consecutive segments join without a discontinuity.
inline std::vector<AccelSample> generate_gait_segment(const GaitProfile& profile, double t0_ms,
                                                      double duration_ms, double fs_hz,
                                                      std::uint64_t seed) {
  profile.validate();
  if (!(fs_hz > 0.0)) throw std::invalid_argument("gait: sampling rate must be positive");
  if (!(duration_ms > 0.0)) throw std::invalid_argument("gait: duration must be positive");

  const std::size_t first = static_cast<std::size_t>(std::llround(t0_ms * fs_hz / 1000.0));
  const std::size_t n = sample_count(duration_ms, fs_hz);
  std::mt19937_64 rng(seed);
  const bool noisy = profile.noise_sigma_g > 0.0;
  std::normal_distribution<double> noise(0.0, noisy ? profile.noise_sigma_g : 1.0);
  auto draw = [&] { return noisy ? noise(rng) : 0.0; };

  std::vector<AccelSample> out;
  out.reserve(n);
  const double omega = 2.0 * std::numbers::pi * profile.step_frequency_hz;
  for (std::size_t k = 0; k < n; ++k) {
    const double t_ms = static_cast<double>(first + k) * 1000.0 / fs_hz;
    AccelSample s;
    s.t_ms = t_ms;
    s.x_g = draw();
    s.y_g = draw();
    s.z_g = profile.bias_g + profile.amplitude_g * std::sin(omega * t_ms / 1000.0) + draw();
    out.push_back(s);
  }
  return out;
}

inline GaitTrace generate_gait(const GaitProfile& profile, double duration_ms, double fs_hz,
                               std::uint64_t seed) {
  GaitTrace trace;
  trace.samples = generate_gait_segment(profile, 0.0, duration_ms, fs_hz, seed);
  trace.true_step_count = static_cast<std::int64_t>(
      std::floor(profile.step_frequency_hz * duration_ms / 1000.0 + 1e-9));
  return trace;
}

// Non-overlapping 32-sample windows; a trailing remainder is discarded.
inline std::vector<FifoBatch> fill_fifo(std::span<const AccelSample> samples) {
  std::vector<FifoBatch> batches;
  batches.reserve(samples.size() / kFifoDepth);
  for (std::size_t at = 0; at + kFifoDepth <= samples.size(); at += kFifoDepth) {
    FifoBatch b;
    std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(at), kFifoDepth, b.samples.begin());
    batches.push_back(b);
  }
  return batches;
}

inline geo::LatLon position_at(const MovementPath& path, double t_ms) {
  const auto& w = path.waypoints();
  if (w.empty() || t_ms < static_cast<double>(w.front().t_ms) ||
      t_ms > static_cast<double>(w.back().t_ms))
    throw std::out_of_range("path: query time outside waypoint range");
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    if (t_ms <= static_cast<double>(w[i + 1].t_ms)) {
      const double span = static_cast<double>(w[i + 1].t_ms - w[i].t_ms);
      const double f = (t_ms - static_cast<double>(w[i].t_ms)) / span;
      return {w[i].lat_deg + f * (w[i + 1].lat_deg - w[i].lat_deg),
              w[i].lon_deg + f * (w[i + 1].lon_deg - w[i].lon_deg)};
    }
  }
  return {w.back().lat_deg, w.back().lon_deg};
}

inline double round_e5(double deg) { return static_cast<double>(std::llround(deg * 1e5)) / 1e5; }

// Truncated 2-D Gaussian fix. Radius is drawn by inverting the Rayleigh CDF restricted to
// [0, 10 m]; the fix is reported on the receiver's 1e-5 degree grid and redrawn if the grid
// rounding pushes it past the cap.
inline GpsFix sample_gps(geo::LatLon truth, double error_sigma_m, std::uint64_t seed,
                         double t_ms = 0.0) {
  if (!(error_sigma_m >= 0.0)) throw std::invalid_argument("gps: sigma must be >= 0");
  GpsFix fix{t_ms, truth.lat_deg, truth.lon_deg, true, 0.0};
  if (error_sigma_m == 0.0) return fix;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double two_var = 2.0 * error_sigma_m * error_sigma_m;
  const double cdf_cap = 1.0 - std::exp(-kGpsMaxErrorM * kGpsMaxErrorM / two_var);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double r = std::sqrt(-two_var * std::log(1.0 - unit(rng) * cdf_cap));
    const double theta = 2.0 * std::numbers::pi * unit(rng);
    const auto p = geo::offset_m(truth, r * std::cos(theta), r * std::sin(theta));
    const geo::LatLon q{round_e5(p.lat_deg), round_e5(p.lon_deg)};
    const double err = geo::haversine_m(truth, q);
    if (err <= kGpsMaxErrorM && std::abs(q.lat_deg) <= 90.0 && std::abs(q.lon_deg) <= 180.0) {
      fix.lat_deg = q.lat_deg;
      fix.lon_deg = q.lon_deg;
      fix.error_m = err;
      return fix;
    }
  }
  fix.lat_deg = round_e5(truth.lat_deg);
  fix.lon_deg = round_e5(truth.lon_deg);
  fix.error_m = geo::haversine_m(truth, fix.position());
  return fix;
}

inline void write_trace_csv(std::ostream& os, std::span<const AccelSample> samples) {
  os << "t_ms,x_g,y_g,z_g\n";
  const auto flags = os.flags();
  os << std::setprecision(9);
  for (const auto& s : samples) os << s.t_ms << ',' << s.x_g << ',' << s.y_g << ',' << s.z_g << '\n';
  os.flags(flags);
}

}  // namespace loratrack::synth
