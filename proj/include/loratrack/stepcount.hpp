#pragma once

// Zero-crossing pedometer with a per-FIFO dynamic threshold.
//
// For each 32-sample batch of z-axis acceleration:
//   alpha = mean, beta = max, gamma = min
//   T = max(beta - alpha, alpha - gamma); if T < S the batch is static and counts 0
//   p = T / m
//   a two-register window (A = previous, B = current) slides one sample at a time and counts
//   a step whenever A - alpha > p and B - alpha < -p.
// Registers reset at every batch, so the pair straddling two batches is never evaluated.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "loratrack/synthgen.hpp"

namespace loratrack::steps {

inline constexpr std::int64_t kWindowLenMs = 600'000;
inline constexpr std::size_t kWindowsPerCycle = 6;

struct WindowStats {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double threshold = 0.0;
  double precision = 0.0;
};

struct StepCounterConfig {
  double s_static_g = 0.2;
  double m_precision = 4.0;

  void validate() const {
    if (!(s_static_g > 0.0)) throw std::invalid_argument("stepcount: S must be positive");
    if (!(m_precision >= 1.0)) throw std::invalid_argument("stepcount: m must be >= 1");
  }
};

struct StepWindow {
  std::int64_t window_start_ms = 0;
  std::int64_t window_len_ms = kWindowLenMs;
  std::int64_t steps = 0;
  friend bool operator==(const StepWindow&, const StepWindow&) = default;
};

inline WindowStats window_stats(std::span<const double> z, double m_precision) {
  if (z.size() != synth::kFifoDepth)
    throw std::invalid_argument("stepcount: batch must hold exactly 32 samples");
  WindowStats s;
  s.alpha = std::accumulate(z.begin(), z.end(), 0.0) / static_cast<double>(z.size());
  const auto [lo, hi] = std::minmax_element(z.begin(), z.end());
  s.beta = *hi;
  s.gamma = *lo;
  s.threshold = std::max(s.beta - s.alpha, s.alpha - s.gamma);
  s.precision = s.threshold / m_precision;
  return s;
}

inline std::array<double, synth::kFifoDepth> z_axis(const synth::FifoBatch& batch) {
  std::array<double, synth::kFifoDepth> z{};
  std::transform(batch.samples.begin(), batch.samples.end(), z.begin(),
                 [](const synth::AccelSample& s) { return s.z_g; });
  return z;
}

inline WindowStats window_stats(const synth::FifoBatch& batch,
                                const StepCounterConfig& config = {}) {
  const auto z = z_axis(batch);
  return window_stats(std::span<const double>(z), config.m_precision);
}

inline std::int64_t count_batch(std::span<const double> z, const StepCounterConfig& config) {
  const WindowStats st = window_stats(z, config.m_precision);
  if (st.threshold < config.s_static_g) return 0;
  std::int64_t steps = 0;
  double reg_a = z[0];
  for (std::size_t i = 1; i < z.size(); ++i) {
    const double reg_b = z[i];
    if (reg_a - st.alpha > st.precision && reg_b - st.alpha < -st.precision) ++steps;
    reg_a = reg_b;
  }
  return steps;
}

inline std::int64_t count_batch(const synth::FifoBatch& batch,
                                const StepCounterConfig& config = {}) {
  const auto z = z_axis(batch);
  return count_batch(std::span<const double>(z), config);
}

// Index of the 10-minute window a timestamp falls into, clamped to the cycle.
inline std::size_t window_index(double t_ms, std::int64_t cycle_start_ms,
                                std::int64_t window_len_ms = kWindowLenMs,
                                std::size_t n_windows = kWindowsPerCycle) {
  const double rel = t_ms - static_cast<double>(cycle_start_ms);
  if (rel <= 0.0) return 0;
  const auto idx = static_cast<std::size_t>(rel / static_cast<double>(window_len_ms));
  return std::min(idx, n_windows - 1);
}

struct TimedIncrement {
  double t_ms = 0.0;
  std::int64_t steps = 0;
};

inline std::vector<StepWindow> accumulate(std::span<const TimedIncrement> increments,
                                          std::int64_t cycle_start_ms = 0,
                                          std::int64_t window_len_ms = kWindowLenMs,
                                          std::size_t n_windows = kWindowsPerCycle) {
  std::vector<StepWindow> windows(n_windows);
  for (std::size_t i = 0; i < n_windows; ++i) {
    windows[i].window_start_ms = cycle_start_ms + static_cast<std::int64_t>(i) * window_len_ms;
    windows[i].window_len_ms = window_len_ms;
  }
  double prev = -1e300;
  for (const auto& inc : increments) {
    if (inc.t_ms < prev) throw std::invalid_argument("stepcount: increments must be time-ordered");
    prev = inc.t_ms;
    windows[window_index(inc.t_ms, cycle_start_ms, window_len_ms, n_windows)].steps += inc.steps;
  }
  return windows;
}

// Full pipeline over a trace: FIFO batching, per-batch counting, summation.
inline std::int64_t count_trace(std::span<const synth::AccelSample> samples,
                                const StepCounterConfig& config = {}) {
  std::int64_t total = 0;
  for (const auto& b : synth::fill_fifo(samples)) total += count_batch(b, config);
  return total;
}

}  // namespace loratrack::steps
