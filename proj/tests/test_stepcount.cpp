#include <array>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "loratrack/stepcount.hpp"
#include "loratrack/synthgen.hpp"

using namespace loratrack;

namespace {

std::array<double, 32> noiseless_batch(double fs) {
  std::array<double, 32> z{};
  for (int k = 0; k < 32; ++k) z[k] = 1.0 + 0.5 * std::sin(2 * std::acos(-1.0) * 2.0 * k / fs);
  return z;
}

// Reference for the four scripted steps: mean/max/min, dynamic threshold, precision band,
// then a falling crossing of the band between consecutive samples counts one step.
std::int64_t reference_count(const std::array<double, 32>& z, double S, double m) {
  double sum = 0, hi = z[0], lo = z[0];
  for (double v : z) {
    sum += v;
    hi = std::max(hi, v);
    lo = std::min(lo, v);
  }
  const double a = sum / 32;
  const double T = std::max(hi - a, a - lo);
  if (T < S) return 0;
  const double p = T / m;
  std::int64_t n = 0;
  for (int i = 0; i + 1 < 32; ++i)
    if (z[i] > a + p && z[i + 1] < a - p) ++n;
  return n;
}

// Dyadic samples keep sums, offsets and power-of-two scalings exact.
std::array<double, 32> dyadic_batch(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(-600, 600);
  std::array<double, 32> z{};
  for (auto& v : z) v = 1.0 + d(rng) / 1024.0;
  return z;
}

std::int64_t count(const std::array<double, 32>& z, steps::StepCounterConfig c = {}) {
  return steps::count_batch(std::span<const double>(z), c);
}

}  // namespace

TEST(WindowStats, HandVector) {
  std::array<double, 32> z{};
  z.fill(1.0);
  z[3] = 2.0;
  z[7] = 0.5;
  const auto s = steps::window_stats(std::span<const double>(z), 4.0);
  EXPECT_DOUBLE_EQ(s.alpha, (30.0 + 2.0 + 0.5) / 32.0);
  EXPECT_DOUBLE_EQ(s.beta, 2.0);
  EXPECT_DOUBLE_EQ(s.gamma, 0.5);
  EXPECT_DOUBLE_EQ(s.threshold, 2.0 - s.alpha);
  EXPECT_DOUBLE_EQ(s.precision, s.threshold / 4.0);
}

TEST(WindowStats, RejectsWrongLength) {
  std::vector<double> z(31, 1.0);
  EXPECT_THROW(steps::window_stats(z, 4.0), std::invalid_argument);
}

TEST(CountBatch, NoiselessTwoHertzAtSixHertz) {
  const auto z = noiseless_batch(6.0);
  const auto s = steps::window_stats(std::span<const double>(z), 4.0);
  EXPECT_NEAR(s.alpha, 1.0135316, 1e-7);
  EXPECT_NEAR(s.threshold, 0.4465443, 1e-7);
  EXPECT_EQ(count(z), 10);
  EXPECT_EQ(count(z), reference_count(z, 0.2, 4.0));
}

TEST(CountBatch, MatchesReferenceOnNoisyBatches) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    for (double fs : {3.0, 6.0}) {
      const auto seg = synth::generate_gait_segment({}, 0, 32 * 1000.0 / fs + 1, fs, seed);
      ASSERT_GE(seg.size(), 32u);
      std::array<double, 32> z{};
      for (int k = 0; k < 32; ++k) z[k] = seg[k].z_g;
      EXPECT_EQ(count(z), reference_count(z, 0.2, 4.0));
    }
  }
}

TEST(CountBatch, ConstantTraceCountsNothing) {
  for (double c : {-3.0, 0.0, 1.0, 9.81}) {
    std::array<double, 32> z{};
    z.fill(c);
    EXPECT_EQ(count(z), 0);
  }
}

TEST(CountBatch, BelowStaticThresholdCountsNothing) {
  auto z = noiseless_batch(6.0);
  for (auto& v : z) v = 1.0 + (v - 1.0) * 0.3;  // T ~ 0.13 < 0.2
  EXPECT_EQ(count(z), 0);
  steps::StepCounterConfig lax;
  lax.s_static_g = 0.1;
  EXPECT_GT(count(z, lax), 0);
}

TEST(CountBatch, OffsetInvariance) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> off(-2048, 2048);
  for (int trial = 0; trial < 500; ++trial) {
    const auto z = dyadic_batch(rng);
    auto shifted = z;
    const double c = off(rng) / 1024.0;
    for (auto& v : shifted) v += c;
    EXPECT_EQ(count(z), count(shifted));
  }
}

TEST(CountBatch, ScaleInvariance) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 500; ++trial) {
    const auto z = dyadic_batch(rng);
    const auto st = steps::window_stats(std::span<const double>(z), 4.0);
    for (double k : {2.0, 4.0}) {
      auto scaled = z;
      for (auto& v : scaled) v *= k;
      const auto ss = steps::window_stats(std::span<const double>(scaled), 4.0);
      EXPECT_DOUBLE_EQ(ss.alpha, k * st.alpha);
      EXPECT_DOUBLE_EQ(ss.threshold, k * st.threshold);
      EXPECT_DOUBLE_EQ(ss.precision, k * st.precision);
      if (st.threshold >= 0.2) {
        EXPECT_EQ(count(z), count(scaled));
      }
    }
  }
}

TEST(CountBatch, Deterministic) {
  std::mt19937_64 rng(5);
  const auto z = dyadic_batch(rng);
  EXPECT_EQ(count(z), count(z));
}

TEST(Windows, IndexAndClamp) {
  EXPECT_EQ(steps::window_index(650'000, 0), 1u);
  EXPECT_EQ(steps::window_index(0, 0), 0u);
  EXPECT_EQ(steps::window_index(599'999, 0), 0u);
  EXPECT_EQ(steps::window_index(600'000, 0), 1u);
  EXPECT_EQ(steps::window_index(3'599'999, 0), 5u);
  EXPECT_EQ(steps::window_index(9'000'000, 0), 5u);
  EXPECT_EQ(steps::window_index(-5, 0), 0u);
}

TEST(Windows, SingleIncrement) {
  const std::vector<steps::TimedIncrement> inc{{650'000, 10}};
  const auto w = steps::accumulate(inc);
  ASSERT_EQ(w.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(w[i].steps, i == 1 ? 10 : 0);
    EXPECT_EQ(w[i].window_start_ms, static_cast<std::int64_t>(i) * 600'000);
  }
}

TEST(Windows, UniformOneStepPerBatchAtSixHertz) {
  // Batch i completes when its last sample (index 32i+31) is taken.
  std::vector<steps::TimedIncrement> inc;
  for (int i = 0; i < 675; ++i) inc.push_back({(32.0 * i + 31) * 1000.0 / 6.0, 1});
  const auto w = steps::accumulate(inc);
  std::array<std::int64_t, 6> oracle{};
  for (int i = 0; i < 675; ++i) {
    const long long t_num = (32LL * i + 31) * 1000;  // exact integer arithmetic: t = t_num / 6
    ++oracle[std::min<long long>(t_num / (6LL * 600'000), 5)];
  }
  std::int64_t total = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(w[i].steps, oracle[i]);
    EXPECT_TRUE(w[i].steps == 112 || w[i].steps == 113);
    total += w[i].steps;
  }
  EXPECT_EQ(total, 675);
}

TEST(Windows, UnorderedIncrementsRejected) {
  const std::vector<steps::TimedIncrement> inc{{2000, 1}, {1000, 1}};
  EXPECT_THROW(steps::accumulate(inc), std::invalid_argument);
}

TEST(Accuracy, NoiselessSixHertzWithinTenPercentAndThreeHertzWorse) {
  synth::GaitProfile p;
  p.noise_sigma_g = 0.0;
  for (std::int64_t target : {100, 200, 400}) {
    const double dur = target * 1000.0 / p.step_frequency_hz;
    const auto t6 = synth::generate_gait(p, dur, 6.0, 1);
    const auto t3 = synth::generate_gait(p, dur, 3.0, 1);
    const double e6 = std::abs(double(steps::count_trace(t6.samples) - target)) / target;
    const double e3 = std::abs(double(steps::count_trace(t3.samples) - target)) / target;
    EXPECT_LE(e6, 0.10) << target;
    EXPECT_GT(e3, e6) << target;
  }
}
