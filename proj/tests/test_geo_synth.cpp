#include <cmath>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "loratrack/geo.hpp"
#include "loratrack/synthgen.hpp"

using namespace loratrack;

TEST(Geo, HaversineOneDegreeOfLongitudeAtEquator) {
  // 2*pi*R/360 with R = 6371 km.
  const double oracle = 2.0 * std::acos(-1.0) * 6371000.0 / 360.0;
  EXPECT_NEAR(geo::haversine_m({0, 0}, {0, 1}), oracle, 1e-6);
  EXPECT_NEAR(geo::haversine_m({0, 0}, {0, 1}), 111194.9266, 1e-3);
}

TEST(Geo, HaversineSymmetricAndZero) {
  const geo::LatLon a{39.9042, 116.4074}, b{39.95, 116.3};
  EXPECT_DOUBLE_EQ(geo::haversine_m(a, b), geo::haversine_m(b, a));
  EXPECT_DOUBLE_EQ(geo::haversine_m(a, a), 0.0);
}

TEST(Geo, OffsetRoundTripsThroughHaversine) {
  const geo::LatLon gw{39.90420, 116.40740};
  for (double d : {10.0, 100.0, 1000.0, 3000.0}) {
    EXPECT_NEAR(geo::haversine_m(gw, geo::offset_m(gw, d, 0)), d, d * 1e-4);
    EXPECT_NEAR(geo::haversine_m(gw, geo::offset_m(gw, 0, d)), d, d * 1e-4);
  }
}

TEST(Synth, SampleCountAndTimes) {
  EXPECT_EQ(synth::sample_count(3'600'000, 6.0), 21600u);
  EXPECT_EQ(synth::sample_count(3'600'000, 3.0), 10800u);
  const auto s = synth::generate_gait_segment({}, 1000.0, 1000.0, 6.0, 1);
  ASSERT_EQ(s.size(), 6u);
  for (std::size_t k = 0; k < s.size(); ++k) EXPECT_DOUBLE_EQ(s[k].t_ms, (6.0 + k) * 1000.0 / 6.0);
}

TEST(Synth, TrueStepCountIsFrequencyTimesDuration) {
  EXPECT_EQ(synth::generate_gait({}, 50'000, 6.0, 1).true_step_count, 100);
  synth::GaitProfile p;
  p.step_frequency_hz = 1.5;
  EXPECT_EQ(synth::generate_gait(p, 10'000, 6.0, 1).true_step_count, 15);
}

TEST(Synth, Deterministic) {
  const auto a = synth::generate_gait({}, 60'000, 6.0, 42);
  const auto b = synth::generate_gait({}, 60'000, 6.0, 42);
  const auto c = synth::generate_gait({}, 60'000, 6.0, 43);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.samples, c.samples);
}

TEST(Synth, NoiselessGaitIsExactSinusoid) {
  synth::GaitProfile p;
  p.noise_sigma_g = 0.0;
  const auto s = synth::generate_gait(p, 5'000, 6.0, 9).samples;
  for (const auto& x : s) {
    EXPECT_DOUBLE_EQ(x.x_g, 0.0);
    EXPECT_NEAR(x.z_g, 1.0 + 0.5 * std::sin(2 * std::acos(-1.0) * 2.0 * x.t_ms / 1000.0), 1e-12);
  }
}

TEST(Synth, ProfileValidation) {
  synth::GaitProfile p;
  p.step_frequency_hz = 3.5;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.amplitude_g = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  EXPECT_THROW(synth::generate_gait({}, 1000, 0.0, 1), std::invalid_argument);
}

TEST(Synth, FifoDropsPartialBatch) {
  const auto s = synth::generate_gait_segment({}, 0, 70'000.0 / 6.0 + 1, 6.0, 3);
  ASSERT_EQ(s.size(), 70u);
  const auto batches = synth::fill_fifo(s);
  ASSERT_EQ(batches.size(), 2u);
  EXPECT_EQ(batches[1].samples.back(), s[63]);
}

TEST(Synth, PathInterpolationAndBounds) {
  const synth::MovementPath path({{0.0, 0.0, 0}, {0.0, 1.0, 1000}});
  const auto mid = synth::position_at(path, 500);
  EXPECT_DOUBLE_EQ(mid.lat_deg, 0.0);
  EXPECT_NEAR(mid.lon_deg, 0.5, 1e-12);
  EXPECT_THROW(synth::position_at(path, 1001), std::out_of_range);
  EXPECT_THROW(synth::position_at(path, -1), std::out_of_range);
  EXPECT_THROW(synth::MovementPath({{0, 0, 10}, {0, 0, 10}}), std::invalid_argument);
  EXPECT_THROW(synth::MovementPath({{91, 0, 10}}), std::invalid_argument);
}

TEST(Synth, GpsExactWithoutNoise) {
  const geo::LatLon p{39.90422, 116.41143};
  const auto f = synth::sample_gps(p, 0.0, 1, 5.0);
  EXPECT_TRUE(f.valid);
  EXPECT_EQ(f.position(), p);
  EXPECT_DOUBLE_EQ(f.t_ms, 5.0);
}

TEST(Synth, GpsErrorBoundedOnGrid) {
  const geo::LatLon p{39.904211, 116.411437};
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto f = synth::sample_gps(p, synth::kDefaultGpsSigmaM, seed);
    EXPECT_LE(geo::haversine_m(p, f.position()), 10.0);
    EXPECT_DOUBLE_EQ(f.lat_deg, std::round(f.lat_deg * 1e5) / 1e5);
    EXPECT_DOUBLE_EQ(f.lon_deg, std::round(f.lon_deg * 1e5) / 1e5);
  }
}

TEST(Synth, TraceCsv) {
  std::ostringstream os;
  const auto s = synth::generate_gait_segment({}, 0, 1000, 3.0, 1);
  synth::write_trace_csv(os, s);
  const auto text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "t_ms,x_g,y_g,z_g");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}
