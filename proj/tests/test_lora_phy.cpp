#include <cmath>

#include <gtest/gtest.h>

#include "loratrack/geo.hpp"
#include "loratrack/lora_phy.hpp"

using namespace loratrack;

namespace {

// Airtime from the datasheet formula, written out independently of the library.
double toa_oracle(int sf, int pl, bool ldro_auto = true) {
  const double bw = 125000.0;
  const double ts = std::pow(2.0, sf) / bw;
  const int de = (ldro_auto && sf >= 11) ? 1 : 0;
  const double n = std::max(std::ceil((8.0 * pl - 4.0 * sf + 28 + 16) / (4.0 * (sf - 2 * de))) * 5.0, 0.0);
  return ((8 + 4.25) + 8 + n) * ts * 1000.0;
}

phy::RadioConfig at_sf(int sf) {
  phy::RadioConfig c;
  c.sf = sf;
  return c;
}

}  // namespace

TEST(TimeOnAir, SixteenBytePayloadAllSf) {
  const double frozen[] = {51.456, 92.672, 164.864, 329.728, 659.456, 1318.912};
  for (int sf = 7; sf <= 12; ++sf) {
    EXPECT_NEAR(phy::time_on_air(at_sf(sf), 16), toa_oracle(sf, 16), 1e-9) << sf;
    EXPECT_NEAR(phy::time_on_air(at_sf(sf), 16), frozen[sf - 7], 1e-3) << sf;
  }
}

TEST(TimeOnAir, OneByteAtSf12) { EXPECT_NEAR(phy::time_on_air(at_sf(12), 1), 827.392, 1e-3); }

TEST(TimeOnAir, MonotoneInSfAndPayload) {
  for (int pl = 1; pl <= 64; ++pl)
    for (int sf = 7; sf < 12; ++sf) EXPECT_LT(phy::time_on_air(at_sf(sf), pl), phy::time_on_air(at_sf(sf + 1), pl));
  for (int sf = 7; sf <= 12; ++sf)
    for (int pl = 1; pl < 64; ++pl) EXPECT_LE(phy::time_on_air(at_sf(sf), pl), phy::time_on_air(at_sf(sf), pl + 1));
}

TEST(TimeOnAir, LdroCanBeForced) {
  auto c = at_sf(12);
  c.ldro = false;
  EXPECT_NEAR(phy::time_on_air(c, 16), toa_oracle(12, 16, false), 1e-9);
  EXPECT_FALSE(at_sf(10).low_data_rate_optimize());
  EXPECT_TRUE(at_sf(11).low_data_rate_optimize());
}

TEST(TimeOnAir, InvalidInputs) {
  EXPECT_THROW(phy::time_on_air(at_sf(6), 16), std::out_of_range);
  EXPECT_THROW(phy::time_on_air(at_sf(13), 16), std::out_of_range);
  EXPECT_THROW(phy::time_on_air(at_sf(12), 0), std::invalid_argument);
  auto c = at_sf(12);
  c.tx_power_dbm = 21;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(SendPeriod, TableDefaults) {
  const double table[] = {70, 120, 230, 420, 910, 1650};
  for (int sf = 7; sf <= 12; ++sf) EXPECT_EQ(phy::send_period(sf), table[sf - 7]);
  EXPECT_THROW(phy::send_period(6), std::out_of_range);
}

TEST(LinkBudget, FreeSpaceReference) {
  EXPECT_NEAR(phy::free_space_loss_db(1.0, 433e6), 25.1775, 1e-4);
  EXPECT_NEAR(phy::LinkEnv{}.ref_loss_db, phy::free_space_loss_db(1.0, 433e6), 0.01);
}

TEST(LinkBudget, WorkedExampleAtThreeKm) {
  const phy::LinkEnv env;
  const auto rx = phy::link_budget(at_sf(12), env, 3000.0, 1);
  const double pl = 25.18 + 27.0 * std::log10(3000.0);
  EXPECT_NEAR(pl, 119.0623, 1e-4);
  EXPECT_NEAR(rx.rssi_dbm, 24.0 - pl, 1e-9);
  const double nf = -174.0 + 10 * std::log10(125000.0) + 6.0;
  EXPECT_NEAR(phy::noise_floor_dbm(125000, 6), nf, 1e-9);
  EXPECT_NEAR(nf, -117.0309, 1e-4);
  EXPECT_NEAR(rx.snr_db, rx.rssi_dbm - nf, 1e-9);
  EXPECT_NEAR(rx.snr_db, 21.9686, 1e-4);
  EXPECT_TRUE(phy::receive_decision(rx, at_sf(12), env));
}

TEST(LinkBudget, Sensitivity) {
  EXPECT_NEAR(phy::sensitivity_dbm(12, 125000, 6), -137.031, 1e-3);
  EXPECT_NEAR(phy::sensitivity_dbm(7, 125000, 6), -124.531, 1e-3);
}

TEST(LinkBudget, RssiStrictlyDecreasing) {
  const phy::LinkEnv env;
  double prev = 1e9;
  for (double d = 100; d <= 5000; d += 50) {
    const double r = phy::link_budget(at_sf(12), env, d, 0).rssi_dbm;
    EXPECT_LT(r, prev);
    prev = r;
  }
}

TEST(LinkBudget, TxPowerShiftsExactly) {
  const phy::LinkEnv env;
  for (double d : {100.0, 1000.0, 3000.0, 4999.0}) {
    auto lo = at_sf(12), hi = at_sf(12);
    lo.tx_power_dbm = 14;
    hi.tx_power_dbm = 15;
    const auto a = phy::link_budget(lo, env, d, 0), b = phy::link_budget(hi, env, d, 0);
    EXPECT_EQ(b.rssi_dbm - a.rssi_dbm, 1.0);
    EXPECT_EQ(b.snr_db - a.snr_db, 1.0);
  }
}

TEST(LinkBudget, SfDoesNotChangeRssi) {
  const phy::LinkEnv env;
  for (int sf = 7; sf <= 12; ++sf)
    EXPECT_EQ(phy::link_budget(at_sf(sf), env, 2000, 0).rssi_dbm, phy::link_budget(at_sf(12), env, 2000, 0).rssi_dbm);
}

TEST(LinkBudget, RangeGrowsWithSf) {
  const phy::LinkEnv env;
  for (int sf = 7; sf < 12; ++sf) EXPECT_LT(phy::max_range_m(at_sf(sf), env), phy::max_range_m(at_sf(sf + 1), env));
  // Closed form agrees with the receive decision on either side of the boundary.
  for (int sf = 7; sf <= 12; ++sf) {
    const double r = phy::max_range_m(at_sf(sf), env);
    EXPECT_TRUE(phy::receive_decision(phy::link_budget(at_sf(sf), env, r * 0.999, 0), at_sf(sf), env));
    EXPECT_FALSE(phy::receive_decision(phy::link_budget(at_sf(sf), env, r * 1.001, 0), at_sf(sf), env));
  }
}

TEST(LinkBudget, ObstructionMakesNearPointWorse) {
  const geo::LatLon gw{39.90420, 116.40740};
  const auto c = geo::offset_m(gw, 2000, 0), d = geo::offset_m(gw, 3000, 0);
  phy::LinkEnv env;
  env.obstructions.push_back({c.lat_deg, c.lon_deg, 100.0, 15.0});
  const auto rc = phy::link_budget_between(at_sf(12), env, c, gw, 0);
  const auto rd = phy::link_budget_between(at_sf(12), env, d, gw, 0);
  EXPECT_GT(rd.rssi_dbm, rc.rssi_dbm);
  EXPECT_GT(rd.snr_db, rc.snr_db);
}

TEST(LinkBudget, ShadowingSeeded) {
  phy::LinkEnv env;
  EXPECT_EQ(phy::shadowing_draw(env, 5), 0.0);
  env.shadowing_sigma_db = 4.0;
  EXPECT_EQ(phy::shadowing_draw(env, 5), phy::shadowing_draw(env, 5));
  EXPECT_NE(phy::shadowing_draw(env, 5), phy::shadowing_draw(env, 6));
}

TEST(LinkBudget, InvalidInputs) {
  const phy::LinkEnv env;
  EXPECT_THROW(phy::path_loss(env, 0.5), std::invalid_argument);
  phy::LinkEnv bad;
  bad.path_loss_exp = 1.5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}
