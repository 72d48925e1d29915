// Acceptance suite: one PASS/FAIL line per criterion; exit status is nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include "loratrack/loratrack.hpp"

using namespace loratrack;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// Standard LoRa airtime formula, explicit header, CRC on, CR 4/5, 8-symbol preamble, 125 kHz.
double toa_oracle(int sf, int pl) {
  const double ts = std::pow(2.0, sf) / 125000.0;
  const int de = sf >= 11 ? 1 : 0;
  const double n = 8 + std::max(std::ceil((8.0 * pl - 4.0 * sf + 44.0) / (4.0 * (sf - 2 * de))) * 5.0, 0.0);
  return (12.25 + n) * ts * 1000.0;
}

Outcome toa_table() {
  Outcome o;
  const double period[] = {70, 120, 230, 420, 910, 1650};
  const auto rows = sim::report_toa();
  o.check(rows.size() == 6, "expected 6 rows");
  for (const auto& r : rows) {
    const int i = r.sf - 7;
    o.check(r.send_period_ms == period[i], fmt("SF%.0f send period %.3f", r.sf, r.send_period_ms));
    o.check(r.current_ma == 134.0, fmt("SF%.0f current %.3f", r.sf, r.current_ma));
    o.check(std::abs(r.time_on_air_ms - toa_oracle(r.sf, 16)) <= 0.001,
            fmt("SF%.0f airtime %.4f vs %.4f", r.sf, r.time_on_air_ms, toa_oracle(r.sf, 16)));
  }
  if (o.pass) o.detail = fmt("SF12 airtime %.3f ms, send period %.0f ms", rows.back().time_on_air_ms, rows.back().send_period_ms);
  return o;
}

Outcome step_accuracy() {
  Outcome o;
  sim::StepTrialPlan plan;
  plan.trials = 20;
  const auto rows = sim::report_steps(plan);
  std::map<std::int64_t, std::map<double, double>> err;
  for (const auto& r : rows) err[r.target][r.fs_hz] = r.mean_error;
  std::string summary;
  for (const auto& [target, by_fs] : err) {
    const double e6 = by_fs.at(6.0), e3 = by_fs.at(3.0);
    o.check(e6 <= 0.10, fmt("target %.0f: 6 Hz error %.3f > 0.10", target, e6));
    o.check(e3 > e6, fmt("target %.0f: 3 Hz error %.3f not above 6 Hz %.3f", target, e3, e6));
    summary += fmt("%.0f: 6Hz %.3f / 3Hz %.3f  ", target, e6, e3);
  }
  if (o.pass) o.detail = summary + "(reference bands 0.03-0.08 and 0.10-0.17)";
  return o;
}

Outcome energy_budget() {
  Outcome o;
  const auto r = energy::energy_report(12, 6.0, 24);
  o.check(std::abs(r.daily_mah - 18.0) <= 0.15 * 18.0, fmt("daily %.4f mAh outside 18 +/- 15%%", r.daily_mah));
  const auto solar = energy::solar_balance(r.daily_mah, 40.0, 0.5);
  o.check(solar.sustainable, fmt("solar supply %.1f does not cover %.3f", solar.supply_mah, r.daily_mah));
  int reports = 0;
  for (int sf = 7; sf <= 12; ++sf)
    for (double fs : {3.0, 6.0, 12.5, 25.0})
      for (int tx : {1, 6, 24, 48, 96}) {
        const auto e = energy::energy_report(sf, fs, tx);
        ++reports;
        o.check(e.q_duty_mas == energy::duty_identity(e.n_cycles, e.q_c_mas, e.q_s_mas, e.q_t_mas),
                fmt("identity broken at SF%.0f fs %.1f tx %.0f", sf, fs, tx));
      }
  if (o.pass) o.detail = fmt("daily %.4f mAh, solar %.1f mAh, identity exact on %.0f reports", r.daily_mah, solar.supply_mah, reports);
  return o;
}

Outcome link_properties() {
  Outcome o;
  const phy::LinkEnv env;
  phy::RadioConfig sf12;
  sf12.sf = 12;
  sf12.tx_power_dbm = 20;
  double prev = INFINITY;
  for (double d = 100; d <= 5000; d += 10) {
    const double r = phy::link_budget(sf12, env, d, 0).rssi_dbm;
    o.check(r < prev, fmt("RSSI not decreasing at %.0f m", d));
    prev = r;
  }
  const auto at3k = phy::link_budget(sf12, env, 3000, 0);
  o.check(phy::receive_decision(at3k, sf12, env), fmt("3 km SF12 not delivered (SNR %.2f)", at3k.snr_db));
  auto sf7 = sf12;
  sf7.sf = 7;
  const double r12 = phy::max_range_m(sf12, env), r7 = phy::max_range_m(sf7, env);
  o.check(r12 > r7, fmt("range SF12 %.0f <= SF7 %.0f", r12, r7));
  for (double d : {100.0, 777.0, 3000.0, 4999.0}) {
    auto lo = sf12, hi = sf12;
    lo.tx_power_dbm = 16;
    hi.tx_power_dbm = 17;
    const auto a = phy::link_budget(lo, env, d, 0), b = phy::link_budget(hi, env, d, 0);
    o.check(b.rssi_dbm - a.rssi_dbm == 1.0 && b.snr_db - a.snr_db == 1.0, fmt("+1 dB not exact at %.0f m", d));
  }
  const geo::LatLon gw{39.90420, 116.40740};
  const auto c = geo::offset_m(gw, 2000, 0), d = geo::offset_m(gw, 3000, 0);
  phy::LinkEnv obstructed;
  obstructed.obstructions.push_back({c.lat_deg, c.lon_deg, 100.0, 15.0});
  const auto rc = phy::link_budget_between(sf12, obstructed, c, gw, 0);
  const auto rd = phy::link_budget_between(sf12, obstructed, d, gw, 0);
  o.check(rd.rssi_dbm > rc.rssi_dbm, fmt("obstructed 2 km RSSI %.2f not below 3 km %.2f", rc.rssi_dbm, rd.rssi_dbm));
  if (o.pass)
    o.detail = fmt("3 km SNR %.2f dB; range SF7 %.0f m < SF12 %.0f m", at3k.snr_db, r7, r12) +
               fmt("; obstructed 2 km %.2f dBm < 3 km %.2f dBm", rc.rssi_dbm, rd.rssi_dbm);
  return o;
}

Outcome end_to_end() {
  Outcome o;
  const auto sc = sim::default_scenario();
  const auto r = sim::run(sc);
  const std::uint32_t dev = sc.devices[0].device.dev_addr;
  const auto track = r.server->track(dev);
  const auto buckets = r.server->steps(dev);
  const auto& ups = r.device_uplinks.at(dev);
  o.check(r.server->counters().accepted == 24, fmt("accepted %.0f", r.server->counters().accepted));
  o.check(track.size() == 24, fmt("track points %.0f", track.size()));
  o.check(buckets.size() == 144, fmt("buckets %.0f", buckets.size()));
  double worst = 0;
  for (const auto& p : track)
    worst = std::max(worst, geo::haversine_m(synth::position_at(sc.devices[0].path, static_cast<double>(p.t_ms)),
                                             {p.lat_deg, p.lon_deg}));
  o.check(worst <= 10.0, fmt("track point %.2f m from true path", worst));
  std::int64_t stored = 0, counted = 0, worst_window = 0;
  if (buckets.size() == ups.size() * 6) {
    for (std::size_t k = 0; k < ups.size(); ++k)
      for (std::size_t i = 0; i < 6; ++i) {
        stored += buckets[k * 6 + i].steps;
        counted += ups[k].window_steps[i];
        worst_window = std::max<std::int64_t>(worst_window, std::abs(buckets[k * 6 + i].steps - ups[k].window_steps[i]));
      }
  } else {
    o.check(false, "bucket count does not match device uplinks");
  }
  o.check(worst_window <= 4, fmt("window off by %.0f steps", worst_window));
  if (o.pass)
    o.detail = fmt("24/24/144; worst fix error %.2f m; steps stored %.0f vs counted %.0f", worst, stored, counted);
  return o;
}

Outcome wire_codecs() {
  Outcome o;
  std::mt19937_64 rng(6);
  int trips = 0;
  for (int i = 0; i < 1000; ++i) {
    Bytes frame(1 + rng() % 64);
    for (auto& b : frame) b = static_cast<std::uint8_t>(rng());
    gw::Rxpk rx;
    rx.tmst = static_cast<std::uint32_t>(rng());
    rx.tmms = static_cast<std::int64_t>(rng() % 100'000'000'000LL);
    rx.freq_mhz = 433.0 + (rng() % 80) * 0.025;
    rx.datr = gw::format_datr(7 + static_cast<int>(rng() % 6), 125000);
    rx.rssi = -static_cast<int>(rng() % 120) - 20;
    rx.lsnr = static_cast<double>(static_cast<int>(rng() % 500) - 200) / 10.0;
    rx.size = static_cast<int>(frame.size());
    rx.data = base64::encode(frame);
    gw::Eui eui;
    for (auto& b : eui) b = static_cast<std::uint8_t>(rng());
    const auto token = static_cast<std::uint16_t>(rng());
    const auto pd = gw::decode_push_data(gw::encode_push_data(token, eui, {rx}));
    gw::Txpk tx;
    tx.tmst = rx.tmst;
    tx.freq_mhz = rx.freq_mhz;
    tx.datr = rx.datr;
    tx.size = rx.size;
    tx.data = rx.data;
    tx.powe = static_cast<int>(rng() % 21);
    const bool ok = pd.token == token && pd.eui == eui && pd.rxpks.size() == 1 && pd.rxpks[0] == rx &&
                    gw::decode_pull_resp(gw::encode_pull_resp(token, tx)) == tx;
    trips += ok;
  }
  o.check(trips == 1000, fmt("%.0f/1000 round trips", trips));

  gw::Rxpk r;
  r.data = base64::encode(Bytes{1});
  r.size = 1;
  const auto p = gw::encode_push_data(0x1A2B, gw::parse_eui("AA:BB:CC:DD:EE:FF:00:11"), {r});
  const auto header = to_hex(ByteView(p).first(12));
  o.check(header == "02 1A 2B 00 AA BB CC DD EE FF 00 11", "header " + header);

  // Independent packing: degrees x 1e5 as little-endian int32.
  auto le = [](std::int32_t v) {
    char buf[16];
    const auto u = static_cast<std::uint32_t>(v);
    std::snprintf(buf, sizeof buf, "%02X %02X %02X %02X", u & 0xFF, (u >> 8) & 0xFF, (u >> 16) & 0xFF, u >> 24);
    return std::string(buf);
  };
  mac::UplinkPayload pl;
  pl.lat_e5 = mac::degrees_to_e5(39.90420);
  pl.lon_e5 = mac::degrees_to_e5(116.40740);
  const auto bytes = mac::encode_payload(pl);
  const auto lat = to_hex(ByteView(bytes).subspan(0, 4)), lon = to_hex(ByteView(bytes).subspan(4, 4));
  o.check(lat == "94 E3 3C 00" && lat == le(3990420), "lat bytes " + lat);
  o.check(lon == "A4 9F B1 00" && lon == le(11640740), "lon bytes " + lon);

  server::ServerConfig cfg;
  mac::FrameKey key{};
  cfg.device_keys[0x26011001] = key;
  server::NetworkServer srv(cfg);
  pl.flags = mac::kFlagGpsValid;
  auto uplink = [&](std::uint16_t fcnt) {
    const auto f = mac::build_frame(mac::encode_payload(pl), fcnt, 0x26011001, key);
    return gw::encode_push_data(1, gw::GatewayConfig{}.eui,
                                {gw::make_rxpk(f, {-90, 10, 1000}, phy::RadioConfig{}, fcnt * 1000u, fcnt * 1000)});
  };
  srv.handle_datagram(uplink(1), "gw");
  std::uint64_t expected = 0;
  for (int dup = 0; dup < 5; ++dup) {
    srv.handle_datagram(uplink(1), "gw");
    ++expected;
    if (srv.counters().replays != expected) o.check(false, fmt("duplicate %.0f: %.0f replays", dup, srv.counters().replays));
  }
  srv.handle_datagram(uplink(2), "gw");
  o.check(srv.counters().accepted == 2 && srv.counters().replays == 5, "fresh fcnt after duplicates not accepted");
  if (o.pass) o.detail = "1000/1000 round trips; header and payload bytes match; 5 duplicates -> 5 rejections";
  return o;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome determinism() {
  Outcome o;
  const auto dir = std::filesystem::temp_directory_path();
  const auto tag = std::to_string(::getpid());
  const auto s1 = dir / ("loratrack_accept_1_" + tag), s2 = dir / ("loratrack_accept_2_" + tag);
  sim::RunOptions opts;
  auto sc = sim::default_scenario();
  sc.seed = 7;
  opts.store_path = s1;
  const auto a = sim::run(sc, opts).log.csv();
  opts.store_path = s2;
  const auto b = sim::run(sc, opts).log.csv();
  const auto sa = slurp(s1), sb = slurp(s2);
  o.check(a == b, "event logs differ");
  o.check(sa == sb, "store files differ");
  o.check(!sa.empty(), "store file empty");
  std::filesystem::remove(s1);
  std::filesystem::remove(s2);
  if (o.pass) o.detail = fmt("log %.0f bytes, store %.0f bytes identical", a.size(), sa.size());
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
  };
  const Criterion all[] = {
      {1, "airtime table", 1.0, toa_table},
      {2, "step accuracy", 30.0, step_accuracy},
      {3, "energy budget", 0.0, energy_budget},
      {4, "link properties", 0.0, link_properties},
      {5, "end-to-end conservation", 10.0, end_to_end},
      {6, "wire and codec golden tests", 0.0, wire_codecs},
      {7, "determinism", 0.0, determinism},
  };
  int failed = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_s > 0) o.check(secs < c.limit_s, fmt("runtime %.2f s over %.0f s limit", secs, c.limit_s));
    failed += !o.pass;
    std::printf("criterion %d %-28s %s  (%.2f s)  %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
  }
  std::printf("%d/7 criteria passed\n", 7 - failed);
  return failed == 0 ? 0 : 1;
}
