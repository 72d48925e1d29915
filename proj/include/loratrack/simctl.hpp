#pragma once

// Discrete-event scenario runner and report generators.
//
// One simulated clock drives every device, the radio link, the gateway and the server. Events
// are ordered by (time, priority, insertion sequence); device timers win ties so that a receive
// window is open before a downlink due at the same millisecond is delivered.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <tuple>
#include <memory>
#include <optional>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "loratrack/device_mac.hpp"
#include "loratrack/energy.hpp"
#include "loratrack/gateway.hpp"
#include "loratrack/geo.hpp"
#include "loratrack/lora_phy.hpp"
#include "loratrack/server.hpp"
#include "loratrack/stepcount.hpp"
#include "loratrack/store.hpp"
#include "loratrack/synthgen.hpp"
#include "loratrack/udp.hpp"

namespace loratrack::sim {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Scenario

struct DeviceSpec {
  mac::DeviceConfig device{};
  synth::GaitProfile gait{};
  synth::MovementPath path{};
  double gps_sigma_m = synth::kDefaultGpsSigmaM;
  std::vector<geo::LatLon> fence;  // empty: no fence
};

struct Scenario {
  std::uint64_t seed = 7;
  std::int64_t duration_ms = 86'400'000;
  geo::LatLon gateway{39.90420, 116.40740};
  phy::LinkEnv link{};
  double adr_margin_db = 10.0;
  std::vector<DeviceSpec> devices;

  // Every problem found; empty means runnable.
  std::vector<std::string> validate() const {
    std::vector<std::string> errs;
    if (devices.empty()) errs.push_back("scenario: no devices");
    if (duration_ms <= 0) errs.push_back("scenario: duration must be positive");
    if (std::abs(gateway.lat_deg) > 90.0 || std::abs(gateway.lon_deg) > 180.0)
      errs.push_back("scenario: gateway position outside WGS-84 range");
    try {
      link.validate();
    } catch (const std::exception& e) {
      errs.push_back(e.what());
    }
    std::set<std::uint32_t> seen;
    for (const auto& d : devices) {
      const std::string who = "device " + server::format_dev_addr(d.device.dev_addr) + ": ";
      if (!seen.insert(d.device.dev_addr).second) errs.push_back(who + "duplicate dev_addr");
      try {
        d.device.validate();
        d.gait.validate();
      } catch (const std::exception& e) {
        errs.push_back(who + e.what());
      }
      if (duration_ms < d.device.duty_period_ms) errs.push_back(who + "duration shorter than one duty period");
      if (!(d.gps_sigma_m >= 0.0)) errs.push_back(who + "gps sigma must be >= 0");
      if (d.path.waypoints().empty()) {
        errs.push_back(who + "empty movement path");
      } else if (d.path.start_ms() > 0 || d.path.end_ms() < duration_ms + d.device.gps_acquire_ms) {
        errs.push_back(who + "movement path must cover [0, duration + gps acquisition]");
      }
      if (!d.fence.empty() && d.fence.size() < 3) errs.push_back(who + "fence needs at least 3 vertices");
    }
    return errs;
  }
};

inline std::string key_hex(const mac::FrameKey& k) { return to_hex(k, 0); }

inline json to_json(const Scenario& s) {
  json devs = json::array();
  for (const auto& d : s.devices) {
    json path = json::array();
    for (const auto& w : d.path.waypoints()) path.push_back({{"lat", w.lat_deg}, {"lon", w.lon_deg}, {"t_ms", w.t_ms}});
    json fence = json::array();
    for (const auto& v : d.fence) fence.push_back({v.lat_deg, v.lon_deg});
    const auto& c = d.device;
    devs.push_back({{"dev_addr", server::format_dev_addr(c.dev_addr)},
                    {"key", key_hex(c.frame_key)},
                    {"duty_period_ms", c.duty_period_ms},
                    {"fs_hz", c.fs_hz},
                    {"sf", c.radio.sf},
                    {"tx_power_dbm", c.radio.tx_power_dbm},
                    {"battery_capacity_mah", c.battery_capacity_mah},
                    {"step_threshold_g", c.step_config.s_static_g},
                    {"m_precision", c.step_config.m_precision},
                    {"gps_sigma_m", d.gps_sigma_m},
                    {"gait",
                     {{"step_frequency_hz", d.gait.step_frequency_hz},
                      {"amplitude_g", d.gait.amplitude_g},
                      {"noise_sigma_g", d.gait.noise_sigma_g},
                      {"bias_g", d.gait.bias_g}}},
                    {"path", path},
                    {"fence", fence}});
  }
  json obst = json::array();
  for (const auto& o : s.link.obstructions)
    obst.push_back({{"lat", o.lat_deg}, {"lon", o.lon_deg}, {"radius_m", o.radius_m}, {"loss_db", o.loss_db}});
  return {{"seed", s.seed},
          {"duration_ms", s.duration_ms},
          {"gateway", {{"lat", s.gateway.lat_deg}, {"lon", s.gateway.lon_deg}}},
          {"link_env",
           {{"ref_loss_db", s.link.ref_loss_db},
            {"path_loss_exp", s.link.path_loss_exp},
            {"shadowing_sigma_db", s.link.shadowing_sigma_db},
            {"noise_figure_db", s.link.noise_figure_db},
            {"ant_gain_tx_dbi", s.link.ant_gain_tx_dbi},
            {"ant_gain_rx_dbi", s.link.ant_gain_rx_dbi},
            {"obstructions", obst}}},
          {"adr_margin_db", s.adr_margin_db},
          {"devices", devs}};
}

// Missing fields take their defaults.
inline Scenario scenario_from_json(const json& j) {
  Scenario s;
  s.seed = j.value("seed", s.seed);
  s.duration_ms = j.value("duration_ms", s.duration_ms);
  if (j.contains("gateway")) s.gateway = {j["gateway"].at("lat").get<double>(), j["gateway"].at("lon").get<double>()};
  s.adr_margin_db = j.value("adr_margin_db", s.adr_margin_db);
  if (j.contains("link_env")) {
    const auto& e = j["link_env"];
    s.link.ref_loss_db = e.value("ref_loss_db", s.link.ref_loss_db);
    s.link.path_loss_exp = e.value("path_loss_exp", s.link.path_loss_exp);
    s.link.shadowing_sigma_db = e.value("shadowing_sigma_db", s.link.shadowing_sigma_db);
    s.link.noise_figure_db = e.value("noise_figure_db", s.link.noise_figure_db);
    s.link.ant_gain_tx_dbi = e.value("ant_gain_tx_dbi", s.link.ant_gain_tx_dbi);
    s.link.ant_gain_rx_dbi = e.value("ant_gain_rx_dbi", s.link.ant_gain_rx_dbi);
    for (const auto& o : e.value("obstructions", json::array()))
      s.link.obstructions.push_back({o.at("lat").get<double>(), o.at("lon").get<double>(),
                                     o.at("radius_m").get<double>(), o.at("loss_db").get<double>()});
  }
  for (const auto& d : j.value("devices", json::array())) {
    DeviceSpec ds;
    auto& c = ds.device;
    const auto addr = server::parse_dev_addr(d.at("dev_addr").get<std::string>());
    if (!addr) throw std::invalid_argument("scenario: bad dev_addr");
    c.dev_addr = *addr;
    if (d.contains("key")) c.frame_key = server::parse_key(d["key"].get<std::string>());
    c.duty_period_ms = d.value("duty_period_ms", c.duty_period_ms);
    c.fs_hz = d.value("fs_hz", c.fs_hz);
    c.radio.sf = d.value("sf", c.radio.sf);
    c.radio.tx_power_dbm = d.value("tx_power_dbm", c.radio.tx_power_dbm);
    c.battery_capacity_mah = d.value("battery_capacity_mah", c.battery_capacity_mah);
    c.step_config.s_static_g = d.value("step_threshold_g", c.step_config.s_static_g);
    c.step_config.m_precision = d.value("m_precision", c.step_config.m_precision);
    ds.gps_sigma_m = d.value("gps_sigma_m", ds.gps_sigma_m);
    if (d.contains("gait")) {
      const auto& g = d["gait"];
      ds.gait.step_frequency_hz = g.value("step_frequency_hz", ds.gait.step_frequency_hz);
      ds.gait.amplitude_g = g.value("amplitude_g", ds.gait.amplitude_g);
      ds.gait.noise_sigma_g = g.value("noise_sigma_g", ds.gait.noise_sigma_g);
      ds.gait.bias_g = g.value("bias_g", ds.gait.bias_g);
    }
    std::vector<synth::Waypoint> wps;
    for (const auto& w : d.value("path", json::array()))
      wps.push_back({w.at("lat").get<double>(), w.at("lon").get<double>(), w.at("t_ms").get<std::int64_t>()});
    if (!wps.empty()) ds.path = synth::MovementPath(std::move(wps));
    for (const auto& v : d.value("fence", json::array())) ds.fence.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
    s.devices.push_back(std::move(ds));
  }
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("scenario: cannot open " + path);
  return scenario_from_json(json::parse(in));
}

// One walker heading 3 km east of the gateway and back over a day, crossing a ~1.5 km fence.
inline Scenario default_scenario() {
  Scenario s;
  DeviceSpec d;
  for (std::uint8_t i = 0; i < 16; ++i) d.device.frame_key[i] = i;
  const auto at = [&](double east_m) {
    const auto p = geo::offset_m(s.gateway, east_m, 0.0);
    return std::pair{synth::round_e5(p.lat_deg), synth::round_e5(p.lon_deg)};
  };
  const auto [la0, lo0] = at(100.0);
  const auto [la1, lo1] = at(3000.0);
  d.path = synth::MovementPath({{la0, lo0, 0}, {la1, lo1, 43'200'000}, {la0, lo0, 86'400'000}, {la0, lo0, 90'000'000}});
  for (auto [e, n] : {std::pair{-1500.0, -1500.0}, {1500.0, -1500.0}, {1500.0, 1500.0}, {-1500.0, 1500.0}}) {
    const auto v = geo::offset_m(s.gateway, e, n);
    d.fence.push_back({synth::round_e5(v.lat_deg), synth::round_e5(v.lon_deg)});
  }
  s.devices.push_back(std::move(d));
  return s;
}

// ---------------------------------------------------------------------------
// Event log

struct LogRecord {
  std::int64_t t_ms = 0;
  std::string component;
  std::string event;
  std::string detail;
};

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q.push_back('"');
    q.push_back(c);
  }
  return q + "\"";
}

struct EventLog {
  std::vector<LogRecord> records;

  void add(std::int64_t t, std::string component, std::string event, std::string detail = {}) {
    records.push_back({t, std::move(component), std::move(event), std::move(detail)});
  }

  void write_csv(std::ostream& os) const {
    os << "t_ms,component,event,detail\n";
    for (const auto& r : records)
      os << r.t_ms << ',' << csv_field(r.component) << ',' << csv_field(r.event) << ',' << csv_field(r.detail) << '\n';
  }

  std::string csv() const {
    std::ostringstream os;
    write_csv(os);
    return os.str();
  }
};

// ---------------------------------------------------------------------------
// In-process forwarder transport: datagrams go straight into NetworkServer::handle_datagram.

class InProcessHub {
 public:
  explicit InProcessHub(server::NetworkServer& srv) : srv_(srv) {}

  void deliver(const std::string& from, ByteView datagram) {
    for (auto& out : srv_.handle_datagram(datagram, from)) inbox_[out.dest].push_back(std::move(out.bytes));
  }

  std::optional<Bytes> take(const std::string& who) {
    auto& q = inbox_[who];
    if (q.empty()) return std::nullopt;
    Bytes b = std::move(q.front());
    q.pop_front();
    return b;
  }

 private:
  server::NetworkServer& srv_;
  std::map<std::string, std::deque<Bytes>> inbox_;
};

class InProcessTransport : public gw::Transport {
 public:
  InProcessTransport(InProcessHub& hub, std::string name) : hub_(hub), name_(std::move(name)) {}
  void send(ByteView datagram) override { hub_.deliver(name_, datagram); }
  std::optional<Bytes> receive(std::chrono::milliseconds) override { return hub_.take(name_); }

 private:
  InProcessHub& hub_;
  std::string name_;
};

// ---------------------------------------------------------------------------
// Runner

enum class TransportMode { InProcess, UdpLoopback };

struct RunOptions {
  TransportMode transport = TransportMode::InProcess;
  std::optional<std::filesystem::path> store_path;  // truncated at start; memory store if unset
  bool log_fifo = true;                             // include per-batch device actions in the log
};

struct UplinkAttempt {
  std::uint32_t dev_addr = 0;
  std::uint16_t fcnt = 0;
  std::int64_t t_ms = 0;
  int sf = 12;
  geo::LatLon truth;
  double distance_m = 0.0;
  phy::RxMeta rx;
  bool delivered = false;
  bool acked = false;
};

struct RunResult {
  EventLog log;
  std::shared_ptr<server::NetworkServer> server;
  std::vector<UplinkAttempt> attempts;
  std::map<std::uint32_t, std::vector<mac::UplinkRecord>> device_uplinks;
  std::map<std::uint32_t, double> consumed_mah;
  std::map<std::uint32_t, int> final_sf;
  std::uint64_t gateway_lost = 0;
};

namespace detail {

struct FifoEv { std::size_t dev; synth::FifoBatch batch; };
struct TimerEv { std::size_t dev; mac::TimerKind kind; };
struct GpsEv { std::size_t dev; synth::GpsFix fix; };
struct GatewayRxEv { std::size_t dev; Bytes frame; phy::RxMeta rx; phy::RadioConfig radio; std::int64_t tmms; };
struct DownlinkEv { std::size_t dev; Bytes frame; };
struct HourEv { std::size_t dev; std::int64_t index; };
struct KeepaliveEv {};

using Payload = std::variant<FifoEv, TimerEv, GpsEv, GatewayRxEv, DownlinkEv, HourEv, KeepaliveEv>;

struct Event {
  std::int64_t t_ms;
  int prio;
  std::uint64_t seq;
  Payload payload;
  bool operator>(const Event& o) const {
    return std::tie(t_ms, prio, seq) > std::tie(o.t_ms, o.prio, o.seq);
  }
};

}  // namespace detail

class Runner {
 public:
  Runner(Scenario scenario, RunOptions opts) : sc_(std::move(scenario)), opts_(std::move(opts)) {
    const auto errs = sc_.validate();
    if (!errs.empty()) {
      std::string msg = "invalid scenario:";
      for (const auto& e : errs) msg += "\n  " + e;
      throw std::invalid_argument(msg);
    }
  }

  RunResult run() {
    server::ServerConfig scfg;
    scfg.adr_margin_db = sc_.adr_margin_db;
    for (const auto& d : sc_.devices) scfg.device_keys[d.device.dev_addr] = d.device.frame_key;

    std::shared_ptr<server::Store> store;
    if (opts_.store_path) {
      std::filesystem::remove(*opts_.store_path);
      store = std::make_shared<server::JsonlStore>(*opts_.store_path);
    } else {
      store = std::make_shared<server::MemoryStore>();
    }
    res_.server = std::make_shared<server::NetworkServer>(scfg, store);
    for (const auto& d : sc_.devices)
      if (!d.fence.empty()) res_.server->set_fence(d.device.dev_addr, d.fence);

    gw::GatewayConfig gcfg;
    gcfg.token_seed = mix_seed(sc_.seed, 0x6A7E);
    std::unique_ptr<InProcessHub> hub;
    std::unique_ptr<udp::UdpServerRunner> udp_server;
    std::unique_ptr<gw::Transport> push, pull;
    if (opts_.transport == TransportMode::InProcess) {
      hub = std::make_unique<InProcessHub>(*res_.server);
      push = std::make_unique<InProcessTransport>(*hub, "gw-push");
      pull = std::make_unique<InProcessTransport>(*hub, "gw-pull");
    } else {
      udp_server = std::make_unique<udp::UdpServerRunner>(*res_.server, udp::Endpoint{"127.0.0.1", 0});
      udp_server->start();
      // Loopback does not drop datagrams; a long wall-clock wait keeps a loaded host from
      // turning a slow ACK into a retry that would make the log diverge from in-process runs.
      gcfg.ack_wait_ms = 10'000;
      pull_wait_ = std::chrono::milliseconds(*gcfg.ack_wait_ms);
      push = std::make_unique<udp::UdpTransport>(udp_server->endpoint());
      pull = std::make_unique<udp::UdpTransport>(udp_server->endpoint());
    }
    gateway_ = std::make_unique<gw::Gateway>(gcfg, *push, *pull);

    for (std::size_t i = 0; i < sc_.devices.size(); ++i) {
      devices_.emplace_back(sc_.devices[i].device);
      by_addr_[sc_.devices[i].device.dev_addr] = i;
      push_event(0, 1, detail::HourEv{i, 0});
      apply(i, devices_.back().boot(0), 0);
    }
    push_event(0, 3, detail::KeepaliveEv{});

    while (!queue_.empty()) {
      detail::Event ev = queue_.top();
      queue_.pop();
      std::visit([&](auto& p) { handle(p, ev.t_ms); }, ev.payload);
    }
    if (udp_server) udp_server->stop();

    for (std::size_t i = 0; i < devices_.size(); ++i) {
      const auto addr = sc_.devices[i].device.dev_addr;
      res_.device_uplinks[addr] = devices_[i].uplinks();
      res_.consumed_mah[addr] = devices_[i].consumed_mah();
      res_.final_sf[addr] = devices_[i].radio().sf;
    }
    res_.gateway_lost = gateway_->counters().uplink_lost;
    return std::move(res_);
  }

 private:
  static std::string dev_name(std::uint32_t a) { return "device:" + server::format_dev_addr(a); }

  template <class P>
  void push_event(std::int64_t t, int prio, P&& p) {
    queue_.push(detail::Event{t, prio, seq_++, detail::Payload(std::forward<P>(p))});
  }

  bool past_end(std::int64_t t) const { return t > sc_.duration_ms; }

  void apply(std::size_t i, const mac::TickResult& r, std::int64_t now) {
    const auto& spec = sc_.devices[i];
    const std::string who = dev_name(spec.device.dev_addr);
    for (const auto& a : r.actions) {
      const bool chatty = a.kind == mac::ActionKind::ReadFifo || a.kind == mac::ActionKind::CountSteps ||
                          (a.kind == mac::ActionKind::ScheduleTimer && a.timer == mac::TimerKind::StepDone) ||
                          (a.kind == mac::ActionKind::Transition &&
                           (a.detail == "Sleep->StepCount" || a.detail == "StepCount->Sleep" || a.detail == "Init->StepCount"));
      if (opts_.log_fifo || !chatty) res_.log.add(a.t_ms, who, std::string(mac::to_string(a.kind)), a.detail);

      switch (a.kind) {
        case mac::ActionKind::ScheduleTimer:
          push_event(a.at_ms, 0, detail::TimerEv{i, a.timer});
          break;
        case mac::ActionKind::AcquireGps: {
          const auto truth = synth::position_at(spec.path, static_cast<double>(a.at_ms));
          const auto fix = synth::sample_gps(truth, spec.gps_sigma_m,
                                             mix_seed(mix_seed(sc_.seed, spec.device.dev_addr), 0x6000'0000ULL + static_cast<std::uint64_t>(a.at_ms)),
                                             static_cast<double>(a.at_ms));
          push_event(a.at_ms, 1, detail::GpsEv{i, fix});
          break;
        }
        case mac::ActionKind::Transmit: {
          const auto pos = synth::position_at(spec.path, static_cast<double>(a.t_ms));
          phy::RadioConfig radio = devices_[i].radio();
          radio.sf = a.sf;
          const auto frame_hdr = mac::peek_frame(a.frame);
          const auto rx = phy::link_budget_between(radio, sc_.link, pos, sc_.gateway,
                                                   mix_seed(mix_seed(sc_.seed, spec.device.dev_addr), frame_hdr.fcnt));
          const bool ok = phy::receive_decision(rx, radio, sc_.link);
          UplinkAttempt at{spec.device.dev_addr, frame_hdr.fcnt, a.t_ms, a.sf, pos, geo::haversine_m(pos, sc_.gateway), rx, ok, false};
          res_.attempts.push_back(at);
          std::ostringstream d;
          d.setf(std::ios::fixed);
          d.precision(2);
          d << "fcnt=" << at.fcnt << " sf=" << at.sf << " distance_m=" << at.distance_m << " rssi=" << rx.rssi_dbm
            << " snr=" << rx.snr_db << " delivered=" << (ok ? 1 : 0);
          res_.log.add(a.t_ms, "radio", "uplink", d.str());
          if (ok) push_event(a.at_ms, 1, detail::GatewayRxEv{i, a.frame, rx, radio, a.t_ms});
          break;
        }
        default:
          break;
      }
    }
    (void)now;
  }

  void handle(detail::HourEv& e, std::int64_t now) {
    const auto& spec = sc_.devices[e.dev];
    const std::int64_t len = spec.device.duty_period_ms;
    const std::int64_t t0 = e.index * len;
    if (t0 >= sc_.duration_ms) return;
    const auto seg = synth::generate_gait_segment(spec.gait, static_cast<double>(t0),
                                                  static_cast<double>(std::min(len, sc_.duration_ms - t0)),
                                                  spec.device.fs_hz,
                                                  mix_seed(mix_seed(sc_.seed, spec.device.dev_addr), static_cast<std::uint64_t>(e.index)));
    for (const auto& b : synth::fill_fifo(seg)) {
      const auto t = static_cast<std::int64_t>(std::ceil(b.last_t_ms() - 1e-9));
      push_event(t, 1, detail::FifoEv{e.dev, b});
    }
    push_event(t0 + len, 1, detail::HourEv{e.dev, e.index + 1});
    (void)now;
  }

  void handle(detail::FifoEv& e, std::int64_t now) {
    if (past_end(now)) return;
    apply(e.dev, devices_[e.dev].tick(mac::FifoFull{e.batch}, now), now);
  }

  void handle(detail::TimerEv& e, std::int64_t now) {
    auto& dev = devices_[e.dev];
    if (!dev.timer_armed(e.kind, now)) return;
    if (e.kind == mac::TimerKind::DutyBoundary && past_end(now)) return;
    apply(e.dev, dev.tick(mac::Timer{e.kind}, now), now);
  }

  void handle(detail::GpsEv& e, std::int64_t now) {
    apply(e.dev, devices_[e.dev].tick(mac::GpsFixed{e.fix}, now), now);
  }

  void handle(detail::GatewayRxEv& e, std::int64_t now) {
    const auto before = res_.server->counters();
    const auto fr = gateway_->forward_uplink(e.frame, e.rx, e.radio, gw::counter_us(now), e.tmms);
    const auto after = res_.server->counters();
    const auto fcnt = mac::peek_frame(e.frame).fcnt;
    for (auto it = res_.attempts.rbegin(); it != res_.attempts.rend(); ++it)
      if (it->dev_addr == sc_.devices[e.dev].device.dev_addr && it->fcnt == fcnt) {
        it->acked = fr.acked;
        break;
      }
    res_.log.add(now, "gateway", "push_data",
                 "fcnt=" + std::to_string(fcnt) + " acked=" + (fr.acked ? "1" : "0") + " attempts=" + std::to_string(fr.attempts));
    res_.log.add(now, "server", "ingest",
                 "accepted=" + std::to_string(after.accepted - before.accepted) +
                     " replays=" + std::to_string(after.replays - before.replays) +
                     " mic_failures=" + std::to_string(after.mic_failures - before.mic_failures) +
                     " downlinks=" + std::to_string(after.downlinks_sent - before.downlinks_sent));
    for (const auto& dl : gateway_->poll_downlink(now)) route_downlink(dl, now);
  }

  void route_downlink(const gw::ScheduledDownlink& dl, std::int64_t now) {
    const auto hdr = mac::peek_frame(dl.frame);
    auto it = by_addr_.find(hdr.dev_addr);
    if (it == by_addr_.end()) return;
    res_.log.add(now, "gateway", "pull_resp", "at_ms=" + std::to_string(dl.at_ms) + " size=" + std::to_string(dl.frame.size()));
    push_event(dl.at_ms, 2, detail::DownlinkEv{it->second, dl.frame});
  }

  void handle(detail::DownlinkEv& e, std::int64_t now) {
    gateway_->take_due(now);
    res_.log.add(now, "gateway", "downlink_tx", "dev=" + server::format_dev_addr(sc_.devices[e.dev].device.dev_addr));
    apply(e.dev, devices_[e.dev].tick(mac::Downlink{e.frame}, now), now);
  }

  void handle(detail::KeepaliveEv&, std::int64_t now) {
    if (past_end(now)) return;
    gateway_->keepalive();
    // Over UDP, wait for the PULL_ACK so keep-alives cannot pile up in the server's socket buffer.
    for (const auto& dl : gateway_->poll_downlink(now, pull_wait_)) route_downlink(dl, now);
    push_event(now + gateway_->config().keepalive_ms, 3, detail::KeepaliveEv{});
  }

  Scenario sc_;
  RunOptions opts_;
  RunResult res_;
  std::vector<mac::Device> devices_;
  std::map<std::uint32_t, std::size_t> by_addr_;
  std::unique_ptr<gw::Gateway> gateway_;
  std::chrono::milliseconds pull_wait_{0};
  std::priority_queue<detail::Event, std::vector<detail::Event>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
};

inline RunResult run(const Scenario& scenario, const RunOptions& opts = {}) {
  return Runner(scenario, opts).run();
}

// ---------------------------------------------------------------------------
// Reports

struct ToaRow {
  int sf = 12;
  double time_on_air_ms = 0.0;
  double send_period_ms = 0.0;
  double current_ma = phy::kSendCurrentMa;
  double charge_mas = 0.0;
};

inline std::vector<ToaRow> report_toa(int payload_bytes = static_cast<int>(mac::kPayloadSize),
                                      const phy::RadioConfig& base = {}, const phy::SendPeriodTable& table = {}) {
  std::vector<ToaRow> rows;
  for (int sf = phy::kMinSf; sf <= phy::kMaxSf; ++sf) {
    phy::RadioConfig cfg = base;
    cfg.sf = sf;
    ToaRow r;
    r.sf = sf;
    r.time_on_air_ms = phy::time_on_air(cfg, payload_bytes);
    r.send_period_ms = phy::send_period(sf, table);
    r.charge_mas = r.current_ma * r.send_period_ms / 1000.0;
    rows.push_back(r);
  }
  return rows;
}

inline void write_toa_csv(std::ostream& os, const std::vector<ToaRow>& rows) {
  os << "sf,time_on_air_ms,send_period_ms,current_ma,charge_mas\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d,%.3f,%.0f,%.0f,%.2f\n", r.sf, r.time_on_air_ms, r.send_period_ms, r.current_ma,
                  r.charge_mas);
    os << buf;
  }
}

struct StepTrialPlan {
  std::vector<std::int64_t> targets{100, 200, 300, 400};
  std::vector<double> rates_hz{3.0, 6.0};
  int trials = 20;
  std::uint64_t seed = 7;
  synth::GaitProfile gait{};
  steps::StepCounterConfig counter{};
};

struct StepRow {
  std::int64_t target = 0;
  double fs_hz = 0.0;
  int trials = 0;
  double mean_error = 0.0;  // fraction
  double ref_lo = 0.0;
  double ref_hi = 0.0;
};

// One walk of `target` true steps per trial, sampled at each rate with the same seed.
inline double step_trial_error(const StepTrialPlan& plan, std::int64_t target, double fs, int trial) {
  const double duration_ms = static_cast<double>(target) * 1000.0 / plan.gait.step_frequency_hz;
  const auto trace = synth::generate_gait(plan.gait, duration_ms, fs,
                                          mix_seed(plan.seed, static_cast<std::uint64_t>(target) << 16 | static_cast<std::uint64_t>(trial)));
  const auto counted = steps::count_trace(trace.samples, plan.counter);
  return std::abs(static_cast<double>(counted - trace.true_step_count)) / static_cast<double>(trace.true_step_count);
}

inline std::vector<StepRow> report_steps(const StepTrialPlan& plan = {}) {
  std::vector<StepRow> rows;
  for (const auto target : plan.targets)
    for (const double fs : plan.rates_hz) {
      StepRow r;
      r.target = target;
      r.fs_hz = fs;
      r.trials = plan.trials;
      double sum = 0.0;
      for (int t = 0; t < plan.trials; ++t) sum += step_trial_error(plan, target, fs, t);
      r.mean_error = sum / plan.trials;
      if (fs == 6.0) r.ref_lo = 0.03, r.ref_hi = 0.08;
      if (fs == 3.0) r.ref_lo = 0.10, r.ref_hi = 0.17;
      rows.push_back(r);
    }
  return rows;
}

inline void write_steps_csv(std::ostream& os, const std::vector<StepRow>& rows) {
  os << "target_steps,fs_hz,trials,mean_rel_error,ref_band_lo,ref_band_hi\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%lld,%g,%d,%.4f,%.2f,%.2f\n", static_cast<long long>(r.target), r.fs_hz, r.trials,
                  r.mean_error, r.ref_lo, r.ref_hi);
    os << buf;
  }
}

struct LinkRow {
  double distance_m = 0.0;
  int sf = 12;
  double tx_power_dbm = 20.0;
  phy::RxMeta rx;
  bool delivered = false;
};

inline std::vector<LinkRow> report_linkscan(const std::vector<double>& distances, const std::vector<int>& sfs,
                                            const std::vector<double>& powers, const phy::LinkEnv& env = {},
                                            std::uint64_t seed = 7) {
  std::vector<LinkRow> rows;
  for (const double d : distances)
    for (const int sf : sfs)
      for (const double p : powers) {
        phy::RadioConfig cfg;
        cfg.sf = sf;
        cfg.tx_power_dbm = p;
        cfg.validate();
        LinkRow r{d, sf, p, phy::link_budget(cfg, env, d, mix_seed(seed, rows.size())), false};
        r.delivered = phy::receive_decision(r.rx, cfg, env);
        rows.push_back(r);
      }
  return rows;
}

inline void write_linkscan_csv(std::ostream& os, const std::vector<LinkRow>& rows) {
  os << "distance_m,sf,tx_power_dbm,rssi_dbm,snr_db,delivered\n";
  for (const auto& r : rows) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%g,%d,%g,%.3f,%.3f,%d\n", r.distance_m, r.sf, r.tx_power_dbm, r.rx.rssi_dbm,
                  r.rx.snr_db, r.delivered ? 1 : 0);
    os << buf;
  }
}

}  // namespace loratrack::sim
