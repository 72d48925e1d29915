#pragma once

// Network/application server: protocol transfer (PUSH_DATA -> verified frame -> payload),
// replay protection, track/step storage, geofencing and ADR.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "loratrack/base64.hpp"
#include "loratrack/common.hpp"
#include "loratrack/device_mac.hpp"
#include "loratrack/gateway.hpp"
#include "loratrack/geo.hpp"
#include "loratrack/lora_phy.hpp"
#include "loratrack/store.hpp"

namespace loratrack::server {

using nlohmann::json;

inline std::string format_dev_addr(std::uint32_t addr) {
  const Bytes be{static_cast<std::uint8_t>(addr >> 24), static_cast<std::uint8_t>(addr >> 16),
                 static_cast<std::uint8_t>(addr >> 8), static_cast<std::uint8_t>(addr)};
  return to_hex(be, 0);
}

inline std::optional<std::uint32_t> parse_dev_addr(std::string_view s) {
  if (s.size() != 8) return std::nullopt;
  std::uint32_t v = 0;
  for (char c : s) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else return std::nullopt;
    v = (v << 4) | static_cast<std::uint32_t>(d);
  }
  return v;
}

inline mac::FrameKey parse_key(std::string_view hex) {
  mac::FrameKey key{};
  if (hex.size() != 32) throw std::invalid_argument("key: expected 32 hex digits");
  for (std::size_t i = 0; i < 16; ++i) {
    const auto byte = std::stoul(std::string(hex.substr(2 * i, 2)), nullptr, 16);
    key[i] = static_cast<std::uint8_t>(byte);
  }
  return key;
}

struct ServerConfig {
  std::string data_file = "loratrack-store.jsonl";
  std::string bind_address = "127.0.0.1";
  std::uint16_t udp_port = gw::kDefaultServerPort;
  std::uint16_t http_port = 8080;
  double adr_margin_db = 10.0;
  double adr_step_db = 2.5;
  std::size_t adr_min_samples = 4;
  std::size_t snr_history_len = 8;
  std::int64_t bucket_window_ms = 600'000;
  std::int64_t rx1_delay_ms = 1'000;
  mac::FrameKey default_key{};
  std::map<std::uint32_t, mac::FrameKey> device_keys;
};

// JSON config file (optional) followed by LORATRACK_* environment overrides.
inline ServerConfig load_server_config(const std::string& path = {}) {
  ServerConfig c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    const json j = json::parse(in);
    c.data_file = j.value("data_file", c.data_file);
    c.bind_address = j.value("bind_address", c.bind_address);
    c.udp_port = j.value("udp_port", c.udp_port);
    c.http_port = j.value("http_port", c.http_port);
    c.adr_margin_db = j.value("adr_margin_db", c.adr_margin_db);
    if (j.contains("default_key")) c.default_key = parse_key(j["default_key"].get<std::string>());
    for (const auto& d : j.value("devices", json::array())) {
      const auto addr = parse_dev_addr(d.at("dev_addr").get<std::string>());
      if (!addr) throw std::invalid_argument("config: bad dev_addr");
      c.device_keys[*addr] = parse_key(d.at("key").get<std::string>());
    }
  }
  if (const char* v = std::getenv("LORATRACK_DATA_FILE")) c.data_file = v;
  if (const char* v = std::getenv("LORATRACK_BIND_ADDRESS")) c.bind_address = v;
  if (const char* v = std::getenv("LORATRACK_UDP_PORT")) c.udp_port = static_cast<std::uint16_t>(std::stoi(v));
  if (const char* v = std::getenv("LORATRACK_HTTP_PORT")) c.http_port = static_cast<std::uint16_t>(std::stoi(v));
  if (const char* v = std::getenv("LORATRACK_ADR_MARGIN_DB")) c.adr_margin_db = std::stod(v);
  return c;
}

struct TrackPoint {
  std::uint32_t dev_addr = 0;
  std::uint16_t fcnt = 0;
  std::int64_t t_ms = 0;
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  double rssi_dbm = 0.0;
  double snr_db = 0.0;
  int sf = 12;
};

struct StepBucket {
  std::uint32_t dev_addr = 0;
  std::int64_t window_start_ms = 0;
  std::int64_t steps = 0;
};

struct FencePolygon {
  std::uint32_t dev_addr = 0;
  std::vector<geo::LatLon> vertices;
};

struct FenceEvent {
  std::uint32_t dev_addr = 0;
  std::int64_t t_ms = 0;
  std::uint16_t fcnt = 0;
  std::string kind;  // "entered" | "exited"
};

struct DeviceRecord {
  std::uint32_t dev_addr = 0;
  std::optional<std::uint16_t> last_fcnt;
  std::deque<double> snr_history;
  int current_sf = 12;
  int battery_pct = 0;
  std::optional<std::int64_t> last_seen_ms;
  std::uint16_t downlink_fcnt = 0;
  std::size_t uplinks = 0;
};

// Even-odd ray casting in (lon, lat) plane; points on an edge or vertex count as inside.
inline bool point_in_polygon(geo::LatLon p, const std::vector<geo::LatLon>& poly) {
  if (poly.size() < 3) throw std::invalid_argument("fence: polygon needs at least 3 vertices");
  const double x = p.lon_deg;
  const double y = p.lat_deg;
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const double xi = poly[i].lon_deg, yi = poly[i].lat_deg;
    const double xj = poly[j].lon_deg, yj = poly[j].lat_deg;
    const double cross = (xj - xi) * (y - yi) - (yj - yi) * (x - xi);
    const double scale = std::max({std::abs(xj - xi), std::abs(yj - yi), 1e-300});
    if (std::abs(cross) <= 1e-12 * scale * scale + 1e-15 && x >= std::min(xi, xj) &&
        x <= std::max(xi, xj) && y >= std::min(yi, yj) && y <= std::max(yi, yj))
      return true;
    if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) inside = !inside;
  }
  return inside;
}

struct AdrPolicy {
  double margin_db = 10.0;
  double step_db = 2.5;
  std::size_t min_samples = 4;
  phy::SnrLimits limits{};
};

// Target SF when the averaged link margin allows a faster data rate.
inline std::optional<int> adr_decide(const DeviceRecord& rec, const AdrPolicy& policy = {}) {
  if (rec.snr_history.size() < policy.min_samples || !phy::valid_sf(rec.current_sf)) return std::nullopt;
  double sum = 0.0;
  for (double s : rec.snr_history) sum += s;
  const double mean = sum / static_cast<double>(rec.snr_history.size());
  const double margin = mean - policy.limits.at(rec.current_sf) - policy.margin_db;
  if (!(margin > 0.0)) return std::nullopt;
  const int steps = static_cast<int>(std::floor(margin / policy.step_db));
  const int target = std::max(phy::kMinSf, rec.current_sf - steps);
  if (target == rec.current_sf) return std::nullopt;
  return target;
}

enum class RejectReason { Transport, Format, Integrity, Replay };

constexpr std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::Transport: return "transport";
    case RejectReason::Format: return "format";
    case RejectReason::Integrity: return "integrity";
    case RejectReason::Replay: return "replay";
  }
  return "?";
}

struct DecodedUplink {
  std::uint32_t dev_addr = 0;
  std::uint16_t fcnt = 0;
  mac::UplinkPayload payload;
  phy::RxMeta rx;
  int sf = 12;
  double bw_hz = 125'000.0;
  std::string codr = "4/5";
  double freq_mhz = 433.0;
  std::uint32_t tmst = 0;
  std::int64_t t_ms = 0;
};

struct TransferResult {
  std::optional<DecodedUplink> uplink;
  std::optional<RejectReason> reject;
  std::string error;
};

struct IngestResult {
  bool stored = false;
  std::vector<FenceEvent> fence_events;
  std::optional<int> adr_target_sf;
  std::optional<Bytes> downlink_frame;
};

struct Outgoing {
  std::string dest;
  Bytes bytes;
};

struct ServerCounters {
  std::uint64_t datagrams = 0;
  std::uint64_t malformed_datagrams = 0;
  std::uint64_t push_data = 0;
  std::uint64_t pull_data = 0;
  std::uint64_t rxpk = 0;
  std::uint64_t accepted = 0;
  std::uint64_t transport_errors = 0;
  std::uint64_t format_errors = 0;
  std::uint64_t mic_failures = 0;
  std::uint64_t replays = 0;
  std::uint64_t downlinks_sent = 0;
  std::uint64_t downlinks_unroutable = 0;
  std::uint64_t store_failures = 0;
};

class NetworkServer {
 public:
  explicit NetworkServer(ServerConfig cfg, std::shared_ptr<Store> store = std::make_shared<MemoryStore>())
      : cfg_(std::move(cfg)), store_(std::move(store)) {
    for (const auto& [addr, key] : cfg_.device_keys) record_for(addr);
    for (const auto& rec : store_->load()) apply_record(rec);
  }

  const ServerConfig& config() const { return cfg_; }

  void provision(std::uint32_t dev_addr, const mac::FrameKey& key) {
    std::unique_lock lock(mu_);
    cfg_.device_keys[dev_addr] = key;
    record_for(dev_addr);
  }

  // Handles one forwarder datagram from `source`; returns datagrams to send (downlinks first,
  // then the acknowledgement).
  std::vector<Outgoing> handle_datagram(ByteView datagram, const std::string& source) {
    std::unique_lock lock(mu_);
    ++counters_.datagrams;
    gw::GatewayPacket p;
    try {
      p = gw::decode_packet(datagram);
    } catch (const FormatError&) {
      ++counters_.malformed_datagrams;
      return {};
    }
    std::vector<Outgoing> out;
    switch (p.ident) {
      case gw::Ident::PushData: {
        ++counters_.push_data;
        const json& arr = p.body->contains("rxpk") ? (*p.body)["rxpk"] : json::array();
        if (arr.is_array()) {
          for (const auto& rj : arr) {
            ++counters_.rxpk;
            gw::Rxpk rxpk;
            try {
              rxpk = gw::rxpk_from_json(rj);
            } catch (const FormatError&) {
              ++counters_.format_errors;
              continue;
            }
            auto tr = transfer_locked(rxpk);
            if (!tr.uplink) continue;
            auto res = ingest_locked(*tr.uplink);
            if (res.downlink_frame) {
              if (pull_endpoint_) {
                gw::Txpk tx;
                tx.tmst = rxpk.tmst + static_cast<std::uint32_t>(cfg_.rx1_delay_ms * 1000);
                tx.freq_mhz = rxpk.freq_mhz;
                tx.datr = rxpk.datr;
                tx.codr = rxpk.codr;
                tx.size = static_cast<int>(res.downlink_frame->size());
                tx.data = base64::encode(*res.downlink_frame);
                out.push_back({*pull_endpoint_, gw::encode_pull_resp(next_token(), tx)});
                ++counters_.downlinks_sent;
              } else {
                ++counters_.downlinks_unroutable;
              }
            }
          }
        } else {
          ++counters_.format_errors;
        }
        out.push_back({source, gw::encode_ack(p.token, gw::Ident::PushAck)});
        break;
      }
      case gw::Ident::PullData:
        ++counters_.pull_data;
        pull_endpoint_ = source;
        out.push_back({source, gw::encode_ack(p.token, gw::Ident::PullAck)});
        break;
      default:
        break;
    }
    return out;
  }

  // Base64 -> frame (MIC) -> payload, with replay check against the device record.
  TransferResult protocol_transfer(const gw::Rxpk& rxpk) {
    std::unique_lock lock(mu_);
    return transfer_locked(rxpk);
  }

  IngestResult ingest(const DecodedUplink& up) {
    std::unique_lock lock(mu_);
    return ingest_locked(up);
  }

  void set_fence(std::uint32_t dev_addr, std::vector<geo::LatLon> vertices) {
    if (vertices.size() > 1 && vertices.front() == vertices.back()) vertices.pop_back();
    if (vertices.size() < 3) throw std::invalid_argument("fence: polygon needs at least 3 vertices");
    json verts = json::array();
    for (const auto& v : vertices) verts.push_back({v.lat_deg, v.lon_deg});
    const json rec{{"type", "fence"}, {"dev_addr", format_dev_addr(dev_addr)}, {"vertices", verts}};
    std::unique_lock lock(mu_);
    apply_record(rec);
    persist(rec);
  }

  void clear_fence(std::uint32_t dev_addr) {
    const json rec{{"type", "fence_clear"}, {"dev_addr", format_dev_addr(dev_addr)}};
    std::unique_lock lock(mu_);
    apply_record(rec);
    persist(rec);
  }

  // Retries records whose store append failed earlier.
  std::size_t flush() {
    std::unique_lock lock(mu_);
    flush_pending();
    return pending_.size();
  }

  // -- queries (shared lock) --------------------------------------------------

  ServerCounters counters() const {
    std::shared_lock lock(mu_);
    return counters_;
  }

  bool has_device(std::uint32_t dev_addr) const {
    std::shared_lock lock(mu_);
    return records_.count(dev_addr) > 0;
  }

  std::vector<DeviceRecord> devices() const {
    std::shared_lock lock(mu_);
    std::vector<DeviceRecord> out;
    for (const auto& [addr, rec] : records_) out.push_back(rec);
    return out;
  }

  std::optional<DeviceRecord> device(std::uint32_t dev_addr) const {
    std::shared_lock lock(mu_);
    auto it = records_.find(dev_addr);
    if (it == records_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<TrackPoint> track(std::uint32_t dev_addr, std::int64_t from_ms = INT64_MIN,
                                std::int64_t to_ms = INT64_MAX) const {
    std::shared_lock lock(mu_);
    std::vector<TrackPoint> out;
    if (auto it = tracks_.find(dev_addr); it != tracks_.end())
      for (const auto& p : it->second)
        if (p.t_ms >= from_ms && p.t_ms <= to_ms) out.push_back(p);
    return out;
  }

  std::vector<StepBucket> steps(std::uint32_t dev_addr, std::int64_t from_ms = INT64_MIN,
                                std::int64_t to_ms = INT64_MAX) const {
    std::shared_lock lock(mu_);
    std::vector<StepBucket> out;
    if (auto it = buckets_.find(dev_addr); it != buckets_.end())
      for (const auto& b : it->second)
        if (b.window_start_ms >= from_ms && b.window_start_ms <= to_ms) out.push_back(b);
    return out;
  }

  std::optional<FencePolygon> fence(std::uint32_t dev_addr) const {
    std::shared_lock lock(mu_);
    if (auto it = fences_.find(dev_addr); it != fences_.end()) return it->second;
    return std::nullopt;
  }

  std::vector<FenceEvent> fence_events(std::uint32_t dev_addr) const {
    std::shared_lock lock(mu_);
    if (auto it = fence_events_.find(dev_addr); it != fence_events_.end()) return it->second;
    return {};
  }

  struct Latest {
    std::optional<TrackPoint> point;
    std::vector<StepBucket> buckets;
  };

  Latest latest(std::uint32_t dev_addr) const {
    std::shared_lock lock(mu_);
    Latest l;
    if (auto it = tracks_.find(dev_addr); it != tracks_.end() && !it->second.empty())
      l.point = it->second.back();
    if (auto it = buckets_.find(dev_addr); it != buckets_.end()) {
      const auto& b = it->second;
      const std::size_t n = std::min<std::size_t>(6, b.size());
      l.buckets.assign(b.end() - static_cast<std::ptrdiff_t>(n), b.end());
    }
    return l;
  }

 private:
  DeviceRecord& record_for(std::uint32_t addr) {
    auto [it, inserted] = records_.try_emplace(addr);
    if (inserted) it->second.dev_addr = addr;
    return it->second;
  }

  const mac::FrameKey& key_for(std::uint32_t addr) const {
    auto it = cfg_.device_keys.find(addr);
    return it == cfg_.device_keys.end() ? cfg_.default_key : it->second;
  }

  std::uint16_t next_token() { return static_cast<std::uint16_t>(token_rng_() & 0xFFFF); }

  TransferResult transfer_locked(const gw::Rxpk& rxpk) {
    TransferResult tr;
    auto reject = [&](RejectReason r, std::string msg) {
      tr.reject = r;
      tr.error = std::move(msg);
      switch (r) {
        case RejectReason::Transport: ++counters_.transport_errors; break;
        case RejectReason::Format: ++counters_.format_errors; break;
        case RejectReason::Integrity: ++counters_.mic_failures; break;
        case RejectReason::Replay: ++counters_.replays; break;
      }
      return tr;
    };
    Bytes frame;
    try {
      frame = base64::decode(rxpk.data);
    } catch (const FormatError& e) {
      return reject(RejectReason::Transport, e.what());
    }
    if (static_cast<int>(frame.size()) != rxpk.size)
      return reject(RejectReason::Transport, "rxpk: size does not match data");
    mac::Frame f;
    mac::UplinkPayload payload;
    try {
      const auto hdr = mac::peek_frame(frame);
      if (hdr.mhdr != mac::kMhdrUnconfirmedUp) return reject(RejectReason::Format, "not an uplink");
      f = mac::parse_frame(frame, key_for(hdr.dev_addr));
      payload = mac::decode_payload(f.frm_payload);
    } catch (const IntegrityError& e) {
      return reject(RejectReason::Integrity, e.what());
    } catch (const FormatError& e) {
      return reject(RejectReason::Format, e.what());
    }
    if (auto it = records_.find(f.dev_addr);
        it != records_.end() && it->second.last_fcnt && f.fcnt <= *it->second.last_fcnt)
      return reject(RejectReason::Replay, "fcnt " + std::to_string(f.fcnt) + " already seen");

    DecodedUplink up;
    up.dev_addr = f.dev_addr;
    up.fcnt = f.fcnt;
    up.payload = payload;
    up.rx.rssi_dbm = rxpk.rssi;
    up.rx.snr_db = rxpk.lsnr;
    const auto [sf, bw] = gw::parse_datr(rxpk.datr);
    up.sf = sf;
    up.bw_hz = bw;
    up.codr = rxpk.codr;
    up.freq_mhz = rxpk.freq_mhz;
    up.tmst = rxpk.tmst;
    up.t_ms = rxpk.tmms.value_or(static_cast<std::int64_t>(rxpk.tmst / 1000));
    tr.uplink = up;
    return tr;
  }

  static json uplink_record(const DecodedUplink& up) {
    json steps8 = json::array();
    for (auto s : up.payload.steps8) steps8.push_back(s);
    return {{"type", "uplink"},
            {"dev_addr", format_dev_addr(up.dev_addr)},
            {"fcnt", up.fcnt},
            {"t_ms", up.t_ms},
            {"lat_e5", up.payload.lat_e5},
            {"lon_e5", up.payload.lon_e5},
            {"steps8", steps8},
            {"battery_pct", up.payload.battery_pct},
            {"flags", up.payload.flags},
            {"rssi_dbm", up.rx.rssi_dbm},
            {"snr_db", up.rx.snr_db},
            {"sf", up.sf}};
  }

  IngestResult ingest_locked(const DecodedUplink& up) {
    IngestResult res;
    if (stored_keys_.count({up.dev_addr, up.fcnt})) return res;
    const json rec = uplink_record(up);
    res.fence_events = apply_record(rec);
    res.stored = true;
    ++counters_.accepted;
    persist(rec);

    DeviceRecord& dr = record_for(up.dev_addr);
    AdrPolicy policy;
    policy.margin_db = cfg_.adr_margin_db;
    policy.step_db = cfg_.adr_step_db;
    policy.min_samples = cfg_.adr_min_samples;
    res.adr_target_sf = adr_decide(dr, policy);
    if (res.adr_target_sf) {
      res.downlink_frame = mac::build_adr_downlink(up.dev_addr, dr.downlink_fcnt++,
                                                   mac::AdrCommand{*res.adr_target_sf}, key_for(up.dev_addr));
    }
    return res;
  }

  // Index update shared by live ingest and startup replay.
  std::vector<FenceEvent> apply_record(const json& rec) {
    std::vector<FenceEvent> events;
    const std::string type = rec.at("type").get<std::string>();
    const auto addr = parse_dev_addr(rec.at("dev_addr").get<std::string>());
    if (!addr) throw StoreError("store: bad dev_addr");
    if (type == "fence") {
      FencePolygon poly{*addr, {}};
      for (const auto& v : rec.at("vertices")) poly.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
      fences_[*addr] = std::move(poly);
      fence_inside_.erase(*addr);
      return events;
    }
    if (type == "fence_clear") {
      fences_.erase(*addr);
      fence_inside_.erase(*addr);
      return events;
    }
    if (type != "uplink") return events;

    const auto fcnt = rec.at("fcnt").get<std::uint16_t>();
    if (!stored_keys_.insert({*addr, fcnt}).second) return events;
    const auto t_ms = rec.at("t_ms").get<std::int64_t>();
    const auto flags = rec.at("flags").get<std::uint8_t>();
    const auto sf = rec.at("sf").get<int>();
    const double snr = rec.at("snr_db").get<double>();

    DeviceRecord& dr = record_for(*addr);
    dr.last_fcnt = dr.last_fcnt ? std::max(*dr.last_fcnt, fcnt) : fcnt;
    dr.current_sf = sf;
    dr.battery_pct = rec.at("battery_pct").get<int>();
    dr.last_seen_ms = t_ms;
    ++dr.uplinks;
    dr.snr_history.push_back(snr);
    while (dr.snr_history.size() > cfg_.snr_history_len) dr.snr_history.pop_front();

    // Six buckets back-dated at window spacing, ending at the window boundary at or before t.
    const std::int64_t w = cfg_.bucket_window_ms;
    const std::int64_t end = (t_ms >= 0 ? t_ms / w : (t_ms - w + 1) / w) * w;
    const auto& s8 = rec.at("steps8");
    auto& buckets = buckets_[*addr];
    for (std::size_t i = 0; i < 6; ++i)
      buckets.push_back({*addr, end - static_cast<std::int64_t>(6 - i) * w,
                         mac::dequantize_steps(s8.at(i).get<std::uint8_t>())});

    if (flags & mac::kFlagGpsValid) {
      TrackPoint tp;
      tp.dev_addr = *addr;
      tp.fcnt = fcnt;
      tp.t_ms = t_ms;
      tp.lat_deg = rec.at("lat_e5").get<std::int32_t>() / 1e5;
      tp.lon_deg = rec.at("lon_e5").get<std::int32_t>() / 1e5;
      tp.rssi_dbm = rec.at("rssi_dbm").get<double>();
      tp.snr_db = snr;
      tp.sf = sf;
      tracks_[*addr].push_back(tp);

      if (auto fit = fences_.find(*addr); fit != fences_.end()) {
        const bool inside = point_in_polygon({tp.lat_deg, tp.lon_deg}, fit->second.vertices);
        auto prev = fence_inside_.find(*addr);
        if (prev != fence_inside_.end() && prev->second != inside) {
          FenceEvent ev{*addr, t_ms, fcnt, inside ? "entered" : "exited"};
          fence_events_[*addr].push_back(ev);
          events.push_back(ev);
        }
        fence_inside_[*addr] = inside;
      }
    }
    return events;
  }

  void persist(const json& rec) {
    pending_.push_back(rec);
    flush_pending();
  }

  void flush_pending() {
    while (!pending_.empty()) {
      try {
        store_->append(pending_.front());
      } catch (const std::exception&) {
        ++counters_.store_failures;
        return;
      }
      pending_.pop_front();
    }
  }

  ServerConfig cfg_;
  std::shared_ptr<Store> store_;
  mutable std::shared_mutex mu_;
  std::map<std::uint32_t, DeviceRecord> records_;
  std::map<std::uint32_t, std::vector<TrackPoint>> tracks_;
  std::map<std::uint32_t, std::vector<StepBucket>> buckets_;
  std::map<std::uint32_t, FencePolygon> fences_;
  std::map<std::uint32_t, bool> fence_inside_;
  std::map<std::uint32_t, std::vector<FenceEvent>> fence_events_;
  std::set<std::pair<std::uint32_t, std::uint16_t>> stored_keys_;
  std::deque<json> pending_;
  std::optional<std::string> pull_endpoint_;
  std::mt19937_64 token_rng_{0x5EED};
  ServerCounters counters_;
};

}  // namespace loratrack::server
