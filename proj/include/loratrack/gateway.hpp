#pragma once

// Packet-forwarder protocol (version 2) and the gateway that relays between the radio side
// and the network server.
//
//   PUSH_DATA  02 | token(2) | 00 | EUI(8) | {"rxpk":[...]}
//   PUSH_ACK   02 | token(2) | 01
//   PULL_DATA  02 | token(2) | 02 | EUI(8)
//   PULL_RESP  02 | token(2) | 03 | {"txpk":{...}}
//   PULL_ACK   02 | token(2) | 04

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "loratrack/base64.hpp"
#include "loratrack/common.hpp"
#include "loratrack/lora_phy.hpp"

namespace loratrack::gw {

using nlohmann::json;

inline constexpr std::uint8_t kProtocolVersion = 0x02;
inline constexpr std::uint16_t kDefaultServerPort = 1700;

enum class Ident : std::uint8_t {
  PushData = 0x00,
  PushAck = 0x01,
  PullData = 0x02,
  PullResp = 0x03,
  PullAck = 0x04,
};

using Eui = std::array<std::uint8_t, 8>;

inline Eui parse_eui(std::string_view text) {
  Eui eui{};
  std::size_t n = 0;
  int nibbles = 0;
  std::uint8_t cur = 0;
  for (char c : text) {
    if (c == ':' || c == '-') continue;
    int v;
    if (c >= '0' && c <= '9') v = c - '0';
    else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') v = c - 'A' + 10;
    else throw std::invalid_argument("eui: invalid hex digit");
    cur = static_cast<std::uint8_t>((cur << 4) | v);
    if (++nibbles == 2) {
      if (n == 8) throw std::invalid_argument("eui: too long");
      eui[n++] = cur;
      nibbles = 0;
      cur = 0;
    }
  }
  if (n != 8 || nibbles) throw std::invalid_argument("eui: expected 8 bytes");
  return eui;
}

inline std::string format_eui(const Eui& eui) { return to_hex(eui, ':'); }

struct GatewayPacket {
  std::uint8_t version = kProtocolVersion;
  std::uint16_t token = 0;
  Ident ident = Ident::PushData;
  std::optional<Eui> eui;
  std::optional<json> body;

  friend bool operator==(const GatewayPacket&, const GatewayPacket&) = default;
};

constexpr bool carries_eui(Ident id) { return id == Ident::PushData || id == Ident::PullData; }
constexpr bool carries_body(Ident id) { return id == Ident::PushData || id == Ident::PullResp; }

inline Bytes encode_packet(const GatewayPacket& p) {
  if (carries_eui(p.ident) != p.eui.has_value())
    throw std::invalid_argument("packet: EUI presence does not match identifier");
  if (carries_body(p.ident) != p.body.has_value())
    throw std::invalid_argument("packet: body presence does not match identifier");
  const std::string body = p.body ? p.body->dump() : std::string{};
  Bytes out;
  out.reserve(12 + body.size());
  out.push_back(p.version);
  out.push_back(static_cast<std::uint8_t>(p.token >> 8));
  out.push_back(static_cast<std::uint8_t>(p.token & 0xFF));
  out.push_back(static_cast<std::uint8_t>(p.ident));
  if (p.eui)
    for (auto b : *p.eui) out.push_back(b);
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

inline GatewayPacket decode_packet(ByteView in) {
  if (in.size() < 4) throw FormatError("packet: shorter than header");
  GatewayPacket p;
  p.version = in[0];
  if (p.version != kProtocolVersion) throw FormatError("packet: bad protocol version");
  p.token = static_cast<std::uint16_t>((in[1] << 8) | in[2]);
  if (in[3] > static_cast<std::uint8_t>(Ident::PullAck)) throw FormatError("packet: unknown identifier");
  p.ident = static_cast<Ident>(in[3]);
  std::size_t at = 4;
  if (carries_eui(p.ident)) {
    if (in.size() < 12) throw FormatError("packet: missing gateway EUI");
    Eui eui{};
    std::copy_n(in.begin() + 4, 8, eui.begin());
    p.eui = eui;
    at = 12;
  }
  if (carries_body(p.ident)) {
    if (in.size() == at) throw FormatError("packet: missing JSON body");
    json body = json::parse(in.begin() + static_cast<std::ptrdiff_t>(at), in.end(), nullptr, false);
    if (body.is_discarded() || !body.is_object()) throw FormatError("packet: malformed JSON body");
    p.body = std::move(body);
  } else if (in.size() != at) {
    throw FormatError("packet: identifier/length mismatch");
  }
  return p;
}

// ---------------------------------------------------------------------------
// rxpk / txpk

inline std::string format_datr(int sf, double bw_hz) {
  return "SF" + std::to_string(sf) + "BW" + std::to_string(static_cast<int>(std::lround(bw_hz / 1000.0)));
}

inline std::pair<int, double> parse_datr(std::string_view datr) {
  const auto bw_at = datr.find("BW");
  if (datr.substr(0, 2) != "SF" || bw_at == std::string_view::npos)
    throw FormatError("datr: expected SF<n>BW<khz>");
  try {
    const int sf = std::stoi(std::string(datr.substr(2, bw_at - 2)));
    const int bw = std::stoi(std::string(datr.substr(bw_at + 2)));
    if (!phy::valid_sf(sf) || bw <= 0) throw FormatError("datr: out of range");
    return {sf, bw * 1000.0};
  } catch (const std::logic_error&) {
    throw FormatError("datr: not numeric");
  }
}

inline std::string format_codr(int cr_denominator) { return "4/" + std::to_string(cr_denominator); }

struct Rxpk {
  std::uint32_t tmst = 0;             // gateway microsecond counter at end of reception
  std::optional<std::int64_t> tmms;   // simulation time at start of frame, ms
  double freq_mhz = 433.0;
  std::string datr = "SF12BW125";
  std::string codr = "4/5";
  int rssi = 0;
  double lsnr = 0.0;
  int size = 0;
  std::string data;

  friend bool operator==(const Rxpk&, const Rxpk&) = default;
};

inline double round_tenth(double v) { return std::round(v * 10.0) / 10.0; }

inline json to_json(const Rxpk& r) {
  json j{{"tmst", r.tmst}, {"freq", r.freq_mhz}, {"chan", 0}, {"rfch", 0}, {"stat", 1},
         {"modu", "LORA"}, {"datr", r.datr}, {"codr", r.codr}, {"rssi", r.rssi},
         {"lsnr", r.lsnr}, {"size", r.size}, {"data", r.data}};
  if (r.tmms) j["tmms"] = *r.tmms;
  return j;
}

inline Rxpk rxpk_from_json(const json& j) {
  try {
    Rxpk r;
    r.tmst = j.at("tmst").get<std::uint32_t>();
    if (j.contains("tmms")) r.tmms = j.at("tmms").get<std::int64_t>();
    r.freq_mhz = j.at("freq").get<double>();
    r.datr = j.at("datr").get<std::string>();
    r.codr = j.at("codr").get<std::string>();
    r.rssi = j.at("rssi").get<int>();
    r.lsnr = j.at("lsnr").get<double>();
    r.size = j.at("size").get<int>();
    r.data = j.at("data").get<std::string>();
    parse_datr(r.datr);
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("rxpk: ") + e.what());
  }
}

inline Rxpk make_rxpk(ByteView frame, const phy::RxMeta& rx, const phy::RadioConfig& radio,
                      std::uint32_t tmst, std::optional<std::int64_t> tmms) {
  Rxpk r;
  r.tmst = tmst;
  r.tmms = tmms;
  r.freq_mhz = radio.freq_hz / 1e6;
  r.datr = format_datr(radio.sf, radio.bw_hz);
  r.codr = format_codr(radio.cr_denominator);
  r.rssi = static_cast<int>(std::lround(rx.rssi_dbm));
  r.lsnr = round_tenth(rx.snr_db);
  r.size = static_cast<int>(frame.size());
  r.data = base64::encode(frame);
  return r;
}

struct Txpk {
  bool imme = false;
  std::uint32_t tmst = 0;
  double freq_mhz = 433.0;
  int powe = 14;
  std::string datr = "SF12BW125";
  std::string codr = "4/5";
  bool ipol = true;
  int size = 0;
  std::string data;

  friend bool operator==(const Txpk&, const Txpk&) = default;
};

inline json to_json(const Txpk& t) {
  return {{"imme", t.imme}, {"tmst", t.tmst}, {"freq", t.freq_mhz}, {"rfch", 0},
          {"powe", t.powe}, {"modu", "LORA"}, {"datr", t.datr}, {"codr", t.codr},
          {"ipol", t.ipol}, {"size", t.size}, {"data", t.data}};
}

inline Txpk txpk_from_json(const json& j) {
  try {
    Txpk t;
    t.imme = j.value("imme", false);
    t.tmst = j.at("tmst").get<std::uint32_t>();
    t.freq_mhz = j.at("freq").get<double>();
    t.powe = j.value("powe", 14);
    t.datr = j.at("datr").get<std::string>();
    t.codr = j.at("codr").get<std::string>();
    t.ipol = j.value("ipol", true);
    t.size = j.at("size").get<int>();
    t.data = j.at("data").get<std::string>();
    parse_datr(t.datr);
    return t;
  } catch (const json::exception& e) {
    throw FormatError(std::string("txpk: ") + e.what());
  }
}

inline Bytes encode_push_data(std::uint16_t token, const Eui& eui, const std::vector<Rxpk>& rxpks) {
  if (rxpks.empty()) throw std::invalid_argument("push_data: at least one rxpk");
  json arr = json::array();
  for (const auto& r : rxpks) arr.push_back(to_json(r));
  return encode_packet({kProtocolVersion, token, Ident::PushData, eui, json{{"rxpk", arr}}});
}

struct PushData {
  std::uint16_t token = 0;
  Eui eui{};
  std::vector<Rxpk> rxpks;
};

inline PushData decode_push_data(ByteView in) {
  const GatewayPacket p = decode_packet(in);
  if (p.ident != Ident::PushData) throw FormatError("push_data: wrong identifier");
  if (!p.body->contains("rxpk") || !(*p.body)["rxpk"].is_array())
    throw FormatError("push_data: missing rxpk array");
  PushData d{p.token, *p.eui, {}};
  for (const auto& r : (*p.body)["rxpk"]) d.rxpks.push_back(rxpk_from_json(r));
  return d;
}

inline Bytes encode_pull_resp(std::uint16_t token, const Txpk& txpk) {
  return encode_packet({kProtocolVersion, token, Ident::PullResp, std::nullopt, json{{"txpk", to_json(txpk)}}});
}

inline Txpk decode_pull_resp(ByteView in) {
  const GatewayPacket p = decode_packet(in);
  if (p.ident != Ident::PullResp) throw FormatError("pull_resp: wrong identifier");
  if (!p.body->contains("txpk") || !(*p.body)["txpk"].is_object())
    throw FormatError("pull_resp: missing txpk object");
  return txpk_from_json((*p.body)["txpk"]);
}

inline Bytes encode_ack(std::uint16_t token, Ident ident) {
  return encode_packet({kProtocolVersion, token, ident, std::nullopt, std::nullopt});
}

inline Bytes encode_pull_data(std::uint16_t token, const Eui& eui) {
  return encode_packet({kProtocolVersion, token, Ident::PullData, eui, std::nullopt});
}

// Microsecond counter arithmetic (32-bit, wrapping).
inline std::uint32_t counter_us(std::int64_t t_ms) {
  return static_cast<std::uint32_t>(static_cast<std::uint64_t>(t_ms) * 1000ULL);
}

// Absolute time of a counter value relative to `now_ms`, assuming it lies within +/-35 minutes.
inline std::int64_t unwrap_counter_ms(std::uint32_t tmst, std::int64_t now_ms) {
  const auto delta_us = static_cast<std::int32_t>(tmst - counter_us(now_ms));
  return now_ms + static_cast<std::int64_t>(std::floor(delta_us / 1000.0));
}

// ---------------------------------------------------------------------------
// Transport

// A datagram socket as seen by the gateway: fire-and-forget send, bounded-wait receive.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(ByteView datagram) = 0;
  virtual std::optional<Bytes> receive(std::chrono::milliseconds timeout) = 0;
};

struct GatewayConfig {
  Eui eui{0xAA, 0xBB, 0xCC, 0xDD, 0xEE, 0xFF, 0x00, 0x11};
  std::int64_t retry_after_ms = 500;
  std::optional<std::int64_t> ack_wait_ms;  // wall-clock wait per attempt; unset: retry_after_ms
  int max_attempts = 2;
  std::int64_t keepalive_ms = 10'000;
  std::uint64_t token_seed = 1;
};

struct ForwardResult {
  bool acked = false;
  int attempts = 0;
  std::uint16_t token = 0;
  Rxpk rxpk;
};

struct ScheduledDownlink {
  std::int64_t at_ms = 0;
  Txpk txpk;
  Bytes frame;
};

struct GatewayCounters {
  std::atomic<std::uint64_t> push_sent{0};
  std::atomic<std::uint64_t> push_acked{0};
  std::atomic<std::uint64_t> retries{0};
  std::atomic<std::uint64_t> uplink_lost{0};
  std::atomic<std::uint64_t> unmatched_acks{0};
  std::atomic<std::uint64_t> keepalives{0};
  std::atomic<std::uint64_t> pull_acked{0};
  std::atomic<std::uint64_t> downlinks_scheduled{0};
  std::atomic<std::uint64_t> downlinks_dropped_past{0};
  std::atomic<std::uint64_t> downlinks_malformed{0};
};

// Pure transport: frame bytes are base64-wrapped verbatim, never inspected.
class Gateway {
 public:
  Gateway(GatewayConfig cfg, Transport& push, Transport& pull)
      : cfg_(cfg), push_(push), pull_(pull), rng_(cfg.token_seed) {}

  const GatewayConfig& config() const { return cfg_; }
  const GatewayCounters& counters() const { return counters_; }

  // Sends PUSH_DATA and waits for the matching PUSH_ACK; one retry, then the uplink is dropped.
  ForwardResult forward_uplink(ByteView frame, const phy::RxMeta& rx, const phy::RadioConfig& radio,
                               std::uint32_t tmst, std::optional<std::int64_t> tmms = std::nullopt) {
    ForwardResult res;
    res.rxpk = make_rxpk(frame, rx, radio, tmst, tmms);
    for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
      res.attempts = attempt;
      res.token = next_token();
      if (attempt > 1) ++counters_.retries;
      push_.send(encode_push_data(res.token, cfg_.eui, {res.rxpk}));
      ++counters_.push_sent;
      if (await_ack(push_, res.token, Ident::PushAck)) {
        ++counters_.push_acked;
        res.acked = true;
        return res;
      }
    }
    ++counters_.uplink_lost;
    return res;
  }

  // PULL_DATA keep-alive; lets the server learn where to send downlinks.
  void keepalive() {
    const std::uint16_t token = next_token();
    pull_.send(encode_pull_data(token, cfg_.eui));
    ++counters_.keepalives;
    last_pull_token_ = token;
  }

  // Drains the downlink socket: PULL_ACKs are matched, PULL_RESPs are scheduled or dropped.
  std::vector<ScheduledDownlink> poll_downlink(std::int64_t now_ms,
                                               std::chrono::milliseconds wait = std::chrono::milliseconds(0)) {
    std::vector<ScheduledDownlink> fresh;
    while (auto dgram = pull_.receive(wait)) {
      wait = std::chrono::milliseconds(0);
      GatewayPacket p;
      try {
        p = decode_packet(*dgram);
      } catch (const FormatError&) {
        ++counters_.downlinks_malformed;
        continue;
      }
      if (p.ident == Ident::PullAck) {
        if (last_pull_token_ && p.token == *last_pull_token_) ++counters_.pull_acked;
        else ++counters_.unmatched_acks;
        continue;
      }
      if (p.ident != Ident::PullResp) {
        ++counters_.downlinks_malformed;
        continue;
      }
      if (auto s = deliver_downlink(*dgram, now_ms)) fresh.push_back(*s);
    }
    return fresh;
  }

  // Parses one PULL_RESP and schedules its txpk; past or malformed requests are counted and dropped.
  std::optional<ScheduledDownlink> deliver_downlink(ByteView pull_resp, std::int64_t now_ms) {
    ScheduledDownlink s;
    try {
      s.txpk = decode_pull_resp(pull_resp);
      s.frame = base64::decode(s.txpk.data);
      if (static_cast<int>(s.frame.size()) != s.txpk.size) throw FormatError("txpk: size mismatch");
    } catch (const FormatError&) {
      ++counters_.downlinks_malformed;
      return std::nullopt;
    }
    s.at_ms = s.txpk.imme ? now_ms : unwrap_counter_ms(s.txpk.tmst, now_ms);
    if (s.at_ms < now_ms) {
      ++counters_.downlinks_dropped_past;
      return std::nullopt;
    }
    {
      std::lock_guard lock(schedule_mu_);
      schedule_.push_back(s);
    }
    ++counters_.downlinks_scheduled;
    return s;
  }

  // Removes and returns every scheduled downlink due at or before `now_ms`.
  std::vector<ScheduledDownlink> take_due(std::int64_t now_ms) {
    std::lock_guard lock(schedule_mu_);
    std::vector<ScheduledDownlink> due;
    std::deque<ScheduledDownlink> keep;
    for (auto& s : schedule_) {
      if (s.at_ms <= now_ms) due.push_back(std::move(s));
      else keep.push_back(std::move(s));
    }
    schedule_.swap(keep);
    return due;
  }

  std::size_t scheduled_count() const {
    std::lock_guard lock(schedule_mu_);
    return schedule_.size();
  }

 private:
  std::uint16_t next_token() {
    std::lock_guard lock(token_mu_);
    return static_cast<std::uint16_t>(rng_() & 0xFFFF);
  }

  bool await_ack(Transport& t, std::uint16_t token, Ident ident) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(cfg_.ack_wait_ms.value_or(cfg_.retry_after_ms));
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      auto dgram = t.receive(std::max(left, std::chrono::milliseconds(0)));
      if (!dgram) return false;
      try {
        const GatewayPacket p = decode_packet(*dgram);
        if (p.ident == ident && p.token == token) return true;
      } catch (const FormatError&) {
      }
      ++counters_.unmatched_acks;
    }
  }

  GatewayConfig cfg_;
  Transport& push_;
  Transport& pull_;
  std::mutex token_mu_;
  std::mt19937_64 rng_;
  std::optional<std::uint16_t> last_pull_token_;
  GatewayCounters counters_;
  mutable std::mutex schedule_mu_;
  std::deque<ScheduledDownlink> schedule_;
};

}  // namespace loratrack::gw
