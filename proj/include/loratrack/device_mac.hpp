#pragma once

// Class A tracker device: payload/frame codecs and the acquisition/transmission state machine.
//
// Payload (16 bytes, little-endian):
//   0..3   lat_e5   int32   degrees * 1e5
//   4..7   lon_e5   int32   degrees * 1e5
//   8..13  steps8   uint8[6] round(window steps / 8), saturated at 255
//   14     battery  uint8   0..100 %
//   15     flags    uint8   bit0 gps_valid, bit1 all windows static
//
// Frame: mhdr(1) dev_addr(4) fctrl(1) fcnt(2) fport(1) frm_payload(N) mic(4)
//   mic = CRC32(key || all preceding frame bytes)

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <boost/crc.hpp>

#include "loratrack/common.hpp"
#include "loratrack/energy.hpp"
#include "loratrack/lora_phy.hpp"
#include "loratrack/stepcount.hpp"
#include "loratrack/synthgen.hpp"

namespace loratrack::mac {

inline constexpr std::size_t kPayloadSize = 16;
inline constexpr std::size_t kFrameOverhead = 13;
inline constexpr std::size_t kUplinkFrameSize = kFrameOverhead + kPayloadSize;
inline constexpr std::uint8_t kMhdrUnconfirmedUp = 0x40;
inline constexpr std::uint8_t kMhdrDown = 0x60;
inline constexpr std::uint8_t kTrackingPort = 2;
inline constexpr std::uint8_t kMacPort = 0;
inline constexpr std::uint8_t kFctrlAdr = 0x80;
inline constexpr std::uint8_t kCidLinkAdr = 0x03;
inline constexpr std::uint8_t kFlagGpsValid = 0x01;
inline constexpr std::uint8_t kFlagAllStatic = 0x02;
inline constexpr int kStepQuantum = 8;

using FrameKey = std::array<std::uint8_t, 16>;

// ---------------------------------------------------------------------------
// Payload

struct UplinkPayload {
  std::int32_t lat_e5 = 0;
  std::int32_t lon_e5 = 0;
  std::array<std::uint8_t, 6> steps8{};
  std::uint8_t battery_pct = 100;
  std::uint8_t flags = 0;

  bool gps_valid() const { return flags & kFlagGpsValid; }
  bool all_static() const { return flags & kFlagAllStatic; }
  double lat_deg() const { return lat_e5 / 1e5; }
  double lon_deg() const { return lon_e5 / 1e5; }
  friend bool operator==(const UplinkPayload&, const UplinkPayload&) = default;
};

inline std::uint8_t quantize_steps(std::int64_t steps) {
  if (steps <= 0) return 0;
  const std::int64_t q = (steps + kStepQuantum / 2) / kStepQuantum;
  return static_cast<std::uint8_t>(std::min<std::int64_t>(q, 255));
}

inline std::int64_t dequantize_steps(std::uint8_t q) { return std::int64_t{q} * kStepQuantum; }

inline std::int32_t degrees_to_e5(double deg) {
  return static_cast<std::int32_t>(std::llround(deg * 1e5));
}

inline Bytes encode_payload(const UplinkPayload& p) {
  if (p.lat_e5 < -9'000'000 || p.lat_e5 > 9'000'000)
    throw std::invalid_argument("payload: latitude out of range");
  if (p.lon_e5 < -18'000'000 || p.lon_e5 > 18'000'000)
    throw std::invalid_argument("payload: longitude out of range");
  if (p.battery_pct > 100) throw std::invalid_argument("payload: battery above 100 %");
  Bytes out;
  out.reserve(kPayloadSize);
  le::put_u32(out, static_cast<std::uint32_t>(p.lat_e5));
  le::put_u32(out, static_cast<std::uint32_t>(p.lon_e5));
  out.insert(out.end(), p.steps8.begin(), p.steps8.end());
  out.push_back(p.battery_pct);
  out.push_back(p.flags);
  return out;
}

inline UplinkPayload decode_payload(ByteView in) {
  if (in.size() != kPayloadSize) throw FormatError("payload: expected 16 bytes");
  UplinkPayload p;
  p.lat_e5 = static_cast<std::int32_t>(le::get_u32(in, 0));
  p.lon_e5 = static_cast<std::int32_t>(le::get_u32(in, 4));
  std::copy_n(in.begin() + 8, 6, p.steps8.begin());
  p.battery_pct = in[14];
  p.flags = in[15];
  if (std::abs(p.lat_e5) > 9'000'000 || std::abs(p.lon_e5) > 18'000'000)
    throw FormatError("payload: coordinates out of range");
  return p;
}

// ---------------------------------------------------------------------------
// Frame

struct Frame {
  std::uint8_t mhdr = kMhdrUnconfirmedUp;
  std::uint32_t dev_addr = 0;
  std::uint8_t fctrl = 0;
  std::uint16_t fcnt = 0;
  std::uint8_t fport = kTrackingPort;
  Bytes frm_payload;
  std::uint32_t mic = 0;
};

inline std::uint32_t compute_mic(const FrameKey& key, ByteView body) {
  boost::crc_32_type crc;
  crc.process_bytes(key.data(), key.size());
  crc.process_bytes(body.data(), body.size());
  return crc.checksum();
}

inline Bytes build_frame_raw(std::uint8_t mhdr, std::uint32_t dev_addr, std::uint8_t fctrl,
                             std::uint16_t fcnt, std::uint8_t fport, ByteView payload,
                             const FrameKey& key) {
  Bytes out;
  out.reserve(kFrameOverhead + payload.size());
  out.push_back(mhdr);
  le::put_u32(out, dev_addr);
  out.push_back(fctrl);
  le::put_u16(out, fcnt);
  out.push_back(fport);
  out.insert(out.end(), payload.begin(), payload.end());
  le::put_u32(out, compute_mic(key, out));
  return out;
}

inline Bytes build_frame(ByteView payload, std::uint16_t fcnt, std::uint32_t dev_addr,
                         const FrameKey& key) {
  if (payload.size() != kPayloadSize) throw FormatError("frame: uplink payload must be 16 bytes");
  return build_frame_raw(kMhdrUnconfirmedUp, dev_addr, kFctrlAdr, fcnt, kTrackingPort, payload, key);
}

// Header fields without MIC verification (used to look up the device key).
inline Frame peek_frame(ByteView in) {
  if (in.size() < kFrameOverhead) throw FormatError("frame: too short");
  Frame f;
  f.mhdr = in[0];
  if (f.mhdr != kMhdrUnconfirmedUp && f.mhdr != kMhdrDown) throw FormatError("frame: unknown MHDR");
  if (f.mhdr == kMhdrUnconfirmedUp && in.size() != kUplinkFrameSize)
    throw FormatError("frame: uplink frame must be 29 bytes");
  f.dev_addr = le::get_u32(in, 1);
  f.fctrl = in[5];
  f.fcnt = le::get_u16(in, 6);
  f.fport = in[8];
  f.frm_payload.assign(in.begin() + 9, in.end() - 4);
  f.mic = le::get_u32(in, in.size() - 4);
  return f;
}

inline Frame parse_frame(ByteView in, const FrameKey& key) {
  Frame f = peek_frame(in);
  if (compute_mic(key, in.first(in.size() - 4)) != f.mic) throw IntegrityError("frame: MIC mismatch");
  return f;
}

// ADR downlink: [CID 0x03, target SF].
struct AdrCommand {
  int target_sf = 12;
};

inline Bytes encode_adr(const AdrCommand& c) {
  return {kCidLinkAdr, static_cast<std::uint8_t>(c.target_sf)};
}

inline std::optional<AdrCommand> decode_adr(ByteView in) {
  if (in.size() != 2 || in[0] != kCidLinkAdr) return std::nullopt;
  return AdrCommand{in[1]};
}

inline Bytes build_adr_downlink(std::uint32_t dev_addr, std::uint16_t fcnt, const AdrCommand& c,
                                const FrameKey& key) {
  const Bytes cmd = encode_adr(c);
  return build_frame_raw(kMhdrDown, dev_addr, 0x00, fcnt, kMacPort, cmd, key);
}

// ---------------------------------------------------------------------------
// State machine

enum class DeviceState { Init, StepCount, Sleep, GpsAcquire, Send, RxDelay, Receive };

constexpr std::string_view to_string(DeviceState s) {
  switch (s) {
    case DeviceState::Init: return "Init";
    case DeviceState::StepCount: return "StepCount";
    case DeviceState::Sleep: return "Sleep";
    case DeviceState::GpsAcquire: return "GpsAcquire";
    case DeviceState::Send: return "Send";
    case DeviceState::RxDelay: return "RxDelay";
    case DeviceState::Receive: return "Receive";
  }
  return "?";
}

constexpr bool legal_transition(DeviceState from, DeviceState to) {
  using S = DeviceState;
  switch (from) {
    case S::Init: return to == S::StepCount;
    case S::StepCount: return to == S::Sleep;
    case S::Sleep: return to == S::StepCount || to == S::GpsAcquire;
    case S::GpsAcquire: return to == S::Send;
    case S::Send: return to == S::RxDelay;
    case S::RxDelay: return to == S::Receive;
    case S::Receive: return to == S::Sleep;
  }
  return false;
}

enum class TimerKind { StepDone, DutyBoundary, TxDone, RxOpen, RxDone };

constexpr std::string_view to_string(TimerKind k) {
  switch (k) {
    case TimerKind::StepDone: return "step_done";
    case TimerKind::DutyBoundary: return "duty_boundary";
    case TimerKind::TxDone: return "tx_done";
    case TimerKind::RxOpen: return "rx_open";
    case TimerKind::RxDone: return "rx_done";
  }
  return "?";
}

struct FifoFull {
  synth::FifoBatch batch;
};
struct Timer {
  TimerKind kind = TimerKind::StepDone;
};
struct GpsFixed {
  synth::GpsFix fix;
};
struct Downlink {
  Bytes frame;
};

using DeviceEvent = std::variant<FifoFull, Timer, GpsFixed, Downlink>;

enum class ActionKind {
  Transition,
  ReadFifo,
  CountSteps,
  DeferFifo,
  ScheduleTimer,
  AcquireGps,
  Transmit,
  OpenRxWindow,
  ApplyAdr,
  Ignore,
  Warn,
};

constexpr std::string_view to_string(ActionKind k) {
  switch (k) {
    case ActionKind::Transition: return "transition";
    case ActionKind::ReadFifo: return "read_fifo";
    case ActionKind::CountSteps: return "count_steps";
    case ActionKind::DeferFifo: return "defer_fifo";
    case ActionKind::ScheduleTimer: return "schedule_timer";
    case ActionKind::AcquireGps: return "acquire_gps";
    case ActionKind::Transmit: return "transmit";
    case ActionKind::OpenRxWindow: return "open_rx";
    case ActionKind::ApplyAdr: return "apply_adr";
    case ActionKind::Ignore: return "ignore";
    case ActionKind::Warn: return "warn";
  }
  return "?";
}

struct Action {
  ActionKind kind = ActionKind::Ignore;
  std::int64_t t_ms = 0;      // when the action happens
  std::int64_t at_ms = 0;     // timer deadline / GPS ready / transmission end
  TimerKind timer = TimerKind::StepDone;
  std::string detail;
  Bytes frame;
  int sf = 0;
};

struct TickResult {
  DeviceState state = DeviceState::Init;
  std::vector<Action> actions;
};

struct DeviceConfig {
  std::uint32_t dev_addr = 0x26011001;
  std::int64_t duty_period_ms = 3'600'000;
  double fs_hz = 6.0;
  phy::RadioConfig radio{};
  FrameKey frame_key{};
  steps::StepCounterConfig step_config{};
  std::int64_t gps_acquire_ms = 30'000;
  std::int64_t rx1_delay_ms = 1'000;
  std::int64_t rx2_delay_ms = 2'000;
  std::int64_t rx_window_ms = 200;
  std::int64_t step_count_ms = 20;
  double battery_capacity_mah = 1000.0;
  energy::PhaseDefaults phases{};

  std::int64_t window_len_ms() const {
    return duty_period_ms / static_cast<std::int64_t>(steps::kWindowsPerCycle);
  }

  void validate() const {
    if (duty_period_ms <= 0 || duty_period_ms % static_cast<std::int64_t>(steps::kWindowsPerCycle) != 0)
      throw std::invalid_argument("device: duty period must be a positive multiple of 6 windows");
    if (!(fs_hz > 0.0)) throw std::invalid_argument("device: sampling rate must be positive");
    radio.validate();
    step_config.validate();
  }
};

// One transmitted duty cycle: what the device counted before quantization.
struct UplinkRecord {
  std::uint16_t fcnt = 0;
  std::int64_t cycle_start_ms = 0;
  std::int64_t fix_t_ms = 0;
  std::array<std::int64_t, 6> window_steps{};
  UplinkPayload payload;
  int sf = 12;
};

class Device {
 public:
  explicit Device(DeviceConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const DeviceConfig& config() const { return cfg_; }
  DeviceState state() const { return state_; }
  const phy::RadioConfig& radio() const { return cfg_.radio; }
  std::uint16_t next_fcnt() const { return fcnt_; }
  const std::vector<Action>& action_log() const { return log_; }
  const std::vector<UplinkRecord>& uplinks() const { return uplinks_; }
  std::int64_t cycle_start_ms() const { return cycle_start_; }
  const std::array<std::int64_t, 6>& window_steps() const { return windows_; }
  double consumed_mah() const { return consumed_mah_; }
  std::size_t deferred_batches() const { return queued_.size(); }

  // True when a timer of this kind and deadline is still armed (cancelled timers are not).
  bool timer_armed(TimerKind kind, std::int64_t at_ms) const {
    if (kind == TimerKind::DutyBoundary) return next_boundary_ == at_ms;
    return phase_timer_ && phase_timer_->first == kind && phase_timer_->second == at_ms;
  }

  // Arms the first duty-cycle boundary; the device stays in Init until the first FIFO read.
  TickResult boot(std::int64_t now_ms) {
    if (booted_) throw IllegalEvent("device: already booted");
    booted_ = true;
    cycle_start_ = now_ms;
    TickResult r;
    next_boundary_ = now_ms + cfg_.duty_period_ms;
    emit_timer(r, now_ms, TimerKind::DutyBoundary, next_boundary_);
    return finish(r);
  }

  TickResult tick(const DeviceEvent& ev, std::int64_t now_ms) {
    if (!booted_) throw IllegalEvent("device: tick before boot");
    TickResult r;
    std::visit([&](const auto& e) { on(e, now_ms, r); }, ev);
    return finish(r);
  }

  // Applies an ADR command; returns the radio configuration for subsequent uplinks.
  phy::RadioConfig handle_adr(const AdrCommand& cmd, std::int64_t now_ms = 0) {
    TickResult r;
    apply_adr(cmd, now_ms, r);
    finish(r);
    return cfg_.radio;
  }

  std::pair<std::int64_t, std::int64_t> rx1_window() const {
    return {tx_end_ + cfg_.rx1_delay_ms, tx_end_ + cfg_.rx1_delay_ms + cfg_.rx_window_ms};
  }
  std::pair<std::int64_t, std::int64_t> rx2_window() const {
    return {tx_end_ + cfg_.rx2_delay_ms, tx_end_ + cfg_.rx2_delay_ms + cfg_.rx_window_ms};
  }

 private:
  TickResult finish(TickResult& r) {
    r.state = state_;
    log_.insert(log_.end(), r.actions.begin(), r.actions.end());
    return std::move(r);
  }

  void transition(TickResult& r, std::int64_t now, DeviceState to) {
    if (!legal_transition(state_, to))
      throw IllegalEvent("device: illegal transition " + std::string(to_string(state_)) + " -> " +
                         std::string(to_string(to)));
    r.actions.push_back({ActionKind::Transition, now, now, {},
                         std::string(to_string(state_)) + "->" + std::string(to_string(to))});
    state_ = to;
  }

  void emit_timer(TickResult& r, std::int64_t now, TimerKind kind, std::int64_t at) {
    if (kind != TimerKind::DutyBoundary) phase_timer_ = std::make_pair(kind, at);
    r.actions.push_back({ActionKind::ScheduleTimer, now, at, kind, std::string(to_string(kind))});
  }

  void expect_timer(TimerKind kind, std::int64_t now) {
    if (!timer_armed(kind, now))
      throw IllegalEvent("device: unexpected timer " + std::string(to_string(kind)) + " in " +
                         std::string(to_string(state_)));
    if (kind != TimerKind::DutyBoundary) phase_timer_.reset();
  }

  void start_step_count(const synth::FifoBatch& batch, std::int64_t now, TickResult& r) {
    transition(r, now, DeviceState::StepCount);
    r.actions.push_back({ActionKind::ReadFifo, now, now, {}, "32"});
    const std::int64_t inc = steps::count_batch(batch, cfg_.step_config);
    const std::size_t w = steps::window_index(batch.last_t_ms(), cycle_start_, cfg_.window_len_ms());
    windows_[w] += inc;
    Action count{ActionKind::CountSteps, now, now, {},
                 "window=" + std::to_string(w) + " steps=" + std::to_string(inc)};
    r.actions.push_back(std::move(count));
    emit_timer(r, now, TimerKind::StepDone, now + cfg_.step_count_ms);
  }

  void on(const FifoFull& e, std::int64_t now, TickResult& r) {
    if (state_ == DeviceState::Init || state_ == DeviceState::Sleep) {
      start_step_count(e.batch, now, r);
    } else {
      queued_.push_back(e.batch);
      r.actions.push_back({ActionKind::DeferFifo, now, now, {},
                           "queued=" + std::to_string(queued_.size())});
    }
  }

  void on(const Timer& e, std::int64_t now, TickResult& r) {
    expect_timer(e.kind, now);
    switch (e.kind) {
      case TimerKind::DutyBoundary:
        boundary_pending_ = now;
        next_boundary_ = now + cfg_.duty_period_ms;
        emit_timer(r, now, TimerKind::DutyBoundary, next_boundary_);
        if (state_ == DeviceState::Sleep) enter_sleep(now, r, /*already_sleeping=*/true);
        break;
      case TimerKind::StepDone:
        enter_sleep(now, r, false);
        break;
      case TimerKind::TxDone:
        transition(r, now, DeviceState::RxDelay);
        emit_timer(r, now, TimerKind::RxOpen, tx_end_ + cfg_.rx1_delay_ms);
        break;
      case TimerKind::RxOpen: {
        transition(r, now, DeviceState::Receive);
        const auto [a1, b1] = rx1_window();
        const auto [a2, b2] = rx2_window();
        r.actions.push_back({ActionKind::OpenRxWindow, now, b1, {},
                             "rx1=[" + std::to_string(a1) + "," + std::to_string(b1) + ") rx2=[" +
                                 std::to_string(a2) + "," + std::to_string(b2) + ")"});
        emit_timer(r, now, TimerKind::RxDone, b2);
        break;
      }
      case TimerKind::RxDone:
        enter_sleep(now, r, false);
        break;
    }
  }

  void on(const GpsFixed& e, std::int64_t now, TickResult& r) {
    if (state_ != DeviceState::GpsAcquire) throw IllegalEvent("device: GPS fix outside GpsAcquire");
    transition(r, now, DeviceState::Send);

    UplinkPayload p;
    if (e.fix.valid) {
      p.lat_e5 = degrees_to_e5(e.fix.lat_deg);
      p.lon_e5 = degrees_to_e5(e.fix.lon_deg);
      p.flags |= kFlagGpsValid;
    }
    bool all_static = true;
    for (std::size_t i = 0; i < 6; ++i) {
      p.steps8[i] = quantize_steps(sent_windows_[i]);
      all_static = all_static && sent_windows_[i] == 0;
    }
    if (all_static) p.flags |= kFlagAllStatic;
    p.battery_pct = static_cast<std::uint8_t>(
        energy::battery_percent(consumed_mah_, cfg_.battery_capacity_mah));

    const Bytes frame = build_frame(encode_payload(p), fcnt_, cfg_.dev_addr, cfg_.frame_key);
    uplinks_.push_back({fcnt_, sent_cycle_start_, now, sent_windows_, p, cfg_.radio.sf});
    ++fcnt_;

    tx_end_ = now + static_cast<std::int64_t>(
                        std::llround(phy::send_period(cfg_.radio.sf, cfg_.phases.send_periods)));
    Action tx{ActionKind::Transmit, now, tx_end_, {},
              "fcnt=" + std::to_string(uplinks_.back().fcnt) + " sf=" + std::to_string(cfg_.radio.sf)};
    tx.frame = frame;
    tx.sf = cfg_.radio.sf;
    r.actions.push_back(std::move(tx));
    emit_timer(r, now, TimerKind::TxDone, tx_end_);
  }

  void on(const Downlink& e, std::int64_t now, TickResult& r) {
    const auto [a1, b1] = rx1_window();
    const auto [a2, b2] = rx2_window();
    const bool in_window = state_ == DeviceState::Receive &&
                           ((now >= a1 && now < b1) || (now >= a2 && now < b2));
    if (!in_window) {
      r.actions.push_back({ActionKind::Ignore, now, now, {}, "downlink outside rx window"});
      return;
    }
    Frame f;
    try {
      f = parse_frame(e.frame, cfg_.frame_key);
    } catch (const std::exception& ex) {
      r.actions.push_back({ActionKind::Ignore, now, now, {}, std::string("downlink rejected: ") + ex.what()});
      return;
    }
    if (f.mhdr != kMhdrDown || f.dev_addr != cfg_.dev_addr) {
      r.actions.push_back({ActionKind::Ignore, now, now, {}, "downlink not addressed to device"});
      return;
    }
    if (f.fport == kMacPort) {
      if (auto cmd = decode_adr(f.frm_payload)) apply_adr(*cmd, now, r);
    }
    phase_timer_.reset();  // RX2 is not opened after a downlink in RX1
    enter_sleep(now, r, false);
  }

  void apply_adr(const AdrCommand& cmd, std::int64_t now, TickResult& r) {
    if (!phy::valid_sf(cmd.target_sf)) {
      r.actions.push_back({ActionKind::Warn, now, now, {},
                           "adr: target sf " + std::to_string(cmd.target_sf) + " out of range, ignored"});
      return;
    }
    if (cmd.target_sf == cfg_.radio.sf) {
      r.actions.push_back({ActionKind::ApplyAdr, now, now, {}, "adr: sf unchanged"});
      return;
    }
    r.actions.push_back({ActionKind::ApplyAdr, now, now, {},
                         "adr: sf " + std::to_string(cfg_.radio.sf) + "->" + std::to_string(cmd.target_sf)});
    cfg_.radio.sf = cmd.target_sf;
  }

  // Return to Sleep, then drain deferred FIFO batches and a pending duty boundary in time order.
  void enter_sleep(std::int64_t now, TickResult& r, bool already_sleeping) {
    if (!already_sleeping) transition(r, now, DeviceState::Sleep);
    const bool batch_first =
        !queued_.empty() &&
        (!boundary_pending_ || queued_.front().last_t_ms() < static_cast<double>(*boundary_pending_));
    if (batch_first) {
      const synth::FifoBatch b = queued_.front();
      queued_.pop_front();
      start_step_count(b, now, r);
    } else if (boundary_pending_) {
      start_hourly_branch(now, r);
    }
  }

  void start_hourly_branch(std::int64_t now, TickResult& r) {
    const std::int64_t boundary = *boundary_pending_;
    boundary_pending_.reset();
    consumed_mah_ +=
        energy::duty_cycle_energy(cfg_.radio.sf, cfg_.fs_hz, cfg_.duty_period_ms, cfg_.phases).q_duty_mas /
        3600.0;
    sent_windows_ = windows_;
    sent_cycle_start_ = cycle_start_;
    windows_.fill(0);
    cycle_start_ = boundary;
    transition(r, now, DeviceState::GpsAcquire);
    r.actions.push_back({ActionKind::AcquireGps, now, now + cfg_.gps_acquire_ms, {}, "gps"});
  }

  DeviceConfig cfg_;
  DeviceState state_ = DeviceState::Init;
  bool booted_ = false;
  std::uint16_t fcnt_ = 0;
  std::int64_t cycle_start_ = 0;
  std::int64_t next_boundary_ = -1;
  std::optional<std::int64_t> boundary_pending_;
  std::optional<std::pair<TimerKind, std::int64_t>> phase_timer_;
  std::array<std::int64_t, 6> windows_{};
  std::array<std::int64_t, 6> sent_windows_{};
  std::int64_t sent_cycle_start_ = 0;
  std::deque<synth::FifoBatch> queued_;
  std::int64_t tx_end_ = 0;
  double consumed_mah_ = 0.0;
  std::vector<Action> log_;
  std::vector<UplinkRecord> uplinks_;
};

}  // namespace loratrack::mac
