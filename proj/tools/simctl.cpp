// simctl: scenario runner and report CLI.

#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>

#include <CLI11.hpp>

#include "loratrack/loratrack.hpp"

using namespace loratrack;

namespace {

volatile std::sig_atomic_t g_stop = 0;

// Writes to --out when given, else stdout.
struct Output {
  std::ofstream file;
  std::ostream* os = &std::cout;
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file.open(path);
      if (!file) throw std::runtime_error("cannot open " + path);
      os = &file;
    }
  }
};

template <class T>
std::vector<T> or_default(std::vector<T> v, std::vector<T> d) { return v.empty() ? d : v; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LoRa tracker simulation and reports"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "run a scenario end to end");
  std::uint64_t seed = 0;
  std::string scenario_path, log_path, store_path, run_out;
  std::int64_t duration_ms = 0;
  int sf = 0;
  double fs = 0.0, tx_power = -1000.0;
  bool use_udp = false, quiet_fifo = false;
  run->add_option("--seed", seed, "scenario seed")->required();
  run->add_option("--scenario", scenario_path, "scenario JSON (default: built-in)");
  run->add_option("--log", log_path, "event log CSV");
  run->add_option("--store", store_path, "store file (JSON lines); truncated first");
  run->add_option("--duration-ms", duration_ms);
  run->add_option("--sf", sf, "initial SF for every device");
  run->add_option("--fs", fs, "sampling rate for every device");
  run->add_option("--tx-power", tx_power);
  run->add_flag("--udp", use_udp, "route gateway traffic over loopback sockets");
  run->add_flag("--quiet-fifo", quiet_fifo, "omit per-batch device actions from the log");
  run->add_option("--out", run_out, "summary JSON");

  auto* toa = app.add_subcommand("toa", "time on air / send period table");
  std::string toa_out;
  int payload = static_cast<int>(mac::kPayloadSize);
  toa->add_option("--payload", payload);
  toa->add_option("--out", toa_out);

  auto* stp = app.add_subcommand("steps", "step counting accuracy table");
  sim::StepTrialPlan plan;
  std::string steps_out;
  stp->add_option("--trials", plan.trials);
  stp->add_option("--seed", plan.seed);
  stp->add_option("--targets", plan.targets);
  stp->add_option("--rates", plan.rates_hz);
  stp->add_option("--threshold", plan.counter.s_static_g);
  stp->add_option("--precision", plan.counter.m_precision);
  stp->add_option("--out", steps_out);

  auto* eng = app.add_subcommand("energy", "duty-cycle energy report");
  int e_sf = 12, tx_per_day = 24;
  double e_fs = 6.0, panel_ma = 40.0, charge_h = 0.5;
  std::string energy_out;
  eng->add_option("--sf", e_sf);
  eng->add_option("--fs", e_fs);
  eng->add_option("--tx-per-day", tx_per_day);
  eng->add_option("--panel-ma", panel_ma);
  eng->add_option("--charge-hours", charge_h);
  eng->add_option("--out", energy_out);

  auto* lnk = app.add_subcommand("linkscan", "RSSI/SNR sweep");
  std::vector<double> distances, powers;
  std::vector<int> sfs;
  std::string link_out;
  lnk->add_option("--distances", distances);
  lnk->add_option("--sfs", sfs);
  lnk->add_option("--powers", powers);
  lnk->add_option("--out", link_out);

  auto* srv = app.add_subcommand("serve", "network server on UDP + HTTP");
  std::string config_path;
  double serve_seconds = 0.0;
  srv->add_option("--config", config_path, "server config JSON (LORATRACK_* env overrides apply)");
  srv->add_option("--duration-s", serve_seconds, "stop after this long (0: until interrupted)");

  auto* exp = app.add_subcommand("export", "GeoJSON track from a store file");
  std::string export_store, export_dev, export_out;
  exp->add_option("--store", export_store)->required();
  exp->add_option("--dev", export_dev, "device address (default: first)");
  exp->add_option("--out", export_out);

  auto* dfl = app.add_subcommand("defaults", "write the default scenario JSON");
  std::string defaults_out;
  dfl->add_option("--out", defaults_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      sim::Scenario sc = scenario_path.empty() ? sim::default_scenario() : sim::load_scenario(scenario_path);
      sc.seed = seed;
      if (duration_ms > 0) sc.duration_ms = duration_ms;
      for (auto& d : sc.devices) {
        if (sf) d.device.radio.sf = sf;
        if (fs > 0.0) d.device.fs_hz = fs;
        if (tx_power > -1000.0) d.device.radio.tx_power_dbm = tx_power;
      }
      const auto errs = sc.validate();
      if (!errs.empty()) {
        for (const auto& e : errs) std::cerr << e << '\n';
        return 2;
      }
      sim::RunOptions opts;
      opts.transport = use_udp ? sim::TransportMode::UdpLoopback : sim::TransportMode::InProcess;
      if (!store_path.empty()) opts.store_path = store_path;
      opts.log_fifo = !quiet_fifo;
      const auto res = sim::run(sc, opts);
      if (!log_path.empty()) {
        std::ofstream f(log_path);
        res.log.write_csv(f);
      }
      const auto c = res.server->counters();
      nlohmann::json summary{{"seed", sc.seed},
                             {"uplinks_attempted", res.attempts.size()},
                             {"accepted", c.accepted},
                             {"replays", c.replays},
                             {"mic_failures", c.mic_failures},
                             {"downlinks_sent", c.downlinks_sent},
                             {"gateway_lost", res.gateway_lost},
                             {"log_records", res.log.records.size()}};
      nlohmann::json devs = nlohmann::json::array();
      for (const auto& d : res.server->devices())
        devs.push_back({{"dev_addr", server::format_dev_addr(d.dev_addr)},
                        {"track_points", res.server->track(d.dev_addr).size()},
                        {"step_buckets", res.server->steps(d.dev_addr).size()},
                        {"fence_events", res.server->fence_events(d.dev_addr).size()},
                        {"final_sf", res.final_sf.at(d.dev_addr)},
                        {"consumed_mah", res.consumed_mah.at(d.dev_addr)}});
      summary["devices"] = devs;
      Output out(run_out);
      *out.os << summary.dump(2) << '\n';
      return 0;
    }
    if (*toa) {
      const auto rows = sim::report_toa(payload);
      Output out(toa_out);
      sim::write_toa_csv(*out.os, rows);
      for (std::size_t i = 1; i < rows.size(); ++i)
        if (!(rows[i].time_on_air_ms > rows[i - 1].time_on_air_ms && rows[i].send_period_ms > rows[i - 1].send_period_ms))
          return 1;
      return 0;
    }
    if (*stp) {
      Output out(steps_out);
      sim::write_steps_csv(*out.os, sim::report_steps(plan));
      return 0;
    }
    if (*eng) {
      const auto r = energy::energy_report(e_sf, e_fs, tx_per_day, panel_ma, charge_h);
      const auto j = energy::to_json(r);
      Output out(energy_out);
      *out.os << j.dump(2) << '\n';
      return j["identity_exact"].get<bool>() ? 0 : 1;
    }
    if (*lnk) {
      const auto rows = sim::report_linkscan(
          or_default(distances, {100.0, 500.0, 1000.0, 2000.0, 3000.0, 5000.0, 10000.0}),
          or_default(sfs, {7, 8, 9, 10, 11, 12}), or_default(powers, {14.0, 17.0, 20.0}));
      Output out(link_out);
      sim::write_linkscan_csv(*out.os, rows);
      return 0;
    }
    if (*srv) {
      const auto cfg = server::load_server_config(config_path);
      auto store = std::make_shared<server::JsonlStore>(cfg.data_file);
      server::NetworkServer ns(cfg, store);
      udp::UdpServerRunner udp_runner(ns, {cfg.bind_address, cfg.udp_port});
      httplib::Server http;
      http_api::bind_routes(http, ns);
      udp_runner.start();
      std::thread http_thread([&] { http.listen(cfg.bind_address, cfg.http_port); });
      std::signal(SIGINT, [](int) { g_stop = 1; });
      std::signal(SIGTERM, [](int) { g_stop = 1; });
      std::cerr << "udp " << udp_runner.endpoint().str() << ", http " << cfg.bind_address << ':' << cfg.http_port
                << ", store " << cfg.data_file << '\n';
      const auto start = std::chrono::steady_clock::now();
      while (!g_stop) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        if (serve_seconds > 0.0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= serve_seconds)
          break;
      }
      http.stop();
      http_thread.join();
      udp_runner.stop();
      return 0;
    }
    if (*exp) {
      server::ServerConfig cfg;
      server::NetworkServer ns(cfg, std::make_shared<server::JsonlStore>(export_store));
      const auto devs = ns.devices();
      std::uint32_t addr = 0;
      if (!export_dev.empty()) {
        const auto a = server::parse_dev_addr(export_dev);
        if (!a || !ns.has_device(*a)) {
          std::cerr << "unknown device " << export_dev << '\n';
          return 1;
        }
        addr = *a;
      } else if (!devs.empty()) {
        addr = devs.front().dev_addr;
      } else {
        std::cerr << "store holds no devices\n";
        return 1;
      }
      Output out(export_out);
      *out.os << http_api::track_geojson(ns.track(addr)).dump(2) << '\n';
      return 0;
    }
    if (*dfl) {
      Output out(defaults_out);
      *out.os << sim::to_json(sim::default_scenario()).dump(2) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
