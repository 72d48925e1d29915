#pragma once

// JSON/GeoJSON query API over a NetworkServer. `route` is transport-free so it can be tested
// directly; `bind_routes` mounts it on an httplib server.
//
// Fence polygons use edge-inclusive containment: a fix lying exactly on an edge or vertex
// counts as inside.

#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "loratrack/server.hpp"

namespace loratrack::http_api {

using nlohmann::json;
using server::NetworkServer;

struct Response {
  int status = 200;
  json body;
};

inline json to_json(const server::TrackPoint& p) {
  return {{"dev_addr", server::format_dev_addr(p.dev_addr)},
          {"fcnt", p.fcnt},
          {"t_ms", p.t_ms},
          {"lat", p.lat_deg},
          {"lon", p.lon_deg},
          {"rssi", p.rssi_dbm},
          {"snr", p.snr_db},
          {"sf", p.sf}};
}

inline json to_json(const server::StepBucket& b) {
  return {{"dev_addr", server::format_dev_addr(b.dev_addr)},
          {"window_start_ms", b.window_start_ms},
          {"steps", b.steps}};
}

inline json to_json(const server::FenceEvent& e) {
  return {{"dev_addr", server::format_dev_addr(e.dev_addr)}, {"t_ms", e.t_ms}, {"fcnt", e.fcnt}, {"event", e.kind}};
}

inline json to_json(const server::DeviceRecord& r) {
  json j{{"dev_addr", server::format_dev_addr(r.dev_addr)},
         {"battery_pct", r.battery_pct},
         {"current_sf", r.current_sf},
         {"uplinks", r.uplinks}};
  j["last_seen_ms"] = r.last_seen_ms ? json(*r.last_seen_ms) : json(nullptr);
  j["last_fcnt"] = r.last_fcnt ? json(*r.last_fcnt) : json(nullptr);
  return j;
}

// FeatureCollection: one LineString over all points, then one Point per fix.
inline json track_geojson(const std::vector<server::TrackPoint>& pts) {
  json coords = json::array();
  json features = json::array();
  for (const auto& p : pts) coords.push_back({p.lon_deg, p.lat_deg});
  features.push_back({{"type", "Feature"},
                      {"geometry", {{"type", "LineString"}, {"coordinates", coords}}},
                      {"properties", {{"points", pts.size()}}}});
  for (const auto& p : pts) {
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Point"}, {"coordinates", {p.lon_deg, p.lat_deg}}}},
                        {"properties", {{"t", p.t_ms}, {"rssi", p.rssi_dbm}, {"snr", p.snr_db}, {"sf", p.sf}, {"fcnt", p.fcnt}}}});
  }
  return {{"type", "FeatureCollection"}, {"features", features}};
}

inline json fence_geojson(const server::FencePolygon& f) {
  json ring = json::array();
  for (const auto& v : f.vertices) ring.push_back({v.lon_deg, v.lat_deg});
  ring.push_back({f.vertices.front().lon_deg, f.vertices.front().lat_deg});
  return {{"type", "Polygon"}, {"coordinates", json::array({ring})}};
}

// Accepts a bare Polygon geometry or a Feature wrapping one. Coordinates are [lon, lat].
inline std::optional<std::vector<geo::LatLon>> parse_polygon(const json& j) {
  const json* g = &j;
  if (j.is_object() && j.value("type", "") == "Feature" && j.contains("geometry")) g = &j["geometry"];
  if (!g->is_object() || g->value("type", "") != "Polygon") return std::nullopt;
  const auto it = g->find("coordinates");
  if (it == g->end() || !it->is_array() || it->empty() || !(*it)[0].is_array()) return std::nullopt;
  std::vector<geo::LatLon> out;
  for (const auto& c : (*it)[0]) {
    if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number()) return std::nullopt;
    out.push_back({c[1].get<double>(), c[0].get<double>()});
  }
  if (out.size() > 1 && out.front() == out.back()) out.pop_back();
  if (out.size() < 3) return std::nullopt;
  return out;
}

using Query = std::map<std::string, std::string>;

inline std::optional<std::int64_t> parse_i64(std::string_view s) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline Response error(int status, std::string msg) { return {status, {{"error", std::move(msg)}}}; }

inline std::vector<std::string_view> split_path(std::string_view path) {
  std::vector<std::string_view> parts;
  while (!path.empty()) {
    const auto slash = path.find('/');
    const auto part = path.substr(0, slash);
    if (!part.empty()) parts.push_back(part);
    if (slash == std::string_view::npos) break;
    path.remove_prefix(slash + 1);
  }
  return parts;
}

inline Response route(NetworkServer& srv, std::string_view method, std::string_view path, const Query& query = {},
                      std::string_view body = {}) {
  const auto parts = split_path(path);
  if (parts.size() < 2 || parts[0] != "api" || parts[1] != "devices") return error(404, "not found");

  if (parts.size() == 2) {
    if (method != "GET") return error(405, "method not allowed");
    json arr = json::array();
    for (const auto& d : srv.devices()) arr.push_back(to_json(d));
    return {200, arr};
  }

  const auto addr = server::parse_dev_addr(parts[2]);
  if (!addr || !srv.has_device(*addr)) return error(404, "unknown device");

  std::int64_t from = INT64_MIN, to = INT64_MAX;
  if (auto it = query.find("from"); it != query.end()) {
    auto v = parse_i64(it->second);
    if (!v) return error(400, "malformed range");
    from = *v;
  }
  if (auto it = query.find("to"); it != query.end()) {
    auto v = parse_i64(it->second);
    if (!v) return error(400, "malformed range");
    to = *v;
  }
  if (from > to) return error(400, "malformed range");

  const std::string_view leaf = parts.size() > 3 ? parts[3] : std::string_view{};
  if (parts.size() == 4 && leaf == "track" && method == "GET") return {200, track_geojson(srv.track(*addr, from, to))};
  if (parts.size() == 4 && leaf == "steps" && method == "GET") {
    json arr = json::array();
    for (const auto& b : srv.steps(*addr, from, to)) arr.push_back(to_json(b));
    return {200, arr};
  }
  if (parts.size() == 4 && leaf == "latest" && method == "GET") {
    const auto l = srv.latest(*addr);
    json buckets = json::array();
    for (const auto& b : l.buckets) buckets.push_back(to_json(b));
    return {200, {{"point", l.point ? to_json(*l.point) : json(nullptr)}, {"buckets", buckets}}};
  }
  if (parts.size() == 4 && leaf == "fence") {
    if (method == "GET") {
      const auto f = srv.fence(*addr);
      if (!f) return error(404, "no fence");
      return {200, fence_geojson(*f)};
    }
    if (method == "PUT") {
      const json j = json::parse(body, nullptr, false);
      if (j.is_discarded()) return error(400, "malformed JSON");
      auto poly = parse_polygon(j);
      if (!poly) return error(400, "expected a GeoJSON Polygon with at least 3 vertices");
      srv.set_fence(*addr, std::move(*poly));
      return {200, fence_geojson(*srv.fence(*addr))};
    }
    if (method == "DELETE") {
      srv.clear_fence(*addr);
      return {200, {{"deleted", true}}};
    }
    return error(405, "method not allowed");
  }
  if (parts.size() == 5 && leaf == "fence" && parts[4] == "events" && method == "GET") {
    json arr = json::array();
    for (const auto& e : srv.fence_events(*addr))
      if (e.t_ms >= from && e.t_ms <= to) arr.push_back(to_json(e));
    return {200, arr};
  }
  return error(404, "not found");
}

inline void bind_routes(httplib::Server& http, NetworkServer& srv) {
  auto handler = [&srv](const httplib::Request& req, httplib::Response& res) {
    Query q;
    for (const auto& [k, v] : req.params) q.emplace(k, v);
    const auto r = route(srv, req.method, req.path, q, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  const char* pattern = R"(/api/.*)";
  http.Get(pattern, handler);
  http.Put(pattern, handler);
  http.Delete(pattern, handler);
}

}  // namespace loratrack::http_api
