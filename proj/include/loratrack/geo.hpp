#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

namespace loratrack::geo {

inline constexpr double kEarthRadiusM = 6371000.0;

struct LatLon {
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  friend bool operator==(const LatLon&, const LatLon&) = default;
};

constexpr double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
constexpr double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

// Great-circle distance on a spherical earth of radius 6371 km.
inline double haversine_m(LatLon a, LatLon b) {
  const double dlat = deg2rad(b.lat_deg - a.lat_deg);
  const double dlon = deg2rad(b.lon_deg - a.lon_deg);
  const double s1 = std::sin(dlat / 2);
  const double s2 = std::sin(dlon / 2);
  const double h = s1 * s1 + std::cos(deg2rad(a.lat_deg)) * std::cos(deg2rad(b.lat_deg)) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

// Local equirectangular displacement: east/north meters applied at the origin latitude.
inline LatLon offset_m(LatLon origin, double east_m, double north_m) {
  const double dlat = rad2deg(north_m / kEarthRadiusM);
  const double dlon = rad2deg(east_m / (kEarthRadiusM * std::cos(deg2rad(origin.lat_deg))));
  return {origin.lat_deg + dlat, origin.lon_deg + dlon};
}

}  // namespace loratrack::geo
