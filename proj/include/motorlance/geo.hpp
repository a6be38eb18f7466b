#ifndef MOTORLANCE_GEO_HPP
#define MOTORLANCE_GEO_HPP

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

#include "motorlance/error.hpp"

namespace motorlance {

inline constexpr double kEarthRadiusMeters = 6'371'000.0;

/// WGS84-style coordinate in degrees. Ranges are checked on construction.
class GeoPoint {
 public:
  GeoPoint() = default;
  GeoPoint(double lat, double lon) : lat_(lat), lon_(lon) {
    if (!std::isfinite(lat) || !std::isfinite(lon)) {
      fail(ErrorCode::Validation, "GeoPoint coordinates must be finite");
    }
    if (lat < -90.0 || lat > 90.0) {
      fail(ErrorCode::Validation, "latitude out of range [-90, 90]: " + std::to_string(lat));
    }
    if (lon < -180.0 || lon > 180.0) {
      fail(ErrorCode::Validation, "longitude out of range [-180, 180]: " + std::to_string(lon));
    }
  }

  double lat() const noexcept { return lat_; }
  double lon() const noexcept { return lon_; }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

 private:
  double lat_ = 0.0;
  double lon_ = 0.0;
};

/// Great-circle distance in meters on a sphere of radius kEarthRadiusMeters.
inline double haversine_distance(const GeoPoint& a, const GeoPoint& b) {
  constexpr double to_rad = std::numbers::pi / 180.0;
  const double phi1 = a.lat() * to_rad;
  const double phi2 = b.lat() * to_rad;
  const double dphi = (b.lat() - a.lat()) * to_rad;
  const double dlambda = (b.lon() - a.lon()) * to_rad;
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  if (h > 1.0) h = 1.0;
  return 2.0 * kEarthRadiusMeters * std::asin(std::sqrt(h));
}

enum class VehicleClass { Motorcycle, Motorlance, Ambulance };

inline constexpr std::array<VehicleClass, 3> kAllVehicleClasses = {
    VehicleClass::Motorcycle, VehicleClass::Motorlance, VehicleClass::Ambulance};

inline constexpr std::string_view to_string(VehicleClass c) {
  switch (c) {
    case VehicleClass::Motorcycle: return "motorcycle";
    case VehicleClass::Motorlance: return "motorlance";
    case VehicleClass::Ambulance: return "ambulance";
  }
  return "?";
}

inline std::optional<VehicleClass> parse_vehicle_class(std::string_view s) {
  for (auto c : kAllVehicleClasses) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

enum class WidthClass { Narrow, Wide };

inline constexpr std::string_view to_string(WidthClass w) {
  return w == WidthClass::Narrow ? "narrow" : "wide";
}

inline std::optional<WidthClass> parse_width_class(std::string_view s) {
  if (s == "narrow") return WidthClass::Narrow;
  if (s == "wide") return WidthClass::Wide;
  return std::nullopt;
}

}  // namespace motorlance

#endif
