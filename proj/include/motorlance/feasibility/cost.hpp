#ifndef MOTORLANCE_FEASIBILITY_COST_HPP
#define MOTORLANCE_FEASIBILITY_COST_HPP

#include <compare>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <string_view>
#include <utility>

#include "motorlance/error.hpp"

namespace motorlance::feasibility {

namespace detail {

// Parses "digits[.digits]" (commas allowed as thousands separators) into
// an integer scaled by 10^decimals. Extra fractional digits are an error.
inline std::int64_t parse_fixed(std::string_view text, int decimals, std::string_view what) {
  std::int64_t whole = 0;
  std::int64_t frac = 0;
  int frac_digits = 0;
  bool seen_dot = false;
  bool any_digit = false;
  for (char c : text) {
    if (c == ',' && !seen_dot) continue;
    if (c == '.' && !seen_dot) {
      seen_dot = true;
      continue;
    }
    if (c < '0' || c > '9') fail(ErrorCode::Parse, "invalid " + std::string(what) + ": " + std::string(text));
    any_digit = true;
    if (seen_dot) {
      if (++frac_digits > decimals) {
        fail(ErrorCode::Parse, std::string(what) + " has more than " + std::to_string(decimals) + " decimals");
      }
      frac = frac * 10 + (c - '0');
    } else {
      whole = whole * 10 + (c - '0');
    }
  }
  if (!any_digit) fail(ErrorCode::Parse, "invalid " + std::string(what) + ": empty");
  for (int i = frac_digits; i < decimals; ++i) frac *= 10;
  std::int64_t scale = 1;
  for (int i = 0; i < decimals; ++i) scale *= 10;
  return whole * scale + frac;
}

// Round-half-up integer division for nonnegative operands.
constexpr std::int64_t div_round(std::int64_t num, std::int64_t den) { return (2 * num + den) / (2 * den); }

}  // namespace detail

/// Philippine peso amount held in integer centavos.
class Php {
 public:
  constexpr Php() = default;
  static constexpr Php from_centavos(std::int64_t c) { return Php(c); }
  static constexpr Php from_pesos(std::int64_t p) { return Php(p * 100); }
  static Php parse(std::string_view text) { return Php(detail::parse_fixed(text, 2, "PHP amount")); }

  constexpr std::int64_t centavos() const noexcept { return centavos_; }
  constexpr double pesos() const noexcept { return static_cast<double>(centavos_) / 100.0; }

  /// "262,500" or "262,500.50".
  std::string str() const {
    std::string digits = std::to_string(centavos_ / 100);
    std::string out;
    for (std::size_t i = 0; i < digits.size(); ++i) {
      if (i > 0 && (digits.size() - i) % 3 == 0) out.push_back(',');
      out.push_back(digits[i]);
    }
    if (centavos_ % 100 != 0) {
      const auto c = centavos_ % 100;
      out += (c < 10 ? ".0" : ".") + std::to_string(c);
    }
    return out;
  }

  friend constexpr auto operator<=>(const Php&, const Php&) = default;

 private:
  constexpr explicit Php(std::int64_t c) : centavos_(c) {}
  std::int64_t centavos_ = 0;
};

/// Fraction in basis points (1/10000), e.g. 0.75 == 7500.
class Rate {
 public:
  constexpr Rate() = default;
  static constexpr Rate from_basis_points(std::int64_t bp) { return Rate(bp); }
  static Rate parse(std::string_view text) { return Rate(detail::parse_fixed(text, 4, "rate")); }

  constexpr std::int64_t basis_points() const noexcept { return bp_; }
  friend constexpr auto operator<=>(const Rate&, const Rate&) = default;

 private:
  constexpr explicit Rate(std::int64_t bp) : bp_(bp) {}
  std::int64_t bp_ = 0;
};

/// Percentage with one decimal place, held in tenths of a percent.
class Percent1 {
 public:
  constexpr Percent1() = default;
  static constexpr Percent1 from_tenths(std::int64_t t) { return Percent1(t); }

  constexpr std::int64_t tenths() const noexcept { return tenths_; }
  constexpr double value() const noexcept { return static_cast<double>(tenths_) / 10.0; }
  std::string str() const { return std::to_string(tenths_ / 10) + "." + std::to_string(tenths_ % 10); }

  friend constexpr auto operator<=>(const Percent1&, const Percent1&) = default;

 private:
  constexpr explicit Percent1(std::int64_t t) : tenths_(t) {}
  std::int64_t tenths_ = 0;
};

template <typename T>
struct Range {
  T min;
  T max;
};

struct CostModel {
  Range<Php> ambulance_cost{Php::from_pesos(1'500'000), Php::from_pesos(2'500'000)};
  Range<Php> motorlance_base{Php::from_pesos(75'000), Php::from_pesos(150'000)};
  Range<Rate> outfitting_factor{Rate::from_basis_points(5000), Rate::from_basis_points(7500)};
  Rate operating_cost_reduction_reference = Rate::from_basis_points(7400);

  void validate() const {
    auto positive = [](auto lo, auto hi, const char* what) {
      if (!(lo <= hi)) fail(ErrorCode::Domain, std::string(what) + ": min > max");
      if (lo <= decltype(lo){}) fail(ErrorCode::Domain, std::string(what) + ": values must be > 0");
    };
    positive(ambulance_cost.min, ambulance_cost.max, "ambulance_cost_range");
    positive(motorlance_base.min, motorlance_base.max, "motorlance_base_range");
    positive(outfitting_factor.min, outfitting_factor.max, "outfitting_factor_range");
    if (operating_cost_reduction_reference <= Rate{}) fail(ErrorCode::Domain, "operating cost reference must be > 0");
  }
};

/// base * (1 + factor), rounded half-up to the centavo. The factor must lie
/// in the model's outfitting range.
inline Php outfitted_cost(Php base, Rate factor, const CostModel& model = {}) {
  if (base <= Php{}) fail(ErrorCode::Domain, "base cost must be > 0");
  if (factor < model.outfitting_factor.min || factor > model.outfitting_factor.max) {
    fail(ErrorCode::Domain, "outfitting factor outside [" + std::to_string(model.outfitting_factor.min.basis_points()) +
                                ", " + std::to_string(model.outfitting_factor.max.basis_points()) + "] basis points");
  }
  return Php::from_centavos(detail::div_round(base.centavos() * (10'000 + factor.basis_points()), 10'000));
}

/// 100 * motorlance_total / ambulance_cost, to one decimal (half-up).
inline Percent1 cost_ratio(Php motorlance_total, Php ambulance_cost) {
  if (motorlance_total <= Php{} || ambulance_cost <= Php{}) fail(ErrorCode::Domain, "costs must be > 0");
  return Percent1::from_tenths(detail::div_round(motorlance_total.centavos() * 1000, ambulance_cost.centavos()));
}

/// Units affordable within `budget`.
inline std::int64_t fleet_for_budget(Php budget, Php unit_total) {
  if (budget <= Php{} || unit_total <= Php{}) fail(ErrorCode::Domain, "budget and unit cost must be > 0");
  return budget.centavos() / unit_total.centavos();
}

/// Table of procurement-plus-outfitting costs. The max motorlance total is
/// compared with the cheapest ambulance and the min with the dearest, which
/// gives the two extreme ratios.
struct CostTable {
  Php ambulance_max;
  Php ambulance_min;
  Php motorlance_max;
  Php motorlance_min;
  Percent1 ambulance_max_pct;
  Percent1 ambulance_min_pct;
  Percent1 motorlance_max_pct;
  Percent1 motorlance_min_pct;
};

inline CostTable cost_table(const CostModel& m = {}) {
  m.validate();
  CostTable t;
  t.ambulance_max = m.ambulance_cost.max;
  t.ambulance_min = m.ambulance_cost.min;
  t.motorlance_max = outfitted_cost(m.motorlance_base.max, m.outfitting_factor.max, m);
  t.motorlance_min = outfitted_cost(m.motorlance_base.min, m.outfitting_factor.min, m);
  t.ambulance_max_pct = cost_ratio(t.ambulance_max, t.ambulance_max);
  t.ambulance_min_pct = cost_ratio(t.ambulance_min, t.ambulance_min);
  t.motorlance_max_pct = cost_ratio(t.motorlance_max, t.ambulance_min);
  t.motorlance_min_pct = cost_ratio(t.motorlance_min, t.ambulance_max);
  return t;
}

}  // namespace motorlance::feasibility

#endif
