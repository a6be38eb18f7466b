#ifndef MOTORLANCE_FEASIBILITY_SURVEY_HPP
#define MOTORLANCE_FEASIBILITY_SURVEY_HPP

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "motorlance/error.hpp"
#include "motorlance/feasibility/cost.hpp"

namespace motorlance::feasibility {

using json = nlohmann::json;

inline constexpr std::array<std::string_view, 11> kSurveyHeader = {
    "age", "sex", "degree", "internet", "phone", "brand", "q7", "q8", "q9", "q10", "q11"};

/// Columns 0..9 are required; q11 is optional and never counts as missing.
inline constexpr std::size_t kRequiredColumns = 10;

enum class Sex { Male, Female };

/// One questionnaire row. Fields are optional because a retained row may
/// miss at most one required answer.
struct SurveyResponse {
  std::optional<int> age;
  std::optional<Sex> sex;
  std::optional<bool> degree;
  std::optional<bool> internet;
  std::optional<bool> phone;
  std::optional<std::string> brand;
  std::optional<int> q7_app_use;
  std::optional<int> q8_likelihood;
  std::optional<int> q9_trust;
  std::optional<std::string> q10_current_system;
  std::optional<std::string> q11_features;

  friend bool operator==(const SurveyResponse&, const SurveyResponse&) = default;
};

struct SurveyLoad {
  std::vector<SurveyResponse> responses;
  std::size_t excluded = 0;
  std::size_t input_rows = 0;
};

// ---------------------------------------------------------------- CSV

/// Splits one CSV record (RFC 4180 quoting). Embedded newlines are not
/// supported; each physical line is a record.
inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  bool after_quote = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
          after_quote = true;
        }
      } else {
        cur.push_back(c);
      }
      continue;
    }
    if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
      after_quote = false;
    } else if (c == '"' && cur.empty() && !after_quote) {
      quoted = true;
    } else if (after_quote) {
      fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": text after closing quote");
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": unterminated quote");
  cells.push_back(std::move(cur));
  return cells;
}

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

[[noreturn]] inline void invalid(std::size_t line_no, std::string_view column, const std::string& value) {
  fail(ErrorCode::Validation,
       "line " + std::to_string(line_no) + ": invalid " + std::string(column) + " value '" + value + "'");
}

inline bool parse_yes_no(const std::string& v, std::size_t line_no, std::string_view column) {
  const auto l = lower(v);
  if (l == "yes" || l == "y" || l == "true" || l == "1") return true;
  if (l == "no" || l == "n" || l == "false" || l == "0") return false;
  invalid(line_no, column, v);
}

inline int parse_int(const std::string& v, std::size_t line_no, std::string_view column) {
  if (v.empty() || v.size() > 6 || !std::all_of(v.begin(), v.end(), [](unsigned char c) { return std::isdigit(c); })) {
    invalid(line_no, column, v);
  }
  return std::stoi(v);
}

inline int parse_likert(const std::string& v, std::size_t line_no, std::string_view column) {
  const int x = parse_int(v, line_no, column);
  if (x < 1 || x > 5) invalid(line_no, column, v);
  return x;
}

}  // namespace detail

/// Reads the questionnaire CSV. Rows with two or more blank required cells
/// are dropped and counted; the rest are validated.
inline SurveyLoad load_survey(std::istream& in) {
  using namespace detail;
  SurveyLoad out;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) fail(ErrorCode::Parse, "line 1: missing header");
  ++line_no;
  auto header = split_csv_line(line, line_no);
  if (header.size() != kSurveyHeader.size()) fail(ErrorCode::Parse, "line 1: expected 11 header columns");
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (lower(trim(header[i])) != kSurveyHeader[i]) {
      fail(ErrorCode::Parse, "line 1: column " + std::to_string(i + 1) + " should be " + std::string(kSurveyHeader[i]));
    }
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto raw = split_csv_line(line, line_no);
    if (raw.size() != kSurveyHeader.size()) {
      fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": expected 11 columns, found " +
                                 std::to_string(raw.size()));
    }
    ++out.input_rows;
    std::vector<std::string> cells;
    for (auto& c : raw) cells.push_back(trim(c));
    const auto missing = static_cast<std::size_t>(
        std::count_if(cells.begin(), cells.begin() + kRequiredColumns, [](const std::string& c) { return c.empty(); }));
    if (missing >= 2) {
      ++out.excluded;
      continue;
    }

    SurveyResponse r;
    auto cell = [&](std::size_t i) -> const std::string* { return cells[i].empty() ? nullptr : &cells[i]; };
    if (auto v = cell(0)) {
      r.age = parse_int(*v, line_no, "age");
      if (*r.age <= 0) invalid(line_no, "age", *v);
    }
    if (auto v = cell(1)) {
      const auto l = lower(*v);
      if (l == "female" || l == "f") {
        r.sex = Sex::Female;
      } else if (l == "male" || l == "m") {
        r.sex = Sex::Male;
      } else {
        invalid(line_no, "sex", *v);
      }
    }
    if (auto v = cell(2)) r.degree = parse_yes_no(*v, line_no, "degree");
    if (auto v = cell(3)) r.internet = parse_yes_no(*v, line_no, "internet");
    if (auto v = cell(4)) r.phone = parse_yes_no(*v, line_no, "phone");
    if (auto v = cell(5)) r.brand = *v;
    if (auto v = cell(6)) r.q7_app_use = parse_likert(*v, line_no, "q7");
    if (auto v = cell(7)) r.q8_likelihood = parse_likert(*v, line_no, "q8");
    if (auto v = cell(8)) r.q9_trust = parse_likert(*v, line_no, "q9");
    if (auto v = cell(9)) r.q10_current_system = *v;
    if (auto v = cell(10)) r.q11_features = *v;
    out.responses.push_back(std::move(r));
  }
  return out;
}

inline SurveyLoad load_survey_text(const std::string& csv) {
  std::istringstream in(csv);
  return load_survey(in);
}

// ---------------------------------------------------------------- coding

enum class PhoneOs { Ios, Android, PossiblyHarmonyOs };

inline constexpr std::string_view to_string(PhoneOs os) {
  switch (os) {
    case PhoneOs::Ios: return "ios";
    case PhoneOs::Android: return "android";
    case PhoneOs::PossiblyHarmonyOs: return "possibly_harmonyos";
  }
  return "?";
}

/// Apple brands run iOS; Huawei is flagged as possibly HarmonyOS; every
/// other brand is treated as Android.
inline PhoneOs classify_brand(std::string_view brand) {
  const auto b = detail::lower(std::string(brand));
  if (b.find("apple") != std::string::npos || b.find("iphone") != std::string::npos) return PhoneOs::Ios;
  if (b.find("huawei") != std::string::npos) return PhoneOs::PossiblyHarmonyOs;
  return PhoneOs::Android;
}

enum class EmergencyMode { CallBased, PersonalVehicle, TncApp, Other };

inline constexpr std::array<EmergencyMode, 4> kAllEmergencyModes = {
    EmergencyMode::CallBased, EmergencyMode::PersonalVehicle, EmergencyMode::TncApp, EmergencyMode::Other};

inline constexpr std::string_view to_string(EmergencyMode m) {
  switch (m) {
    case EmergencyMode::CallBased: return "call_based";
    case EmergencyMode::PersonalVehicle: return "personal_vehicle";
    case EmergencyMode::TncApp: return "tnc_app";
    case EmergencyMode::Other: return "other";
  }
  return "?";
}

/// Fixed keyword map for free-text Q10 answers, checked in this order:
/// ride-hailing app names, then call keywords, then personal-vehicle words.
inline EmergencyMode classify_current_system(std::string_view text) {
  const auto t = detail::lower(std::string(text));
  auto any = [&](std::initializer_list<std::string_view> words) {
    return std::any_of(words.begin(), words.end(), [&](std::string_view w) { return t.find(w) != std::string::npos; });
  };
  if (any({"grab", "angkas", "joyride", "uber", "move it", "ride app", "transport app"})) return EmergencyMode::TncApp;
  if (any({"call", "911", "hotline", "barangay", "ambulance", "phone"})) return EmergencyMode::CallBased;
  if (any({"own ", "our car", "family car", "private car", "drive", "my car", "my motor"})) {
    return EmergencyMode::PersonalVehicle;
  }
  return EmergencyMode::Other;
}

// ---------------------------------------------------------------- stats

/// k/n as a percentage truncated (not rounded) to one decimal place.
inline Percent1 truncated_share(std::size_t k, std::size_t n) {
  if (n == 0) fail(ErrorCode::Domain, "share of an empty population");
  return Percent1::from_tenths(static_cast<std::int64_t>(k * 1000 / n));
}

struct Share {
  std::size_t count = 0;
  std::size_t answered = 0;
  Percent1 percent;
};

inline Share make_share(std::size_t k, std::size_t n) {
  return Share{k, n, n == 0 ? Percent1{} : truncated_share(k, n)};
}

struct LikertHistogram {
  std::array<std::size_t, 5> counts{};
  std::size_t answered = 0;
  std::array<Percent1, 5> percent{};
};

inline constexpr std::array<std::string_view, 5> kAgeBuckets = {"under_25", "25_34", "35_44", "45_54", "55_plus"};

/// Every share uses the number of respondents who answered that question as
/// its denominator.
struct SurveyStats {
  std::size_t n = 0;
  Share female;
  Share male;
  std::array<Share, 5> age_buckets;
  Share under_55;
  Share degree;
  Share internet;
  Share phone;
  std::map<std::string, Share> os;
  std::map<std::string, Share> brands;
  LikertHistogram q7, q8, q9;
  Share regular_app_use;  // q7 >= 4
  std::map<std::string, Share> q10_modes;
  Share tnc_for_emergency;
};

namespace detail {

inline std::string canonical_brand(const std::string& b) {
  std::string l = lower(b);
  if (l.find("iphone") != std::string::npos || l.find("apple") != std::string::npos) return "apple";
  return l;
}

template <typename Get>
LikertHistogram histogram(const std::vector<SurveyResponse>& rs, Get get) {
  LikertHistogram h;
  for (const auto& r : rs) {
    if (auto v = get(r)) {
      ++h.counts[static_cast<std::size_t>(*v - 1)];
      ++h.answered;
    }
  }
  for (std::size_t i = 0; i < 5; ++i) h.percent[i] = h.answered ? truncated_share(h.counts[i], h.answered) : Percent1{};
  return h;
}

}  // namespace detail

inline SurveyStats tabulate(const std::vector<SurveyResponse>& rs) {
  if (rs.empty()) fail(ErrorCode::Domain, "cannot tabulate an empty survey");
  SurveyStats s;
  s.n = rs.size();

  std::size_t female = 0, sex_answered = 0;
  std::array<std::size_t, 5> ages{};
  std::size_t age_answered = 0, under_55 = 0;
  std::size_t degree = 0, degree_answered = 0;
  std::size_t internet = 0, internet_answered = 0;
  std::size_t phone = 0, phone_answered = 0;
  std::map<std::string, std::size_t> os_counts, brand_counts;
  std::size_t brand_answered = 0;
  std::size_t regular = 0, q7_answered = 0;
  std::map<std::string, std::size_t> mode_counts;
  std::size_t q10_answered = 0;

  for (const auto& r : rs) {
    if (r.sex) {
      ++sex_answered;
      if (*r.sex == Sex::Female) ++female;
    }
    if (r.age) {
      ++age_answered;
      const int a = *r.age;
      const std::size_t b = a < 25 ? 0 : a < 35 ? 1 : a < 45 ? 2 : a < 55 ? 3 : 4;
      ++ages[b];
      if (a < 55) ++under_55;
    }
    if (r.degree) {
      ++degree_answered;
      degree += *r.degree;
    }
    if (r.internet) {
      ++internet_answered;
      internet += *r.internet;
    }
    if (r.phone) {
      ++phone_answered;
      phone += *r.phone;
    }
    if (r.brand) {
      ++brand_answered;
      ++os_counts[std::string(to_string(classify_brand(*r.brand)))];
      ++brand_counts[detail::canonical_brand(*r.brand)];
    }
    if (r.q7_app_use) {
      ++q7_answered;
      if (*r.q7_app_use >= 4) ++regular;
    }
    if (r.q10_current_system) {
      ++q10_answered;
      ++mode_counts[std::string(to_string(classify_current_system(*r.q10_current_system)))];
    }
  }

  s.female = make_share(female, sex_answered);
  s.male = make_share(sex_answered - female, sex_answered);
  for (std::size_t i = 0; i < 5; ++i) s.age_buckets[i] = make_share(ages[i], age_answered);
  s.under_55 = make_share(under_55, age_answered);
  s.degree = make_share(degree, degree_answered);
  s.internet = make_share(internet, internet_answered);
  s.phone = make_share(phone, phone_answered);
  for (auto os : {PhoneOs::Ios, PhoneOs::Android, PhoneOs::PossiblyHarmonyOs}) {
    const std::string k(to_string(os));
    s.os[k] = make_share(os_counts[k], brand_answered);
  }
  for (const auto& [b, c] : brand_counts) s.brands[b] = make_share(c, brand_answered);
  s.q7 = detail::histogram(rs, [](const SurveyResponse& r) { return r.q7_app_use; });
  s.q8 = detail::histogram(rs, [](const SurveyResponse& r) { return r.q8_likelihood; });
  s.q9 = detail::histogram(rs, [](const SurveyResponse& r) { return r.q9_trust; });
  s.regular_app_use = make_share(regular, q7_answered);
  for (auto m : kAllEmergencyModes) {
    const std::string k(to_string(m));
    s.q10_modes[k] = make_share(mode_counts[k], q10_answered);
  }
  s.tnc_for_emergency = s.q10_modes.at(std::string(to_string(EmergencyMode::TncApp)));
  return s;
}

inline json to_json(const Share& s) {
  return json{{"count", s.count}, {"answered", s.answered}, {"percent", s.percent.value()}};
}

inline json to_json(const LikertHistogram& h) {
  json j{{"answered", h.answered}, {"counts", json::object()}, {"percent", json::object()}};
  for (std::size_t i = 0; i < 5; ++i) {
    j["counts"][std::to_string(i + 1)] = h.counts[i];
    j["percent"][std::to_string(i + 1)] = h.percent[i].value();
  }
  return j;
}

inline json to_json(const SurveyStats& s) {
  json ages = json::object();
  for (std::size_t i = 0; i < 5; ++i) ages[std::string(kAgeBuckets[i])] = to_json(s.age_buckets[i]);
  json os = json::object(), brands = json::object(), modes = json::object();
  for (const auto& [k, v] : s.os) os[k] = to_json(v);
  for (const auto& [k, v] : s.brands) brands[k] = to_json(v);
  for (const auto& [k, v] : s.q10_modes) modes[k] = to_json(v);
  return json{{"n", s.n},
              {"sex", {{"female", to_json(s.female)}, {"male", to_json(s.male)}}},
              {"age_buckets", ages},
              {"under_55", to_json(s.under_55)},
              {"degree", to_json(s.degree)},
              {"internet", to_json(s.internet)},
              {"phone", to_json(s.phone)},
              {"os", os},
              {"brands", brands},
              {"q7", to_json(s.q7)},
              {"q8", to_json(s.q8)},
              {"q9", to_json(s.q9)},
              {"regular_app_use", to_json(s.regular_app_use)},
              {"q10_modes", modes},
              {"tnc_for_emergency", to_json(s.tnc_for_emergency)}};
}

}  // namespace motorlance::feasibility

#endif
