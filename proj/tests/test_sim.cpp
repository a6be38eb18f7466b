#include <cmath>
#include <map>
#include <numeric>

#include <gtest/gtest.h>

#include "motorlance/sim.hpp"
#include "oracles.hpp"

namespace {

using namespace motorlance;
using namespace motorlance::sim;

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::Config;
}

Scenario bundled(const std::string& name) { return load_scenario(oracle::source_path("scenarios/" + name + ".json")); }

// Scenario on the Mandaluyong graph with one vehicle at `depot` and demand at
// `origin`, seeded so that exactly one request arrives, early enough to be
// served before the horizon.
Scenario single_request(VehicleClass vc, NodeId depot, NodeId origin) {
  Scenario s = bundled("mandaluyong");
  s.fleet = {{vc, 1, depot}};
  s.demand = {1.0, {{origin, 1.0}}};
  s.horizon_s = 3600.0;
  for (std::uint64_t seed = 1;; ++seed) {
    auto a = generate_demand(seed, s.demand, s.horizon_s);
    if (a.size() == 1 && a.front().at < s.horizon_s / 2) {
      s.seed = seed;
      return s;
    }
  }
}

// ---------------------------------------------------------------- demand

TEST(Demand, ZeroRateRejected) {
  EXPECT_EQ(code_of([] { generate_demand(1, DemandModel{0.0, {{1, 1.0}}}, 100); }), ErrorCode::Config);
  EXPECT_EQ(code_of([] { generate_demand(1, DemandModel{-2.0, {{1, 1.0}}}, 100); }), ErrorCode::Config);
  EXPECT_EQ(code_of([] { generate_demand(1, DemandModel{1.0, {}}, 100); }), ErrorCode::Config);
  EXPECT_EQ(code_of([] { generate_demand(1, DemandModel{1.0, {{1, 0.0}}}, 100); }), ErrorCode::Config);
  EXPECT_EQ(code_of([] { generate_demand(1, DemandModel{1.0, {{1, -1.0}, {2, 3.0}}}, 100); }), ErrorCode::Config);
}

TEST(Demand, FixedSeedIsReproducible) {
  DemandModel d{6.0, {{1, 1.0}, {2, 2.0}, {3, 0.5}}};
  EXPECT_EQ(generate_demand(42, d, 36000), generate_demand(42, d, 36000));
  EXPECT_NE(generate_demand(42, d, 36000), generate_demand(43, d, 36000));
}

TEST(Demand, MeanGapAndOriginWeights) {
  const double rate = 10.0;
  DemandModel d{rate, {{1, 1.0}, {2, 3.0}}};
  auto arrivals = generate_demand(7, d, 3600.0 * 1100);
  ASSERT_GE(arrivals.size(), 10000u);
  double prev = 0.0, sum = 0.0;
  std::map<NodeId, int> counts;
  for (std::size_t i = 0; i < 10000; ++i) {
    ASSERT_GE(arrivals[i].at, prev);
    sum += arrivals[i].at - prev;
    prev = arrivals[i].at;
    ++counts[arrivals[i].origin];
  }
  EXPECT_NEAR(sum / 10000.0, 3600.0 / rate, 0.05 * 3600.0 / rate);
  EXPECT_NEAR(counts[2] / 10000.0, 0.75, 0.02);
}

// ---------------------------------------------------------------- metrics

TEST(Metrics, NearestRankStatistics) {
  auto s = ResponseStats::from({10, 1, 9, 2, 8, 3, 7, 4, 6, 5});
  EXPECT_DOUBLE_EQ(s.mean, 5.5);
  EXPECT_DOUBLE_EQ(s.median, 5.5);
  EXPECT_DOUBLE_EQ(s.p90, 9.0);
  auto one = ResponseStats::from({42});
  EXPECT_EQ(one.median, 42);
  EXPECT_EQ(one.p90, 42);
  EXPECT_EQ(ResponseStats::from({}).count(), 0u);
  MetricsReport empty;
  EXPECT_EQ(code_of([&] { reduction_percent(empty, empty); }), ErrorCode::Domain);
}

// ---------------------------------------------------------------- runs

TEST(Run, SingleRequestClosedForm) {
  const NodeId depot = 1, origin = 25;
  for (auto vc : kAllVehicleClasses) {
    Scenario s = single_request(vc, depot, origin);
    const auto arrival = generate_demand(s.seed, s.demand, s.horizon_s).front();
    const double created = s.start_time_s + arrival.at;
    const double travel = shortest_travel_time(*s.graph, *s.profile, depot, origin, vc, created).seconds;

    auto auto_rep = run(s);
    ASSERT_EQ(auto_rep.served, 1u);
    EXPECT_NEAR(auto_rep.overall.samples.front(), s.dispatch.confirmation_window_s + travel, 1e-6);

    s.dispatcher_present = true;
    s.dispatcher_reaction_s = 0.0;
    auto instant = run(s);
    ASSERT_EQ(instant.served, 1u);
    EXPECT_NEAR(instant.overall.samples.front(), travel, 1e-6);
  }
}

TEST(Run, DriverAtOriginRespondsInWindow) {
  Scenario s = single_request(VehicleClass::Motorlance, 7, 7);
  auto rep = run(s);
  ASSERT_EQ(rep.served, 1u);
  EXPECT_DOUBLE_EQ(rep.overall.samples.front(), s.dispatch.confirmation_window_s);
}

TEST(Run, DeterministicForSameSeed) {
  const Scenario s = bundled("smokey_mountain");
  auto a = run(s), b = run(s);
  EXPECT_EQ(a, b);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  Scenario other = s;
  other.seed = s.seed + 1;
  EXPECT_NE(run(other).overall.samples, a.overall.samples);
  EXPECT_EQ(to_json(a).at("prng"), kPrngName);
}

TEST(Run, ConservationMonotonicClockAndDispatchInvariants) {
  for (const char* name : {"mandaluyong", "smokey_mountain", "iloilo"}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      for (auto vc : {VehicleClass::Motorlance, VehicleClass::Ambulance}) {
        Scenario s = bundled(name).with_fleet_class(vc);
        s.seed = seed;
        double last = -1.0;
        std::size_t calls = 0;
        std::map<RequestState, std::size_t> final_states;
        std::size_t on_scene = 0;
        auto rep = run(s, [&](double t, const DispatchCore& core) {
          ++calls;
          ASSERT_GE(t, last);
          last = t;
          auto bad = core.check_invariants();
          ASSERT_TRUE(bad.empty()) << bad.front();
          final_states.clear();
          on_scene = 0;
          for (const auto& [_, r] : core.requests()) {
            ++final_states[r.state];
            for (const auto& h : r.history) on_scene += h.state == RequestState::OnScene;
          }
        });
        EXPECT_EQ(rep.served + rep.escalations + rep.open_at_horizon, rep.arrivals);
        EXPECT_EQ(calls, rep.events_processed);
        std::size_t total = 0;
        for (const auto& [_, n] : final_states) total += n;
        EXPECT_EQ(total, rep.arrivals) << name;
        EXPECT_EQ(final_states[RequestState::EscalatedToEMS], rep.escalations) << name;
        EXPECT_EQ(on_scene, rep.served) << name;
        std::size_t by_class = 0;
        for (const auto& [_, st] : rep.by_class) by_class += st.count();
        EXPECT_EQ(by_class, rep.served);
        EXPECT_LE(last, s.start_time_s + s.horizon_s);
      }
    }
  }
}

TEST(Run, ScenarioErrorsCarryFieldPath) {
  Scenario s = bundled("iloilo");
  s.fleet[0].count = 0;
  EXPECT_EQ(code_of([&] { run(s); }), ErrorCode::Config);
  s = bundled("iloilo");
  s.fleet[0].depot = 999;
  EXPECT_EQ(code_of([&] { s.validate(); }), ErrorCode::Config);
  s = bundled("iloilo");
  s.horizon_s = 0;
  EXPECT_EQ(code_of([&] { s.validate(); }), ErrorCode::Config);
  s = bundled("iloilo");
  s.dispatcher_present = true;
  s.dispatcher_reaction_s = s.dispatch.confirmation_window_s;
  EXPECT_EQ(code_of([&] { s.validate(); }), ErrorCode::Config);

  try {
    load_scenario(oracle::source_path("tests/fixtures/bad_scenario.json"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Config);
    EXPECT_NE(std::string(e.what()).find("scenario.fleet[0].count"), std::string::npos);
  }
  EXPECT_EQ(code_of([] { load_scenario("/nonexistent/scenario.json"); }), ErrorCode::Config);
  json doc = read_json_file(oracle::source_path("scenarios/iloilo.json"));
  doc["scenario"]["fleet"][0]["vehicle"] = "helicopter";
  EXPECT_EQ(code_of([&] { scenario_from_json(doc); }), ErrorCode::Config);
  doc = read_json_file(oracle::source_path("scenarios/iloilo.json"));
  doc["scenario"].erase("horizon_s");
  EXPECT_EQ(code_of([&] { scenario_from_json(doc); }), ErrorCode::Config);
}

// ---------------------------------------------------------------- comparisons

TEST(Compare, NoCongestionNoDifference) {
  Scenario s = bundled("mandaluyong");
  s.profile = std::make_shared<const CongestionProfile>(CongestionProfile::uniform(1.0));
  auto c = compare_modes(s);
  EXPECT_NEAR(c.reduction_percent, 0.0, 1.0);
  EXPECT_EQ(c.motorlance.arrivals, c.ambulance.arrivals);
}

TEST(Compare, SingleRequestMandaluyong) {
  // Closed form: (window + travel_class) / (window + travel_ambulance).
  const NodeId clinic = 1, hospital = 25;
  for (auto vc : {VehicleClass::Motorcycle, VehicleClass::Motorlance}) {
    Scenario s = single_request(vc, clinic, hospital);
    const double created = s.start_time_s + generate_demand(s.seed, s.demand, s.horizon_s).front().at;
    auto t = [&](VehicleClass c) { return shortest_travel_time(*s.graph, *s.profile, clinic, hospital, c, created).seconds; };
    const double w = s.dispatch.confirmation_window_s;
    const double expect = 100.0 * (1.0 - (w + t(vc)) / (w + t(VehicleClass::Ambulance)));
    auto c = compare_modes(s);
    EXPECT_NEAR(c.reduction_percent, expect, 1e-9);
    if (vc == VehicleClass::Motorcycle) {
      EXPECT_NEAR(c.reduction_percent, 80.0, 5.0);
    } else {
      EXPECT_NEAR(c.reduction_percent, 65.6, 0.5);
    }
  }
}

TEST(Compare, MandaluyongWithinBand) {
  double util = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Scenario s = bundled("mandaluyong");
    s.seed = seed;
    auto c = compare_modes(s);
    EXPECT_GE(c.reduction_percent, 35.0) << "seed " << seed;
    EXPECT_LE(c.reduction_percent, 76.0) << "seed " << seed;
    EXPECT_EQ(c.motorlance.arrivals, c.ambulance.arrivals);
    util += c.motorlance.utilization;
  }
  EXPECT_NEAR(util / 10.0, 0.5, 0.1);
}

TEST(Compare, IloiloAdvantageVanishes) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Scenario s = bundled("iloilo");
    s.seed = seed;
    EXPECT_LT(compare_modes(s).reduction_percent, 15.0) << "seed " << seed;
  }
}

TEST(Compare, DoublingCongestionNeverHelpsAmbulances) {
  for (const char* name : {"mandaluyong", "smokey_mountain", "iloilo"}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      Scenario s = bundled(name).with_fleet_class(VehicleClass::Ambulance);
      s.seed = seed;
      const double base = run(s).overall.mean;
      s.profile = std::make_shared<const CongestionProfile>(s.profile->scaled(2.0));
      EXPECT_GE(run(s).overall.mean, base) << name << " seed " << seed;
    }
  }
}

TEST(Compare, JsonCarriesBothRuns) {
  auto c = compare_modes(bundled("iloilo"));
  auto j = to_json(c);
  EXPECT_EQ(j.at("reduction_percent").get<double>(), c.reduction_percent);
  EXPECT_FALSE(j.at("motorlance").at("overall").contains("samples_s"));
  EXPECT_TRUE(j.contains("median_reduction_percent"));
  EXPECT_NE(format_table(c.motorlance).find("scenario iloilo"), std::string::npos);
}

}  // namespace
