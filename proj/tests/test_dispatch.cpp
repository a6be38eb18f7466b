#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "dispatch_harness.hpp"

namespace {

using namespace motorlance;
using namespace harness;

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

void expect_consistent(const World& w) {
  auto bad = w.core.check_invariants();
  EXPECT_TRUE(bad.empty()) << bad.front();
}

// ---------------------------------------------------------------- app open

TEST(AppOpen, RegisteredAnonymousAndUnattended) {
  World w;
  w.rider("R1", 0);
  w.core.on_app_open(std::string("R1"), kT0);
  EXPECT_EQ(w.log.events().back().kind, "app_open_alert");
  EXPECT_EQ(w.log.events().back().payload.at("rider_id"), "R1");
  EXPECT_TRUE(w.log.events().back().payload.at("delivered_to").empty());

  w.dispatcher("X1");
  const Seq s = w.core.on_app_open(std::nullopt, kT0 + 1);
  EXPECT_EQ(s, w.log.last_seq());
  EXPECT_EQ(w.log.events().back().payload.at("rider_id"), "anonymous");
  EXPECT_TRUE(w.log.events().back().payload.at("anonymous").get<bool>());
  EXPECT_EQ(w.log.events().back().payload.at("delivered_to"), json::array({"X1"}));
  EXPECT_EQ(code_of([&] { w.core.on_app_open(std::string("nobody"), kT0); }), ErrorCode::NotFound);
}

// ---------------------------------------------------------------- creation

TEST(Create, SingletonFleetIsProposed) {
  World w;
  w.driver("D1", 4);
  w.facility("F1", 8);
  const std::size_t before = w.log.size();
  const auto& r = w.request(1);
  EXPECT_EQ(w.log.size(), before + 1);
  EXPECT_EQ(r.state, RS::DriverProposed);
  EXPECT_EQ(r.proposed_driver, "D1");
  EXPECT_EQ(*r.window_deadline, kT0 + 15.0);
  EXPECT_EQ(r.facility, "F1");
  EXPECT_TRUE(r.call_open);
  EXPECT_EQ(w.registry.driver("D1").status, DS::Proposed);
  EXPECT_EQ(w.registry.driver("D1").active_request, r.request_id);
  EXPECT_EQ(r.origin_node, 1);
  expect_consistent(w);
}

TEST(Create, NoDriverEscalates) {
  World w;
  w.driver("D1", 4, DS::Offline);
  const auto& r = w.request(1);
  EXPECT_EQ(r.state, RS::EscalatedToEMS);
  EXPECT_EQ(r.escalation_reason, "no_driver");
  EXPECT_FALSE(r.proposed_driver);
  EXPECT_TRUE(w.log.events().back().payload.contains("escalated"));
  expect_consistent(w);
}

TEST(Create, ProposalMatchesBruteForceOverFiveDrivers) {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    std::mt19937_64 rng(seed);
    World w;
    for (int i = 1; i <= 5; ++i) {
      w.driver("D" + std::to_string(i), oracle::uniform_int(rng, 1, 8),
               oracle::uniform_int(rng, 0, 4) == 0 ? DS::Offline : DS::Available,
               kAllVehicleClasses[static_cast<std::size_t>(oracle::uniform_int(rng, 0, 2))]);
    }
    const NodeId origin = oracle::uniform_int(rng, 1, 8);
    auto expect = oracle::brute_force_nearest(*w.graph, *w.profile, w.registry.state().drivers, origin, kT0);
    const auto& r = w.request(origin);
    if (expect) {
      EXPECT_EQ(r.proposed_driver, expect) << "seed " << seed;
    } else {
      EXPECT_EQ(r.state, RS::EscalatedToEMS);
    }
  }
}

TEST(Select, OneAvailableAmongOfflineAndTieBreak) {
  World w;
  w.driver("D1", 8, DS::Offline);
  w.driver("D2", 7);
  w.driver("D3", 1, DS::Offline);
  EXPECT_EQ(select_nearest_driver(*w.graph, *w.profile, w.registry.state().drivers, 1, kT0), "D2");
  World t;
  t.driver("Db", 3);
  t.driver("Da", 3);
  EXPECT_EQ(select_nearest_driver(*t.graph, *t.profile, t.registry.state().drivers, 1, kT0), "Da");
  World none;
  EXPECT_EQ(code_of([&] { select_nearest_driver(*none.graph, *none.profile, none.registry.state().drivers, 1, kT0); }),
            ErrorCode::NoAvailableDriver);
}

TEST(Select, CandidatesListsNearestK) {
  World w(DispatchConfig{15.0, true, 3, 0.0});
  w.driver("D1", 8);
  w.driver("D2", 2);
  w.driver("D3", 4);
  w.driver("D4", 1);
  auto ranked = rank_available_drivers(*w.graph, *w.profile, w.registry.state().drivers, 1, kT0);
  const auto& r = w.request(1);
  ASSERT_EQ(r.candidates.size(), 3u);
  EXPECT_EQ(r.candidates.front(), "D4");
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(r.candidates[i], ranked[i].driver_id);
}

// ---------------------------------------------------------------- confirmation

TEST(Confirm, BeforeDeadline) {
  World w;
  w.dispatcher("X1");
  w.driver("D1", 4);
  w.facility("F1", 8);
  const auto id = w.request(1).request_id;
  const auto& r = w.core.dispatcher_confirm(id, "X1", kT0 + 14);
  EXPECT_EQ(r.assigned_driver, "D1");
  EXPECT_EQ(r.confirmed_by, "X1");
  EXPECT_FALSE(r.auto_dispatched);
  ASSERT_GE(r.history.size(), 2u);
  EXPECT_EQ(r.history[r.history.size() - 2].state, RS::Confirmed);
  EXPECT_EQ(r.state, RS::EnRoute);
  EXPECT_EQ(w.registry.driver("D1").status, DS::EnRoute);
  expect_consistent(w);
}

TEST(Confirm, AfterExpiryIsWindowExpired) {
  World w;
  w.dispatcher("X1");
  w.driver("D1", 4);
  w.facility("F1", 8);
  const auto id = w.request(1).request_id;
  EXPECT_EQ(code_of([&] { w.core.dispatcher_confirm(id, "X1", kT0 + 16); }), ErrorCode::WindowExpired);
  const auto& r = w.core.request(id);
  EXPECT_TRUE(r.auto_dispatched);
  EXPECT_EQ(r.assigned_driver, "D1");
  EXPECT_EQ(r.state, RS::EnRoute);
  EXPECT_EQ(w.log.events().back().kind, "confirmed");
  expect_consistent(w);
}

TEST(Confirm, CompletedIsWrongStateAndOffDutyForbidden) {
  World w;
  w.dispatcher("X1");
  w.dispatcher("X2", false);
  w.driver("D1", 1);
  w.facility("F1", 8);
  const auto id = w.request(1).request_id;
  EXPECT_EQ(code_of([&] { w.core.dispatcher_confirm(id, "X2", kT0 + 1); }), ErrorCode::Forbidden);
  w.core.dispatcher_confirm(id, "X1", kT0 + 1);
  w.core.progress(id, Progress::ArriveScene, "D1", kT0 + 2);
  w.core.progress(id, Progress::BeginTransport, "D1", kT0 + 3);
  w.core.progress(id, Progress::Complete, "D1", kT0 + 4);
  EXPECT_EQ(code_of([&] { w.core.dispatcher_confirm(id, "X1", kT0 + 5); }), ErrorCode::WrongState);
}

TEST(Reassign, MovesAssignment) {
  World w;
  w.dispatcher("X1");
  w.driver("A", 2);
  w.driver("B", 8);
  w.driver("C", 7, DS::Offline);
  w.facility("F1", 8);
  const auto id = w.request(1).request_id;
  ASSERT_EQ(w.core.request(id).proposed_driver, "A");
  const std::size_t before = w.log.size();
  EXPECT_EQ(code_of([&] { w.core.dispatcher_reassign(id, "C", "X1", kT0 + 3); }), ErrorCode::DriverUnavailable);
  EXPECT_EQ(w.log.size(), before);
  EXPECT_EQ(w.core.request(id).state, RS::DriverProposed);
  const auto& r = w.core.dispatcher_reassign(id, "B", "X1", kT0 + 4);
  EXPECT_EQ(r.assigned_driver, "B");
  EXPECT_EQ(w.registry.driver("A").status, DS::Available);
  EXPECT_EQ(w.registry.driver("B").status, DS::EnRoute);
  EXPECT_EQ(w.log.size(), before + 1);
  w.core.advance_timers(kT0 + 100);
  EXPECT_EQ(w.log.size(), before + 1);
  EXPECT_FALSE(w.core.next_deadline());
  expect_consistent(w);
}

TEST(Expire, AutoDispatchAndNoOps) {
  World w;
  w.driver("D1", 4);
  w.driver("D2", 5);
  w.driver("D3", 8);
  w.facility("F1", 8);
  const auto a = w.request(1).request_id;
  EXPECT_EQ(*w.core.next_deadline(), kT0 + 15);
  EXPECT_TRUE(w.core.advance_timers(kT0 + 14.9).empty());
  EXPECT_EQ(w.core.advance_timers(kT0 + 15), std::vector<std::string>{a});
  EXPECT_EQ(w.core.request(a).state, RS::EnRoute);
  EXPECT_TRUE(w.core.request(a).auto_dispatched);
  EXPECT_FALSE(w.core.request(a).confirmed_by);

  const std::size_t n = w.log.size();
  w.core.on_window_expire(a, kT0 + 30);  // after confirmation
  EXPECT_EQ(w.log.size(), n);

  const auto b = w.request(3, kT0 + 40).request_id;
  w.core.cancel(b, "rider", kT0 + 41);
  const std::size_t m = w.log.size();
  w.core.on_window_expire(b, kT0 + 60);  // after cancellation
  w.core.advance_timers(kT0 + 60);
  EXPECT_EQ(w.log.size(), m);
  EXPECT_EQ(w.core.request(b).state, RS::Cancelled);
  expect_consistent(w);
}

// ---------------------------------------------------------------- facilities

TEST(Facility, SingleThreeAndNone) {
  {
    World w;
    w.driver("D1", 2);
    w.facility("F9", 6);
    EXPECT_EQ(w.request(1).facility, "F9");
  }
  for (NodeId origin = 1; origin <= 8; ++origin) {
    World w;
    w.facility("FA", 4);
    w.facility("FB", 5);
    w.facility("FC", 7);
    std::optional<std::string> best;
    double best_t = 1e300;
    for (const auto& [id, f] : w.registry.state().facilities) {
      auto r = oracle::brute_force_route(*w.graph, *w.profile, origin, f.node, VehicleClass::Motorlance, kT0);
      if (r.found && r.seconds < best_t) {
        best_t = r.seconds;
        best = id;
      }
    }
    EXPECT_EQ(assign_facility(*w.graph, *w.profile, w.registry.state().facilities, origin, kT0), best);
  }
  {
    World w;
    w.driver("D1", 2);
    const auto& r = w.request(1);
    EXPECT_FALSE(r.facility);
    EXPECT_TRUE(r.facility_requires_dispatcher);
    expect_consistent(w);
  }
}

TEST(Facility, DispatcherOverride) {
  World w;
  w.dispatcher("X1");
  w.driver("D1", 1);
  w.facility("F1", 8);
  w.facility("F2", 4);
  const auto id = w.request(1).request_id;
  auto& r = w.core.dispatcher_change_facility(id, "F2", "X1", kT0 + 1);
  EXPECT_EQ(r.facility, "F2");
  EXPECT_TRUE(w.log.events().back().payload.at("driver_notified").is_null());
  w.core.dispatcher_confirm(id, "X1", kT0 + 2);
  w.core.progress(id, Progress::ArriveScene, "D1", kT0 + 3);
  w.core.progress(id, Progress::BeginTransport, "D1", kT0 + 4);
  w.core.dispatcher_change_facility(id, "F1", "X1", kT0 + 5);
  EXPECT_EQ(w.log.events().back().payload.at("driver_notified"), "D1");
  EXPECT_EQ(code_of([&] { w.core.dispatcher_change_facility(id, "F7", "X1", kT0 + 6); }), ErrorCode::UnknownFacility);
  w.core.progress(id, Progress::Complete, "D1", kT0 + 7);
  EXPECT_EQ(code_of([&] { w.core.dispatcher_change_facility(id, "F2", "X1", kT0 + 8); }), ErrorCode::WrongState);
}

// ---------------------------------------------------------------- escalation and progress

TEST(Escalate, FreesDriverAndIsTerminal) {
  World w;
  w.dispatcher("X1");
  w.driver("D1", 1);
  const auto id = w.request(1).request_id;
  const auto& r = w.core.escalate_to_ems(id, "needs ALS", "dispatcher:X1", kT0 + 2);
  EXPECT_EQ(r.state, RS::EscalatedToEMS);
  EXPECT_EQ(r.escalation_reason, "needs ALS");
  EXPECT_EQ(w.registry.driver("D1").status, DS::Available);
  EXPECT_FALSE(w.registry.driver("D1").active_request);
  EXPECT_EQ(code_of([&] { w.core.escalate_to_ems(id, "again", "x", kT0 + 3); }), ErrorCode::WrongState);
  EXPECT_EQ(code_of([&] { w.core.cancel(id, "x", kT0 + 3); }), ErrorCode::WrongState);
  expect_consistent(w);
}

TEST(Progress, HappyPathAndErrors) {
  World w;
  w.dispatcher("X1");
  w.driver("D1", 1);
  w.driver("D2", 8);
  w.facility("F1", 8);
  const auto id = w.request(1).request_id;
  EXPECT_EQ(code_of([&] { w.core.progress(id, Progress::ArriveScene, "D1", kT0 + 1); }), ErrorCode::IllegalTransition);
  w.core.dispatcher_confirm(id, "X1", kT0 + 1);
  EXPECT_EQ(code_of([&] { w.core.progress(id, Progress::BeginTransport, "D1", kT0 + 2); }),
            ErrorCode::IllegalTransition);
  EXPECT_EQ(code_of([&] { w.core.progress(id, Progress::Complete, "D2", kT0 + 2); }), ErrorCode::WrongDriver);
  EXPECT_EQ(w.core.progress(id, Progress::ArriveScene, "D1", kT0 + 60).state, RS::OnScene);
  EXPECT_EQ(w.core.progress(id, Progress::BeginTransport, "D1", kT0 + 120).state, RS::Transporting);
  const auto& r = w.core.progress(id, Progress::Complete, "D1", kT0 + 400);
  EXPECT_EQ(r.state, RS::Completed);
  EXPECT_FALSE(r.call_open);
  EXPECT_EQ(r.assigned_driver, "D1");
  EXPECT_EQ(w.registry.driver("D1").status, DS::Available);
  EXPECT_FALSE(w.registry.driver("D1").active_request);
  EXPECT_EQ(code_of([&] { w.core.progress(id, Progress::Complete, "D1", kT0 + 401); }), ErrorCode::IllegalTransition);
  expect_consistent(w);
}

// ---------------------------------------------------------------- ETA

TEST(Eta, TargetsSceneThenFacility) {
  World w;
  w.dispatcher("X1");
  w.driver("D1", 3);
  w.facility("F1", 8);
  const auto id = w.request(3).request_id;
  EXPECT_EQ(code_of([&] { w.core.eta(id, kT0); }), ErrorCode::WrongState);
  w.core.dispatcher_confirm(id, "X1", kT0 + 1);
  EXPECT_EQ(w.core.eta(id, kT0 + 1), 0.0);

  w.core.update_driver_location("D1", w.at(5), kT0 + 10);
  auto expect = oracle::brute_force_route(*w.graph, *w.profile, 5, 3, VehicleClass::Motorlance, kT0 + 10);
  EXPECT_NEAR(w.core.eta(id, kT0 + 10), expect.seconds, 1e-9);
  const auto& payload = w.log.events().back().payload;
  ASSERT_TRUE(payload.contains("eta"));
  EXPECT_NEAR(payload.at("eta").at("eta_s").get<double>(), expect.seconds, 1e-9);

  w.core.update_driver_location("D1", w.at(3), kT0 + 40, 3);
  w.core.progress(id, Progress::ArriveScene, "D1", kT0 + 41);
  EXPECT_EQ(code_of([&] { w.core.eta(id, kT0 + 42); }), ErrorCode::WrongState);
  w.core.progress(id, Progress::BeginTransport, "D1", kT0 + 100);
  auto to_fac = oracle::brute_force_route(*w.graph, *w.profile, 3, 8, VehicleClass::Motorlance, kT0 + 100);
  EXPECT_NEAR(w.core.eta(id, kT0 + 100), to_fac.seconds, 1e-9);
  EXPECT_GT(to_fac.seconds, 0.0);
}

TEST(Eta, MidRouteMatchesOracleOnRandomPositions) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    World w;
    w.dispatcher("X1");
    w.driver("D1", oracle::uniform_int(rng, 1, 8), DS::Available,
             kAllVehicleClasses[static_cast<std::size_t>(oracle::uniform_int(rng, 0, 2))]);
    w.facility("F1", 8);
    const NodeId origin = oracle::uniform_int(rng, 1, 8);
    const auto id = w.request(origin).request_id;
    w.core.dispatcher_confirm(id, "X1", kT0 + 1);
    const NodeId at = oracle::uniform_int(rng, 1, 8);
    const double now = kT0 + 3600.0 * oracle::uniform_int(rng, 0, 23);
    w.core.update_driver_location("D1", w.at(at), now, at);
    auto expect = oracle::brute_force_route(*w.graph, *w.profile, at, origin, w.registry.driver("D1").vehicle, now);
    EXPECT_NEAR(w.core.eta(id, now), expect.seconds, 1e-9);
  }
}

// ---------------------------------------------------------------- driver drops out

TEST(DriverOffline, ReproposesNextNearestWithFreshWindow) {
  World w;
  w.driver("A", 2);
  w.driver("B", 7);
  w.facility("F1", 8);
  const auto id = w.request(1).request_id;
  const std::size_t before = w.log.size();
  w.core.set_driver_status("A", DS::Offline, kT0 + 5);
  EXPECT_EQ(w.log.size(), before + 1);
  const auto& r = w.core.request(id);
  EXPECT_EQ(r.state, RS::DriverProposed);
  EXPECT_EQ(r.proposed_driver, "B");
  EXPECT_EQ(*r.window_deadline, kT0 + 20);
  EXPECT_EQ(*w.core.next_deadline(), kT0 + 20);
  EXPECT_EQ(w.registry.driver("A").status, DS::Offline);
  expect_consistent(w);

  w.core.set_driver_status("B", DS::Offline, kT0 + 6);
  EXPECT_EQ(r.state, RS::EscalatedToEMS);
  EXPECT_EQ(r.escalation_reason, "no_driver");
  EXPECT_FALSE(w.core.next_deadline());
  expect_consistent(w);
}

// ---------------------------------------------------------------- notifications

TEST(Notify, OneNotificationPerContact) {
  for (int contacts = 0; contacts <= 3; ++contacts) {
    World w;
    w.driver("D1", 2);
    w.rider("R1", contacts);
    const auto id = w.request(1, kT0, std::string("R1")).request_id;
    w.core.advance_timers(kT0 + 100);
    w.core.cancel(id, "rider", kT0 + 101);
    std::multiset<std::string> phones;
    for (const auto& e : w.log.events()) {
      if (!e.payload.contains("contacts_notified")) continue;
      for (const auto& c : e.payload.at("contacts_notified")) phones.insert(c.at("phone").get<std::string>());
    }
    std::multiset<std::string> expect;
    for (const auto& c : w.registry.rider("R1").emergency_contacts) expect.insert(c.phone);
    EXPECT_EQ(phones, expect);
  }
  World anon;
  anon.driver("D1", 2);
  anon.request(1);
  EXPECT_TRUE(anon.log.events().back().payload.at("contacts_notified").empty());

  World off(DispatchConfig{15.0, false, 1, 0.0});
  off.driver("D1", 2);
  off.rider("R1", 2);
  off.request(1, kT0, std::string("R1"));
  EXPECT_TRUE(off.log.events().back().payload.at("contacts_notified").empty());
}

// ---------------------------------------------------------------- state machine

TEST(StateMachine, TransitionTableMatchesOracle) {
  for (auto a : kAllRequestStates) {
    for (auto b : kAllRequestStates) {
      EXPECT_EQ(is_legal_request_transition(a, b), oracle_legal(a, b)) << to_string(a) << "->" << to_string(b);
    }
  }
}

TEST(StateMachine, HistoryCheckerCatchesBadHistories) {
  Request r;
  r.history = {{RS::Created, 0}, {RS::DriverProposed, 1}, {RS::Cancelled, 2}};
  EXPECT_TRUE(history_problems(r).empty());
  r.history.push_back({RS::Confirmed, 3});
  EXPECT_FALSE(history_problems(r).empty());
  r.history = {{RS::Created, 0}, {RS::DriverProposed, 1}, {RS::OnScene, 2}, {RS::Cancelled, 3}};
  EXPECT_FALSE(history_problems(r).empty());
  r.history = {{RS::Created, 0}, {RS::DriverProposed, 1}};
  EXPECT_FALSE(history_problems(r).empty());
}

TEST(StateMachine, ExhaustiveInterleavings) {
  auto rep = run_interleavings(4);
  EXPECT_EQ(rep.runs, 5 + 25 + 125 + 625);
  for (const auto& p : rep.problems) ADD_FAILURE() << p;
  EXPECT_GT(rep.outcomes[RS::Completed], 0);
  EXPECT_GT(rep.outcomes[RS::EscalatedToEMS], 0);
  EXPECT_GT(rep.outcomes[RS::Cancelled], 0);
}

TEST(StateMachine, AutoDispatchEqualsConfirmAtDeadline) {
  for (const auto& p : auto_dispatch_vs_confirm()) ADD_FAILURE() << p;
}

// ---------------------------------------------------------------- persistence

TEST(Persistence, RandomOperationsReplayAndRestore) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto rep = run_persistence(seed);
    EXPECT_GT(rep.succeeded, 300) << "seed " << seed;
    for (const auto& p : rep.problems) ADD_FAILURE() << p;
  }
}

TEST(Persistence, FileLogSurvivesRestart) {
  const auto dir = std::filesystem::temp_directory_path() / "motorlance_dispatch_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto path = (dir / "events.ndjson").string();
  SystemState live;
  std::optional<double> deadline;
  {
    World w;
    w.log.attach_file(path);
    seed_world(w);
    std::mt19937_64 rng(42);
    double now = kT0;
    for (int i = 0; i < 300; ++i) {
      now += 3.0;
      w.core.advance_timers(now);
      try {
        random_command(w, rng, now);
      } catch (const Error&) {
      }
    }
    w.request(2, now + 1);  // leave one window open
    live = w.core.state();
    deadline = w.core.next_deadline();
  }
  auto log = EventLog::load(path);
  World restored;
  restored.core.restore(json(nullptr), *log);
  EXPECT_EQ(restored.core.state(), live);
  EXPECT_EQ(restored.core.next_deadline(), deadline);
  std::filesystem::remove_all(dir);
}

}  // namespace
