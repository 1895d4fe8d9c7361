#include <cmath>

#include "cavesim/motion.hpp"
#include "cavesim/rng.hpp"
#include "doctest.h"

using namespace cavesim;
using namespace cavesim::motion;
using pathplan::Path;

namespace {

Path straight_path(double length) {
  Path p;
  p.waypoints = {Vec3{0, 0, 0}, Vec3{length, 0, 0}};
  return p;
}

Path make_path(std::vector<Vec3> wps) {
  Path p;
  p.waypoints = std::move(wps);
  return p;
}

std::vector<double> step_speeds(const Trajectory& traj) {
  std::vector<double> speeds;
  for (size_t i = 0; i + 1 < traj.samples.size(); ++i)
    speeds.push_back(distance(traj.samples[i + 1].position, traj.samples[i].position) / traj.t_s);
  return speeds;
}

// Random polyline with well-separated corners (edges >= 3.5 m).
Path random_path(Rng& rng, int min_edges = 4, int max_edges = 12, double max_turn = 2.5) {
  Path p;
  Vec3 cur{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 3)};
  p.waypoints.push_back(cur);
  const int edges = min_edges + static_cast<int>(rng.uniform_index(max_edges - min_edges + 1));
  double heading = rng.uniform(0, 2 * M_PI);
  double pitch = 0.0;
  for (int e = 0; e < edges; ++e) {
    heading += rng.uniform(-max_turn, max_turn);  // sharp corners when allowed
    pitch = clamp(pitch + rng.uniform(-0.5, 0.5), -0.9, 0.9);
    const double len = rng.uniform(3.5, 20.0);
    cur += Vec3{std::cos(pitch) * std::cos(heading), std::cos(pitch) * std::sin(heading),
                std::sin(pitch)} *
           len;
    p.waypoints.push_back(cur);
  }
  return p;
}

}  // namespace

TEST_CASE("uniform_resample spacing and counts") {
  MotionConstraints c;  // v_max 2, t_s 0.2 -> 0.4 m spacing

  SUBCASE("10 m straight path gives 26 samples at 0.4 m") {
    const auto traj = uniform_resample(straight_path(10.0), c);
    CHECK(traj.samples.size() == 26);
    for (size_t i = 0; i + 1 < traj.samples.size(); ++i) {
      const double d = distance(traj.samples[i].position, traj.samples[i + 1].position);
      CHECK(d == doctest::Approx(0.4).epsilon(1e-9));
    }
  }
  SUBCASE("zero-length path gives a single sample") {
    const auto traj = uniform_resample(make_path({Vec3{1, 2, 3}, Vec3{1, 2, 3}}), c);
    CHECK(traj.samples.size() == 1);
  }
  SUBCASE("polyline arc length is conserved within one spacing") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const auto path = random_path(rng);
      const auto traj = uniform_resample(path, c);
      // Samples sit on the polyline: chord sums undercut only at corners.
      double sampled_len = 0.0;
      for (size_t i = 0; i + 1 < traj.samples.size(); ++i)
        sampled_len += distance(traj.samples[i].position, traj.samples[i + 1].position);
      CHECK(sampled_len <= path.length() + 1e-9);
      const double corner_slack = (path.waypoints.size() - 1) * c.v_max * c.t_s;
      CHECK(sampled_len >= path.length() - corner_slack - c.v_max * c.t_s);
      // The resampling itself covers the full arc: last sample is the end.
      CHECK(distance(traj.samples.back().position, path.waypoints.back()) < 1e-9);
      // No spacing exceeds one sampling distance.
      for (size_t i = 0; i + 1 < traj.samples.size(); ++i)
        CHECK(distance(traj.samples[i].position, traj.samples[i + 1].position) <=
              c.v_max * c.t_s + 1e-9);
    }
  }
}

TEST_CASE("required_acceleration matches hand calculations") {
  MotionConstraints c;
  Trajectory traj;
  traj.t_s = 0.2;

  SUBCASE("constant velocity is zero acceleration") {
    for (int i = 0; i < 5; ++i) traj.samples.push_back({Vec3{0.4 * i, 0, 0}, 0});
    CHECK(required_acceleration(traj, 0) == doctest::Approx(0.0));
    CHECK(required_acceleration(traj, 2) == doctest::Approx(0.0));
  }
  SUBCASE("90 degree turn at 2 m/s") {
    traj.samples.push_back({Vec3{0, 0, 0}, 0});
    traj.samples.push_back({Vec3{0.4, 0, 0}, 0});
    traj.samples.push_back({Vec3{0.4, 0.4, 0}, 0});
    // ||(0,2)-(2,0)|| / 0.2 = 2*sqrt(2)/0.2
    CHECK(required_acceleration(traj, 0) == doctest::Approx(14.1421356).epsilon(1e-6));
  }
  SUBCASE("speed-up from 1 to 2 m/s in one period") {
    traj.samples.push_back({Vec3{0.0, 0, 0}, 0});
    traj.samples.push_back({Vec3{0.2, 0, 0}, 0});
    traj.samples.push_back({Vec3{0.6, 0, 0}, 0});
    CHECK(required_acceleration(traj, 0) == doctest::Approx(5.0));
  }
  SUBCASE("out of range k throws") {
    traj.samples.push_back({Vec3{0, 0, 0}, 0});
    traj.samples.push_back({Vec3{0.4, 0, 0}, 0});
    CHECK_THROWS_AS(required_acceleration(traj, 0), std::out_of_range);
  }
}

TEST_CASE("segment_velocities implements the velocity rule") {
  SUBCASE("straight path keeps v_max everywhere") {
    MotionConstraints c;
    const auto traj = uniform_resample(straight_path(8.0), c);
    const auto v = segment_velocities(traj, c);
    REQUIRE(v.size() == traj.samples.size() - 1);
    for (double vk : v) CHECK(vk == doctest::Approx(c.v_max));
  }
  SUBCASE("a_n equal to twice a_max halves v_max") {
    MotionConstraints c;
    c.v_max = 2.0;
    c.a_max = 2.5;
    c.v_min = 0.3;
    c.t_s = 0.2;
    Trajectory traj;
    traj.t_s = 0.2;
    // speeds 1 then 2 -> a_n = 5 = 2 * a_max
    traj.samples.push_back({Vec3{0.0, 0, 0}, 0});
    traj.samples.push_back({Vec3{0.2, 0, 0}, 0});
    traj.samples.push_back({Vec3{0.6, 0, 0}, 0});
    const auto v = segment_velocities(traj, c);
    REQUIRE(v.size() == 2);
    CHECK(v[0] == doctest::Approx(c.v_max / 2.0));  // max(v_max*a_max/a_n, v_min)
  }
  SUBCASE("huge a_n clamps to v_min") {
    MotionConstraints c;
    Trajectory traj;
    traj.t_s = 0.2;
    traj.samples.push_back({Vec3{0, 0, 0}, 0});
    traj.samples.push_back({Vec3{0.4, 0, 0}, 0});
    traj.samples.push_back({Vec3{0.4, 0.4, 0}, 0});  // sharp turn at speed
    const auto v = segment_velocities(traj, c);
    CHECK(v[0] == doctest::Approx(c.v_min));
  }
}

TEST_CASE("segment profile reproduces the worked example") {
  // l = 3 m, v = 1 -> 2 m/s, t_s = 0.2 s.
  MotionConstraints c;
  c.t_s = 0.2;
  const auto seg = make_segment(3.0, 1.0, 2.0, c);
  CHECK(seg.t_acc == doctest::Approx(2.0));
  CHECK(seg.abar == doctest::Approx(0.5));
  CHECK(seg.n_samples == 10);
  CHECK(seg.accel == doctest::Approx(0.25));
  REQUIRE(seg.distances.size() == 10);
  CHECK(seg.distances.front() == doctest::Approx(0.21));
  CHECK(seg.distances.back() == doctest::Approx(0.30));
}

TEST_CASE("sample_distances branches") {
  MotionConstraints c;
  c.t_s = 0.2;

  SUBCASE("zero acceleration gives equal spacing") {
    const auto seg = make_segment(4.0, 2.0, 2.0, c);
    CHECK(seg.abar == 0.0);
    CHECK(seg.n_samples == 10);  // ceil(4 / 0.4)
    for (double d : sample_distances(seg, c)) CHECK(d == doctest::Approx(0.4));
  }
  SUBCASE("deceleration gives strictly decreasing distances") {
    const auto seg = make_segment(1.15, 2.0, 0.3, c);
    const auto d = sample_distances(seg, c);
    REQUIRE(d.size() >= 2);
    for (size_t i = 0; i + 1 < d.size(); ++i) CHECK(d[i + 1] < d[i]);
  }
  SUBCASE("non-positive distances are a constraint error") {
    CHECK_THROWS_AS(make_segment(0.1, 2.0, 0.01, c), std::domain_error);
  }
}

TEST_CASE("straight corridor samples at constant v_max") {
  MotionConstraints c;
  const auto out = sample_trajectory(straight_path(12.0), c);
  const auto speeds = step_speeds(out.trajectory);
  REQUIRE(speeds.size() > 2);
  for (size_t i = 0; i + 1 < speeds.size(); ++i)  // all but the closing step
    CHECK(speeds[i] == doctest::Approx(c.v_max).epsilon(1e-9));
  CHECK(speeds.back() <= c.v_max * (1 + 1e-9));
  // Full traversal.
  CHECK(distance(out.trajectory.samples.back().position, Vec3{12, 0, 0}) < 1e-9);
}

TEST_CASE("U-shaped path dips through the turns and recovers") {
  MotionConstraints c;
  const auto out = sample_trajectory(
      make_path({Vec3{0, 0, 0}, Vec3{12, 0, 0}, Vec3{12, 8, 0}, Vec3{0, 8, 0}}), c);
  const auto speeds = step_speeds(out.trajectory);
  const double min_speed = *std::min_element(speeds.begin(), speeds.end());
  CHECK(min_speed < 0.8);  // slowed for the 90 degree corners
  CHECK(speeds.front() == doctest::Approx(c.v_max).epsilon(1e-6));
  // Recovers to v_max between corners.
  bool recovered = false;
  size_t first_dip = 0;
  for (size_t i = 0; i < speeds.size(); ++i)
    if (speeds[i] < 1.0) {
      first_dip = i;
      break;
    }
  for (size_t i = first_dip; i < speeds.size(); ++i)
    if (speeds[i] > c.v_max - 1e-6) recovered = true;
  CHECK(recovered);
}

TEST_CASE("square path produces symmetric speed dips") {
  MotionConstraints c;
  const auto out = sample_trajectory(make_path({Vec3{0, 0, 0}, Vec3{10, 0, 0}, Vec3{10, 10, 0},
                                                Vec3{0, 10, 0}, Vec3{0, 0, 0}}),
                                     c);
  const auto speeds = step_speeds(out.trajectory);
  // Find local dip minima below v_max.
  std::vector<double> dips;
  for (size_t i = 1; i + 1 < speeds.size(); ++i)
    if (speeds[i] < 1.0 && speeds[i] <= speeds[i - 1] && speeds[i] <= speeds[i + 1])
      dips.push_back(speeds[i]);
  REQUIRE(dips.size() >= 3);  // three interior 90-degree corners
  for (double d : dips) CHECK(d == doctest::Approx(dips.front()).epsilon(0.05));
}

TEST_CASE("eq-fidelity: profile fields satisfy the sampling equations exactly") {
  MotionConstraints c;
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto path = random_path(rng);
    const auto out = sample_trajectory(path, c);
    REQUIRE_FALSE(out.profile.segments.empty());

    double total = 0.0;
    for (const auto& s : out.profile.segments) {
      // Independent recomputation, symbol by symbol.
      const double t_acc = 2.0 * s.length / (s.v_start + s.v_end);
      const double abar = s.v_end == s.v_start ? 0.0 : std::abs(s.v_end - s.v_start) / t_acc;
      const int n = abar == 0.0
                        ? static_cast<int>(std::ceil(s.length / (s.v_start * c.t_s)))
                        : static_cast<int>(std::ceil(t_acc / c.t_s));
      const double accel =
          abar == 0.0 ? 0.0 : std::copysign(abar / (n * c.t_s), s.v_end - s.v_start);
      CHECK(s.t_acc == doctest::Approx(t_acc).epsilon(1e-12));
      CHECK(s.abar == doctest::Approx(abar).epsilon(1e-12));
      CHECK(s.n_samples == std::max(n, 1));
      CHECK(s.accel == doctest::Approx(accel).epsilon(1e-12));
      REQUIRE(s.distances.size() == static_cast<size_t>(s.n_samples));
      double sum = 0.0;
      for (int i = 1; i <= s.n_samples; ++i) {
        const double d = s.v_start * c.t_s + i * accel * c.t_s * c.t_s;
        CHECK(s.distances[i - 1] == doctest::Approx(d).epsilon(1e-12));
        CHECK(s.distances[i - 1] > 0.0);
        sum += s.distances[i - 1];
      }
      // Distances cover the segment within one sampling distance.
      CHECK(std::abs(sum - s.length) <= c.v_max * c.t_s + 1e-9);
      // Boundary speeds are within the envelope.
      CHECK(s.v_start >= c.v_min - 1e-12);
      CHECK(s.v_start <= c.v_max + 1e-12);
      total += s.length;
    }
    CHECK(total == doctest::Approx(path.length()).epsilon(1e-9));

    // Junction continuity of the speed plan.
    for (size_t i = 0; i + 1 < out.profile.segments.size(); ++i)
      CHECK(out.profile.segments[i].v_end ==
            doctest::Approx(out.profile.segments[i + 1].v_start).epsilon(1e-12));
  }
}

TEST_CASE("speed and acceleration envelopes hold on random paths") {
  MotionConstraints c;
  Rng rng(23);
  for (int trial = 0; trial < 60; ++trial) {
    const auto path = random_path(rng);
    const auto out = sample_trajectory(path, c);
    const auto& samples = out.trajectory.samples;
    REQUIRE(samples.size() >= 2);

    const auto speeds = step_speeds(out.trajectory);
    for (double s : speeds) CHECK(s <= c.v_max * (1.0 + 1e-6));

    // The very last transition is the residual-closing step (a sampling
    // artifact shared with uniform_resample), so it is not a commanded
    // acceleration; transitions adjacent to v_min-clamped turns are exempt
    // per the velocity rule.
    for (size_t i = 0; i + 3 < samples.size(); ++i) {
      const Vec3 v0 = (samples[i + 1].position - samples[i].position) / c.t_s;
      const Vec3 v1 = (samples[i + 2].position - samples[i + 1].position) / c.t_s;
      const double accel = (v1 - v0).norm() / c.t_s;
      const bool exempt = std::min(v0.norm(), v1.norm()) <= c.v_min + 1e-6;
      if (!exempt) CHECK(accel <= c.a_max * (1.0 + 1e-3));
    }

    // Coverage: every sample lies on the polyline (within numerical slack),
    // and the trajectory reaches the endpoint.
    CHECK(distance(samples.back().position, path.waypoints.back()) < 1e-6);
  }
}

TEST_CASE("tracker holds a hover reference exactly") {
  MotionConstraints c;
  Trajectory hover;
  hover.t_s = c.t_s;
  hover.samples.push_back({Vec3{1, 2, 3}, 0.5});
  ReferenceState init;
  init.position = Vec3{1, 2, 3};
  init.heading = 0.5;
  const auto rollout = track(hover, init, c);
  for (const auto& s : rollout) {
    CHECK(distance(s.position, init.position) == doctest::Approx(0.0));
    CHECK(s.velocity.norm() == doctest::Approx(0.0));
  }
}

TEST_CASE("step reference approaches monotonically with bounded overshoot") {
  MotionConstraints c;
  Trajectory step;
  step.t_s = c.t_s;
  step.samples.push_back({Vec3{1, 0, 0}, 0.0});
  ReferenceState init;  // at origin, 1 m behind the reference
  const auto rollout = track(step, init, c, TrackerConfig{100.0, 6.0, 5.0, 5.0, 8.0, 0.3});
  double prev_dist = 1.0;
  double max_overshoot = 0.0;
  bool approached = false;
  for (const auto& s : rollout) {
    max_overshoot = std::max(max_overshoot, s.position.x - 1.0);
    const double d = distance(s.position, Vec3{1, 0, 0});
    if (!approached) {
      CHECK(d <= prev_dist + 1e-9);  // monotone until close
      prev_dist = d;
      if (d < 0.05) approached = true;
    }
  }
  CHECK(approached);
  CHECK(max_overshoot <= 0.1);  // within 10 % of the step
  CHECK(distance(rollout.back().position, Vec3{1, 0, 0}) < 0.05);
}

TEST_CASE("tracker stays within one voxel of a feasible trajectory") {
  // Feasibility: corner speeds must stay above the v_min clamp (clamped turns
  // legitimately exceed a_max and are exempt from the envelope), so corner
  // angles stay below ~60 degrees here. Free-end trajectories are measured up
  // to the final commanded sample; their closing residual step is a sampling
  // artifact. Trajectories ending at v_min (how the engine dispatches them)
  // are measured to the very end.
  MotionConstraints c;
  Rng rng(31);
  for (int trial = 0; trial < 12; ++trial) {
    const auto path = random_path(rng, 3, 6, 1.0);
    const bool engine_style = trial % 2 == 1;
    SampleOptions opt;
    if (engine_style) opt.exit_speed = c.v_min;
    const auto out = sample_trajectory(path, c, opt);
    const auto& samples = out.trajectory.samples;
    REQUIRE(samples.size() >= 3);

    ReferenceState init;
    init.position = samples[0].position;
    init.velocity = (samples[1].position - samples[0].position) / c.t_s;
    init.heading = samples[0].heading;

    Tracker tracker(c, init);
    tracker.set_trajectory(out.trajectory, true);
    const double duration = out.trajectory.duration();
    const double horizon = engine_style ? duration : duration - c.t_s;
    double max_dev = 0.0;
    while (tracker.ref_time() < horizon) {
      tracker.step();
      const double t = std::min(tracker.ref_time(), horizon);
      const double ft = t / c.t_s;
      const size_t k = std::min(static_cast<size_t>(ft), samples.size() - 2);
      const double u = std::min(ft - k, 1.0);
      const Vec3 ref =
          samples[k].position + (samples[k + 1].position - samples[k].position) * u;
      max_dev = std::max(max_dev, distance(tracker.state().position, ref));
    }
    CHECK(max_dev <= 0.2);
  }
}

TEST_CASE("tracker output respects every constraint bound") {
  MotionConstraints c;
  Rng rng(41);
  const auto path = random_path(rng, 4, 8);
  const auto out = sample_trajectory(path, c);
  ReferenceState init;
  init.position = out.trajectory.samples[0].position;
  const auto rollout = track(out.trajectory, init, c);
  for (const auto& s : rollout) {
    CHECK(s.velocity.norm() <= c.v_max * (1 + 1e-9));
    CHECK(s.acceleration.norm() <= c.a_max * (1 + 1e-9));
    CHECK(s.jerk.norm() <= c.j_max * (1 + 1e-9));
    CHECK(std::abs(s.heading_rate) <= c.heading_rate_max * (1 + 1e-9));
  }
}

TEST_CASE("tracker rejects infeasible initial state") {
  MotionConstraints c;
  Trajectory t;
  t.t_s = c.t_s;
  t.samples.push_back({Vec3{0, 0, 0}, 0});
  ReferenceState bad;
  bad.velocity = Vec3{10, 0, 0};
  CHECK_THROWS_AS(track(t, bad, c), std::domain_error);
}

TEST_CASE("append_trajectory") {
  MotionConstraints c;
  const auto current = sample_trajectory(straight_path(20.0), c).trajectory;
  const size_t progress = 5;

  SUBCASE("straight continuation keeps speed continuous at the junction") {
    // New path starts on a future sample and continues along +x.
    const Vec3 start = current.samples[18].position;
    const auto appended = append_trajectory(
        current, progress, make_path({start, start + Vec3{15, 0, 0}}), c);
    REQUIRE(appended.has_value());
    const auto speeds = step_speeds(*appended);
    for (size_t i = 0; i + 2 < speeds.size(); ++i)  // last step closes the residual
      CHECK(std::abs(speeds[i + 1] - speeds[i]) <= c.a_max * c.t_s + 1e-6);
    // Longer than the remaining original.
    CHECK(appended->samples.size() > current.samples.size());
  }

  SUBCASE("reversal dips to v_min without a speed discontinuity") {
    const Vec3 start = current.samples[20].position;
    const auto appended = append_trajectory(
        current, progress, make_path({start, start - Vec3{12, 0, 0}}), c);
    REQUIRE(appended.has_value());
    const auto speeds = step_speeds(*appended);
    double min_speed = 1e9;
    for (size_t i = 0; i + 2 < speeds.size(); ++i) {
      CHECK(std::abs(speeds[i + 1] - speeds[i]) <= c.a_max * c.t_s + 1e-6);
      min_speed = std::min(min_speed, speeds[i]);
    }
    CHECK(min_speed <= c.v_min + 0.05);
  }

  SUBCASE("appending the remaining trajectory is the identity") {
    std::vector<Vec3> rest;
    for (size_t i = 10; i < current.samples.size(); ++i)
      rest.push_back(current.samples[i].position);
    const auto appended = append_trajectory(current, progress, make_path(rest), c);
    REQUIRE(appended.has_value());
    REQUIRE(appended->samples.size() == current.samples.size());
    for (size_t i = 0; i < current.samples.size(); ++i)
      CHECK(distance(appended->samples[i].position, current.samples[i].position) < 1e-12);
  }

  SUBCASE("disconnected path is rejected") {
    const auto appended = append_trajectory(
        current, progress, make_path({Vec3{100, 100, 0}, Vec3{120, 100, 0}}), c);
    CHECK_FALSE(appended.has_value());
  }
}
