#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cavesim/geometry.hpp"
#include "cavesim/planner.hpp"

namespace cavesim::motion {

struct MotionConstraints {
  double v_max{2.0};
  double v_min{0.3};
  double a_max{2.0};
  double j_max{5.0};
  double t_s{0.2};
  double heading_rate_max{3.0};

  void validate() const;
};

struct TrajectorySample {
  Vec3 position;
  double heading{0.0};
};

// Position/heading pairs at implicit period t_s.
struct Trajectory {
  std::vector<TrajectorySample> samples;
  double t_s{0.2};

  double duration() const { return samples.empty() ? 0.0 : (samples.size() - 1) * t_s; }
  double speed_at(size_t k) const;  // forward-difference step speed at sample k
};

// Per-segment record of the velocity-adaptive sampler. `distances` holds
// d_i = v_start * t_s + i * accel * t_s^2 for i in 1..n_samples.
struct Segment {
  double length;
  double v_start;
  double v_end;
  double abar;   // |v_end - v_start| / t_acc
  double t_acc;  // 2 * length / (v_start + v_end)
  int n_samples;
  double accel;  // sign follows v_end - v_start
  std::vector<double> distances;
};

struct SegmentProfile {
  std::vector<Segment> segments;
  double t_s{0.2};
};

// --- elementary operations -------------------------------------------------

// Uniform arc-length resampling at spacing v_max * t_s; the last sample closes
// the residual on the path end. Headings face the direction of travel.
Trajectory uniform_resample(const pathplan::Path& path, const MotionConstraints& c);

// Required acceleration between transitions k and k+1 of a uniformly sampled
// trajectory: ||v(k+1) - v(k)|| / t_s with v(k) the transition velocity.
double required_acceleration(const Trajectory& traj, size_t k);

// Per-transition target speed: v_max when the required acceleration fits
// within a_max, otherwise max(v_max * a_max / a_n, v_min).
std::vector<double> segment_velocities(const Trajectory& traj, const MotionConstraints& c);

// Speed for turning through `angle` radians within one sampling period, i.e.
// the same rule applied at an exact corner transition.
double corner_speed(double angle, const MotionConstraints& c);

// Builds one Segment from its geometric length and boundary speeds.
Segment make_segment(double length, double v_start, double v_end, const MotionConstraints& c);

// Sampling distances of a segment (already stored on construction).
std::vector<double> sample_distances(const Segment& segment, const MotionConstraints& c);

struct SampledTrajectory {
  Trajectory trajectory;
  SegmentProfile profile;
};

struct SampleOptions {
  // Boundary speeds of the whole path; NaN means free (v_max).
  double entry_speed{std::numeric_limits<double>::quiet_NaN()};
  double exit_speed{std::numeric_limits<double>::quiet_NaN()};
};

// Velocity-adaptive sampling of a waypoint path: corner speeds from the
// per-segment velocity rule, constant-acceleration ramps between them, cruise
// at v_max on straights. Samples obey the speed/acceleration envelopes.
SampledTrajectory sample_trajectory(const pathplan::Path& path, const MotionConstraints& c,
                                    const SampleOptions& options = {});

// --- reference tracking ----------------------------------------------------

struct ReferenceState {
  Vec3 position;
  Vec3 velocity;
  Vec3 acceleration;
  Vec3 jerk;
  double heading{0.0};
  double heading_rate{0.0};
};

struct TrackerConfig {
  double rate_hz{100.0};
  double kp{6.0};
  double kv{5.0};
  double k_heading{5.0};
  double settle_time{4.0};  // extra rollout after the reference ends
  double ff_lead{0.3};      // feedforward look-ahead absorbing jerk-limit lag
};

// Jerk-limited triple-integrator virtual model following a trajectory's
// time-interpolated reference. Every emitted state respects the
// MotionConstraints envelopes.
class Tracker {
 public:
  Tracker(const MotionConstraints& c, const ReferenceState& initial,
          const TrackerConfig& cfg = {});

  // Replaces the active trajectory. With reset_clock the reference restarts
  // at the first sample; otherwise the reference clock carries on (trajectory
  // appends preserve sample indices up to the junction).
  void set_trajectory(Trajectory traj, bool reset_clock);
  bool has_trajectory() const { return !traj_.samples.empty(); }
  const Trajectory& trajectory() const { return traj_; }

  const ReferenceState& state() const { return state_; }
  double ref_time() const { return ref_time_; }
  size_t progress_index() const;
  bool reference_finished() const;

  void step();  // one 1/rate_hz tick

 private:
  Vec3 ref_pos(double t) const;
  Vec3 ref_vel(double t) const;
  double ref_heading(double t) const;

  MotionConstraints c_;
  TrackerConfig cfg_;
  Trajectory traj_;
  ReferenceState state_;
  double ref_time_{0.0};
};

// Batch rollout of the tracker over the whole trajectory plus settle time.
std::vector<ReferenceState> track(const Trajectory& traj, const ReferenceState& initial,
                                  const MotionConstraints& c, const TrackerConfig& cfg = {});

// Appends a replanned path to the still-unexecuted part of `current` at a
// short horizon past `progress_index`, resampling for speed continuity.
// Returns nullopt when new_path does not connect to any unexecuted sample.
std::optional<Trajectory> append_trajectory(const Trajectory& current, size_t progress_index,
                                            const pathplan::Path& new_path,
                                            const MotionConstraints& c,
                                            const SampleOptions& options = {});

// ASCII export: "t x y z heading" per row.
void export_trajectory(const Trajectory& traj, const std::string& path);

}  // namespace cavesim::motion
