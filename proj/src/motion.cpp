#include "cavesim/motion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace cavesim::motion {

void MotionConstraints::validate() const {
  if (!(v_min > 0.0 && v_min <= v_max)) throw std::invalid_argument("constraints: need 0 < v_min <= v_max");
  if (a_max <= 0.0 || j_max <= 0.0 || t_s <= 0.0 || heading_rate_max <= 0.0)
    throw std::invalid_argument("constraints: a_max, j_max, t_s, heading_rate_max must be > 0");
}

double Trajectory::speed_at(size_t k) const {
  if (samples.size() < 2) return 0.0;
  if (k + 1 >= samples.size()) k = samples.size() - 2;
  return distance(samples[k + 1].position, samples[k].position) / t_s;
}

namespace {

std::vector<Vec3> clean_waypoints(const std::vector<Vec3>& wps) {
  std::vector<Vec3> out;
  for (const Vec3& w : wps)
    if (out.empty() || distance(out.back(), w) > 1e-12) out.push_back(w);
  return out;
}

double polyline_length(const std::vector<Vec3>& wps) {
  double sum = 0.0;
  for (size_t i = 0; i + 1 < wps.size(); ++i) sum += distance(wps[i], wps[i + 1]);
  return sum;
}

// Arc-length position lookup on a polyline.
struct PolylinePoint {
  Vec3 position;
  Vec3 direction;
};

class PolylineWalker {
 public:
  explicit PolylineWalker(const std::vector<Vec3>& wps) : wps_(wps) {
    lengths_.resize(wps.size() > 0 ? wps.size() - 1 : 0);
    for (size_t i = 0; i + 1 < wps.size(); ++i) lengths_[i] = distance(wps[i], wps[i + 1]);
  }

  PolylinePoint at(double arc) const {
    size_t edge = 0;
    double pos = arc;
    while (edge < lengths_.size() && pos > lengths_[edge]) {
      pos -= lengths_[edge];
      ++edge;
    }
    if (edge >= lengths_.size()) {
      const Vec3 dir = lengths_.empty()
                           ? Vec3{1, 0, 0}
                           : (wps_.back() - wps_[wps_.size() - 2]).normalized();
      return {wps_.back(), dir};
    }
    const Vec3 dir = (wps_[edge + 1] - wps_[edge]).normalized();
    return {wps_[edge] + dir * pos, dir};
  }

 private:
  const std::vector<Vec3>& wps_;
  std::vector<double> lengths_;
};

double heading_of(const Vec3& dir) {
  if (std::abs(dir.x) < 1e-15 && std::abs(dir.y) < 1e-15) return 0.0;
  return std::atan2(dir.y, dir.x);
}

void limit_heading_rate(Trajectory& traj, const MotionConstraints& c, double initial_heading) {
  if (traj.samples.empty()) return;
  const double max_step = c.heading_rate_max * c.t_s;
  double heading = initial_heading;
  for (auto& s : traj.samples) {
    const double d = angle_diff(heading, s.heading);
    heading += clamp(d, -max_step, max_step);
    s.heading = heading;
  }
}

}  // namespace

Trajectory uniform_resample(const pathplan::Path& path, const MotionConstraints& c) {
  c.validate();
  if (path.waypoints.empty()) throw std::invalid_argument("uniform_resample: empty path");
  const std::vector<Vec3> wps = clean_waypoints(path.waypoints);

  Trajectory traj;
  traj.t_s = c.t_s;
  const double total = polyline_length(wps);
  if (total <= 0.0) {
    traj.samples.push_back({wps.front(), 0.0});
    return traj;
  }

  const PolylineWalker walker(wps);
  const double spacing = c.v_max * c.t_s;
  double arc = 0.0;
  while (arc < total) {
    const auto p = walker.at(arc);
    traj.samples.push_back({p.position, heading_of(p.direction)});
    arc += spacing;
  }
  const auto end = walker.at(total);
  traj.samples.push_back({end.position, heading_of(end.direction)});
  return traj;
}

double required_acceleration(const Trajectory& traj, size_t k) {
  const size_t n = traj.samples.size();
  if (k + 2 >= n) throw std::out_of_range("required_acceleration: transition k+1 out of range");
  const Vec3 v0 = (traj.samples[k + 1].position - traj.samples[k].position) / traj.t_s;
  const Vec3 v1 = (traj.samples[k + 2].position - traj.samples[k + 1].position) / traj.t_s;
  return (v1 - v0).norm() / traj.t_s;
}

std::vector<double> segment_velocities(const Trajectory& traj, const MotionConstraints& c) {
  c.validate();
  const size_t n = traj.samples.size();
  std::vector<double> velocities;
  if (n < 2) return velocities;
  velocities.reserve(n - 1);
  for (size_t k = 0; k + 1 < n; ++k) {
    const double a_n = (k + 2 < n) ? required_acceleration(traj, k) : 0.0;
    if (a_n > c.a_max) {
      velocities.push_back(std::max(c.v_max * c.a_max / a_n, c.v_min));
    } else {
      velocities.push_back(c.v_max);
    }
  }
  return velocities;
}

double corner_speed(double angle, const MotionConstraints& c) {
  const double chord = 2.0 * std::sin(std::abs(angle) / 2.0);
  const double a_n = c.v_max * chord / c.t_s;
  if (a_n > c.a_max) return std::max(c.v_max * c.a_max / a_n, c.v_min);
  return c.v_max;
}

Segment make_segment(double length, double v_start, double v_end, const MotionConstraints& c) {
  Segment s;
  s.length = length;
  s.v_start = v_start;
  s.v_end = v_end;
  s.t_acc = 2.0 * length / (v_start + v_end);
  const double dv = v_end - v_start;
  s.abar = dv == 0.0 ? 0.0 : std::abs(dv) / s.t_acc;
  if (s.abar == 0.0) {
    s.n_samples = static_cast<int>(std::ceil(length / (v_start * c.t_s)));
  } else {
    s.n_samples = static_cast<int>(std::ceil(s.t_acc / c.t_s));
  }
  s.n_samples = std::max(s.n_samples, 1);
  s.accel = s.abar == 0.0 ? 0.0 : std::copysign(s.abar / (s.n_samples * c.t_s), dv);
  s.distances.reserve(s.n_samples);
  for (int i = 1; i <= s.n_samples; ++i) {
    const double d = v_start * c.t_s + i * s.accel * c.t_s * c.t_s;
    if (d <= 0.0)
      throw std::domain_error("sample_distances: non-positive distance (check v_min/a_max)");
    s.distances.push_back(d);
  }
  return s;
}

std::vector<double> sample_distances(const Segment& segment, const MotionConstraints& c) {
  std::vector<double> out;
  out.reserve(segment.n_samples);
  for (int i = 1; i <= segment.n_samples; ++i) {
    const double d = segment.v_start * c.t_s + i * segment.accel * c.t_s * c.t_s;
    if (d <= 0.0)
      throw std::domain_error("sample_distances: non-positive distance (check v_min/a_max)");
    out.push_back(d);
  }
  return out;
}

namespace {

// Continuous speed plan: a chain of zones, each traversed with linear speed
// change (or constant speed), later sampled on the t_s timeline.
struct Zone {
  double length;
  double v0;
  double v1;
  double duration;
};

double ramp_time(double a, double b, const MotionConstraints& c) {
  return std::max(1.0, std::abs(b - a) / c.a_max);
}
double ramp_length(double a, double b, const MotionConstraints& c) {
  return 0.5 * (a + b) * ramp_time(a, b, c);
}

// Largest end speed reachable from `from` within `budget` meters.
double max_reachable(double from, double budget, const MotionConstraints& c) {
  double to = 2.0 * budget - from;  // ramp_time == 1 regime
  if (to - from > c.a_max) to = std::sqrt(from * from + 2.0 * c.a_max * budget);
  return std::max(from, to);
}

}  // namespace

SampledTrajectory sample_trajectory(const pathplan::Path& path, const MotionConstraints& c,
                                    const SampleOptions& options) {
  c.validate();
  if (path.waypoints.empty()) throw std::invalid_argument("sample_trajectory: empty path");
  const std::vector<Vec3> wps = clean_waypoints(path.waypoints);

  SampledTrajectory out;
  out.trajectory.t_s = c.t_s;
  out.profile.t_s = c.t_s;
  if (wps.size() < 2) {
    out.trajectory.samples.push_back({wps.front(), 0.0});
    return out;
  }

  const size_t m = wps.size() - 1;  // number of edges
  std::vector<double> edge_len(m);
  std::vector<Vec3> edge_dir(m);
  for (size_t k = 0; k < m; ++k) {
    edge_len[k] = distance(wps[k], wps[k + 1]);
    edge_dir[k] = (wps[k + 1] - wps[k]).normalized();
  }

  // Speed anchors: path endpoints plus every vertex whose turn actually
  // forces a slowdown. Mild vertices stay inside spans so ramps can cross
  // them (dense waypoint chains would otherwise block any speed change).
  struct Anchor {
    double arc;
    double speed;
  };
  std::vector<Anchor> anchors;
  anchors.push_back({0.0, std::isnan(options.entry_speed)
                              ? c.v_max
                              : clamp(options.entry_speed, c.v_min, c.v_max)});
  double arc_acc = 0.0;
  for (size_t j = 1; j < m; ++j) {
    arc_acc += edge_len[j - 1];
    const double cosang = clamp(edge_dir[j - 1].dot(edge_dir[j]), -1.0, 1.0);
    const double speed = corner_speed(std::acos(cosang), c);
    if (speed < c.v_max) anchors.push_back({arc_acc, speed});
  }
  const double total_len = arc_acc + edge_len[m - 1];
  anchors.push_back({total_len, std::isnan(options.exit_speed)
                                    ? c.v_max
                                    : clamp(options.exit_speed, c.v_min, c.v_max)});

  const size_t na = anchors.size();
  // Corner dwell: two sampling periods on each side of a slowed corner, so
  // every sample window adjacent to the turn moves at the corner speed.
  auto plateau_half = [&](size_t j) {
    if (j == 0 || j + 1 == na || anchors[j].speed >= c.v_max) return 0.0;
    return 2.0 * anchors[j].speed * c.t_s;
  };
  auto span_len = [&](size_t k) { return anchors[k + 1].arc - anchors[k].arc; };
  auto span_budget = [&](size_t k) {
    const double len = span_len(k);
    return len - std::min(plateau_half(k), 0.25 * len) -
           std::min(plateau_half(k + 1), 0.25 * len);
  };

  // Lower anchor speeds until every span can bridge its endpoints.
  for (int pass = 0; pass < 200; ++pass) {
    bool changed = false;
    for (size_t k = 0; k + 1 < na; ++k) {
      const double lo = std::min(anchors[k].speed, anchors[k + 1].speed);
      const double hi = std::max(anchors[k].speed, anchors[k + 1].speed);
      if (hi - lo < 1e-12) continue;
      if (ramp_length(lo, hi, c) <= span_budget(k)) continue;
      double allowed = std::max(lo, max_reachable(lo, span_budget(k), c));
      allowed = std::max(allowed, c.v_min);
      if (allowed < hi - 1e-12) {
        (anchors[k].speed > anchors[k + 1].speed ? anchors[k].speed : anchors[k + 1].speed) =
            allowed;
        changed = true;
      }
    }
    if (!changed) break;
  }

  // Build the zone chain, one span at a time.
  std::vector<Zone> zones;
  auto push_zone = [&](double length, double v0, double v1) {
    if (length <= 1e-12) return;
    if (!zones.empty() && std::abs(zones.back().v1 - v0) < 1e-12 &&
        std::abs(zones.back().v0 - zones.back().v1) < 1e-12 && std::abs(v1 - v0) < 1e-12) {
      zones.back().length += length;  // merge adjacent cruises at equal speed
      zones.back().duration += length / v0;
      return;
    }
    Zone z{length, v0, v1, 0.0};
    z.duration = (v0 == v1) ? length / v0 : ramp_time(v0, v1, c);
    zones.push_back(z);
  };

  for (size_t k = 0; k + 1 < na; ++k) {
    const double lo = anchors[k].speed;
    const double hi = anchors[k + 1].speed;
    const double len = span_len(k);
    const double p_in = std::min(plateau_half(k), 0.25 * len);
    const double p_out = std::min(plateau_half(k + 1), 0.25 * len);
    const double core = len - p_in - p_out;

    push_zone(p_in, lo, lo);

    const double base = ramp_length(std::min(lo, hi), std::max(lo, hi), c);
    if (base > core + 1e-12) {
      // Could not be fully limited (degenerate short span); single ramp.
      push_zone(core, lo, hi);
    } else {
      // Peak speed: accelerate, cruise, decelerate within the core.
      double lo_p = std::max(lo, hi), hi_p = c.v_max;
      auto fits = [&](double vp) {
        return ramp_length(lo, vp, c) + ramp_length(vp, hi, c) <= core;
      };
      double v_p = lo_p;
      if (fits(hi_p)) {
        v_p = hi_p;
      } else {
        for (int it = 0; it < 60; ++it) {
          const double mid = 0.5 * (lo_p + hi_p);
          if (fits(mid))
            lo_p = mid;
          else
            hi_p = mid;
        }
        v_p = lo_p;
      }
      const double r_in = v_p > lo + 1e-12 ? ramp_length(lo, v_p, c) : 0.0;
      const double r_out = v_p > hi + 1e-12 ? ramp_length(v_p, hi, c) : 0.0;
      const double cruise = core - r_in - r_out;
      if (r_in > 0.0) push_zone(r_in, lo, v_p);
      push_zone(std::max(cruise, 0.0), v_p, v_p);
      if (r_out > 0.0) push_zone(r_out, v_p, hi);
    }

    push_zone(p_out, hi, hi);
  }

  // Profile in terms of the sampling equations.
  for (const Zone& z : zones)
    out.profile.segments.push_back(make_segment(z.length, z.v0, z.v1, c));

  // Time sampling on the t_s grid.
  const PolylineWalker walker(wps);
  double arc = 0.0;
  size_t zi = 0;
  double zone_t = 0.0;  // time already spent inside zones_[zi]
  double zone_s = 0.0;  // arc already covered inside zones_[zi]

  {
    const auto p0 = walker.at(0.0);
    out.trajectory.samples.push_back({p0.position, heading_of(p0.direction)});
  }
  while (zi < zones.size()) {
    double dt = c.t_s;
    while (dt > 0.0 && zi < zones.size()) {
      const Zone& z = zones[zi];
      const double accel = (z.v1 - z.v0) / z.duration;
      const double t_rem = z.duration - zone_t;
      if (dt < t_rem) {
        const double v_now = z.v0 + accel * zone_t;
        zone_s += v_now * dt + 0.5 * accel * dt * dt;
        zone_t += dt;
        dt = 0.0;
      } else {
        dt -= t_rem;
        arc += z.length;
        zone_s = 0.0;
        zone_t = 0.0;
        ++zi;
      }
    }
    const double s = std::min(arc + zone_s, total_len);
    if (zi >= zones.size()) break;
    const auto p = walker.at(s);
    out.trajectory.samples.push_back({p.position, heading_of(p.direction)});
  }
  // Final sample lands exactly on the path end.
  const auto pe = walker.at(total_len);
  if (distance(out.trajectory.samples.back().position, pe.position) > 1e-9) {
    out.trajectory.samples.push_back({pe.position, heading_of(pe.direction)});
  }

  limit_heading_rate(out.trajectory, c, out.trajectory.samples.front().heading);
  return out;
}

Tracker::Tracker(const MotionConstraints& c, const ReferenceState& initial,
                 const TrackerConfig& cfg)
    : c_(c), cfg_(cfg), state_(initial) {
  c.validate();
  if (initial.velocity.norm() > c.v_max * (1.0 + 1e-9) ||
      initial.acceleration.norm() > c.a_max * (1.0 + 1e-9))
    throw std::domain_error("track: initial state violates constraints");
}

void Tracker::set_trajectory(Trajectory traj, bool reset_clock) {
  traj_ = std::move(traj);
  if (reset_clock) ref_time_ = 0.0;
}

size_t Tracker::progress_index() const {
  if (traj_.samples.empty()) return 0;
  const size_t k = static_cast<size_t>(ref_time_ / traj_.t_s);
  return std::min(k, traj_.samples.size() - 1);
}

bool Tracker::reference_finished() const {
  return traj_.samples.empty() || ref_time_ >= traj_.duration();
}

Vec3 Tracker::ref_pos(double t) const {
  const size_t n = traj_.samples.size();
  if (t <= 0.0 || n == 1) return traj_.samples.front().position;
  const double ft = t / traj_.t_s;
  const size_t k = static_cast<size_t>(ft);
  if (k + 1 >= n) return traj_.samples.back().position;
  const double u = ft - k;
  return traj_.samples[k].position + (traj_.samples[k + 1].position - traj_.samples[k].position) * u;
}

Vec3 Tracker::ref_vel(double t) const {
  const size_t n = traj_.samples.size();
  if (n == 1 || t < 0.0) return {};
  const size_t k = static_cast<size_t>(t / traj_.t_s);
  if (k + 1 >= n) return {};
  return (traj_.samples[k + 1].position - traj_.samples[k].position) / traj_.t_s;
}

double Tracker::ref_heading(double t) const {
  const size_t n = traj_.samples.size();
  if (n == 1) return traj_.samples.front().heading;
  const size_t k = std::min(static_cast<size_t>(t / traj_.t_s), n - 1);
  return traj_.samples[k].heading;
}

void Tracker::step() {
  if (traj_.samples.empty()) return;
  const double dt = 1.0 / cfg_.rate_hz;
  const double t = ref_time_;
  ReferenceState& s = state_;

  // Feedforward: reference acceleration one sample period wide, fetched
  // slightly ahead so the jerk-limited response arrives on time.
  const double tf = t + cfg_.ff_lead;
  const Vec3 a_ff = (ref_vel(tf + traj_.t_s) - ref_vel(tf)) / traj_.t_s;
  Vec3 a_des = (ref_pos(t) - s.position) * cfg_.kp + (ref_vel(t) - s.velocity) * cfg_.kv + a_ff;
  if (a_des.norm() > c_.a_max) a_des = a_des * (c_.a_max / a_des.norm());

  Vec3 jerk = (a_des - s.acceleration) / dt;
  if (jerk.norm() > c_.j_max) jerk = jerk * (c_.j_max / jerk.norm());
  s.jerk = jerk;
  s.acceleration += jerk * dt;
  if (s.acceleration.norm() > c_.a_max)
    s.acceleration = s.acceleration * (c_.a_max / s.acceleration.norm());
  s.velocity += s.acceleration * dt;
  if (s.velocity.norm() > c_.v_max) s.velocity = s.velocity * (c_.v_max / s.velocity.norm());
  s.position += s.velocity * dt;

  const double d = angle_diff(s.heading, ref_heading(t));
  s.heading_rate = clamp(cfg_.k_heading * d, -c_.heading_rate_max, c_.heading_rate_max);
  s.heading += s.heading_rate * dt;

  ref_time_ += dt;
}

std::vector<ReferenceState> track(const Trajectory& traj, const ReferenceState& initial,
                                  const MotionConstraints& c, const TrackerConfig& cfg) {
  c.validate();
  if (traj.samples.empty()) throw std::invalid_argument("track: empty trajectory");

  Tracker tracker(c, initial, cfg);
  tracker.set_trajectory(traj, true);
  const double dt = 1.0 / cfg.rate_hz;
  const double total = traj.duration() + cfg.settle_time;
  const size_t ticks = static_cast<size_t>(std::ceil(total / dt));

  std::vector<ReferenceState> rollout;
  rollout.reserve(ticks + 1);
  rollout.push_back(tracker.state());
  for (size_t i = 0; i < ticks; ++i) {
    tracker.step();
    rollout.push_back(tracker.state());
  }
  return rollout;
}

std::optional<Trajectory> append_trajectory(const Trajectory& current, size_t progress_index,
                                            const pathplan::Path& new_path,
                                            const MotionConstraints& c,
                                            const SampleOptions& options) {
  c.validate();
  if (current.samples.empty() || new_path.waypoints.empty()) return std::nullopt;
  const size_t n = current.samples.size();
  const size_t progress = std::min(progress_index, n - 1);
  const double max_gap = c.v_max * c.t_s + 1e-9;

  // Prefer an exact sample hit; otherwise the first sample within one
  // sampling distance.
  size_t junction = SIZE_MAX;
  for (size_t j = progress; j < n; ++j) {
    if (distance(current.samples[j].position, new_path.waypoints.front()) <= 1e-9) {
      junction = j;
      break;
    }
  }
  if (junction == SIZE_MAX) {
    for (size_t j = progress; j < n; ++j) {
      if (distance(current.samples[j].position, new_path.waypoints.front()) <= max_gap) {
        junction = j;
        break;
      }
    }
  }
  if (junction == SIZE_MAX) return std::nullopt;

  // Appending the remaining trajectory to itself is a no-op.
  const std::vector<Vec3> new_wps = clean_waypoints(new_path.waypoints);
  {
    const size_t remaining = n - junction;
    if (new_wps.size() == remaining) {
      bool identical = true;
      for (size_t i = 0; i < remaining && identical; ++i)
        identical = distance(new_wps[i], current.samples[junction + i].position) <= 1e-9;
      if (identical) return current;
    }
  }

  // Keep a couple of already-planned samples, then resample the remaining old
  // geometry plus the new path. The old stretch matters: it puts the turn
  // toward the new path inside the resampled polyline, where the corner rules
  // slow it down; a reversal exactly at the seam would otherwise be sampled at
  // full speed.
  constexpr size_t kKeep = 2;
  const size_t keep_end = std::min(junction, progress + kKeep);

  std::vector<Vec3> cont_wps;
  for (size_t j = keep_end; j <= junction; ++j) cont_wps.push_back(current.samples[j].position);
  for (const Vec3& w : new_wps) cont_wps.push_back(w);
  cont_wps = clean_waypoints(cont_wps);
  if (cont_wps.size() < 2) return current;

  SampleOptions opt = options;
  opt.entry_speed = keep_end > 0 ? current.speed_at(keep_end - 1)
                                 : std::min(current.speed_at(0), c.v_max);
  pathplan::Path cont_path;
  cont_path.waypoints = std::move(cont_wps);
  const SampledTrajectory cont = sample_trajectory(cont_path, c, opt);

  Trajectory out;
  out.t_s = c.t_s;
  out.samples.assign(current.samples.begin(), current.samples.begin() + keep_end + 1);
  for (size_t i = 1; i < cont.trajectory.samples.size(); ++i)
    out.samples.push_back(cont.trajectory.samples[i]);
  return out;
}

void export_trajectory(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_trajectory: cannot open " + path);
  char buf[160];
  for (size_t i = 0; i < traj.samples.size(); ++i) {
    const auto& s = traj.samples[i];
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g %.9g %.9g\n", i * traj.t_s, s.position.x,
                  s.position.y, s.position.z, s.heading);
    out << buf;
  }
}

}  // namespace cavesim::motion
