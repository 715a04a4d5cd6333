#pragma once

// Per-station estimator + controller. A tracker sees only its own station's
// detections and the scenario, never the plant state, the received power, or
// the opposite station's detections.

#include <algorithm>
#include <span>
#include <vector>

#include "beamtrack/control.hpp"
#include "beamtrack/dynamics.hpp"
#include "beamtrack/filter.hpp"
#include "beamtrack/model.hpp"

namespace beamtrack {

struct Impulse {
  double t = 0.0;
  Vector dx;
};

struct StepOutput {
  Vector2 u = Vector2::Zero();
  std::vector<Impulse> impulses;
};

class StationTracker {
 public:
  StationTracker(Station station, const StationConfig& cfg, const OpticsParams& optics,
                 ControlLaw law)
      : station_(station),
        schedule_(&cfg.schedule),
        r_shape_(optics.R),
        law_(std::move(law)),
        state_{cfg.x0_mean, cfg.sigma0} {}

  [[nodiscard]] const FilterState& state() const { return state_; }
  [[nodiscard]] Station station() const { return station_; }

  /// Starts the step [t0, t0 + dt): computes the continuous control at t0,
  /// which is then held for the whole step.
  Vector2 begin_step(double t0, double dt) {
    m_ = &schedule_->at(t0);
    u_ = continuous_control(law_, state_.xhat, *m_);
    now_ = t0;
    end_ = t0 + dt;
    return u_;
  }

  /// Drift to the event, filter jump, then the control impulse. Returns the
  /// impulse the plant receives at the event (zero for non-impulsive laws).
  Vector on_event(const Event& ev) {
    if (ev.station != station_) {
      throw ValidationError("StationTracker: received an event of the opposite station");
    }
    if (ev.t < now_ || ev.t >= end_) {
      throw ValidationError("StationTracker: event outside the current step or out of order");
    }
    if (ev.t > now_) state_ = predict(state_, u_, *m_, ev.t - now_);
    const Matrix mg = gain(state_.sigma, m_->C, r_shape_);
    state_ = update_on_event(state_, ev.r, m_->C, r_shape_);
    Vector dx = event_impulse(law_, ev.r, mg, *m_);
    state_.xhat += dx;
    now_ = ev.t;
    return dx;
  }

  void end_step() {
    if (end_ > now_) state_ = predict(state_, u_, *m_, end_ - now_);
    now_ = end_;
  }

  /// Advances the estimate over [t0, t0 + dt) through a batch of events.
  StepOutput advance(double t0, double dt, std::span<const Event> events) {
    StepOutput out;
    out.u = begin_step(t0, dt);
    for (const Event& ev : events) {
      Vector dx = on_event(ev);
      if (std::holds_alternative<OptimalLaw>(law_)) out.impulses.push_back({ev.t, std::move(dx)});
    }
    end_step();
    return out;
  }

 private:
  Station station_;
  const LtiSchedule* schedule_;
  SymMat r_shape_;
  ControlLaw law_;
  FilterState state_;
  const SystemMatrices* m_ = nullptr;
  Vector2 u_ = Vector2::Zero();
  double now_ = 0.0;
  double end_ = 0.0;
};

struct FilterTrace {
  std::vector<double> times;         // k * dt, k = 0..K
  std::vector<FilterState> states;   // at each time
  std::vector<Vector2> controls;     // held control on [t_k, t_k + dt), k < K
  std::vector<Impulse> impulses;
};

/// Replays a station's event stream through its filter and control law.
[[nodiscard]] inline FilterTrace run_filter(const ScenarioConfig& cfg, Station station,
                                            std::span<const Event> events, const ControlLaw& law) {
  if (!std::is_sorted(events.begin(), events.end(), event_order)) {
    throw ValidationError("run_filter: events must be sorted by time");
  }
  StationTracker tracker(station, cfg.station(station), cfg.optics, law);
  const int steps = cfg.steps();
  FilterTrace trace;
  trace.times.reserve(static_cast<std::size_t>(steps) + 1);
  trace.states.reserve(static_cast<std::size_t>(steps) + 1);
  trace.times.push_back(0.0);
  trace.states.push_back(tracker.state());
  auto it = events.begin();
  for (int k = 0; k < steps; ++k) {
    const double t0 = cfg.time_at(k);
    const double t1 = cfg.time_at(k + 1);
    auto end = it;
    while (end != events.end() && end->t < t1) ++end;
    StepOutput out = tracker.advance(t0, t1 - t0, std::span<const Event>(it, end));
    it = end;
    trace.controls.push_back(out.u);
    for (auto& imp : out.impulses) trace.impulses.push_back(std::move(imp));
    trace.times.push_back(t1);
    trace.states.push_back(tracker.state());
  }
  return trace;
}

/// max_t |C_t xhat_t| along a trace.
[[nodiscard]] inline double hold_invariant_check(const FilterTrace& trace, const LtiSchedule& schedule) {
  double worst = 0.0;
  for (std::size_t k = 0; k < trace.times.size(); ++k) {
    const double t = std::min(trace.times[k], schedule.end());
    worst = std::max(worst, (schedule.at(t).C * trace.states[k].xhat).norm());
  }
  return worst;
}

}  // namespace beamtrack
