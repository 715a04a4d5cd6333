#pragma once

// CSV exports. Numbers are written with 17 significant digits so that files
// round-trip exactly and repeated invocations are byte-identical.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "beamtrack/bound.hpp"
#include "beamtrack/errors.hpp"
#include "beamtrack/objective.hpp"
#include "beamtrack/tracker.hpp"

namespace beamtrack::io {

inline std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot open " + path.string() + " for writing");
  return os;
}

inline void write_events(std::ostream& os, const std::vector<Event>& events) {
  os << "t,rx,ry,station\n";
  for (const auto& e : events) {
    os << num(e.t) << ',' << num(e.r(0)) << ',' << num(e.r(1)) << ',' << tag(e.station) << '\n';
  }
}

// t, xhat_1..n, sigma_ij for i <= j
inline void write_filter_trace(std::ostream& os, const FilterTrace& tr) {
  if (tr.states.empty()) return;
  const auto n = tr.states.front().xhat.size();
  os << 't';
  for (Eigen::Index i = 0; i < n; ++i) os << ",xhat" << i + 1;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) os << ",sigma" << i + 1 << j + 1;
  }
  os << '\n';
  for (std::size_t k = 0; k < tr.states.size(); ++k) {
    const auto& s = tr.states[k];
    os << num(tr.times[k]);
    for (Eigen::Index i = 0; i < n; ++i) os << ',' << num(s.xhat(i));
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i; j < n; ++j) os << ',' << num(s.sigma(i, j));
    }
    os << '\n';
  }
}

// One row per step with the held control and the number of impulses in it.
inline void write_control_trace(std::ostream& os, const FilterTrace& tr) {
  os << "t,u1,u2,impulses\n";
  std::size_t next = 0;
  for (std::size_t k = 0; k < tr.controls.size(); ++k) {
    const double t1 = tr.times[k + 1];
    int count = 0;
    while (next < tr.impulses.size() && (tr.impulses[next].t < t1 || k + 1 == tr.controls.size())) {
      ++count;
      ++next;
    }
    os << num(tr.times[k]) << ',' << num(tr.controls[k](0)) << ',' << num(tr.controls[k](1)) << ','
       << count << '\n';
  }
}

inline void write_run_records(std::ostream& os, const std::vector<RunRecord>& records) {
  os << "run,seed,j_sample,j_filtered_sample,events_a,events_b,max_hold_a,max_hold_b,pd_violations,gap\n";
  for (const auto& r : records) {
    os << r.run_index << ',' << r.seed << ',' << num(r.j_sample) << ',' << num(r.j_filtered_sample) << ','
       << r.events_a << ',' << r.events_b << ',' << num(r.max_hold_a) << ',' << num(r.max_hold_b) << ','
       << r.pd_violations << ',' << (r.gap ? num(*r.gap) : std::string()) << '\n';
  }
}

inline nlohmann::json gtable_header(const GTable& table, std::size_t exported_slices) {
  const auto& s = table.sigma_grid();
  return {{"columns", {"t", "sigma_a", "sigma_b", "g"}},
          {"sigma_nodes", s.size()},
          {"sigma_min_positive", s.size() > 1 ? s[1] : 0.0},
          {"sigma_max", s.back()},
          {"sigma_spacing", "0 then log-spaced"},
          {"stored_slices", table.slices()},
          {"exported_slices", exported_slices},
          {"t_max", table.time_grid().front()},
          {"t_min", table.time_grid().back()}};
}

/// First line "# {json header}", then t,sigma_a,sigma_b,g rows for up to
/// `max_slices` stored time slices, always including t = T and t = 0.
inline void write_gtable(std::ostream& os, const GTable& table, std::size_t max_slices = 3) {
  const std::size_t total = table.slices();
  std::vector<std::size_t> picks;
  if (max_slices < 2 || total <= max_slices) {
    for (std::size_t s = 0; s < total; ++s) picks.push_back(s);
  } else {
    for (std::size_t k = 0; k < max_slices; ++k) picks.push_back(k * (total - 1) / (max_slices - 1));
  }
  os << "# " << gtable_header(table, picks.size()).dump() << '\n';
  os << "t,sigma_a,sigma_b,g\n";
  const auto& grid = table.sigma_grid();
  for (const std::size_t s : picks) {
    const std::string t = num(table.time_grid()[s]);
    for (std::size_t ia = 0; ia < grid.size(); ++ia) {
      for (std::size_t ib = 0; ib < grid.size(); ++ib) {
        os << t << ',' << num(grid[ia]) << ',' << num(grid[ib]) << ',' << num(table.at_node(s, ia, ib))
           << '\n';
      }
    }
  }
}

}  // namespace beamtrack::io
