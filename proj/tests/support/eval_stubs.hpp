#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "viewtok/eval.hpp"
#include "viewtok/regressor.hpp"

namespace testing_support {

// Blank images; the stub estimators below never look at pixels.
inline viewtok::ImageSource blank_source(int size) {
  return [size](std::span<const viewtok::EvalCase> cases) {
    return std::vector<viewtok::Image>(cases.size(), viewtok::Image(size, size, 3));
  };
}

// Returns the requested pose with the azimuth shifted by `offset_deg`.
inline viewtok::PoseEstimator shifted_estimator(double offset_deg, const viewtok::RadiusRange& range = {}) {
  return [offset_deg, range](std::span<const viewtok::Image>, std::span<const viewtok::EvalCase> cases) {
    std::vector<std::array<double, 6>> out;
    for (const auto& c : cases) {
      const auto& p = c.requested;
      const viewtok::CameraPose shifted(p.azimuth() + viewtok::deg_to_rad(offset_deg), p.elevation(), p.radius(),
                                        p.pitch(), p.yaw());
      out.push_back(viewtok::pose_targets(shifted, range));
    }
    return out;
  };
}

// Plain mean and median with no shared code path.
struct NaiveStats {
  double mean = 0.0;
  double median = 0.0;
};

inline NaiveStats naive_stats(std::vector<double> v) {
  NaiveStats s;
  if (v.empty()) return s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  s.median = n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return s;
}

// Largest deviation between `aggregate` and the naive statistics over all
// components of the non-excluded records.
inline double naive_aggregation_gap(std::span<const viewtok::EvalRecord> records) {
  std::array<std::vector<double>, 5> cols;
  for (const auto& r : records) {
    if (r.excluded()) continue;
    cols[0].push_back(r.errors.azimuth);
    cols[1].push_back(r.errors.elevation);
    cols[2].push_back(r.errors.radius);
    cols[3].push_back(r.errors.pitch);
    cols[4].push_back(r.errors.yaw);
  }
  const viewtok::MetricsTable t = viewtok::aggregate(records);
  const viewtok::Summary got[5] = {t.azimuth, t.elevation, t.radius, t.pitch, t.yaw};
  double gap = 0.0;
  for (int c = 0; c < 5; ++c) {
    const NaiveStats want = naive_stats(cols[static_cast<std::size_t>(c)]);
    gap = std::max({gap, std::abs(got[c].mean - want.mean), std::abs(got[c].median - want.median)});
  }
  return gap;
}

// Easy/diverse spec over the three kinds.
inline viewtok::TestSpec small_test_spec() {
  viewtok::TestSpec spec;
  spec.easy = {{viewtok::ObjectKind::arrow_car, "red"}, {viewtok::ObjectKind::chevron_animal, "blue"}};
  spec.diverse = {{viewtok::ObjectKind::wedge_chair, "red"}};
  spec.backgrounds = {"", "teal backdrop"};
  return spec;
}

}  // namespace testing_support
