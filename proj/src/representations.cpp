// Copyright (c) the evtpr authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "evtpr/representations.hpp"

#include <algorithm>
#include <cmath>

#include "evtpr/errors.hpp"
#include "evtpr/parallel.hpp"

namespace evtpr {

TensorD accumulate_voxels(std::span<const Event> events, double t0, double t1, int bins,
                          int height, int width, int threads) {
  detail::require(bins >= 1, "voxel grid needs at least one bin");
  detail::require(t0 < t1, "voxel window needs t0 < t1");
  detail::require(height > 0 && width > 0, "voxel grid needs a positive sensor size");
  TensorD grid({bins, height, width});
  const double scale = bins / (t1 - t0);
  const Index plane = static_cast<Index>(height) * width;
  double* out = grid.data();

  // Each worker owns a band of rows and visits events in stream order, so the
  // floating-point accumulation order per cell is fixed.
  const int bands = std::clamp(threads, 1, height);
  parallel_for(bands, bands, [&](std::ptrdiff_t band) {
    const int row_begin = static_cast<int>(height * band / bands);
    const int row_end = static_cast<int>(height * (band + 1) / bands);
    for (const Event& e : events) {
      if (e.y < row_begin || e.y >= row_end) continue;
      const auto t = static_cast<double>(e.t);
      if (t < t0 || t > t1) continue;
      const double tau = std::clamp(scale * (t - t0) - 0.5, 0.0, static_cast<double>(bins - 1));
      const auto lower = static_cast<Index>(std::floor(tau));
      const double frac = tau - static_cast<double>(lower);
      const Index cell = static_cast<Index>(e.y) * width + e.x;
      out[lower * plane + cell] += e.p * (1.0 - frac);
      if (frac > 0.0) out[(lower + 1) * plane + cell] += e.p * frac;
    }
  });
  return grid;
}

VoxelGrid build_voxel_grid(const EventStream& stream, int bins, std::int64_t t0, std::int64_t t1,
                           int threads) {
  detail::require(bins >= 1, "voxel grid needs at least one bin");
  detail::require(t0 < t1, "voxel window needs t0 < t1");
  auto first = std::partition_point(stream.events.begin(), stream.events.end(),
                                    [&](const Event& e) { return e.t < t0; });
  auto last = std::partition_point(first, stream.events.end(),
                                   [&](const Event& e) { return e.t <= t1; });
  VoxelGrid grid;
  grid.bins = bins;
  grid.t0 = static_cast<double>(t0);
  grid.t1 = static_cast<double>(t1);
  grid.data = accumulate_voxels({first, last}, grid.t0, grid.t1, bins, stream.height, stream.width,
                                threads);
  return grid;
}

double TemporalPyramid::level_half_width(int level) const {
  double half = params.half_window;
  for (int l = 0; l < level; ++l) half /= params.attenuation;
  return half;
}

std::pair<double, double> TemporalPyramid::level_window(int level) const {
  const double half = level_half_width(level);
  return {center_t - half, center_t + half};
}

double TemporalPyramid::level_mass(int level) const {
  const Index per_level = data.size() / params.levels;
  return data.storage().segment((level - 1) * per_level, per_level).sum();
}

TemporalPyramid build_tpr(const EventStream& stream, double center_t, const TprParams& params,
                          int threads) {
  detail::require(params.levels >= 1, "pyramid needs at least one level");
  detail::require(params.moments >= 1, "pyramid levels need at least one moment");
  detail::require(params.attenuation > 1.0, "attenuation factor must exceed 1");
  detail::require(params.half_window > 0.0, "pyramid half-window must be positive");

  TemporalPyramid pyramid;
  pyramid.params = params;
  pyramid.center_t = center_t;
  detail::require(2.0 * pyramid.level_half_width(params.levels) >= 1.0,
                  "finest pyramid level is narrower than the 1 us timestamp clock");

  const Index per_level = static_cast<Index>(params.moments) * stream.height * stream.width;
  pyramid.data = TensorD({params.levels, params.moments, stream.height, stream.width});
  for (int level = 1; level <= params.levels; ++level) {
    const auto [lo, hi] = pyramid.level_window(level);
    auto first = std::partition_point(stream.events.begin(), stream.events.end(),
                                      [lo = lo](const Event& e) { return static_cast<double>(e.t) < lo; });
    auto last = std::partition_point(first, stream.events.end(),
                                     [hi = hi](const Event& e) { return static_cast<double>(e.t) <= hi; });
    TensorD grid = accumulate_voxels({first, last}, lo, hi, params.moments, stream.height,
                                     stream.width, threads);
    pyramid.data.storage().segment((level - 1) * per_level, per_level) = grid.storage();
  }
  return pyramid;
}

GranularitySpec tpr_granularity(const Rational& half_window_seconds, int levels, int moments,
                                const Rational& attenuation) {
  detail::require(half_window_seconds > 0, "half-window must be positive");
  detail::require(levels >= 1 && moments >= 1, "levels and moments must be positive");
  detail::require(attenuation > 1, "attenuation factor must exceed 1");
  GranularitySpec result;
  result.half_window = half_window_seconds;
  result.levels = levels;
  result.moments = moments;
  result.attenuation = attenuation;
  result.delta_t = 2 * half_window_seconds /
                 (Rational(moments) * pow(attenuation, static_cast<unsigned>(levels)));
  return result;
}

double tpr_granularity(double half_window_seconds, int levels, int moments, double attenuation) {
  detail::require(half_window_seconds > 0, "half-window must be positive");
  detail::require(levels >= 1 && moments >= 1, "levels and moments must be positive");
  detail::require(attenuation > 1, "attenuation factor must exceed 1");
  return 2.0 * half_window_seconds / (moments * std::pow(attenuation, levels));
}

}  // namespace evtpr
