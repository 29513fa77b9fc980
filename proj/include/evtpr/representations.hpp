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

#pragma once

#include <cstdint>
#include <span>
#include <utility>

#include "evtpr/event_model.hpp"
#include "evtpr/rational.hpp"
#include "evtpr/tensor.hpp"

namespace evtpr {

/// Signed temporal accumulation of a stream into bins x height x width.
struct VoxelGrid {
  int bins = 0;
  TensorD data;
  double t0 = 0;
  double t1 = 0;

  double mass() const { return data.storage().sum(); }
};

/// Accumulates events with t in [t0, t1] into a bins x height x width grid.
///
/// An event at normalized coordinate tau = bins * (t - t0) / (t1 - t0) - 0.5
/// adds p * (1 - |tau - k|) to each bin k with |tau - k| < 1. tau is clamped
/// to [0, bins - 1] first, so events in the outer half-bins land wholly in the
/// edge bin and every accepted event contributes total weight p.
TensorD accumulate_voxels(std::span<const Event> events, double t0, double t1, int bins,
                          int height, int width, int threads = 1);

VoxelGrid build_voxel_grid(const EventStream& stream, int bins, std::int64_t t0, std::int64_t t1,
                           int threads = 1);

struct TprParams {
  int levels = 7;            ///< L
  int moments = 2;           ///< M_p, bins per level
  double attenuation = 3.0;  ///< r > 1
  double half_window = 0;    ///< Delta t in microseconds
};

/// levels x moments x height x width pyramid centered at center_t. Level l
/// (1-based) voxelizes [center_t - dt / r^l, center_t + dt / r^l].
struct TemporalPyramid {
  TprParams params;
  double center_t = 0;
  TensorD data;

  /// Half-width of level l (1-based) in microseconds.
  double level_half_width(int level) const;
  std::pair<double, double> level_window(int level) const;
  double level_mass(int level) const;
};

TemporalPyramid build_tpr(const EventStream& stream, double center_t, const TprParams& params,
                          int threads = 1);

/// Finest time granularity 2 dt / (M_p r^L) of a pyramid, in seconds.
struct GranularitySpec {
  Rational half_window;  ///< seconds
  int levels = 0;
  int moments = 0;
  Rational attenuation;
  Rational delta_t;  ///< seconds
};

GranularitySpec tpr_granularity(const Rational& half_window_seconds, int levels, int moments,
                                const Rational& attenuation);

/// Floating-point variant for irrational attenuation factors.
double tpr_granularity(double half_window_seconds, int levels, int moments, double attenuation);

}  // namespace evtpr
