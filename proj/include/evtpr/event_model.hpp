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
#include <vector>

#include "evtpr/tensor.hpp"

namespace evtpr {

using CountField = Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A single polarity change at pixel (x, y) and time t (microseconds).
struct Event {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int64_t t = 0;
  std::int8_t p = 1;

  friend bool operator==(const Event&, const Event&) = default;
};

/// Time-sorted events from a width x height sensor observed over [t_begin, t_end].
struct EventStream {
  std::vector<Event> events;
  int width = 0;
  int height = 0;
  std::int64_t t_begin = 0;
  std::int64_t t_end = 0;

  /// Throws InvalidInput unless events are sorted, in bounds, inside
  /// [t_begin, t_end] and carry polarity +1/-1.
  void validate() const;

  friend bool operator==(const EventStream&, const EventStream&) = default;
};

/// Events with t in (t0, t1], located by binary search on a sorted stream.
std::span<const Event> events_in(const EventStream& stream, std::int64_t t0, std::int64_t t1);

/// A luma (1 channel) or RGB (3 channels) frame with values in [0, 1].
struct IntensityFrame {
  std::int64_t timestamp = 0;
  std::vector<Plane> channels;

  static IntensityFrame constant(Index height, Index width, int channels, double value,
                                 std::int64_t timestamp = 0);

  Index height() const { return channels.empty() ? 0 : channels.front().rows(); }
  Index width() const { return channels.empty() ? 0 : channels.front().cols(); }
  int channel_count() const { return static_cast<int>(channels.size()); }

  /// Channel count 1 or 3, equal plane sizes, values finite and in [0, 1].
  void validate() const;
};

inline constexpr double kDefaultLogEps = 1e-3;

/// Slack (log units) when testing whether a signal reached a threshold level,
/// so that a change of exactly n*C emits n events despite rounding.
inline constexpr double kCrossingTolerance = 1e-12;

/// Luma of a frame: the single channel, or BT.601 Y for RGB input.
Plane luma(const IntensityFrame& frame);

/// ln(luma + eps) per pixel.
Plane log_view(const IntensityFrame& frame, double eps = kDefaultLogEps);

/// Deterministic threshold-crossing simulation on log-intensity samples.
///
/// Between consecutive samples each pixel's log signal is linear in time.
/// Starting from the first sample as reference, an event of polarity
/// sign(dL) fires whenever the signal reaches reference +/- threshold; the
/// reference then moves by exactly p * threshold. Event times are floored to
/// the microsecond. Output is sorted by (t, row-major pixel, +1 before -1).
EventStream simulate_events_from_log(std::span<const Plane> log_frames,
                                     std::span<const std::int64_t> timestamps, double threshold,
                                     int threads = 1);

EventStream simulate_events(std::span<const IntensityFrame> frames, double threshold,
                            double eps = kDefaultLogEps, int threads = 1);

/// Sum of polarities at (x, y) over events with t in (t0, t1].
int polarity_integral(const EventStream& stream, int x, int y, std::int64_t t0, std::int64_t t1);

/// polarity_integral for every pixel at once (height x width).
CountField polarity_integral_field(const EventStream& stream, std::int64_t t0,
                                        std::int64_t t1);

/// log_view(frame) + threshold * polarity_integral over (frame.timestamp, t].
/// The stream must cover that interval; integration runs forward only.
Plane reconstruct_log_intensity(const IntensityFrame& frame, const EventStream& stream,
                                std::int64_t t, double threshold, double eps = kDefaultLogEps);

}  // namespace evtpr
