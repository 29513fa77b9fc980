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

#include "evtpr/event_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "evtpr/errors.hpp"
#include "evtpr/metrics.hpp"
#include "evtpr/parallel.hpp"

namespace evtpr {

void EventStream::validate() const {
  detail::require(width > 0 && height > 0 && width <= 65535 && height <= 65535,
                  "sensor dimensions out of range");
  detail::require(t_begin <= t_end, "stream t_begin exceeds t_end");
  std::int64_t prev = t_begin;
  for (const Event& e : events) {
    detail::require(e.x < width && e.y < height, "event outside sensor bounds");
    detail::require(e.p == 1 || e.p == -1, "event polarity must be +1 or -1");
    detail::require(e.t >= prev, "events are not sorted by time");
    detail::require(e.t <= t_end, "event after t_end");
    prev = e.t;
  }
}

std::span<const Event> events_in(const EventStream& stream, std::int64_t t0, std::int64_t t1) {
  const auto& ev = stream.events;
  auto first = std::partition_point(ev.begin(), ev.end(), [&](const Event& e) { return e.t <= t0; });
  auto last = std::partition_point(first, ev.end(), [&](const Event& e) { return e.t <= t1; });
  return {first, last};
}

IntensityFrame IntensityFrame::constant(Index height, Index width, int channels, double value,
                                        std::int64_t timestamp) {
  IntensityFrame frame;
  frame.timestamp = timestamp;
  frame.channels.assign(static_cast<size_t>(channels), Plane::Constant(height, width, value));
  return frame;
}

void IntensityFrame::validate() const {
  detail::require(channel_count() == 1 || channel_count() == 3, "frames have 1 or 3 channels");
  for (const Plane& c : channels) {
    detail::require(c.rows() == height() && c.cols() == width(), "ragged frame channels");
    detail::require(c.allFinite(), "frame contains non-finite values");
    detail::require((c >= 0.0).all() && (c <= 1.0).all(), "frame values outside [0, 1]");
  }
}

Plane luma(const IntensityFrame& frame) {
  if (frame.channel_count() == 1) return frame.channels.front();
  return rgb_to_y(frame);
}

Plane log_view(const IntensityFrame& frame, double eps) {
  detail::require(eps > 0, "log offset eps must be positive");
  detail::require(frame.channel_count() == 1 || frame.channel_count() == 3,
                  "frames have 1 or 3 channels");
  Plane y = luma(frame);
  detail::require(y.allFinite(), "frame contains non-finite values");
  return (y + eps).log();
}

namespace {

struct PixelEvent {
  std::int64_t t;
  std::int64_t pixel;
  std::int8_t p;
};

// Emits the crossings of one pixel's piecewise-linear log signal, in time order.
void simulate_pixel(std::span<const double> samples, std::span<const std::int64_t> timestamps,
                    double threshold, std::int64_t pixel, std::vector<PixelEvent>& out) {
  double reference = samples[0];
  for (size_t k = 0; k + 1 < samples.size(); ++k) {
    const double a = samples[k];
    const double b = samples[k + 1];
    const double span = static_cast<double>(timestamps[k + 1] - timestamps[k]);
    auto emit = [&](double level, std::int8_t p) {
      const double frac = std::clamp((level - a) / (b - a), 0.0, 1.0);
      const auto offset = static_cast<std::int64_t>(std::floor(frac * span));
      out.push_back({timestamps[k] + offset, pixel, p});
    };
    if (b > a) {
      while (b - (reference + threshold) >= -kCrossingTolerance) {
        reference += threshold;
        emit(reference, +1);
      }
    } else if (b < a) {
      while ((reference - threshold) - b >= -kCrossingTolerance) {
        reference -= threshold;
        emit(reference, -1);
      }
    }
  }
}

}  // namespace

EventStream simulate_events_from_log(std::span<const Plane> log_frames,
                                     std::span<const std::int64_t> timestamps, double threshold,
                                     int threads) {
  detail::require(log_frames.size() >= 2, "simulation needs at least two frames");
  detail::require(log_frames.size() == timestamps.size(), "one timestamp per frame required");
  detail::require(threshold > 0, "contrast threshold must be positive");
  for (size_t k = 1; k < timestamps.size(); ++k) {
    detail::require(timestamps[k] > timestamps[k - 1], "frame timestamps must strictly increase");
  }
  const Index height = log_frames[0].rows();
  const Index width = log_frames[0].cols();
  detail::require(height > 0 && width > 0 && height <= 65535 && width <= 65535,
                  "frame dimensions out of range");
  for (const Plane& f : log_frames) {
    detail::require(f.rows() == height && f.cols() == width, "frames differ in size");
    detail::require(f.allFinite(), "log frame contains non-finite values");
  }

  std::vector<std::vector<PixelEvent>> rows(static_cast<size_t>(height));
  parallel_for(height, threads, [&](std::ptrdiff_t y) {
    std::vector<double> samples(log_frames.size());
    auto& out = rows[static_cast<size_t>(y)];
    for (Index x = 0; x < width; ++x) {
      for (size_t k = 0; k < log_frames.size(); ++k) samples[k] = log_frames[k](y, x);
      simulate_pixel(samples, timestamps, threshold, y * width + x, out);
    }
  });

  std::vector<PixelEvent> merged;
  for (auto& r : rows) merged.insert(merged.end(), r.begin(), r.end());
  std::stable_sort(merged.begin(), merged.end(), [](const PixelEvent& a, const PixelEvent& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.pixel != b.pixel) return a.pixel < b.pixel;
    return a.p > b.p;
  });

  EventStream stream;
  stream.width = static_cast<int>(width);
  stream.height = static_cast<int>(height);
  stream.t_begin = timestamps.front();
  stream.t_end = timestamps.back();
  stream.events.reserve(merged.size());
  for (const PixelEvent& e : merged) {
    stream.events.push_back({static_cast<std::uint16_t>(e.pixel % width),
                             static_cast<std::uint16_t>(e.pixel / width), e.t, e.p});
  }
  return stream;
}

EventStream simulate_events(std::span<const IntensityFrame> frames, double threshold, double eps,
                            int threads) {
  detail::require(frames.size() >= 2, "simulation needs at least two frames");
  std::vector<Plane> logs;
  std::vector<std::int64_t> timestamps;
  logs.reserve(frames.size());
  for (const IntensityFrame& f : frames) {
    logs.push_back(log_view(f, eps));
    timestamps.push_back(f.timestamp);
  }
  return simulate_events_from_log(logs, timestamps, threshold, threads);
}

int polarity_integral(const EventStream& stream, int x, int y, std::int64_t t0, std::int64_t t1) {
  detail::require(x >= 0 && y >= 0 && x < stream.width && y < stream.height,
                  "pixel outside sensor bounds");
  detail::require(t0 <= t1, "polarity integral needs t0 <= t1");
  int sum = 0;
  for (const Event& e : events_in(stream, t0, t1)) {
    if (e.x == x && e.y == y) sum += e.p;
  }
  return sum;
}

CountField polarity_integral_field(const EventStream& stream, std::int64_t t0, std::int64_t t1) {
  detail::require(t0 <= t1, "polarity integral needs t0 <= t1");
  CountField field = CountField::Zero(stream.height, stream.width);
  for (const Event& e : events_in(stream, t0, t1)) field(e.y, e.x) += e.p;
  return field;
}

Plane reconstruct_log_intensity(const IntensityFrame& frame, const EventStream& stream,
                                std::int64_t t, double threshold, double eps) {
  detail::require(t >= frame.timestamp, "reconstruction only integrates forward in time");
  detail::require(threshold > 0, "contrast threshold must be positive");
  detail::require(frame.height() == stream.height && frame.width() == stream.width,
                  "frame and event sensor sizes differ");
  detail::require(stream.t_begin <= frame.timestamp && t <= stream.t_end,
                  "event stream does not cover (" + std::to_string(frame.timestamp) + ", " +
                      std::to_string(t) + "]");
  const CountField counts = polarity_integral_field(stream, frame.timestamp, t);
  return log_view(frame, eps) + threshold * counts.cast<double>();
}

}  // namespace evtpr
