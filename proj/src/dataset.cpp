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

#include "evtpr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "evtpr/errors.hpp"

namespace evtpr {

std::vector<double> WindowPlan::gt_times() const {
  std::vector<double> times;
  times.reserve(gt_indices.size());
  for (int i : gt_indices) {
    times.push_back(window_size > 1 ? static_cast<double>(i - 1) / (window_size - 1) : 0.0);
  }
  return times;
}

int window_size(int inputs, int skip) {
  detail::require(inputs >= 2, "need at least two input frames");
  detail::require(skip >= 0, "skip must be non-negative");
  return (inputs - 1) * (skip + 1) + 1;
}

std::vector<WindowPlan> plan_windows(int total_frames, int inputs, int skip,
                                     std::optional<int> stride) {
  const int w = window_size(inputs, skip);
  const int step = stride.value_or(w);
  detail::require(step >= 1, "window stride must be positive");
  std::vector<WindowPlan> plans;
  for (int start = 1; start + w - 1 <= total_frames; start += step) {
    WindowPlan plan;
    plan.start = start;
    plan.window_size = w;
    plan.inputs = inputs;
    plan.skip = skip;
    for (int i = 1; i <= w; i += skip + 1) plan.input_indices.push_back(i);
    plan.gt_indices.resize(static_cast<size_t>(w));
    std::iota(plan.gt_indices.begin(), plan.gt_indices.end(), 1);
    plans.push_back(std::move(plan));
  }
  return plans;
}

std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  detail::require(n > 0, "uniform_index needs a non-empty range");
  // Rejection keeps the draw unbiased and identical on every platform.
  const std::uint64_t limit = Rng::max() - Rng::max() % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

double uniform_real(Rng& rng, double lo, double hi) {
  const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * unit;
}

double sample_scale(Rng& rng) { return uniform_real(rng, 1.0, 8.0); }

std::vector<int> sample_gt_subset(const WindowPlan& plan, int count, Rng& rng) {
  std::vector<int> pool = plan.gt_indices;
  detail::require(count >= 0 && static_cast<size_t>(count) <= pool.size(),
                  "cannot draw more ground-truth frames than the window holds");
  for (size_t i = 0; i < static_cast<size_t>(count); ++i) {
    const size_t j = i + uniform_index(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(static_cast<size_t>(count));
  std::sort(pool.begin(), pool.end());
  return pool;
}

int floor_slack(double x) { return static_cast<int>(std::floor(x + 1e-9)); }

CropPlan plan_crop(int frame_height, int frame_width, double scale, Rng& rng, int crop_size) {
  detail::require(scale >= 1.0, "scale must be at least 1");
  CropPlan plan;
  plan.scale = scale;
  const int lr_side = floor_slack(crop_size / scale);
  detail::require(lr_side >= 1, "scale leaves an empty low-resolution crop");
  const int hr_side = floor_slack(lr_side * scale);
  detail::require(frame_height >= hr_side && frame_width >= hr_side,
                  "frame is smaller than the high-resolution crop");
  plan.hr = {static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(frame_height - hr_side + 1))),
             static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(frame_width - hr_side + 1))),
             hr_side, hr_side};
  const int lr_frame_h = floor_slack(frame_height / scale);
  const int lr_frame_w = floor_slack(frame_width / scale);
  plan.lr = {std::min(floor_slack(plan.hr.top / scale), lr_frame_h - lr_side),
             std::min(floor_slack(plan.hr.left / scale), lr_frame_w - lr_side), lr_side, lr_side};
  return plan;
}

double cubic_kernel(double x, double a) {
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

RowMatrix<double> bicubic_weights(Index in_size, double scale) {
  detail::require(scale >= 1.0, "bicubic downsampling needs scale >= 1");
  const Index out_size = floor_slack(static_cast<double>(in_size) / scale);
  detail::require(out_size >= 1, "downsampled frame would be empty");
  RowMatrix<double> weights = RowMatrix<double>::Zero(out_size, in_size);
  const double support = 2.0 * scale;
  for (Index i = 0; i < out_size; ++i) {
    const double center = (static_cast<double>(i) + 0.5) * scale - 0.5;
    const auto first = static_cast<Index>(std::floor(center - support));
    const auto last = static_cast<Index>(std::ceil(center + support));
    for (Index j = first; j <= last; ++j) {
      const double w = cubic_kernel((center - static_cast<double>(j)) / scale);
      weights(i, std::clamp<Index>(j, 0, in_size - 1)) += w;
    }
    weights.row(i) /= weights.row(i).sum();
  }
  return weights;
}

IntensityFrame downsample_bicubic(const IntensityFrame& frame, double scale) {
  detail::require(scale >= 1.0, "bicubic downsampling needs scale >= 1");
  const RowMatrix<double> rows = bicubic_weights(frame.height(), scale);
  const RowMatrix<double> cols = bicubic_weights(frame.width(), scale);
  IntensityFrame out;
  out.timestamp = frame.timestamp;
  for (const Plane& c : frame.channels) {
    Plane resampled = (rows * c.matrix() * cols.transpose()).array();
    out.channels.push_back(resampled.cwiseMax(0.0).cwiseMin(1.0));
  }
  return out;
}

std::vector<double> normalize_times(const WindowPlan& plan,
                                    std::span<const std::int64_t> window_timestamps) {
  detail::require(window_timestamps.size() == static_cast<size_t>(plan.window_size),
                  "need one timestamp per window frame");
  for (size_t k = 1; k < window_timestamps.size(); ++k) {
    detail::require(window_timestamps[k] > window_timestamps[k - 1],
                    "window timestamps must strictly increase");
  }
  const auto first = static_cast<double>(window_timestamps.front());
  const double span = static_cast<double>(window_timestamps.back()) - first;
  detail::require(span > 0, "window endpoints share a timestamp");
  std::vector<double> times;
  times.reserve(window_timestamps.size());
  for (std::int64_t t : window_timestamps) times.push_back((static_cast<double>(t) - first) / span);
  times.back() = 1.0;
  return times;
}

namespace {

std::string join(const std::vector<int>& values) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

int parse_int(std::string_view text) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw FormatError("bad integer '" + std::string(text) + "' in manifest");
  }
  return value;
}

std::vector<int> parse_list(std::string_view text) {
  std::vector<int> values;
  if (text.empty()) return values;
  size_t pos = 0;
  while (true) {
    const size_t comma = text.find(',', pos);
    values.push_back(parse_int(text.substr(pos, comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return values;
}

std::string_view strip_key(std::string_view token, std::string_view key) {
  if (!token.starts_with(key)) {
    throw FormatError("manifest field '" + std::string(token) + "' lacks '" + std::string(key) + "'");
  }
  return token.substr(key.size());
}

}  // namespace

std::string format_manifest_line(const WindowPlan& plan) {
  std::ostringstream os;
  os << plan.start << ' ' << plan.window_size << ' ' << plan.inputs << ' ' << plan.skip
     << " inputs=" << join(plan.input_indices) << " gts=" << join(plan.gt_indices);
  return os.str();
}

WindowPlan parse_manifest_line(std::string_view line) {
  std::vector<std::string_view> tokens;
  size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && line[pos] == ' ') ++pos;
    if (pos >= line.size()) break;
    size_t end = line.find(' ', pos);
    if (end == std::string_view::npos) end = line.size();
    tokens.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  if (tokens.size() != 6) throw FormatError("manifest line needs 6 fields");
  WindowPlan plan;
  plan.start = parse_int(tokens[0]);
  plan.window_size = parse_int(tokens[1]);
  plan.inputs = parse_int(tokens[2]);
  plan.skip = parse_int(tokens[3]);
  plan.input_indices = parse_list(strip_key(tokens[4], "inputs="));
  plan.gt_indices = parse_list(strip_key(tokens[5], "gts="));
  if (plan.inputs < 2 || plan.skip < 0 || plan.window_size != window_size(plan.inputs, plan.skip) ||
      plan.input_indices.size() != static_cast<size_t>(plan.inputs)) {
    throw FormatError("manifest line violates W = (N_in - 1)(S + 1) + 1");
  }
  return plan;
}

void write_manifest(std::ostream& os, std::span<const WindowPlan> plans) {
  for (const WindowPlan& p : plans) os << format_manifest_line(p) << '\n';
}

std::vector<WindowPlan> read_manifest(std::istream& is) {
  std::vector<WindowPlan> plans;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line.front() == '#') continue;
    plans.push_back(parse_manifest_line(line));
  }
  return plans;
}

}  // namespace evtpr
