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
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evtpr/event_model.hpp"

namespace evtpr {

using Rng = std::mt19937_64;

/// One sliding window over a video. Indices are 1-based within the window;
/// start is the 1-based global index of the window's first frame.
struct WindowPlan {
  int start = 1;
  int window_size = 0;  ///< W = (N_in - 1)(S + 1) + 1
  int inputs = 0;       ///< N_in
  int skip = 0;         ///< S
  std::vector<int> input_indices;
  std::vector<int> gt_indices;

  /// (i - 1) / (W - 1) for every ground-truth index.
  std::vector<double> gt_times() const;

  friend bool operator==(const WindowPlan&, const WindowPlan&) = default;
};

int window_size(int inputs, int skip);

/// Windows starting at 1, 1 + stride, ... that fit in total_frames. Every
/// frame of a window is ground truth; inputs are every (S + 1)-th frame.
/// stride defaults to the window size.
std::vector<WindowPlan> plan_windows(int total_frames, int inputs, int skip,
                                     std::optional<int> stride = std::nullopt);

/// count distinct ground-truth indices drawn uniformly without replacement,
/// returned sorted.
std::vector<int> sample_gt_subset(const WindowPlan& plan, int count, Rng& rng);

/// Uniform integer in [0, n).
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

/// Uniform real in [lo, hi], reproducible across standard libraries.
double uniform_real(Rng& rng, double lo, double hi);

/// Upsampling scale s ~ U(1, 8).
double sample_scale(Rng& rng);

struct Rect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;

  friend bool operator==(const Rect&, const Rect&) = default;
};

struct CropPlan {
  double scale = 1.0;
  Rect hr;
  Rect lr;
};

inline constexpr int kCropSize = 512;

/// floor(x) with a small slack so that exact products such as 128 * 4 are
/// not pushed below an integer by rounding.
int floor_slack(double x);

/// Random crop: lr side floor(crop / s), hr side floor(lr * s), hr placed
/// uniformly inside the frame, lr = hr scaled by 1/s (floored).
CropPlan plan_crop(int frame_height, int frame_width, double scale, Rng& rng,
                   int crop_size = kCropSize);

/// Cubic convolution kernel with parameter a.
double cubic_kernel(double x, double a = -0.5);

/// Separable bicubic (a = -0.5) resampling matrix mapping in_size samples to
/// floor(in_size / scale). The kernel is stretched by scale when
/// downsampling and each row is normalized to sum 1; taps clamp to the edge.
RowMatrix<double> bicubic_weights(Index in_size, double scale);

/// floor(H / s) x floor(W / s) bicubic downsample, clamped to [0, 1].
IntensityFrame downsample_bicubic(const IntensityFrame& frame, double scale);

/// Affine map of the window's frame timestamps onto [0, 1].
std::vector<double> normalize_times(const WindowPlan& plan,
                                    std::span<const std::int64_t> window_timestamps);

/// "start W N_in S inputs=i1,i2,... gts=g1,g2,..."
std::string format_manifest_line(const WindowPlan& plan);
WindowPlan parse_manifest_line(std::string_view line);

void write_manifest(std::ostream& os, std::span<const WindowPlan> plans);
std::vector<WindowPlan> read_manifest(std::istream& is);

}  // namespace evtpr
