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

#include "evtpr/event_model.hpp"
#include "evtpr/tensor.hpp"

namespace evtpr {

enum class ChannelMode { kYOnly, kRgb };

struct MetricReport {
  double psnr = 0.0;  ///< dB; +infinity for identical inputs
  double ssim = 0.0;
  ChannelMode channel_mode = ChannelMode::kYOnly;
};

/// BT.601 luma: 0.299 R + 0.587 G + 0.114 B.
Plane rgb_to_y(const IntensityFrame& frame);

/// 10 log10(peak^2 / MSE); +infinity when the inputs are identical.
double psnr(const Plane& a, const Plane& b, double peak = 1.0);

/// Mean local SSIM (11x11 Gaussian window, sigma 1.5, K1 0.01, K2 0.03,
/// dynamic range 1) over all fully-covered window positions.
double ssim(const Plane& a, const Plane& b);

/// Y-only mode compares luma planes; RGB mode pools squared error over all
/// channels for PSNR and averages per-channel SSIM. border_crop pixels are
/// dropped from every side first.
MetricReport compare_frames(const IntensityFrame& pred, const IntensityFrame& gt, ChannelMode mode,
                            int border_crop = 0);

}  // namespace evtpr
