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

#include "evtpr/metrics.hpp"

#include <cmath>
#include <limits>

#include "evtpr/errors.hpp"

namespace evtpr {
namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

Eigen::VectorXd gaussian_taps() {
  Eigen::VectorXd taps(kWindow);
  const int half = kWindow / 2;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - half;
    taps[i] = std::exp(-d * d / (2 * kSigma * kSigma));
  }
  return taps / taps.sum();
}

// "valid" separable filtering: output is (rows-10) x (cols-10).
Plane filter_valid(const Plane& in, const Eigen::VectorXd& taps) {
  const Index out_rows = in.rows() - kWindow + 1;
  const Index out_cols = in.cols() - kWindow + 1;
  Plane horizontal(in.rows(), out_cols);
  for (Index c = 0; c < out_cols; ++c) {
    horizontal.col(c) = (in.middleCols(c, kWindow).matrix() * taps).array();
  }
  Plane out(out_rows, out_cols);
  for (Index r = 0; r < out_rows; ++r) {
    out.row(r) = (taps.transpose() * horizontal.middleRows(r, kWindow).matrix()).array();
  }
  return out;
}

void require_same_shape(const Plane& a, const Plane& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "image shapes differ");
}

Plane crop(const Plane& p, int border) {
  if (border == 0) return p;
  detail::require(border > 0 && p.rows() > 2 * border && p.cols() > 2 * border,
                  "border crop removes the whole image");
  return p.block(border, border, p.rows() - 2 * border, p.cols() - 2 * border);
}

}  // namespace

Plane rgb_to_y(const IntensityFrame& frame) {
  detail::require(frame.channel_count() == 3, "rgb_to_y expects a 3-channel frame");
  return 0.299 * frame.channels[0] + 0.587 * frame.channels[1] + 0.114 * frame.channels[2];
}

double psnr(const Plane& a, const Plane& b, double peak) {
  require_same_shape(a, b);
  detail::require(peak > 0, "psnr peak must be positive");
  const double mse = (a - b).square().mean();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Plane& a, const Plane& b) {
  require_same_shape(a, b);
  detail::require(a.rows() >= kWindow && a.cols() >= kWindow,
                  "ssim needs images of at least 11x11");
  static const Eigen::VectorXd taps = gaussian_taps();
  const Plane mu_a = filter_valid(a, taps);
  const Plane mu_b = filter_valid(b, taps);
  const Plane var_a = filter_valid(a * a, taps) - mu_a.square();
  const Plane var_b = filter_valid(b * b, taps) - mu_b.square();
  const Plane cov = filter_valid(a * b, taps) - mu_a * mu_b;
  const Plane map = ((2 * mu_a * mu_b + kC1) * (2 * cov + kC2)) /
                    ((mu_a.square() + mu_b.square() + kC1) * (var_a + var_b + kC2));
  return map.mean();
}

MetricReport compare_frames(const IntensityFrame& pred, const IntensityFrame& gt, ChannelMode mode,
                            int border_crop) {
  detail::require(pred.channel_count() == gt.channel_count(), "channel counts differ");
  MetricReport report;
  report.channel_mode = mode;
  if (mode == ChannelMode::kYOnly || pred.channel_count() == 1) {
    const Plane a = crop(luma(pred), border_crop);
    const Plane b = crop(luma(gt), border_crop);
    report.psnr = psnr(a, b);
    report.ssim = ssim(a, b);
    return report;
  }
  double squared_error = 0.0;
  Index count = 0;
  double ssim_sum = 0.0;
  for (int c = 0; c < pred.channel_count(); ++c) {
    const Plane a = crop(pred.channels[c], border_crop);
    const Plane b = crop(gt.channels[c], border_crop);
    require_same_shape(a, b);
    squared_error += (a - b).square().sum();
    count += a.size();
    ssim_sum += ssim(a, b);
  }
  const double mse = squared_error / static_cast<double>(count);
  report.psnr = mse == 0.0 ? std::numeric_limits<double>::infinity() : -10.0 * std::log10(mse);
  report.ssim = ssim_sum / pred.channel_count();
  return report;
}

}  // namespace evtpr
