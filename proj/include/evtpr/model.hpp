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

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evtpr/event_model.hpp"
#include "evtpr/kernels.hpp"
#include "evtpr/representations.hpp"
#include "evtpr/tensor.hpp"

namespace evtpr {

/// Sizes of the forward pipeline. voxel_bins (temporal bins of the holistic
/// event segments) and window_size (attention window side) are unrelated.
struct PipelineConfig {
  int inputs = 4;             ///< N_in
  int channels = 8;           ///< C_r, regional feature width
  int holistic_channels = 8;  ///< width inside the holistic encoder/decoder
  int temporal_dim = 640;     ///< C_t
  int compressed_dim = 64;    ///< C_ts
  int window_size = 4;        ///< M
  int heads = 2;
  int mlp_ratio = 2;
  int voxel_bins = 5;
  TprParams tpr{7, 2, 3.0, 0.0};  ///< half_window 0 means half the input span
  int regional_blocks = 4;
  int encoder_depth = 1;  ///< blocks per encoder/decoder stage
  int temporal_hidden = 64;
  int decoder_hidden = 64;

  /// Throws InvalidInput unless the sizes chain for an H x W input.
  void validate(Index height, Index width) const;
};

using LinearF = Linear<float>;
using ConvF = Conv2d<float>;
using StebF = StebParams<float>;
using MlpF = Mlp<float>;

struct RegionalParams {
  ConvF lift;  ///< 1x1, M_p -> C_r
  std::vector<StebF> blocks;
};

inline constexpr int kScales = 3;

struct HolisticParams {
  ConvF frame_lift;  ///< 3x3, 3 -> C_h
  ConvF event_lift;  ///< 3x3, voxel_bins -> C_h
  std::array<std::vector<StebF>, kScales> encoder;
  std::array<ConvF, kScales> down;
  std::array<std::vector<StebF>, kScales> decoder;
  std::array<ConvF, kScales> up;
  std::vector<StebF> head;
  ConvF output;  ///< 1x1, (2 N_in - 1) C_h -> L C_r
};

struct ModelParams {
  RegionalParams regional;
  HolisticParams holistic;
  ConvF fusion;    ///< 1x1, L C_r -> C_t
  MlpF temporal;   ///< 1 -> hidden -> C_t
  ConvF compress;  ///< 1x1, C_t -> C_ts
  MlpF decoder;    ///< (C_ts + 2) -> hidden x3 -> 3
};

/// Allocates every parameter for config with seeded uniform(+-1/sqrt(fan_in))
/// weights and biases; layer norms start at gamma 1, beta 0.
ModelParams init_params(const PipelineConfig& config, std::uint64_t seed);

/// Visits every parameter as (name, matrix) in a fixed order. Linear layers
/// appear as "<name>.weight" (out x in) and "<name>.bias" (out x 1).
template <typename Visitor>
void for_each_parameter(ModelParams& params, Visitor&& visit);

std::vector<std::pair<std::string, Tensor>> parameter_tensors(const ModelParams& params);

/// Writes <dir>/manifest.txt ("name file dims" per line) and one tensor file
/// per parameter.
void save_parameters(const ModelParams& params, const std::filesystem::path& dir);

/// Loads parameters saved by save_parameters; shapes must match config.
ModelParams load_parameters(const PipelineConfig& config, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Feature extraction

struct ForwardTrace {
  int holistic_calls = 0;
  int regional_calls = 0;
  AttentionStats attention;
  std::vector<std::pair<std::string, Shape>> stage_shapes;

  void record(std::string stage, const Shape& shape);
};

/// Largest window side usable at H x W: min(M, H, W).
Index effective_window(Index m, Index height, Index width);

/// Alternating plain / shifted blocks. Shifting is skipped when one window
/// covers the whole map.
Tensor run_blocks(const Tensor& x, std::span<const StebF> blocks, Index window,
                  AttentionStats* stats);

/// L x M_p x H x W pyramid -> L x C_r x H x W features.
Tensor regional_extractor_forward(const Tensor& pyramid, const RegionalParams& params,
                                  const PipelineConfig& config, ForwardTrace* trace = nullptr);

/// N_in frames (N_in x 3 x H x W) and N_in - 1 voxelized segments
/// ((N_in - 1) x voxel_bins x H x W) -> (L C_r) x H x W holistic features.
Tensor holistic_extractor_forward(const Tensor& frames, const Tensor& segments,
                                  const HolisticParams& params, const PipelineConfig& config,
                                  ForwardTrace* trace = nullptr);

/// conv1x1(F_g + F_t^l). F_t^l may be L x C_r x H x W; it is viewed as
/// (L C_r) x H x W.
Tensor fuse_features(const Tensor& holistic, const Tensor& regional, const ConvF& conv);

// ---------------------------------------------------------------------------
// Decoding

/// Temporal attention vector a(t) in R^{C_t}.
Vector<float> temporal_attention(double t, const MlpF& mlp);

/// Channel-wise a ⊙ R_t.
Tensor apply_temporal_attention(const Vector<float>& attention, const Tensor& fused);

/// compress(a(t) ⊙ R_t): C_t x H x W -> C_ts x H x W.
Tensor temporal_embed(double t, const MlpF& mlp, const Tensor& fused, const ConvF& compress);

/// One of the four cells consulted for a query.
struct Neighbor {
  Index row = 0;        ///< clamped feature-grid row
  Index col = 0;        ///< clamped feature-grid column
  double offset_x = 0;  ///< query minus (unclamped) cell center, in cells
  double offset_y = 0;
  double weight = 0;  ///< area of the diagonally opposite rectangle
};

/// Cells are unit squares with centers at (j + 0.5, i + 0.5); queries are
/// (x, y) in [0, w] x [0, h]. Weights are bilinear and sum to 1.
std::array<Neighbor, 4> query_neighbors(double x, double y, Index height, Index width);

/// RGB per query: each neighbor decodes MLP(feature ∥ offset) and the four
/// candidates are blended with the area weights. Returns queries x 3.
RowMatrix<float> spatial_decode(const Tensor& features, std::span<const std::array<double, 2>> queries,
                                const MlpF& decoder);

/// Decodes a floor(s h) x floor(s w) x 3 frame, querying pixel centers.
Tensor decode_frame(const Tensor& features, double scale, const MlpF& decoder, int threads = 1);

// ---------------------------------------------------------------------------
// End to end

struct PipelineResult {
  Tensor frames;  ///< N_out x sH x sW x 3
  ForwardTrace trace;
};

/// I_out = f(I_in, E, s, T). The holistic extractor runs once; everything
/// downstream of it runs per requested time. Output is independent of
/// threads.
PipelineResult pipeline_forward(std::span<const IntensityFrame> frames, const EventStream& events,
                                double scale, std::span<const double> times,
                                const PipelineConfig& config, const ModelParams& params,
                                int threads = 1);

/// mean(sqrt((pred - gt)^2 + eps^2)).
double charbonnier_loss(const Tensor& pred, const Tensor& gt, double eps = 1e-3);

// ---------------------------------------------------------------------------

namespace detail {

template <typename Visitor>
void visit_linear(const std::string& name, LinearF& layer, Visitor& visit) {
  visit(name + ".weight", layer.weight);
  visit(name + ".bias", layer.bias);
}

template <typename Visitor>
void visit_steb(const std::string& name, StebF& block, Visitor& visit) {
  visit(name + ".norm1.gamma", block.norm1_gamma);
  visit(name + ".norm1.beta", block.norm1_beta);
  visit_linear(name + ".attn.query", block.attention.query, visit);
  visit_linear(name + ".attn.key", block.attention.key, visit);
  visit_linear(name + ".attn.value", block.attention.value, visit);
  visit_linear(name + ".attn.output", block.attention.output, visit);
  visit(name + ".norm2.gamma", block.norm2_gamma);
  visit(name + ".norm2.beta", block.norm2_beta);
  visit_linear(name + ".fc1", block.fc1, visit);
  visit_linear(name + ".fc2", block.fc2, visit);
}

template <typename Visitor>
void visit_blocks(const std::string& name, std::vector<StebF>& blocks, Visitor& visit) {
  for (size_t i = 0; i < blocks.size(); ++i) visit_steb(name + "." + std::to_string(i), blocks[i], visit);
}

template <typename Visitor>
void visit_mlp(const std::string& name, MlpF& mlp, Visitor& visit) {
  for (size_t i = 0; i < mlp.layers.size(); ++i) visit_linear(name + "." + std::to_string(i), mlp.layers[i], visit);
}

}  // namespace detail

template <typename Visitor>
void for_each_parameter(ModelParams& params, Visitor&& visit) {
  using detail::visit_blocks;
  using detail::visit_linear;
  using detail::visit_mlp;
  visit_linear("regional.lift", params.regional.lift.kernel, visit);
  visit_blocks("regional.blocks", params.regional.blocks, visit);
  auto& h = params.holistic;
  visit_linear("holistic.frame_lift", h.frame_lift.kernel, visit);
  visit_linear("holistic.event_lift", h.event_lift.kernel, visit);
  for (int s = 0; s < kScales; ++s) {
    const std::string stage = std::to_string(s);
    visit_blocks("holistic.encoder." + stage, h.encoder[s], visit);
    visit_linear("holistic.down." + stage, h.down[s].kernel, visit);
  }
  for (int s = 0; s < kScales; ++s) {
    const std::string stage = std::to_string(s);
    visit_blocks("holistic.decoder." + stage, h.decoder[s], visit);
    visit_linear("holistic.up." + stage, h.up[s].kernel, visit);
  }
  visit_blocks("holistic.head", h.head, visit);
  visit_linear("holistic.output", h.output.kernel, visit);
  visit_linear("fusion", params.fusion.kernel, visit);
  visit_mlp("temporal", params.temporal, visit);
  visit_linear("compress", params.compress.kernel, visit);
  visit_mlp("decoder", params.decoder, visit);
}

}  // namespace evtpr
