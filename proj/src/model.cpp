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

#include "evtpr/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "evtpr/dataset.hpp"
#include "evtpr/errors.hpp"
#include "evtpr/io_formats.hpp"
#include "evtpr/parallel.hpp"

namespace evtpr {

void PipelineConfig::validate(Index height, Index width) const {
  using detail::require;
  require(inputs >= 2, "pipeline needs at least two input frames");
  require(channels > 0 && holistic_channels > 0, "feature widths must be positive");
  require(temporal_dim > 0 && compressed_dim > 0, "temporal dims must be positive");
  require(heads > 0 && channels % heads == 0 && holistic_channels % heads == 0,
          "heads must divide the feature widths");
  require(mlp_ratio > 0 && voxel_bins > 0, "mlp ratio and voxel bins must be positive");
  require(tpr.levels >= 1 && tpr.moments >= 1 && tpr.attenuation > 1.0,
          "pyramid needs L >= 1, M_p >= 1, r > 1");
  require(regional_blocks >= 1 && encoder_depth >= 1, "block counts must be positive");
  require(temporal_hidden > 0 && decoder_hidden > 0, "hidden widths must be positive");
  require(window_size > 0 && height % window_size == 0 && width % window_size == 0,
          "window size must divide the input height and width");
  require(height % 8 == 0 && width % 8 == 0, "input height and width must be multiples of 8");
  Index h = height, w = width;
  for (int s = 0; s <= kScales; ++s) {
    const Index m = effective_window(window_size, h, w);
    require(h % m == 0 && w % m == 0,
            "window size does not tile the " + std::to_string(h) + "x" + std::to_string(w) +
                " encoder scale");
    h /= 2;
    w /= 2;
  }
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

LinearF make_linear(Index in, Index out) {
  return {RowMatrix<float>::Zero(out, in), Vector<float>::Zero(out)};
}

ConvF make_conv(Index in, Index out, Index size, Index stride, Index padding) {
  return {make_linear(in * size * size, out), size, stride, padding};
}

StebF make_steb(Index channels, Index heads, Index mlp_ratio) {
  StebF block;
  block.norm1_gamma = Vector<float>::Ones(channels);
  block.norm1_beta = Vector<float>::Zero(channels);
  block.attention.heads = heads;
  block.attention.query = make_linear(channels, channels);
  block.attention.key = make_linear(channels, channels);
  block.attention.value = make_linear(channels, channels);
  block.attention.output = make_linear(channels, channels);
  block.norm2_gamma = Vector<float>::Ones(channels);
  block.norm2_beta = Vector<float>::Zero(channels);
  block.fc1 = make_linear(channels, channels * mlp_ratio);
  block.fc2 = make_linear(channels * mlp_ratio, channels);
  return block;
}

std::vector<StebF> make_blocks(int count, Index channels, Index heads, Index mlp_ratio) {
  return std::vector<StebF>(static_cast<size_t>(count), make_steb(channels, heads, mlp_ratio));
}

MlpF make_mlp(const std::vector<Index>& widths, Activation hidden, Activation last) {
  MlpF mlp;
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    mlp.layers.push_back(make_linear(widths[i], widths[i + 1]));
    mlp.activations.push_back(i + 2 == widths.size() ? last : hidden);
  }
  return mlp;
}

ModelParams allocate_params(const PipelineConfig& c) {
  ModelParams p;
  p.regional.lift = make_conv(c.tpr.moments, c.channels, 1, 1, 0);
  p.regional.blocks = make_blocks(c.regional_blocks, c.channels, c.heads, c.mlp_ratio);

  auto& h = p.holistic;
  const Index ch = c.holistic_channels;
  h.frame_lift = make_conv(3, ch, 3, 1, 1);
  h.event_lift = make_conv(c.voxel_bins, ch, 3, 1, 1);
  for (int s = 0; s < kScales; ++s) {
    h.encoder[s] = make_blocks(c.encoder_depth, ch, c.heads, c.mlp_ratio);
    h.down[s] = make_conv(ch, ch, 2, 2, 0);
    h.decoder[s] = make_blocks(c.encoder_depth, ch, c.heads, c.mlp_ratio);
    h.up[s] = make_conv(ch, ch, 3, 1, 1);
  }
  h.head = make_blocks(c.encoder_depth, ch, c.heads, c.mlp_ratio);
  const Index sequence = 2 * c.inputs - 1;
  const Index regional_width = static_cast<Index>(c.tpr.levels) * c.channels;
  h.output = make_conv(sequence * ch, regional_width, 1, 1, 0);

  p.fusion = make_conv(regional_width, c.temporal_dim, 1, 1, 0);
  p.temporal = make_mlp({1, c.temporal_hidden, c.temporal_dim}, Activation::kRelu, Activation::kNone);
  p.compress = make_conv(c.temporal_dim, c.compressed_dim, 1, 1, 0);
  p.decoder = make_mlp({c.compressed_dim + 2, c.decoder_hidden, c.decoder_hidden, c.decoder_hidden, 3},
                       Activation::kRelu, Activation::kNone);
  return p;
}

}  // namespace

ModelParams init_params(const PipelineConfig& config, std::uint64_t seed) {
  ModelParams params = allocate_params(config);
  Rng rng(seed);
  double bound = 1.0;
  for_each_parameter(params, [&](const std::string& name, auto& m) {
    if (name.ends_with(".gamma") || name.ends_with(".beta")) return;
    // A layer's weight (out x in) precedes its bias; both share 1/sqrt(fan_in).
    if (name.ends_with(".weight")) bound = 1.0 / std::sqrt(static_cast<double>(m.cols()));
    for (Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<float>(uniform_real(rng, -bound, bound));
    }
  });
  return params;
}

std::vector<std::pair<std::string, Tensor>> parameter_tensors(const ModelParams& params) {
  std::vector<std::pair<std::string, Tensor>> out;
  auto& mutable_params = const_cast<ModelParams&>(params);
  for_each_parameter(mutable_params, [&](const std::string& name, auto& m) {
    Shape shape = m.cols() == 1 ? Shape{m.rows()} : Shape{m.rows(), m.cols()};
    Tensor t(shape);
    std::copy(m.data(), m.data() + m.size(), t.data());
    out.emplace_back(name, std::move(t));
  });
  return out;
}

void save_parameters(const ModelParams& params, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
  if (!manifest) throw UsageError("cannot write parameter manifest in '" + dir.string() + "'");
  for (const auto& [name, tensor] : parameter_tensors(params)) {
    const std::string file = name + ".tns";
    write_tensor(dir / file, tensor);
    manifest << name << ' ' << file << ' ' << shape_string(tensor.shape()) << '\n';
  }
}

ModelParams load_parameters(const PipelineConfig& config, const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw UsageError("missing parameter manifest in '" + dir.string() + "'");
  std::map<std::string, std::string> files;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string name, file;
    if (!(row >> name >> file)) throw FormatError("malformed parameter manifest line '" + line + "'");
    files[name] = file;
  }
  ModelParams params = allocate_params(config);
  for_each_parameter(params, [&](const std::string& name, auto& m) {
    auto it = files.find(name);
    if (it == files.end()) throw FormatError("parameter '" + name + "' missing from manifest");
    const Tensor t = read_tensor(dir / it->second);
    if (t.size() != m.size() || t.dim(0) != m.rows()) {
      throw FormatError("parameter '" + name + "' has shape " + shape_string(t.shape()) +
                        ", config expects [" + std::to_string(m.rows()) + "," +
                        std::to_string(m.cols()) + "]");
    }
    std::copy(t.data(), t.data() + t.size(), m.data());
  });
  return params;
}

// ---------------------------------------------------------------------------
// Feature extraction

void ForwardTrace::record(std::string stage, const Shape& shape) {
  stage_shapes.emplace_back(std::move(stage), shape);
}

Index effective_window(Index m, Index height, Index width) {
  return std::min({m, height, width});
}

Tensor run_blocks(const Tensor& x, std::span<const StebF> blocks, Index window,
                  AttentionStats* stats) {
  const Index height = x.dim(2), width = x.dim(3);
  const Index m = effective_window(window, height, width);
  const bool can_shift = m < std::min(height, width);
  Tensor y = x;
  for (size_t i = 0; i < blocks.size(); ++i) {
    y = steb_forward(y, blocks[i], m, can_shift && (i % 2 == 1), stats);
  }
  return y;
}

Tensor regional_extractor_forward(const Tensor& pyramid, const RegionalParams& params,
                                  const PipelineConfig& config, ForwardTrace* trace) {
  detail::require(pyramid.ndim() == 4, "regional extractor expects L x M_p x H x W");
  AttentionStats stats;
  Tensor lifted = conv2d(pyramid, params.lift);
  Tensor out = run_blocks(lifted, params.blocks, config.window_size, &stats);
  if (trace) {
    ++trace->regional_calls;
    trace->attention.merge(stats);
  }
  return out;
}

Tensor holistic_extractor_forward(const Tensor& frames, const Tensor& segments,
                                  const HolisticParams& params, const PipelineConfig& config,
                                  ForwardTrace* trace) {
  detail::require(frames.ndim() == 4 && frames.dim(1) == 3, "frames must be N_in x 3 x H x W");
  detail::require(segments.ndim() == 4 && segments.dim(0) == frames.dim(0) - 1,
                  "holistic extractor needs N_in - 1 event segments");
  detail::require(segments.dim(2) == frames.dim(2) && segments.dim(3) == frames.dim(3),
                  "frames and event segments differ in size");
  const Index inputs = frames.dim(0), height = frames.dim(2), width = frames.dim(3);
  const Index channels = params.frame_lift.out_channels();
  const Index plane = channels * height * width;

  const Tensor frame_features = conv2d(frames, params.frame_lift);
  const Tensor event_features = conv2d(segments, params.event_lift);

  // Interleave frame 0, segment 0, frame 1, ..., frame N-1.
  const Index sequence = 2 * inputs - 1;
  Tensor x({sequence, channels, height, width});
  for (Index i = 0; i < sequence; ++i) {
    const Tensor& src = i % 2 == 0 ? frame_features : event_features;
    x.storage().segment(i * plane, plane) = src.storage().segment((i / 2) * plane, plane);
  }

  AttentionStats stats;
  std::array<Tensor, kScales> skips;
  for (int s = 0; s < kScales; ++s) {
    x = run_blocks(x, params.encoder[s], config.window_size, &stats);
    skips[s] = x;
    x = downsample_half(x, params.down[s]);
  }
  for (int s = 0; s < kScales; ++s) {
    x = run_blocks(x, params.decoder[s], config.window_size, &stats);
    x = upsample_double(x, params.up[s]);
    x.storage() += skips[kScales - 1 - s].storage();
  }
  x = run_blocks(x, params.head, config.window_size, &stats);

  Tensor out = conv2d(x.reshaped({sequence * channels, height, width}), params.output);
  if (trace) {
    ++trace->holistic_calls;
    trace->attention.merge(stats);
  }
  return out;
}

Tensor fuse_features(const Tensor& holistic, const Tensor& regional, const ConvF& conv) {
  detail::require(holistic.ndim() == 3, "holistic features must be C x H x W");
  detail::require(regional.size() == holistic.size() &&
                      regional.dim(regional.ndim() - 1) == holistic.dim(2) &&
                      regional.dim(regional.ndim() - 2) == holistic.dim(1),
                  "regional and holistic features differ in shape");
  Tensor sum = regional.reshaped(holistic.shape());
  sum.storage() += holistic.storage();
  return conv2d(sum, conv);
}

// ---------------------------------------------------------------------------
// Decoding

Vector<float> temporal_attention(double t, const MlpF& mlp) {
  detail::require(t >= 0.0 && t <= 1.0, "time must lie in [0, 1]");
  RowMatrix<float> input(1, 1);
  input(0, 0) = static_cast<float>(t);
  return mlp(input).row(0).transpose();
}

Tensor apply_temporal_attention(const Vector<float>& attention, const Tensor& fused) {
  detail::require(fused.ndim() == 3 && fused.dim(0) == attention.size(),
                  "temporal attention width must equal the fused channel count");
  Tensor out = fused;
  const Index pixels = fused.dim(1) * fused.dim(2);
  out.matrix(fused.dim(0), pixels).array().colwise() *= attention.array();
  return out;
}

Tensor temporal_embed(double t, const MlpF& mlp, const Tensor& fused, const ConvF& compress) {
  return conv2d(apply_temporal_attention(temporal_attention(t, mlp), fused), compress);
}

std::array<Neighbor, 4> query_neighbors(double x, double y, Index height, Index width) {
  detail::require(x >= 0.0 && x <= static_cast<double>(width) && y >= 0.0 &&
                      y <= static_cast<double>(height),
                  "query lies outside the feature grid");
  const double fx = x - 0.5, fy = y - 0.5;
  const double col0 = std::floor(fx), row0 = std::floor(fy);
  std::array<Neighbor, 4> out;
  for (int k = 0; k < 4; ++k) {
    const int dy = k / 2, dx = k % 2;
    const double col = col0 + dx, row = row0 + dy;
    // Opposite corner: the other column / row of the 2x2 stencil.
    const double opp_col = col0 + (1 - dx), opp_row = row0 + (1 - dy);
    Neighbor& n = out[k];
    n.col = std::clamp(static_cast<Index>(col), Index{0}, width - 1);
    n.row = std::clamp(static_cast<Index>(row), Index{0}, height - 1);
    n.offset_x = fx - col;
    n.offset_y = fy - row;
    n.weight = std::abs(fx - opp_col) * std::abs(fy - opp_row);
  }
  return out;
}

RowMatrix<float> spatial_decode(const Tensor& features, std::span<const std::array<double, 2>> queries,
                                const MlpF& decoder) {
  detail::require(features.ndim() == 3, "features must be C x h x w");
  const Index channels = features.dim(0), height = features.dim(1), width = features.dim(2);
  detail::require(!decoder.layers.empty() && decoder.layers.front().in_features() == channels + 2,
                  "decoder input must be feature width + 2");
  const auto grid = features.matrix(channels, height * width);
  const auto count = static_cast<Index>(queries.size());
  RowMatrix<float> inputs(4 * count, channels + 2);
  std::vector<double> weights(static_cast<size_t>(4 * count));
  for (Index q = 0; q < count; ++q) {
    const auto neighbors = query_neighbors(queries[q][0], queries[q][1], height, width);
    for (int k = 0; k < 4; ++k) {
      const Neighbor& n = neighbors[k];
      const Index r = 4 * q + k;
      inputs.row(r).head(channels) = grid.col(n.row * width + n.col).transpose();
      inputs(r, channels) = static_cast<float>(n.offset_x);
      inputs(r, channels + 1) = static_cast<float>(n.offset_y);
      weights[static_cast<size_t>(r)] = n.weight;
    }
  }
  const RowMatrix<float> candidates = decoder(inputs);
  detail::require(candidates.cols() == 3, "decoder must emit RGB");
  RowMatrix<float> out(count, 3);
  for (Index q = 0; q < count; ++q) {
    for (Index c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += weights[static_cast<size_t>(4 * q + k)] * candidates(4 * q + k, c);
      out(q, c) = static_cast<float>(acc);
    }
  }
  if (!out.allFinite()) throw NumericError("non-finite value in spatial decoding");
  return out;
}

Tensor decode_frame(const Tensor& features, double scale, const MlpF& decoder, int threads) {
  detail::require(features.ndim() == 3, "features must be C x h x w");
  detail::require(scale > 0.0, "scale must be positive");
  const Index height = features.dim(1), width = features.dim(2);
  const Index out_h = floor_slack(scale * static_cast<double>(height));
  const Index out_w = floor_slack(scale * static_cast<double>(width));
  detail::require(out_h >= 1 && out_w >= 1, "decoded frame would be empty");
  Tensor out({out_h, out_w, 3});
  // One decoder batch per output row keeps results independent of threads.
  parallel_for(out_h, threads, [&](std::ptrdiff_t i) {
    std::vector<std::array<double, 2>> queries(static_cast<size_t>(out_w));
    const double y = (static_cast<double>(i) + 0.5) * static_cast<double>(height) / static_cast<double>(out_h);
    for (Index j = 0; j < out_w; ++j) {
      queries[static_cast<size_t>(j)] = {(static_cast<double>(j) + 0.5) * static_cast<double>(width) / static_cast<double>(out_w), y};
    }
    out.slice(i, out_w, 3) = spatial_decode(features, queries, decoder);
  });
  return out;
}

// ---------------------------------------------------------------------------
// End to end

namespace {

Tensor stack_frames(std::span<const IntensityFrame> frames) {
  const Index height = frames.front().height(), width = frames.front().width();
  const Index plane = height * width;
  Tensor out({static_cast<Index>(frames.size()), 3, height, width});
  for (size_t i = 0; i < frames.size(); ++i) {
    const IntensityFrame& f = frames[i];
    for (Index c = 0; c < 3; ++c) {
      const Plane& src = f.channels[f.channel_count() == 3 ? c : 0];
      out.storage().segment((static_cast<Index>(i) * 3 + c) * plane, plane) =
          Eigen::Map<const Vector<double>>(src.data(), plane).cast<float>();
    }
  }
  return out;
}

Tensor voxel_segments(const EventStream& events, std::span<const IntensityFrame> frames, int bins,
                      int threads) {
  const Index height = events.height, width = events.width;
  const Index per_segment = bins * height * width;
  Tensor out({static_cast<Index>(frames.size()) - 1, bins, height, width});
  for (size_t k = 0; k + 1 < frames.size(); ++k) {
    const std::int64_t t0 = frames[k].timestamp, t1 = frames[k + 1].timestamp;
    // [t0, t1): the closing frame's events belong to the next segment.
    auto first = std::partition_point(events.events.begin(), events.events.end(),
                                      [&](const Event& e) { return e.t < t0; });
    auto last = std::partition_point(first, events.events.end(),
                                     [&](const Event& e) { return e.t < t1; });
    const TensorD grid = accumulate_voxels({first, last}, static_cast<double>(t0),
                                           static_cast<double>(t1), bins, events.height,
                                           events.width, threads);
    out.storage().segment(static_cast<Index>(k) * per_segment, per_segment) = grid.storage().cast<float>();
  }
  return out;
}

}  // namespace

PipelineResult pipeline_forward(std::span<const IntensityFrame> frames, const EventStream& events,
                                double scale, std::span<const double> times,
                                const PipelineConfig& config, const ModelParams& params,
                                int threads) {
  detail::require(frames.size() == static_cast<size_t>(config.inputs),
                  "pipeline expects exactly N_in input frames");
  detail::require(!times.empty(), "pipeline needs at least one output time");
  detail::require(scale > 0.0, "scale must be positive");
  for (double t : times) detail::require(t >= 0.0 && t <= 1.0, "output times must lie in [0, 1]");
  const Index height = frames.front().height(), width = frames.front().width();
  for (const IntensityFrame& f : frames) {
    f.validate();
    detail::require(f.height() == height && f.width() == width, "input frames differ in size");
  }
  for (size_t k = 1; k < frames.size(); ++k) {
    detail::require(frames[k].timestamp > frames[k - 1].timestamp,
                    "input frame timestamps must strictly increase");
  }
  detail::require(events.height == height && events.width == width,
                  "event sensor size differs from the frames");
  config.validate(height, width);

  const auto first_t = static_cast<double>(frames.front().timestamp);
  const double span = static_cast<double>(frames.back().timestamp) - first_t;
  TprParams tpr = config.tpr;
  if (tpr.half_window <= 0.0) tpr.half_window = span / 2.0;

  PipelineResult result;
  ForwardTrace& trace = result.trace;

  const Tensor stacked = stack_frames(frames);
  const Tensor segments = voxel_segments(events, frames, config.voxel_bins, threads);
  trace.record("I_in", stacked.shape());
  trace.record("E_v", segments.shape());
  const Tensor holistic = holistic_extractor_forward(stacked, segments, params.holistic, config, &trace);
  trace.record("F_g", holistic.shape());

  const Index out_h = floor_slack(scale * static_cast<double>(height));
  const Index out_w = floor_slack(scale * static_cast<double>(width));
  result.frames = Tensor({static_cast<Index>(times.size()), out_h, out_w, 3});
  const Index frame_size = out_h * out_w * 3;

  std::vector<ForwardTrace> per_time(times.size());
  parallel_for(static_cast<std::ptrdiff_t>(times.size()), threads, [&](std::ptrdiff_t i) {
    ForwardTrace& local = per_time[static_cast<size_t>(i)];
    const double t = times[static_cast<size_t>(i)];
    const TemporalPyramid pyramid = build_tpr(events, first_t + t * span, tpr);
    const Tensor tpr_tensor = pyramid.data.cast<float>();
    const Tensor regional = regional_extractor_forward(tpr_tensor, params.regional, config, &local);
    const Tensor fused = fuse_features(holistic, regional, params.fusion);
    const Tensor embedded = temporal_embed(t, params.temporal, fused, params.compress);
    const Tensor frame = decode_frame(embedded, scale, params.decoder);
    result.frames.storage().segment(i * frame_size, frame_size) = frame.storage();
    local.record("E_p", tpr_tensor.shape());
    local.record("F_t^l", regional.shape());
    local.record("R_t", fused.shape());
    local.record("R_ts", embedded.shape());
    local.record("I_out[t]", frame.shape());
  });

  for (const ForwardTrace& local : per_time) {
    trace.regional_calls += local.regional_calls;
    trace.attention.merge(local.attention);
  }
  for (const auto& stage : per_time.front().stage_shapes) trace.stage_shapes.push_back(stage);
  trace.record("I_out", result.frames.shape());
  return result;
}

double charbonnier_loss(const Tensor& pred, const Tensor& gt, double eps) {
  detail::require(pred.shape() == gt.shape(), "charbonnier loss needs matching shapes");
  detail::require(eps > 0.0, "charbonnier eps must be positive");
  const auto diff = pred.storage().cast<double>() - gt.storage().cast<double>();
  return (diff.array().square() + eps * eps).sqrt().mean();
}

}  // namespace evtpr
