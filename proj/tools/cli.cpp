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

#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "evtpr/dataset.hpp"
#include "evtpr/errors.hpp"
#include "evtpr/event_model.hpp"
#include "evtpr/io_formats.hpp"
#include "evtpr/metrics.hpp"
#include "evtpr/model.hpp"
#include "evtpr/rational.hpp"
#include "evtpr/representations.hpp"

namespace evtpr::cli {
namespace {

namespace fs = std::filesystem;

int default_threads() {
  if (const char* env = std::getenv("EVTPR_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
  }
  return 1;
}

/// Seconds (decimal, p/q, optional s/ms/us suffix) to integer microseconds.
std::int64_t parse_time_us(const std::string& text) {
  return floor_to_int64(parse_rational(text) * 1000000);
}

std::vector<fs::path> list_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  return paths;
}

std::vector<std::int64_t> read_timestamps(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("missing timestamps file '" + path.string() + "'");
  std::vector<std::int64_t> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      size_t used = 0;
      out.push_back(std::stoll(line, &used));
      if (line.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(line);
    } catch (const std::exception&) {
      throw UsageError("bad timestamp line '" + line + "' in " + path.string());
    }
  }
  return out;
}

/// Frames of a directory with timestamps from a sidecar, one per frame.
std::vector<IntensityFrame> load_clip(const fs::path& dir, const std::string& timestamps_path) {
  const auto paths = list_frames(dir);
  const fs::path sidecar = timestamps_path.empty() ? dir / "timestamps.txt" : fs::path(timestamps_path);
  const auto stamps = read_timestamps(sidecar);
  if (stamps.size() != paths.size()) {
    throw UsageError(std::to_string(paths.size()) + " frames but " + std::to_string(stamps.size()) +
                     " timestamps in " + sidecar.string());
  }
  std::vector<IntensityFrame> frames;
  for (size_t i = 0; i < paths.size(); ++i) {
    frames.push_back(read_frame(paths[i]));
    frames.back().timestamp = stamps[i];
  }
  return frames;
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw UsageError("cannot write '" + path + "'");
  f << text;
}

std::string format_psnr(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

TprParams tpr_params(int levels, int moments, const std::string& attenuation,
                     const std::string& half_window) {
  TprParams p;
  p.levels = levels;
  p.moments = moments;
  p.attenuation = to_double(parse_rational(attenuation));
  p.half_window = half_window.empty() ? 0.0 : to_double(parse_rational(half_window) * 1000000);
  return p;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string frames_dir, timestamps, output, csv;
  double threshold = 0.2;
  double eps = kDefaultLogEps;
};

void cmd_simulate(const SimulateArgs& a, int threads) {
  const auto frames = load_clip(a.frames_dir, a.timestamps);
  if (frames.size() < 2) throw UsageError("simulation needs at least two frames");
  const EventStream stream = simulate_events(frames, a.threshold, a.eps, threads);
  write_events(fs::path(a.output), stream);
  if (!a.csv.empty()) {
    std::ofstream csv(a.csv, std::ios::trunc);
    write_events_csv(csv, stream);
  }
}

struct VoxelizeArgs {
  std::string events, output, t0, t1;
  int bins = 5;
};

void cmd_voxelize(const VoxelizeArgs& a, int threads) {
  const EventStream stream = read_events(fs::path(a.events));
  const std::int64_t t0 = a.t0.empty() ? stream.t_begin : parse_time_us(a.t0);
  // An empty or instantaneous stream still gets a 1 us window.
  const std::int64_t t1 = a.t1.empty() ? std::max(stream.t_end, t0 + 1) : parse_time_us(a.t1);
  const VoxelGrid grid = build_voxel_grid(stream, a.bins, t0, t1, threads);
  write_tensor(fs::path(a.output), grid.data.cast<float>());
}

struct TprArgs {
  std::string events, output, center, half_window = "0.5s", attenuation = "3";
  int levels = 7, moments = 2;
  bool print_granularity = false;
};

void cmd_tpr(const TprArgs& a, int threads, std::ostream& out) {
  if (a.print_granularity) {
    const GranularitySpec granularity = tpr_granularity(parse_rational(a.half_window), a.levels, a.moments,
                                                 parse_rational(a.attenuation));
    out << to_string(granularity.delta_t) << " s\n";
  }
  if (a.events.empty()) {
    if (!a.output.empty()) throw UsageError("tpr -o needs an events file");
    if (!a.print_granularity) throw UsageError("tpr needs an events file or --print-granularity");
    return;
  }
  const EventStream stream = read_events(fs::path(a.events));
  const TprParams params = tpr_params(a.levels, a.moments, a.attenuation, a.half_window);
  const double center = a.center.empty()
                            ? 0.5 * static_cast<double>(stream.t_begin + stream.t_end)
                            : to_double(parse_rational(a.center) * 1000000);
  const TemporalPyramid pyramid = build_tpr(stream, center, params, threads);
  if (!a.output.empty()) write_tensor(fs::path(a.output), pyramid.data.cast<float>());
}

struct ReconstructArgs {
  std::string frame, events, output, log_output, frame_time, at;
  double threshold = 0.2;
  double eps = kDefaultLogEps;
};

void cmd_reconstruct(const ReconstructArgs& a) {
  const EventStream stream = read_events(fs::path(a.events));
  IntensityFrame frame = read_frame(a.frame);
  frame.timestamp = a.frame_time.empty() ? stream.t_begin : parse_time_us(a.frame_time);
  const std::int64_t t = parse_time_us(a.at);
  const Plane log_field = reconstruct_log_intensity(frame, stream, t, a.threshold, a.eps);
  IntensityFrame result;
  result.timestamp = t;
  result.channels.push_back((log_field.exp() - a.eps).cwiseMax(0.0).cwiseMin(1.0));
  write_frame(a.output, result);
  if (!a.log_output.empty()) {
    Tensor field({log_field.rows(), log_field.cols()});
    field.storage() = Eigen::Map<const Vector<double>>(log_field.data(), log_field.size()).cast<float>();
    write_tensor(fs::path(a.log_output), field);
  }
}

struct PlanArgs {
  int frames = 0, inputs = 4, skip = 7;
  std::optional<int> stride, gt_count;
  std::uint64_t seed = 0;
  std::string output;
};

void cmd_plan(const PlanArgs& a, std::ostream& out) {
  auto plans = plan_windows(a.frames, a.inputs, a.skip, a.stride);
  if (a.gt_count) {
    Rng rng(a.seed);
    for (WindowPlan& p : plans) p.gt_indices = sample_gt_subset(p, *a.gt_count, rng);
  }
  std::ostringstream text;
  write_manifest(text, plans);
  write_text(a.output, text.str(), out);
}

struct PipelineArgs {
  std::string frames_dir, events, output, times = "0", timestamps, params_dir, save_params;
  double scale = 1.0;
  std::uint64_t seed = 0;
  PipelineConfig config;
  std::string attenuation = "3", half_window;
};

void cmd_pipeline(PipelineArgs a, int threads) {
  const auto frames = load_clip(a.frames_dir, a.timestamps);
  const EventStream stream = read_events(fs::path(a.events));
  a.config.inputs = static_cast<int>(frames.size());
  a.config.tpr.attenuation = to_double(parse_rational(a.attenuation));
  a.config.tpr.half_window =
      a.half_window.empty() ? 0.0 : to_double(parse_rational(a.half_window) * 1000000);

  std::vector<double> times;
  std::stringstream list(a.times);
  std::string item;
  while (std::getline(list, item, ',')) {
    if (!item.empty()) times.push_back(to_double(parse_rational(item)));
  }
  if (times.empty()) throw UsageError("--times needs at least one value");

  const ModelParams params = a.params_dir.empty() ? init_params(a.config, a.seed)
                                                  : load_parameters(a.config, a.params_dir);
  if (!a.save_params.empty()) save_parameters(params, a.save_params);

  const PipelineResult result =
      pipeline_forward(frames, stream, a.scale, times, a.config, params, threads);

  const fs::path dir(a.output);
  fs::create_directories(dir);
  const Index out_h = result.frames.dim(1), out_w = result.frames.dim(2);
  nlohmann::ordered_json report;
  report["holistic_extractor_calls"] = result.trace.holistic_calls;
  report["regional_extractor_calls"] = result.trace.regional_calls;
  report["scale"] = a.scale;
  report["seed"] = a.seed;
  report["times"] = times;
  report["output_size"] = {out_h, out_w};
  auto& shapes = report["stage_shapes"] = nlohmann::ordered_json::array();
  for (const auto& [stage, shape] : result.trace.stage_shapes) shapes.push_back({{"stage", stage}, {"shape", shape}});
  report["attention"] = {{"rows_checked", result.trace.attention.rows_checked},
                         {"max_row_sum_error", result.trace.attention.max_row_error},
                         {"rows_sum_to_one", result.trace.attention.max_row_error <= 1e-6}};
  auto& files = report["frames"] = nlohmann::ordered_json::array();
  for (Index i = 0; i < result.frames.dim(0); ++i) {
    IntensityFrame frame;
    frame.channels.assign(3, Plane(out_h, out_w));
    for (Index y = 0; y < out_h; ++y)
      for (Index x = 0; x < out_w; ++x)
        for (int c = 0; c < 3; ++c) frame.channels[c](y, x) = result.frames(i, y, x, c);
    std::ostringstream name;
    name << "frame_" << std::setw(3) << std::setfill('0') << i << ".ppm";
    write_frame(dir / name.str(), frame);
    files.push_back(name.str());
  }
  std::ofstream(dir / "report.json", std::ios::trunc) << report.dump(2) << '\n';
}

struct MetricsArgs {
  std::string pred_dir, gt_dir, output;
  bool y_only = false;
  int border_crop = 0;
};

void cmd_metrics(const MetricsArgs& a, std::ostream& out) {
  const auto pred = list_frames(a.pred_dir);
  const auto gt = list_frames(a.gt_dir);
  if (pred.size() != gt.size()) {
    throw UsageError(std::to_string(pred.size()) + " predicted frames but " +
                     std::to_string(gt.size()) + " ground-truth frames");
  }
  std::vector<std::int64_t> stamps;
  if (fs::exists(fs::path(a.gt_dir) / "timestamps.txt")) {
    stamps = read_timestamps(fs::path(a.gt_dir) / "timestamps.txt");
    if (stamps.size() != gt.size()) throw UsageError("ground-truth timestamps do not match the frame count");
  }
  std::ostringstream csv;
  csv << "index,time,psnr,ssim\n";
  for (size_t i = 0; i < pred.size(); ++i) {
    const MetricReport r = compare_frames(read_frame(pred[i]), read_frame(gt[i]),
                                          a.y_only ? ChannelMode::kYOnly : ChannelMode::kRgb,
                                          a.border_crop);
    csv << i << ',' << (stamps.empty() ? static_cast<std::int64_t>(i) : stamps[i]) << ','
        << format_psnr(r.psnr) << ',' << std::fixed << std::setprecision(6) << r.ssim << '\n';
    csv.unsetf(std::ios::fixed);
  }
  write_text(a.output, csv.str(), out);
}

struct BenchArgs {
  std::string events, repr = "voxel", output, attenuation = "3", half_window;
  int repeat = 3, bins = 5, levels = 7, moments = 2;
};

void cmd_bench(const BenchArgs& a, int threads, std::ostream& out) {
  const auto bytes = read_file(a.events);
  const EventStream stream = decode_events(bytes);
  if (a.repeat < 1) throw InvalidInput("--repeat must be at least 1");
  std::vector<double> seconds;
  Tensor result;
  for (int i = 0; i < a.repeat; ++i) {
    const auto start = std::chrono::steady_clock::now();
    if (a.repr == "voxel") {
      result = build_voxel_grid(stream, a.bins, stream.t_begin, std::max(stream.t_end, stream.t_begin + 1), threads)
                   .data.cast<float>();
    } else {
      TprParams params = tpr_params(a.levels, a.moments, a.attenuation, a.half_window);
      if (params.half_window <= 0.0) params.half_window = 0.5 * static_cast<double>(stream.t_end - stream.t_begin);
      result = build_tpr(stream, 0.5 * static_cast<double>(stream.t_begin + stream.t_end), params, threads)
                   .data.cast<float>();
    }
    seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(seconds.begin(), seconds.end());
  const double median = seconds[seconds.size() / 2];
  const double rate = median > 0 ? 1.0 / median : 0.0;
  out << "repr=" << a.repr << " events=" << stream.events.size() << " repeat=" << a.repeat
      << " threads=" << threads << " median_s=" << median
      << " events_per_s=" << static_cast<double>(stream.events.size()) * rate
      << " bytes_per_s=" << static_cast<double>(bytes.size()) * rate << '\n';
  if (!a.output.empty()) write_tensor(fs::path(a.output), result);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Event temporal pyramids, windowed decoding kernels and evaluation tools", "evtpr"};
  app.require_subcommand(1);
  int threads = default_threads();
  app.add_option("--threads", threads, "Worker threads (default: $EVTPR_THREADS or 1)")
      ->check(CLI::PositiveNumber);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate events from a frame directory");
  simulate->add_option("frames", sim.frames_dir, "Directory of .pgm/.ppm frames")->required();
  simulate->add_option("--timestamps", sim.timestamps, "Sidecar with one microsecond value per frame");
  simulate->add_option("--threshold,-C", sim.threshold, "Contrast threshold C");
  simulate->add_option("--eps", sim.eps, "Log offset");
  simulate->add_option("-o,--output", sim.output, "Event file")->required();
  simulate->add_option("--csv", sim.csv, "Also write the events as CSV");

  VoxelizeArgs vox;
  auto* voxelize = app.add_subcommand("voxelize", "Build a voxel grid tensor");
  voxelize->add_option("events", vox.events)->required();
  voxelize->add_option("--bins,-M", vox.bins);
  voxelize->add_option("--t0", vox.t0, "Window start (seconds; s/ms/us suffix allowed)");
  voxelize->add_option("--t1", vox.t1, "Window end");
  voxelize->add_option("-o,--output", vox.output)->required();

  TprArgs tpr;
  auto* tpr_cmd = app.add_subcommand("tpr", "Build a temporal pyramid tensor");
  tpr_cmd->add_option("events", tpr.events);
  tpr_cmd->add_option("--L", tpr.levels, "Pyramid levels");
  tpr_cmd->add_option("--Mp", tpr.moments, "Moments per level");
  tpr_cmd->add_option("--r", tpr.attenuation, "Attenuation factor (decimal or p/q)");
  tpr_cmd->add_option("--half-window", tpr.half_window, "Half-window (seconds)");
  tpr_cmd->add_option("--center", tpr.center, "Center time (seconds); default stream midpoint");
  tpr_cmd->add_flag("--print-granularity", tpr.print_granularity, "Print the exact finest granularity");
  tpr_cmd->add_option("-o,--output", tpr.output);

  ReconstructArgs rec;
  auto* reconstruct = app.add_subcommand("reconstruct", "Integrate events onto a frame");
  reconstruct->add_option("frame", rec.frame)->required();
  reconstruct->add_option("events", rec.events)->required();
  reconstruct->add_option("--frame-time", rec.frame_time, "Timestamp of the frame (default stream start)");
  reconstruct->add_option("--at", rec.at, "Target time")->required();
  reconstruct->add_option("--threshold,-C", rec.threshold);
  reconstruct->add_option("--eps", rec.eps);
  reconstruct->add_option("-o,--output", rec.output, "Output PGM")->required();
  reconstruct->add_option("--log-output", rec.log_output, "Also write the log field as a tensor");

  PlanArgs plan;
  auto* plan_cmd = app.add_subcommand("plan", "Sliding-window input/ground-truth manifest");
  plan_cmd->add_option("--frames", plan.frames)->required();
  plan_cmd->add_option("--nin", plan.inputs);
  plan_cmd->add_option("--skip", plan.skip);
  plan_cmd->add_option("--stride", plan.stride);
  plan_cmd->add_option("--gt-count", plan.gt_count, "Draw this many ground-truth frames per window");
  plan_cmd->add_option("--seed", plan.seed);
  plan_cmd->add_option("-o,--output", plan.output);

  PipelineArgs pipe;
  auto* pipeline = app.add_subcommand("pipeline", "Run the seeded forward pipeline");
  pipeline->add_option("frames", pipe.frames_dir)->required();
  pipeline->add_option("events", pipe.events)->required();
  pipeline->add_option("--timestamps", pipe.timestamps);
  pipeline->add_option("--scale", pipe.scale);
  pipeline->add_option("--times", pipe.times, "Comma-separated times in [0, 1]");
  pipeline->add_option("--seed", pipe.seed);
  pipeline->add_option("--params", pipe.params_dir, "Load parameters instead of seeding");
  pipeline->add_option("--save-params", pipe.save_params);
  pipeline->add_option("--channels", pipe.config.channels);
  pipeline->add_option("--holistic-channels", pipe.config.holistic_channels);
  pipeline->add_option("--temporal-dim", pipe.config.temporal_dim);
  pipeline->add_option("--compressed-dim", pipe.config.compressed_dim);
  pipeline->add_option("--window", pipe.config.window_size);
  pipeline->add_option("--heads", pipe.config.heads);
  pipeline->add_option("--voxel-bins", pipe.config.voxel_bins);
  pipeline->add_option("--encoder-depth", pipe.config.encoder_depth);
  pipeline->add_option("--L", pipe.config.tpr.levels);
  pipeline->add_option("--Mp", pipe.config.tpr.moments);
  pipeline->add_option("--r", pipe.attenuation);
  pipeline->add_option("--half-window", pipe.half_window);
  pipeline->add_option("-o,--output", pipe.output)->required();

  MetricsArgs met;
  auto* metrics = app.add_subcommand("metrics", "PSNR/SSIM per frame as CSV");
  metrics->add_option("pred", met.pred_dir)->required();
  metrics->add_option("gt", met.gt_dir)->required();
  metrics->add_flag("--y-only", met.y_only);
  metrics->add_option("--border-crop", met.border_crop);
  metrics->add_option("-o,--output", met.output);

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Representation throughput");
  bench_cmd->add_option("events", bench.events)->required();
  bench_cmd->add_option("--repr", bench.repr)->check(CLI::IsMember({"voxel", "tpr"}));
  bench_cmd->add_option("--repeat", bench.repeat);
  bench_cmd->add_option("--bins", bench.bins);
  bench_cmd->add_option("--L", bench.levels);
  bench_cmd->add_option("--Mp", bench.moments);
  bench_cmd->add_option("--r", bench.attenuation);
  bench_cmd->add_option("--half-window", bench.half_window);
  bench_cmd->add_option("-o,--output", bench.output);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsage;
  }

  try {
    if (*simulate) cmd_simulate(sim, threads);
    else if (*voxelize) cmd_voxelize(vox, threads);
    else if (*tpr_cmd) cmd_tpr(tpr, threads, out);
    else if (*reconstruct) cmd_reconstruct(rec);
    else if (*plan_cmd) cmd_plan(plan, out);
    else if (*pipeline) cmd_pipeline(pipe, threads);
    else if (*metrics) cmd_metrics(met, out);
    else if (*bench_cmd) cmd_bench(bench, threads, out);
    return kSuccess;
  } catch (const UsageError& e) {
    err << "evtpr: " << e.what() << '\n';
    return kUsage;
  } catch (const FormatError& e) {
    err << "evtpr: format error: " << e.what() << '\n';
    return kFormat;
  } catch (const InvalidInput& e) {
    err << "evtpr: " << e.what() << '\n';
    return kContract;
  } catch (const NumericError& e) {
    err << "evtpr: numeric error: " << e.what() << '\n';
    return kContract;
  } catch (const std::exception& e) {
    err << "evtpr: " << e.what() << '\n';
    return kContract;
  }
}

}  // namespace evtpr::cli
