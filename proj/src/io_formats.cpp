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

#include "evtpr/io_formats.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string_view>

#include "evtpr/errors.hpp"

namespace evtpr {
namespace {

using Bytes = std::vector<std::uint8_t>;

template <typename T>
void put(Bytes& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto v = static_cast<U>(value);
  for (size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(Bytes& out, float value) { put(out, std::bit_cast<std::uint32_t>(value)); }

class Reader {
 public:
  Reader(const Bytes& bytes, const char* what) : bytes_(bytes), what_(what) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::make_unsigned_t<T> v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::make_unsigned_t<T>>(static_cast<std::make_unsigned_t<T>>(bytes_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }

  std::string_view magic() {
    need(4);
    std::string_view m(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
    pos_ += 4;
    return m;
  }

  void skip(size_t n) {
    need(n);
    pos_ += n;
  }

  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("truncated ") + what_);
  }

  const Bytes& bytes_;
  const char* what_;
  size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path.string() + "'");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw UsageError("failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Events

std::vector<std::uint8_t> encode_events(const EventStream& stream) {
  stream.validate();
  if (stream.events.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidInput("event file holds at most 2^32 - 1 events");
  }
  if (stream.t_begin < 0) throw InvalidInput("event files store non-negative timestamps");
  Bytes out;
  out.reserve(kEventHeaderBytes + kEventRecordBytes * stream.events.size());
  out.insert(out.end(), {'E', 'V', 'T', '1'});
  put<std::uint32_t>(out, kEventFileVersion);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(stream.width));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(stream.height));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(stream.events.size()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(stream.t_begin));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(stream.t_end));
  for (const Event& e : stream.events) {
    put<std::uint64_t>(out, static_cast<std::uint64_t>(e.t));
    put<std::uint16_t>(out, e.x);
    put<std::uint16_t>(out, e.y);
    put<std::int8_t>(out, e.p);
    out.insert(out.end(), 3, 0);
  }
  return out;
}

EventStream decode_events(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes, "event file");
  if (in.magic() != "EVT1") throw FormatError("bad event file magic");
  if (in.get<std::uint32_t>() != kEventFileVersion) throw FormatError("unsupported event file version");
  EventStream stream;
  stream.width = in.get<std::uint16_t>();
  stream.height = in.get<std::uint16_t>();
  const auto count = in.get<std::uint32_t>();
  const auto t_begin = in.get<std::uint64_t>();
  const auto t_end = in.get<std::uint64_t>();
  const auto t_max = static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max());
  if (t_begin > t_end || t_end > t_max) throw FormatError("bad event file time range");
  stream.t_begin = static_cast<std::int64_t>(t_begin);
  stream.t_end = static_cast<std::int64_t>(t_end);
  if (in.remaining() != static_cast<size_t>(count) * kEventRecordBytes) {
    throw FormatError("event payload length does not match the header count");
  }
  if (stream.width == 0 || stream.height == 0) throw FormatError("event file has an empty sensor");
  stream.events.resize(count);
  std::int64_t prev = stream.t_begin;
  for (Event& e : stream.events) {
    const auto t = in.get<std::uint64_t>();
    e.x = in.get<std::uint16_t>();
    e.y = in.get<std::uint16_t>();
    e.p = in.get<std::int8_t>();
    in.skip(3);
    if (t > t_end) throw FormatError("event record outside the header time range");
    e.t = static_cast<std::int64_t>(t);
    if (e.t < prev) throw FormatError("event records are not sorted by time");
    if (e.x >= stream.width || e.y >= stream.height) throw FormatError("event record outside the sensor");
    if (e.p != 1 && e.p != -1) throw FormatError("event record polarity must be +1 or -1");
    prev = e.t;
  }
  return stream;
}

void write_events(std::ostream& os, const EventStream& stream) {
  const Bytes bytes = encode_events(stream);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

EventStream read_events(std::istream& is) {
  return decode_events(Bytes(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()));
}

void write_events(const std::filesystem::path& path, const EventStream& stream) {
  write_file(path, encode_events(stream));
}

EventStream read_events(const std::filesystem::path& path) { return decode_events(read_file(path)); }

void write_events_csv(std::ostream& os, const EventStream& stream) {
  stream.validate();
  os << "# width=" << stream.width << " height=" << stream.height << " t_begin=" << stream.t_begin
     << " t_end=" << stream.t_end << '\n';
  for (const Event& e : stream.events) {
    os << e.t << ',' << e.x << ',' << e.y << ',' << static_cast<int>(e.p) << '\n';
  }
}

EventStream read_events_csv(std::istream& is) {
  EventStream stream;
  bool have_header = false;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::istringstream header(line.substr(1));
      std::string field;
      int seen = 0;
      while (header >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = field.substr(0, eq);
        const long long value = std::stoll(field.substr(eq + 1));
        if (key == "width") stream.width = static_cast<int>(value), ++seen;
        else if (key == "height") stream.height = static_cast<int>(value), ++seen;
        else if (key == "t_begin") stream.t_begin = value, ++seen;
        else if (key == "t_end") stream.t_end = value, ++seen;
      }
      have_header = seen == 4;
      continue;
    }
    long long t = 0;
    int x = 0, y = 0, p = 0;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream row(line);
    if (!(row >> t >> c1 >> x >> c2 >> y >> c3 >> p) || c1 != ',' || c2 != ',' || c3 != ',' ||
        x < 0 || y < 0 || x > 65535 || y > 65535) {
      throw FormatError("malformed CSV event line '" + line + "'");
    }
    stream.events.push_back({static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), t,
                             static_cast<std::int8_t>(p)});
  }
  if (!have_header) {
    for (const Event& e : stream.events) {
      stream.width = std::max(stream.width, e.x + 1);
      stream.height = std::max(stream.height, e.y + 1);
    }
    stream.width = std::max(stream.width, 1);
    stream.height = std::max(stream.height, 1);
    stream.t_begin = stream.events.empty() ? 0 : stream.events.front().t;
    stream.t_end = stream.events.empty() ? 0 : stream.events.back().t;
  }
  try {
    stream.validate();
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("CSV events: ") + e.what());
  }
  return stream;
}

// ---------------------------------------------------------------------------
// Tensors

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor) {
  Bytes out;
  out.reserve(12 + 4 * tensor.shape().size() + 4 * static_cast<size_t>(tensor.size()));
  out.insert(out.end(), {'T', 'N', 'S', '1'});
  put<std::uint32_t>(out, kTensorDtypeFloat32);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.ndim()));
  for (Index d : tensor.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  for (Index i = 0; i < tensor.size(); ++i) put_f32(out, tensor.data()[i]);
  return out;
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes, "tensor file");
  if (in.magic() != "TNS1") throw FormatError("bad tensor file magic");
  if (in.get<std::uint32_t>() != kTensorDtypeFloat32) throw FormatError("unsupported tensor dtype");
  const auto ndim = in.get<std::uint32_t>();
  if (static_cast<size_t>(ndim) * 4 > in.remaining()) throw FormatError("truncated tensor dims");
  Shape shape(ndim);
  for (Index& d : shape) d = in.get<std::uint32_t>();
  const Index count = shape_size(shape);
  if (in.remaining() != static_cast<size_t>(count) * 4) {
    throw FormatError("tensor payload length does not match its dims");
  }
  Tensor tensor(shape);
  for (Index i = 0; i < count; ++i) tensor.data()[i] = in.get_f32();
  return tensor;
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  write_file(path, encode_tensor(tensor));
}

Tensor read_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

// ---------------------------------------------------------------------------
// Pixmaps

std::vector<std::uint8_t> encode_pixmap(const IntensityFrame& frame) {
  const int channels = frame.channel_count();
  if (channels != 1 && channels != 3) throw InvalidInput("pixmaps hold 1 or 3 channels");
  const std::string header = std::string(channels == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(frame.width()) + " " + std::to_string(frame.height()) +
                             "\n255\n";
  Bytes out(header.begin(), header.end());
  out.reserve(out.size() + static_cast<size_t>(frame.height() * frame.width() * channels));
  for (Index y = 0; y < frame.height(); ++y)
    for (Index x = 0; x < frame.width(); ++x)
      for (int c = 0; c < channels; ++c) {
        const double v = std::clamp(frame.channels[c](y, x), 0.0, 1.0);
        out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
      }
  return out;
}

IntensityFrame decode_pixmap(const std::vector<std::uint8_t>& bytes) {
  size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip_space();
    long value = 0;
    size_t digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos]) && digits < 9) {
      value = value * 10 + (bytes[pos++] - '0');
      ++digits;
    }
    if (digits == 0) throw FormatError("malformed pixmap header");
    return value;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("unsupported pixmap magic (need P5 or P6)");
  }
  const int channels = bytes[1] == '5' ? 1 : 3;
  pos = 2;
  const long width = number();
  const long height = number();
  const long maxval = number();
  if (maxval != 255) throw FormatError("unsupported pixmap maxval (need 255)");
  if (width <= 0 || height <= 0) throw FormatError("empty pixmap");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("malformed pixmap header");
  ++pos;
  const size_t needed = static_cast<size_t>(width) * static_cast<size_t>(height) * channels;
  if (bytes.size() - pos < needed) throw FormatError("truncated pixmap payload");
  IntensityFrame frame;
  frame.channels.assign(channels, Plane(height, width));
  const std::uint8_t* src = bytes.data() + pos;
  for (long y = 0; y < height; ++y)
    for (long x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c) frame.channels[c](y, x) = *src++ / 255.0;
  return frame;
}

void write_frame(const std::filesystem::path& path, const IntensityFrame& frame) {
  write_file(path, encode_pixmap(frame));
}

IntensityFrame read_frame(const std::filesystem::path& path) { return decode_pixmap(read_file(path)); }

}  // namespace evtpr
