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

// Byte-exact little-endian containers.
//
// Event file (.evt):
//   offset 0   char[4]  "EVT1"
//          4   u32      version (1)
//          8   u16      width
//         10   u16      height
//         12   u32      event count
//         16   u64      t_begin (us)
//         24   u64      t_end (us)
//         32   records, 16 bytes each: u64 t, u16 x, u16 y, i8 p, 3 zero bytes
//
// Tensor file (.tns):
//   offset 0   char[4]  "TNS1"
//          4   u32      dtype (0 = float32)
//          8   u32      ndim
//         12   u32[ndim] dims
//              float32[prod(dims)] row-major payload

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "evtpr/event_model.hpp"
#include "evtpr/tensor.hpp"

namespace evtpr {

inline constexpr std::uint32_t kEventFileVersion = 1;
inline constexpr std::size_t kEventHeaderBytes = 32;
inline constexpr std::size_t kEventRecordBytes = 16;
inline constexpr std::uint32_t kTensorDtypeFloat32 = 0;

std::vector<std::uint8_t> encode_events(const EventStream& stream);
EventStream decode_events(const std::vector<std::uint8_t>& bytes);

void write_events(std::ostream& os, const EventStream& stream);
EventStream read_events(std::istream& is);
void write_events(const std::filesystem::path& path, const EventStream& stream);
EventStream read_events(const std::filesystem::path& path);

/// "t,x,y,p" per line, preceded by "# width=W height=H t_begin=B t_end=E".
/// Without the header line, the sensor size and time range are inferred.
void write_events_csv(std::ostream& os, const EventStream& stream);
EventStream read_events_csv(std::istream& is);

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);
void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

/// Binary PGM (P5) for 1 channel, PPM (P6) for 3, maxval 255. Values are
/// rounded from [0, 1] on write and divided by 255 on read.
std::vector<std::uint8_t> encode_pixmap(const IntensityFrame& frame);
IntensityFrame decode_pixmap(const std::vector<std::uint8_t>& bytes);
void write_frame(const std::filesystem::path& path, const IntensityFrame& frame);
IntensityFrame read_frame(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace evtpr
