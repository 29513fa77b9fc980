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

#include <doctest.h>

#include <cstring>
#include <random>
#include <sstream>

#include "evtpr/errors.hpp"
#include "evtpr/io_formats.hpp"
#include "test_util.hpp"

using namespace evtpr;

TEST_CASE("event codec layout") {
  EventStream s;
  s.width = 640;
  s.height = 480;
  s.t_begin = 5;
  s.t_end = 90;
  s.events = {{3, 4, 7, 1}, {639, 479, 90, -1}};
  const auto bytes = encode_events(s);
  REQUIRE(bytes.size() == kEventHeaderBytes + 2 * kEventRecordBytes);
  CHECK(std::memcmp(bytes.data(), "EVT1", 4) == 0);
  CHECK(bytes[4] == 1);
  CHECK((bytes[8] | bytes[9] << 8) == 640);
  CHECK((bytes[10] | bytes[11] << 8) == 480);
  CHECK(bytes[12] == 2);
  CHECK(bytes[16] == 5);
  CHECK(bytes[24] == 90);
  CHECK(bytes[32] == 7);
  CHECK(bytes[40] == 3);
  CHECK(bytes[42] == 4);
  CHECK(bytes[44] == 1);
  CHECK(static_cast<std::int8_t>(bytes[60]) == -1);
  CHECK(decode_events(bytes) == s);
}

TEST_CASE("event codec rejects malformed input") {
  EventStream s;
  s.width = 4;
  s.height = 4;
  s.t_end = 10;
  s.events = {{1, 1, 2, 1}, {2, 2, 3, -1}};
  const auto good = encode_events(s);
  auto bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_events(bad), FormatError);
  bad = good;
  bad.pop_back();
  CHECK_THROWS_AS(decode_events(bad), FormatError);
  bad = good;
  bad[32] = 9;  // first record now later than the second
  CHECK_THROWS_AS(decode_events(bad), FormatError);
  bad = good;
  bad[44] = 0;
  CHECK_THROWS_AS(decode_events(bad), FormatError);
  bad = good;
  bad[40] = 4;
  CHECK_THROWS_AS(decode_events(bad), FormatError);
  bad = good;
  bad[4] = 2;
  CHECK_THROWS_AS(decode_events(bad), FormatError);
  CHECK_THROWS_AS(decode_events({}), FormatError);
}

TEST_CASE("event CSV") {
  std::mt19937_64 rng(1);
  const EventStream s = test::random_stream(rng, 7, 5, 10, 500, 40);
  std::stringstream ss;
  write_events_csv(ss, s);
  CHECK(read_events_csv(ss) == s);

  std::stringstream bare("5,1,2,1\n9,3,0,-1\n");
  const EventStream inferred = read_events_csv(bare);
  CHECK(inferred.width == 4);
  CHECK(inferred.height == 3);
  CHECK(inferred.t_begin == 5);
  CHECK(inferred.t_end == 9);
  std::stringstream broken("5,1,2\n");
  CHECK_THROWS_AS(read_events_csv(broken), FormatError);
  std::stringstream bad_polarity("5,1,2,0\n");
  CHECK_THROWS_AS(read_events_csv(bad_polarity), FormatError);
}

TEST_CASE("tensor codec") {
  Tensor t({2, 3});
  for (Index i = 0; i < 6; ++i) t.data()[i] = 0.5f * static_cast<float>(i) - 1;
  const auto bytes = encode_tensor(t);
  CHECK(bytes.size() == 12 + 2 * 4 + 6 * 4);
  CHECK(std::memcmp(bytes.data(), "TNS1", 4) == 0);
  CHECK(bytes[8] == 2);
  CHECK(decode_tensor(bytes) == t);
  CHECK(encode_tensor(Tensor(Shape{})).size() == 12 + 4);

  auto bad = bytes;
  bad[4] = 1;
  CHECK_THROWS_AS(decode_tensor(bad), FormatError);
  bad = bytes;
  bad.push_back(0);
  CHECK_THROWS_AS(decode_tensor(bad), FormatError);
  bad = bytes;
  bad[8] = 200;
  CHECK_THROWS_AS(decode_tensor(bad), FormatError);
}

TEST_CASE("pixmap codec") {
  IntensityFrame f = IntensityFrame::constant(2, 3, 3, 0.0);
  f.channels[0](0, 0) = 1.0;
  f.channels[1](1, 2) = 128.0 / 255;
  const auto bytes = encode_pixmap(f);
  const std::string header(bytes.begin(), bytes.begin() + 11);
  CHECK(header == "P6\n3 2\n255\n");
  CHECK(bytes.size() == 11 + 18);
  const IntensityFrame back = decode_pixmap(bytes);
  CHECK(back.channel_count() == 3);
  CHECK(back.channels[0](0, 0) == 1.0);
  CHECK(back.channels[1](1, 2) == 128.0 / 255);
  CHECK(encode_pixmap(back) == bytes);

  const std::string commented = "P5\n# note\n2 1\n# another\n255\n\x01\x02";
  const IntensityFrame gray = decode_pixmap({commented.begin(), commented.end()});
  CHECK(gray.channel_count() == 1);
  CHECK(gray.channels[0](0, 1) == 2.0 / 255);

  const std::string wide = "P5\n2 1\n65535\n\x01\x02\x03\x04";
  CHECK_THROWS_AS(decode_pixmap({wide.begin(), wide.end()}), FormatError);
  const std::string short_data = "P5\n2 2\n255\n\x01";
  CHECK_THROWS_AS(decode_pixmap({short_data.begin(), short_data.end()}), FormatError);
  const std::string ascii = "P2\n1 1\n255\n7\n";
  CHECK_THROWS_AS(decode_pixmap({ascii.begin(), ascii.end()}), FormatError);
}

TEST_CASE("file helpers") {
  const auto dir = test::scratch_dir("io");
  EventStream s;
  s.width = 2;
  s.height = 2;
  s.t_end = 3;
  s.events = {{1, 0, 3, -1}};
  write_events(dir / "a.evt", s);
  CHECK(read_events(dir / "a.evt") == s);
  CHECK_THROWS_AS(read_events(dir / "missing.evt"), UsageError);
}

TEST_CASE("codec worked examples") {
  EventStream empty;
  empty.width = 3;
  empty.height = 3;
  CHECK(encode_events(empty).size() == 32);
  CHECK(decode_events(encode_events(empty)) == empty);
  EventStream one = empty;
  one.t_end = 4;
  one.events = {{2, 1, 4, -1}};
  CHECK(encode_events(one).size() == 48);

  std::mt19937_64 rng(8);
  for (int i = 0; i < 20; ++i) {
    const EventStream s = test::random_stream(rng, 9, 4, 100, 900, i * 5);
    std::stringstream csv;
    write_events_csv(csv, s);
    CHECK(read_events_csv(csv) == decode_events(encode_events(s)));
  }

  const Tensor tpr({7, 2, 4, 4});
  const Tensor back = decode_tensor(encode_tensor(tpr));
  CHECK(back.shape() == Shape{7, 2, 4, 4});
  CHECK(encode_tensor(back) == encode_tensor(tpr));

  const std::string white = "P6\n1 1\n255\n\xff\xff\xff";
  const IntensityFrame w = decode_pixmap({white.begin(), white.end()});
  CHECK(w.channels[0](0, 0) == 1.0);
  CHECK(w.channels[2](0, 0) == 1.0);
  const std::string mid = "P5\n1 1\n255\n\x80";
  CHECK(decode_pixmap({mid.begin(), mid.end()}).channels[0](0, 0) == doctest::Approx(0.50196).epsilon(1e-5));
}
