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

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <string>
#include <string_view>

namespace evtpr {

/// Arbitrary-precision exact rational.
using Rational = boost::multiprecision::cpp_rational;

/// Parses "p/q", an integer, or a decimal such as "0.5" / "1e-3" exactly.
/// An optional unit suffix "s", "ms" or "us" scales to seconds.
Rational parse_rational(std::string_view text);

/// "p/q", or "p" when the denominator is 1.
std::string to_string(const Rational& value);

double to_double(const Rational& value);

/// Largest integer not greater than value.
std::int64_t floor_to_int64(const Rational& value);

Rational pow(const Rational& base, unsigned exponent);

}  // namespace evtpr
