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

#include "evtpr/rational.hpp"

#include <cctype>

#include "evtpr/errors.hpp"

namespace evtpr {
namespace {

using boost::multiprecision::cpp_int;

cpp_int parse_integer(std::string_view digits, std::string_view whole) {
  if (digits.empty()) throw InvalidInput("malformed number '" + std::string(whole) + "'");
  cpp_int value = 0;
  for (char c : digits) {
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      throw InvalidInput("malformed number '" + std::string(whole) + "'");
    }
    value = value * 10 + (c - '0');
  }
  return value;
}

Rational parse_decimal(std::string_view text, std::string_view whole) {
  bool negative = false;
  if (!text.empty() && (text.front() == '-' || text.front() == '+')) {
    negative = text.front() == '-';
    text.remove_prefix(1);
  }
  long exponent = 0;
  if (auto e = text.find_first_of("eE"); e != std::string_view::npos) {
    std::string_view exp_text = text.substr(e + 1);
    bool exp_negative = false;
    if (!exp_text.empty() && (exp_text.front() == '-' || exp_text.front() == '+')) {
      exp_negative = exp_text.front() == '-';
      exp_text.remove_prefix(1);
    }
    exponent = parse_integer(exp_text, whole).convert_to<long>();
    if (exp_negative) exponent = -exponent;
    text = text.substr(0, e);
  }
  std::string_view int_part = text;
  std::string_view frac_part;
  if (auto dot = text.find('.'); dot != std::string_view::npos) {
    int_part = text.substr(0, dot);
    frac_part = text.substr(dot + 1);
  }
  if (int_part.empty() && frac_part.empty()) {
    throw InvalidInput("malformed number '" + std::string(whole) + "'");
  }
  cpp_int mantissa = int_part.empty() ? cpp_int(0) : parse_integer(int_part, whole);
  for (char c : frac_part) {
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      throw InvalidInput("malformed number '" + std::string(whole) + "'");
    }
    mantissa = mantissa * 10 + (c - '0');
  }
  exponent -= static_cast<long>(frac_part.size());
  Rational value(mantissa);
  cpp_int scale = boost::multiprecision::pow(cpp_int(10), static_cast<unsigned>(exponent < 0 ? -exponent : exponent));
  value = exponent < 0 ? value / Rational(scale) : value * Rational(scale);
  return negative ? Rational(-value) : value;
}

}  // namespace

Rational parse_rational(std::string_view text) {
  const std::string_view whole = text;
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);

  Rational unit(1);
  if (text.ends_with("us")) {
    unit = Rational(1, 1000000);
    text.remove_suffix(2);
  } else if (text.ends_with("ms")) {
    unit = Rational(1, 1000);
    text.remove_suffix(2);
  } else if (text.ends_with("s")) {
    text.remove_suffix(1);
  }

  Rational value;
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    Rational num = parse_decimal(text.substr(0, slash), whole);
    Rational den = parse_decimal(text.substr(slash + 1), whole);
    if (den == 0) throw InvalidInput("zero denominator in '" + std::string(whole) + "'");
    value = num / den;
  } else {
    value = parse_decimal(text, whole);
  }
  return value * unit;
}

std::string to_string(const Rational& value) {
  auto num = boost::multiprecision::numerator(value);
  auto den = boost::multiprecision::denominator(value);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

double to_double(const Rational& value) { return value.convert_to<double>(); }

std::int64_t floor_to_int64(const Rational& value) {
  cpp_int num = boost::multiprecision::numerator(value);
  cpp_int den = boost::multiprecision::denominator(value);
  cpp_int q = num / den;  // truncates toward zero
  if (num < 0 && q * den != num) q -= 1;
  return q.convert_to<std::int64_t>();
}

Rational pow(const Rational& base, unsigned exponent) {
  Rational result(1);
  for (unsigned i = 0; i < exponent; ++i) result *= base;
  return result;
}

}  // namespace evtpr
