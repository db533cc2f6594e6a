#pragma once

// Locale-independent CSV output: '.' decimals, LF line endings, shortest
// round-trip formatting for doubles.

#include <charconv>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace corrmem::csv {

inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

template <class Int>
  requires std::is_integral_v<Int>
std::string format_number(Int v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

/// Quotes a text field only when it contains a separator, quote or newline.
inline std::string quote(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

class Writer {
 public:
  Writer(std::ostream& os, std::vector<std::string> header) : os_(os), columns_(header.size()) {
    row_.reserve(columns_);
    for (auto& h : header) field(std::string_view(h));
    end_row();
  }

  Writer& field(std::string_view s) {
    row_.push_back(quote(s));
    return *this;
  }
  Writer& field(const char* s) { return field(std::string_view(s)); }
  Writer& field(const std::string& s) { return field(std::string_view(s)); }
  Writer& field(double v) {
    row_.push_back(format_number(v));
    return *this;
  }
  template <class Int>
    requires std::is_integral_v<Int>
  Writer& field(Int v) {
    row_.push_back(format_number(v));
    return *this;
  }

  template <class... Ts>
  void row(const Ts&... values) {
    (field(values), ...);
    end_row();
  }

  void end_row() {
    if (row_.size() != columns_)
      throw std::logic_error("csv: row has " + std::to_string(row_.size()) + " fields, header has " +
                             std::to_string(columns_));
    for (std::size_t i = 0; i < row_.size(); ++i) {
      if (i) os_ << ',';
      os_ << row_[i];
    }
    os_ << '\n';
    row_.clear();
  }

 private:
  std::ostream& os_;
  std::size_t columns_;
  std::vector<std::string> row_;
};

}  // namespace corrmem::csv
