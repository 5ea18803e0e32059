#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace leakylab::csv {

// Floats carry 17 significant digits so tables round-trip exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// RFC 4180: quote fields containing comma, quote or newline; double quotes.
inline std::string escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) os_ << ',';
      os_ << escape(fields[i]);
    }
    os_ << "\r\n";
  }

 private:
  std::ostream& os_;
};

}  // namespace leakylab::csv
