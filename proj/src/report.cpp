#include "imvalign/report.hpp"

#include <charconv>

namespace imvalign {

std::string format_report(const ReportLines& lines) {
  std::string out;
  for (const auto& [key, value] : lines) {
    out += key;
    out += '\t';
    out += value;
    out += '\n';
  }
  return out;
}

std::string format_summary(const ReportLines& lines) {
  std::string out = "SUMMARY";
  for (const auto& [key, value] : lines) {
    out += ' ';
    out += key;
    out += '=';
    out += value;
  }
  out += '\n';
  return out;
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace imvalign
