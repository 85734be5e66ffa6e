#pragma once

#include <string>
#include <utility>
#include <vector>

namespace imvalign {

using ReportLines = std::vector<std::pair<std::string, std::string>>;

// One key<TAB>value per line.
std::string format_report(const ReportLines& lines);

// Machine-readable single line: "SUMMARY key=value key=value ...".
std::string format_summary(const ReportLines& lines);

// Shortest round-tripping decimal representation.
std::string format_double(double v);

}  // namespace imvalign
