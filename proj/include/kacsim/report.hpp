#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace kacsim {

// Locale-independent shortest round-trip formatting; keeps emitted CSV bytes
// reproducible across runs and worker counts.
std::string format_double(double v);

std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

void write_file(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);
bool file_exists(const std::string& path);
void ensure_directory(const std::string& path);

struct SvgSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

struct SvgOptions {
  std::string title, x_label, y_label;
  bool log_x = false;
  bool log_y = false;
  int width = 640, height = 420;
};

// Small self-contained line chart (no external plotting dependency).
std::string svg_line_chart(const std::vector<SvgSeries>& series,
                           const SvgOptions& options);

}  // namespace kacsim
