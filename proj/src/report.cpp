#include "kacsim/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace kacsim {

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, p);
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool file_exists(const std::string& path) {
  return std::filesystem::exists(path);
}

void ensure_directory(const std::string& path) {
  std::filesystem::create_directories(path);
}

namespace {

double axis_map(double v, bool log_scale) {
  return log_scale ? std::log10(std::max(v, 1e-300)) : v;
}

std::string tick_label(double v) {
  std::ostringstream out;
  out.precision(3);
  out << v;
  return out.str();
}

}  // namespace

std::string svg_line_chart(const std::vector<SvgSeries>& series,
                           const SvgOptions& opt) {
  const int margin_l = 64, margin_r = 130, margin_t = 36, margin_b = 48;
  const double plot_w = opt.width - margin_l - margin_r;
  const double plot_h = opt.height - margin_t - margin_b;

  double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      const double ax = axis_map(x, opt.log_x), ay = axis_map(y, opt.log_y);
      x_min = std::min(x_min, ax);
      x_max = std::max(x_max, ax);
      y_min = std::min(y_min, ay);
      y_max = std::max(y_max, ay);
    }
  if (!(x_max > x_min)) x_max = x_min + 1.0;
  if (!(y_max > y_min)) y_max = y_min + 1.0;
  const double pad_y = 0.05 * (y_max - y_min);
  y_min -= pad_y;
  y_max += pad_y;

  const auto px = [&](double x) {
    return margin_l + (axis_map(x, opt.log_x) - x_min) / (x_max - x_min) * plot_w;
  };
  const auto py = [&](double y) {
    return margin_t + (y_max - axis_map(y, opt.log_y)) / (y_max - y_min) * plot_h;
  };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#8c564b"};

  std::ostringstream out;
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << opt.width
      << "' height='" << opt.height << "' font-family='sans-serif'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << opt.width / 2 << "' y='20' text-anchor='middle' "
      << "font-size='14'>" << opt.title << "</text>\n";

  // Frame and ticks.
  out << "<rect x='" << margin_l << "' y='" << margin_t << "' width='" << plot_w
      << "' height='" << plot_h << "' fill='none' stroke='#444'/>\n";
  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const double fx = x_min + (x_max - x_min) * i / ticks;
    const double fy = y_min + (y_max - y_min) * i / ticks;
    const double vx = opt.log_x ? std::pow(10.0, fx) : fx;
    const double vy = opt.log_y ? std::pow(10.0, fy) : fy;
    const double sx = margin_l + plot_w * i / ticks;
    const double sy = margin_t + plot_h - plot_h * i / ticks;
    out << "<line x1='" << sx << "' y1='" << margin_t + plot_h << "' x2='" << sx
        << "' y2='" << margin_t + plot_h + 5 << "' stroke='#444'/>\n";
    out << "<text x='" << sx << "' y='" << margin_t + plot_h + 18
        << "' text-anchor='middle' font-size='10'>" << tick_label(vx)
        << "</text>\n";
    out << "<line x1='" << margin_l - 5 << "' y1='" << sy << "' x2='" << margin_l
        << "' y2='" << sy << "' stroke='#444'/>\n";
    out << "<text x='" << margin_l - 8 << "' y='" << sy + 3
        << "' text-anchor='end' font-size='10'>" << tick_label(vy)
        << "</text>\n";
  }
  out << "<text x='" << margin_l + plot_w / 2 << "' y='" << opt.height - 10
      << "' text-anchor='middle' font-size='12'>" << opt.x_label << "</text>\n";
  out << "<text x='16' y='" << margin_t + plot_h / 2
      << "' text-anchor='middle' font-size='12' transform='rotate(-90 16 "
      << margin_t + plot_h / 2 << ")'>" << opt.y_label << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = palette[s % 6];
    out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (const auto& [x, y] : series[s].points)
      out << px(x) << "," << py(y) << " ";
    out << "'/>\n";
    for (const auto& [x, y] : series[s].points)
      out << "<circle cx='" << px(x) << "' cy='" << py(y) << "' r='2.5' fill='"
          << color << "'/>\n";
    const double ly = margin_t + 16 + 16.0 * double(s);
    out << "<line x1='" << margin_l + plot_w + 8 << "' y1='" << ly - 4
        << "' x2='" << margin_l + plot_w + 28 << "' y2='" << ly - 4
        << "' stroke='" << color << "' stroke-width='2'/>\n";
    out << "<text x='" << margin_l + plot_w + 32 << "' y='" << ly
        << "' font-size='11'>" << series[s].label << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace kacsim
