#include "ncdw/chart.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace ncdw::chart {
namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 320;
constexpr double kLeft = 64;
constexpr double kRight = 16;
constexpr double kTop = 36;
constexpr double kBottom = 64;

constexpr std::array<std::string_view, 6> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

struct Range {
  double lo = 0;
  double hi = 1;
};

Range range_of(std::span<const double> v, bool from_zero) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double x : v) {
    if (std::isnan(x)) continue;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (!std::isfinite(lo)) return {0, 1};
  if (from_zero) lo = std::min(lo, 0.0);
  if (hi - lo < 1e-12) hi = lo + 1;
  return {lo, hi};
}

std::string num(double v) { return fmt::format("{:.1f}", v); }

std::string tick_label(double v) {
  if (std::abs(v) >= 1000 || v == std::floor(v)) return fmt::format("{:.0f}", v);
  return fmt::format("{:.2f}", v);
}

std::string frame(std::string_view title, std::string_view y_label, Range y, std::string_view x_label = {}) {
  std::string s = fmt::format(
      R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="11">)"
      "\n",
      kWidth, kHeight, kWidth, kHeight);
  s += fmt::format(R"(<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>)"
                   "\n",
                   num(kWidth / 2), escape(title));
  const double plot_h = kHeight - kTop - kBottom;
  for (int i = 0; i <= 4; ++i) {
    const double v = y.lo + (y.hi - y.lo) * i / 4.0;
    const double py = kTop + plot_h * (1 - i / 4.0);
    s += fmt::format(R"(<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#ddd"/>)"
                     R"(<text x="{}" y="{}" text-anchor="end">{}</text>)"
                     "\n",
                     num(kLeft), num(py), num(kWidth - kRight), num(py), num(kLeft - 6), num(py + 4), tick_label(v));
  }
  s += fmt::format(R"~(<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>)~"
                   "\n",
                   num(kTop + plot_h / 2), num(kTop + plot_h / 2), escape(y_label));
  if (!x_label.empty()) {
    s += fmt::format(R"(<text x="{}" y="{}" text-anchor="middle">{}</text>)"
                     "\n",
                     num((kLeft + kWidth - kRight) / 2), num(kHeight - 8), escape(x_label));
  }
  return s;
}

double scale_y(double v, Range y) {
  const double plot_h = kHeight - kTop - kBottom;
  return kTop + plot_h * (1 - (v - y.lo) / (y.hi - y.lo));
}

std::string x_axis_labels(std::span<const std::string> labels, double step, double offset) {
  std::string s;
  const std::size_t every = std::max<std::size_t>(1, labels.size() / 24 + (labels.size() % 24 != 0 ? 1 : 0));
  for (std::size_t i = 0; i < labels.size(); i += every) {
    const double px = kLeft + offset + step * static_cast<double>(i);
    const double py = kHeight - kBottom + 14;
    s += fmt::format(R"~(<text x="{}" y="{}" text-anchor="end" transform="rotate(-45 {} {})">{}</text>)~"
                     "\n",
                     num(px), num(py), num(px), num(py), escape(labels[i]));
  }
  return s;
}

}  // namespace

std::string escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string line_chart(std::string_view title, std::span<const std::string> x_labels, std::span<const Series> series,
                       std::string_view y_label, const std::vector<bool>& highlight) {
  std::vector<double> all;
  for (const auto& s : series) all.insert(all.end(), s.values.begin(), s.values.end());
  const Range y = range_of(all, true);
  std::string svg = frame(title, y_label, y);
  const std::size_t n = x_labels.size();
  const double plot_w = kWidth - kLeft - kRight;
  const double step = n > 1 ? plot_w / static_cast<double>(n - 1) : 0;
  for (std::size_t i = 0; i < highlight.size() && i < n; ++i) {
    if (!highlight[i]) continue;
    const double px = kLeft + step * static_cast<double>(i);
    const double w = std::max(step, 4.0);
    svg += fmt::format(R"(<rect x="{}" y="{}" width="{}" height="{}" fill="#fdd" class="flag"/>)"
                       "\n",
                       num(px - w / 2), num(kTop), num(w), num(kHeight - kTop - kBottom));
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto colour = kPalette[k % kPalette.size()];
    std::string path;
    bool pen_down = false;
    for (std::size_t i = 0; i < series[k].values.size() && i < n; ++i) {
      const double v = series[k].values[i];
      if (std::isnan(v)) {
        pen_down = false;
        continue;
      }
      path += fmt::format("{}{} {} ", pen_down ? "L" : "M", num(kLeft + step * static_cast<double>(i)), num(scale_y(v, y)));
      pen_down = true;
    }
    svg += fmt::format(R"(<path d="{}" fill="none" stroke="{}" stroke-width="2"/>)"
                       "\n",
                       path, colour);
    svg += fmt::format(R"(<text x="{}" y="{}" fill="{}">{}</text>)"
                       "\n",
                       num(kLeft + 8), num(kTop + 12 + 14 * static_cast<double>(k)), colour, escape(series[k].name));
  }
  svg += x_axis_labels(x_labels, step, 0);
  svg += "</svg>\n";
  return svg;
}

std::string bar_chart(std::string_view title, std::span<const std::string> labels, std::span<const double> values,
                      std::string_view y_label) {
  const Range y = range_of(values, true);
  std::string svg = frame(title, y_label, y);
  const std::size_t n = std::max<std::size_t>(labels.size(), 1);
  const double plot_w = kWidth - kLeft - kRight;
  const double step = plot_w / static_cast<double>(n);
  for (std::size_t i = 0; i < values.size() && i < labels.size(); ++i) {
    if (std::isnan(values[i])) continue;
    const double top = scale_y(values[i], y);
    const double base = scale_y(std::max(y.lo, 0.0), y);
    svg += fmt::format(R"(<rect x="{}" y="{}" width="{}" height="{}" fill="{}"><title>{}: {}</title></rect>)"
                       "\n",
                       num(kLeft + step * static_cast<double>(i) + step * 0.1), num(std::min(top, base)),
                       num(step * 0.8), num(std::abs(base - top)), kPalette[0], escape(labels[i]), tick_label(values[i]));
  }
  svg += x_axis_labels(labels, step, step / 2);
  svg += "</svg>\n";
  return svg;
}

std::string scatter(std::string_view title, std::span<const double> x, std::span<const double> y,
                    std::string_view x_label, std::string_view y_label) {
  const Range ry = range_of(y, true);
  const Range rx = range_of(x, false);
  std::string svg = frame(title, y_label, ry, x_label);
  const double plot_w = kWidth - kLeft - kRight;
  for (int i = 0; i <= 4; ++i) {
    const double v = rx.lo + (rx.hi - rx.lo) * i / 4.0;
    svg += fmt::format(R"(<text x="{}" y="{}" text-anchor="middle">{}</text>)"
                       "\n",
                       num(kLeft + plot_w * i / 4.0), num(kHeight - kBottom + 16), tick_label(v));
  }
  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
    if (std::isnan(x[i]) || std::isnan(y[i])) continue;
    const double px = kLeft + plot_w * (x[i] - rx.lo) / (rx.hi - rx.lo);
    svg += fmt::format(R"(<circle cx="{}" cy="{}" r="3.5" fill="{}" fill-opacity="0.75"/>)"
                       "\n",
                       num(px), num(scale_y(y[i], ry)), kPalette[0]);
  }
  svg += "</svg>\n";
  return svg;
}

std::string html_document(std::string_view title, std::string_view body) {
  return fmt::format(
      "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{0}</title>\n"
      "<style>body{{font-family:sans-serif;margin:2em;max-width:960px}}"
      "table{{border-collapse:collapse}}td,th{{border:1px solid #ccc;padding:2px 8px;text-align:right}}"
      "th{{background:#f4f4f4}}section{{margin-bottom:2em}}</style>\n"
      "</head>\n<body>\n<h1>{0}</h1>\n{1}</body>\n</html>\n",
      escape(title), body);
}

}  // namespace ncdw::chart
