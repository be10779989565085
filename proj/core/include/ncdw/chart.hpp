#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ncdw::chart {

struct Series {
  std::string name;
  std::vector<double> values;  // NaN leaves a gap
};

std::string escape(std::string_view text);

// Inline SVG; x positions are categorical. `highlight` marks categories to
// shade (same length as x_labels, or empty).
std::string line_chart(std::string_view title, std::span<const std::string> x_labels, std::span<const Series> series,
                       std::string_view y_label, const std::vector<bool>& highlight = {});
std::string bar_chart(std::string_view title, std::span<const std::string> labels, std::span<const double> values,
                      std::string_view y_label);
std::string scatter(std::string_view title, std::span<const double> x, std::span<const double> y,
                    std::string_view x_label, std::string_view y_label);

// Self-contained HTML page around pre-rendered body markup.
std::string html_document(std::string_view title, std::string_view body);

}  // namespace ncdw::chart
