#pragma once

// Minimal static SVG line charts for experiment reports.

#include <string>
#include <vector>

#include "factor/synthetic.hpp"

namespace factor {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;
  std::vector<Series> series;
};

/// Deterministic SVG document. Throws ParameterError on an empty axis range
/// or a series whose x and y lengths differ.
std::string render_svg(const LineChart& chart);

/// Per-category PR curves, baseline dashed against calibrated solid.
LineChart pr_chart(const SeverityResult& result);

/// mAP50 against lambda, one series per severity.
LineChart lambda_chart(const ExperimentReport& report);

}  // namespace factor
