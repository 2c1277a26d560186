#include "factor/plots.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>

#include "factor/errors.hpp"

namespace factor {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 440.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 170.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;
constexpr int kTicks = 5;

constexpr std::array<std::string_view, 8> kColors = {
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
    "#9467bd", "#17becf", "#8c564b", "#7f7f7f"};

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const LineChart& chart) {
  if (!(chart.x_max > chart.x_min) || !(chart.y_max > chart.y_min)) {
    throw ParameterError("plot: empty axis range");
  }
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) {
    return kLeft + (x - chart.x_min) / (chart.x_max - chart.x_min) * pw;
  };
  auto sy = [&](double y) {
    return kTop + ph - (y - chart.y_min) / (chart.y_max - chart.y_min) * ph;
  };

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\" font-family=\"sans-serif\" font-size=\"12\">\n",
      kWidth, kHeight);
  out += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
                     kWidth, kHeight);
  out += fmt::format(
      "<text x=\"{:.1f}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}"
      "</text>\n",
      kLeft + pw / 2, escape(chart.title));

  for (int i = 0; i <= kTicks; ++i) {
    const double fx = chart.x_min + (chart.x_max - chart.x_min) * i / kTicks;
    const double fy = chart.y_min + (chart.y_max - chart.y_min) * i / kTicks;
    out += fmt::format(
        "<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" "
        "stroke=\"#e0e0e0\"/>\n",
        sx(fx), kTop, kTop + ph);
    out += fmt::format(
        "<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" "
        "stroke=\"#e0e0e0\"/>\n",
        kLeft, sy(fy), kLeft + pw);
    out += fmt::format(
        "<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.2f}</text>\n",
        sx(fx), kTop + ph + 18, fx);
    out += fmt::format(
        "<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.2f}</text>\n",
        kLeft - 6, sy(fy) + 4, fy);
  }
  out += fmt::format(
      "<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" "
      "fill=\"none\" stroke=\"black\"/>\n",
      kLeft, kTop, pw, ph);
  out += fmt::format(
      "<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n",
      kLeft + pw / 2, kHeight - 18, escape(chart.x_label));
  out += fmt::format(
      "<text x=\"18\" y=\"{0:.1f}\" text-anchor=\"middle\" "
      "transform=\"rotate(-90 18 {0:.1f})\">{1}</text>\n",
      kTop + ph / 2, escape(chart.y_label));

  for (std::size_t s = 0; s < chart.series.size(); ++s) {
    const auto& series = chart.series[s];
    if (series.x.size() != series.y.size()) {
      throw ParameterError("plot: series '" + series.label +
                           "' has mismatched x/y lengths");
    }
    const auto color = kColors[s % kColors.size()];
    const bool dashed = series.label.find("baseline") != std::string::npos;
    std::string points;
    for (std::size_t i = 0; i < series.x.size(); ++i) {
      const double x = std::clamp(series.x[i], chart.x_min, chart.x_max);
      const double y = std::clamp(series.y[i], chart.y_min, chart.y_max);
      if (i) points += ' ';
      points += fmt::format("{:.2f},{:.2f}", sx(x), sy(y));
    }
    out += fmt::format(
        "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.6\"{} "
        "points=\"{}\"/>\n",
        color, dashed ? " stroke-dasharray=\"5,3\"" : "", points);
    const double ly = kTop + 10 + 18.0 * static_cast<double>(s);
    out += fmt::format(
        "<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" "
        "stroke=\"{3}\" stroke-width=\"2\"{4}/>\n",
        kLeft + pw + 10, ly, kLeft + pw + 30, color,
        dashed ? " stroke-dasharray=\"5,3\"" : "");
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n",
                       kLeft + pw + 35, ly + 4, escape(series.label));
  }
  out += "</svg>\n";
  return out;
}

LineChart pr_chart(const SeverityResult& result) {
  LineChart chart;
  chart.title = fmt::format("PR curves, severity {}", to_string(result.severity));
  chart.x_label = "recall";
  chart.y_label = "precision";
  auto add = [&](const EvalReport& report, std::string_view tag) {
    for (std::size_t c = 0; c < report.categories.size(); ++c) {
      Series s;
      s.label = fmt::format("{} {}", report.categories[c], tag);
      // Start at recall 0 with the first precision so the line is anchored.
      const auto& curve = report.curves[c];
      if (!curve.recall.empty()) {
        s.x.push_back(0.0);
        s.y.push_back(curve.precision.front());
      }
      s.x.insert(s.x.end(), curve.recall.begin(), curve.recall.end());
      s.y.insert(s.y.end(), curve.precision.begin(), curve.precision.end());
      chart.series.push_back(std::move(s));
    }
  };
  add(result.baseline, "baseline");
  add(result.calibrated, "factor");
  return chart;
}

LineChart lambda_chart(const ExperimentReport& report) {
  LineChart chart;
  chart.title = "mAP50 vs lambda";
  chart.x_label = "lambda";
  chart.y_label = "mAP50";
  double lo = 1.0, hi = 0.0;
  double xlo = 0.0, xhi = 0.0;
  bool first = true;
  for (const auto& r : report.results) {
    Series s;
    s.label = std::string(to_string(r.severity));
    for (const auto& p : r.lambda_curve) {
      s.x.push_back(p.lambda);
      s.y.push_back(p.map50);
      lo = std::min(lo, p.map50);
      hi = std::max(hi, p.map50);
      xlo = first ? p.lambda : std::min(xlo, p.lambda);
      xhi = first ? p.lambda : std::max(xhi, p.lambda);
      first = false;
    }
    Series base;
    base.label = fmt::format("{} baseline", to_string(r.severity));
    if (!r.lambda_curve.empty()) {
      base.x = {r.lambda_curve.front().lambda, r.lambda_curve.back().lambda};
      base.y = {r.baseline.map50, r.baseline.map50};
      lo = std::min(lo, r.baseline.map50);
      hi = std::max(hi, r.baseline.map50);
    }
    chart.series.push_back(std::move(s));
    chart.series.push_back(std::move(base));
  }
  if (hi < lo) {
    lo = 0.0;
    hi = 1.0;
  }
  const double pad = std::max(0.02, (hi - lo) * 0.1);
  chart.y_min = std::max(0.0, lo - pad);
  chart.y_max = std::min(1.0, hi + pad);
  if (!(chart.y_max > chart.y_min)) chart.y_max = chart.y_min + 0.05;
  chart.x_min = xlo;
  chart.x_max = xhi > xlo ? xhi : xlo + 1.0;
  return chart;
}

}  // namespace factor
