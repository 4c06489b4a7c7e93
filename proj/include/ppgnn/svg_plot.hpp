#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ppgnn/error.hpp"

namespace ppgnn {

/// One cell of a robustness sweep: a model's accuracy under one
/// perturbation mode and ratio.
struct RobustnessRow {
  std::string mode;   // "add" or "remove"
  double ratio = 0.0;
  std::string model;
  double mean = 0.0;
  double std_dev = 0.0;
};

/// One probability interval of a homophily table.
struct HomophilyRow {
  double bin_low = 0.0;
  double bin_high = 0.0;
  long long pair_count = 0;
  bool has_ratio = false;  // false for empty bins (ratio is undefined)
  double same_label_ratio = 0.0;
};

namespace detail {

/// Fixed-point decimal formatting (round-half-away via llround). Used for
/// every coordinate so SVG output is byte-deterministic.
inline std::string format_fixed(double v, int decimals) {
  long long scale = 1;
  for (int d = 0; d < decimals; ++d) scale *= 10;
  long long units = std::llround(v * static_cast<double>(scale));
  std::string sign;
  if (units < 0) {
    sign = "-";
    units = -units;
  }
  std::string whole = std::to_string(units / scale);
  if (decimals == 0) return sign + whole;
  std::string frac = std::to_string(units % scale);
  frac.insert(frac.begin(), static_cast<std::size_t>(decimals) - frac.size(), '0');
  return sign + whole + "." + frac;
}

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> colors = {
      "#4878cf", "#ee854a", "#6acc65", "#d65f5f", "#956cb4", "#8c613c"};
  return colors;
}

struct Canvas {
  std::string body;
  double width = 640.0;
  double height = 400.0;
  double margin_left = 60.0;
  double margin_right = 20.0;
  double margin_top = 30.0;
  double margin_bottom = 70.0;

  double plot_width() const { return width - margin_left - margin_right; }
  double plot_height() const { return height - margin_top - margin_bottom; }
  /// Data y in [0, 1] to pixel y (inverted axis).
  double y_pix(double y) const { return margin_top + (1.0 - y) * plot_height(); }

  void rect(double x, double y, double w, double h, const std::string& fill) {
    body += "  <rect x=\"" + format_fixed(x, 2) + "\" y=\"" + format_fixed(y, 2) +
            "\" width=\"" + format_fixed(w, 2) + "\" height=\"" + format_fixed(h, 2) +
            "\" fill=\"" + fill + "\"/>\n";
  }

  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double stroke_width) {
    body += "  <line x1=\"" + format_fixed(x1, 2) + "\" y1=\"" + format_fixed(y1, 2) +
            "\" x2=\"" + format_fixed(x2, 2) + "\" y2=\"" + format_fixed(y2, 2) +
            "\" stroke=\"" + stroke + "\" stroke-width=\"" +
            format_fixed(stroke_width, 2) + "\"/>\n";
  }

  void text(double x, double y, const std::string& content, int font_size,
            const std::string& anchor) {
    body += "  <text x=\"" + format_fixed(x, 2) + "\" y=\"" + format_fixed(y, 2) +
            "\" font-family=\"monospace\" font-size=\"" + std::to_string(font_size) +
            "\" text-anchor=\"" + anchor + "\" fill=\"#333333\">" + content +
            "</text>\n";
  }

  void axes(const std::string& title, const std::string& y_label) {
    rect(0.0, 0.0, width, height, "#ffffff");
    text(width / 2.0, margin_top - 12.0, title, 13, "middle");
    line(margin_left, margin_top, margin_left, margin_top + plot_height(), "#333333", 1.0);
    line(margin_left, margin_top + plot_height(), margin_left + plot_width(),
         margin_top + plot_height(), "#333333", 1.0);
    for (int tick = 0; tick <= 4; ++tick) {
      const double v = 0.25 * tick;
      line(margin_left - 4.0, y_pix(v), margin_left, y_pix(v), "#333333", 1.0);
      text(margin_left - 8.0, y_pix(v) + 3.0, format_fixed(v, 2), 10, "end");
      if (tick > 0)
        line(margin_left, y_pix(v), margin_left + plot_width(), y_pix(v), "#dddddd", 0.5);
    }
    text(14.0, margin_top + plot_height() / 2.0, y_label, 11, "middle");
  }

  std::string finish() const {
    std::string out;
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + format_fixed(width, 0) +
           "\" height=\"" + format_fixed(height, 0) + "\" viewBox=\"0 0 " +
           format_fixed(width, 0) + " " + format_fixed(height, 0) + "\">\n";
    out += body;
    out += "</svg>\n";
    return out;
  }
};

}  // namespace detail

/// Grouped bar chart of mean accuracy per (mode, ratio) cell, one bar per
/// model, with ±std whiskers. Group and legend order follow first
/// appearance in the table; identical tables yield identical bytes.
inline std::string render_robustness_svg(const std::vector<RobustnessRow>& rows) {
  detail::Canvas canvas;
  canvas.axes("Accuracy under edge perturbation", "accuracy");

  std::vector<std::pair<std::string, double>> groups;
  std::vector<std::string> models;
  for (const auto& row : rows) {
    if (std::find_if(groups.begin(), groups.end(), [&](const auto& g) {
          return g.first == row.mode && g.second == row.ratio;
        }) == groups.end())
      groups.emplace_back(row.mode, row.ratio);
    if (std::find(models.begin(), models.end(), row.model) == models.end())
      models.push_back(row.model);
  }

  if (!groups.empty()) {
    const double group_width = canvas.plot_width() / static_cast<double>(groups.size());
    const double bar_width = group_width * 0.8 / static_cast<double>(models.size());
    const double base_y = canvas.margin_top + canvas.plot_height();
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const double group_x =
          canvas.margin_left + static_cast<double>(g) * group_width + group_width * 0.1;
      for (std::size_t m = 0; m < models.size(); ++m) {
        const RobustnessRow* cell = nullptr;
        for (const auto& row : rows)
          if (row.mode == groups[g].first && row.ratio == groups[g].second &&
              row.model == models[m]) {
            cell = &row;
            break;
          }
        if (!cell) continue;
        const double x = group_x + static_cast<double>(m) * bar_width;
        const double top = canvas.y_pix(cell->mean);
        canvas.rect(x, top, bar_width * 0.9, base_y - top,
                    detail::palette()[m % detail::palette().size()]);
        const double cx = x + bar_width * 0.45;
        canvas.line(cx, canvas.y_pix(std::min(1.0, cell->mean + cell->std_dev)), cx,
                    canvas.y_pix(std::max(0.0, cell->mean - cell->std_dev)), "#333333",
                    1.0);
      }
      canvas.text(canvas.margin_left + (static_cast<double>(g) + 0.5) * group_width,
                  base_y + 16.0,
                  groups[g].first + " " + detail::format_fixed(groups[g].second, 2), 10,
                  "middle");
    }
    for (std::size_t m = 0; m < models.size(); ++m) {
      const double lx = canvas.margin_left + 10.0 + static_cast<double>(m) * 110.0;
      const double ly = canvas.height - 18.0;
      canvas.rect(lx, ly - 9.0, 10.0, 10.0,
                  detail::palette()[m % detail::palette().size()]);
      canvas.text(lx + 14.0, ly, models[m], 10, "start");
    }
  }
  return canvas.finish();
}

/// Bin chart of same-label ratio per probability interval; empty bins are
/// drawn as zero-height outlines.
inline std::string render_homophily_svg(const std::vector<HomophilyRow>& rows) {
  detail::Canvas canvas;
  canvas.axes("Same-label ratio by edge probability", "same-label ratio");

  if (!rows.empty()) {
    const double slot = canvas.plot_width() / static_cast<double>(rows.size());
    const double base_y = canvas.margin_top + canvas.plot_height();
    for (std::size_t b = 0; b < rows.size(); ++b) {
      const double x = canvas.margin_left + static_cast<double>(b) * slot + slot * 0.1;
      if (rows[b].has_ratio) {
        const double top = canvas.y_pix(rows[b].same_label_ratio);
        canvas.rect(x, top, slot * 0.8, base_y - top, detail::palette()[0]);
      } else {
        canvas.line(x, base_y, x + slot * 0.8, base_y, "#aaaaaa", 2.0);
      }
      canvas.text(canvas.margin_left + (static_cast<double>(b) + 0.5) * slot,
                  base_y + 14.0,
                  detail::format_fixed(rows[b].bin_low, 1) + "–" +
                      detail::format_fixed(rows[b].bin_high, 1),
                  8, "middle");
      canvas.text(canvas.margin_left + (static_cast<double>(b) + 0.5) * slot,
                  base_y + 26.0, "n=" + std::to_string(rows[b].pair_count), 8, "middle");
    }
  }
  return canvas.finish();
}

}  // namespace ppgnn
