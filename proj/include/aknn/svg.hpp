#pragma once

// Minimal self-contained SVG line charts for sweep results.

#include <aknn/dataset.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace aknn {

class LineChart {
 public:
  struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
    bool dashed = false;
  };

  LineChart(std::string title, std::string x_label, std::string y_label)
      : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

  LineChart& log_x(bool on = true) {
    log_x_ = on;
    return *this;
  }
  LineChart& y_range(double lo, double hi) {
    y_lo_ = lo;
    y_hi_ = hi;
    fixed_y_ = true;
    return *this;
  }
  LineChart& add(Series s) {
    series_.push_back(std::move(s));
    return *this;
  }

  std::string render() const {
    constexpr double W = 720, H = 440, L = 70, R = 190, T = 40, B = 60;
    double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
    double y_lo = x_lo, y_hi = -x_lo;
    for (const auto& s : series_)
      for (auto [x, y] : s.points) {
        const double tx = tx_(x);
        x_lo = std::min(x_lo, tx);
        x_hi = std::max(x_hi, tx);
        y_lo = std::min(y_lo, y);
        y_hi = std::max(y_hi, y);
      }
    if (!std::isfinite(x_lo)) x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
    if (fixed_y_) y_lo = y_lo_, y_hi = y_hi_;
    if (x_hi == x_lo) x_hi = x_lo + 1;
    if (y_hi == y_lo) y_hi = y_lo + 1;
    const double pw = W - L - R, ph = H - T - B;
    auto px = [&](double x) { return L + (tx_(x) - x_lo) / (x_hi - x_lo) * pw; };
    auto py = [&](double y) { return T + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph; };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" + num(H) +
           "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += text(W / 2, 22, escape(title_), "middle", 15);
    out += "<rect x=\"" + num(L) + "\" y=\"" + num(T) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
           "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int i = 0; i <= 5; ++i) {
      const double fx = x_lo + (x_hi - x_lo) * i / 5.0;
      const double xv = log_x_ ? std::pow(10.0, fx) : fx;
      const double gx = L + pw * i / 5.0;
      out += line(gx, T + ph, gx, T + ph + 5, "#444");
      out += text(gx, T + ph + 18, num(xv), "middle", 11);
      const double yv = y_lo + (y_hi - y_lo) * i / 5.0;
      const double gy = T + ph - ph * i / 5.0;
      out += line(L - 5, gy, L, gy, "#444");
      out += line(L, gy, L + pw, gy, "#eee");
      out += text(L - 8, gy + 4, num(yv), "end", 11);
    }
    out += text(L + pw / 2, H - 18, escape(x_label_), "middle", 13);
    out += "<text x=\"18\" y=\"" + num(T + ph / 2) + "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 " +
           num(T + ph / 2) + ")\">" + escape(y_label_) + "</text>\n";

    for (std::size_t i = 0; i < series_.size(); ++i) {
      const auto& s = series_[i];
      const std::string color = palette(i);
      std::string pts;
      for (auto [x, y] : s.points) pts += num(px(x)) + "," + num(py(y)) + " ";
      out += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\"" +
             (s.dashed ? std::string(" stroke-dasharray=\"6,4\"") : std::string()) + " points=\"" + pts + "\"/>\n";
      for (auto [x, y] : s.points)
        out += "<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) + "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
      const double ly = T + 14 + 18.0 * static_cast<double>(i);
      out += "<line x1=\"" + num(W - R + 12) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(W - R + 36) + "\" y2=\"" +
             num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"" +
             (s.dashed ? std::string(" stroke-dasharray=\"6,4\"") : std::string()) + "/>\n";
      out += text(W - R + 42, ly + 4, escape(s.name), "start", 11);
    }
    out += "</svg>\n";
    return out;
  }

 private:
  double tx_(double x) const { return log_x_ ? std::log10(std::max(x, 1e-300)) : x; }

  static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
  }
  static std::string palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return colors[i % 10];
  }
  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c == '<')
        out += "&lt;";
      else if (c == '>')
        out += "&gt;";
      else if (c == '&')
        out += "&amp;";
      else
        out += c;
    }
    return out;
  }
  static std::string line(double x1, double y1, double x2, double y2, const char* color) {
    return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
           "\" stroke=\"" + color + "\"/>\n";
  }
  static std::string text(double x, double y, const std::string& s, const char* anchor, int size) {
    return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\" font-size=\"" +
           std::to_string(size) + "\">" + s + "</text>\n";
  }

  std::string title_, x_label_, y_label_;
  std::vector<Series> series_;
  bool log_x_ = false;
  bool fixed_y_ = false;
  double y_lo_ = 0, y_hi_ = 1;
};

}  // namespace aknn
