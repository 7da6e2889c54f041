#include "uotkit/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace uot {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

void require_2d(const Matrix& m, const char* what) {
  if (m.cols() < 1) throw std::invalid_argument(std::string("svg: ") + what + " has no coordinates");
}

double coord(const Matrix& m, Eigen::Index i, Eigen::Index k) { return k < m.cols() ? m(i, k) : 0.0; }

}  // namespace

void SvgPlot::scatter(const Matrix& points, const std::string& color, double radius, double opacity) {
  require_2d(points, "scatter");
  layers_.push_back({Layer::Kind::points, points, {}, color, radius, opacity, {}});
}

void SvgPlot::segments(const Matrix& from, const Matrix& to, const std::string& color, double width,
                       const std::vector<double>& opacity) {
  require_2d(from, "segments");
  if (from.rows() != to.rows()) throw std::invalid_argument("svg: segment endpoints differ in count");
  if (!opacity.empty() && opacity.size() != static_cast<std::size_t>(from.rows())) {
    throw std::invalid_argument("svg: one opacity per segment expected");
  }
  layers_.push_back({Layer::Kind::segments, from, to, color, width, 0.5, opacity});
}

void SvgPlot::arrows(const Matrix& from, const Matrix& to, const std::string& color, double width) {
  require_2d(from, "arrows");
  if (from.rows() != to.rows()) throw std::invalid_argument("svg: arrow endpoints differ in count");
  layers_.push_back({Layer::Kind::arrows, from, to, color, width, 0.6, {}});
}

void SvgPlot::coupling(const Matrix& source, const Matrix& target, const Matrix& plan, const std::string& color,
                       std::size_t max_lines) {
  if (plan.rows() != source.rows() || plan.cols() != target.rows()) {
    throw std::invalid_argument("svg: plan shape does not match the point sets");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(plan.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const std::size_t keep = std::min(max_lines, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](Eigen::Index x, Eigen::Index y) {
                      const double px = plan.data()[x], py = plan.data()[y];
                      return px != py ? px > py : x < y;
                    });
  const double top = keep > 0 ? plan.data()[order[0]] : 0.0;
  if (!(top > 0.0)) return;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> kept;
  std::vector<double> alpha;
  for (std::size_t k = 0; k < keep; ++k) {
    const double mass = plan.data()[order[k]];
    if (mass < 1e-3 * top) break;
    kept.emplace_back(order[k] / plan.cols(), order[k] % plan.cols());
    alpha.push_back(std::clamp(mass / top, 0.05, 1.0) * 0.6);
  }
  Matrix from(static_cast<Eigen::Index>(kept.size()), source.cols());
  Matrix to(static_cast<Eigen::Index>(kept.size()), target.cols());
  for (std::size_t k = 0; k < kept.size(); ++k) {
    from.row(static_cast<Eigen::Index>(k)) = source.row(kept[k].first);
    to.row(static_cast<Eigen::Index>(k)) = target.row(kept[k].second);
  }
  segments(from, to, color, 0.6, alpha);
}

std::string SvgPlot::render_group(double x, double y, double width, double height) const {
  double lo[2] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  double hi[2] = {-lo[0], -lo[1]};
  auto extend = [&](const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (int k = 0; k < 2; ++k) {
        const double v = coord(m, i, k);
        if (!std::isfinite(v)) continue;
        lo[k] = std::min(lo[k], v);
        hi[k] = std::max(hi[k], v);
      }
    }
  };
  for (const auto& layer : layers_) {
    extend(layer.a);
    if (layer.kind != Layer::Kind::points) extend(layer.b);
  }
  for (int k = 0; k < 2; ++k) {
    if (!(lo[k] <= hi[k])) {
      lo[k] = -1.0;
      hi[k] = 1.0;
    }
    const double pad = std::max(0.05 * (hi[k] - lo[k]), 0.5);
    lo[k] -= pad;
    hi[k] += pad;
  }

  const double margin_l = 34, margin_r = 8, margin_t = 22, margin_b = 22;
  const double pw = width - margin_l - margin_r;
  const double ph = height - margin_t - margin_b;
  // Equal aspect so displacements are not distorted.
  const double scale = std::min(pw / (hi[0] - lo[0]), ph / (hi[1] - lo[1]));
  const double ox = margin_l + 0.5 * (pw - scale * (hi[0] - lo[0]));
  const double oy = margin_t + 0.5 * (ph + scale * (hi[1] - lo[1]));
  auto sx = [&](double v) { return ox + scale * (v - lo[0]); };
  auto sy = [&](double v) { return oy - scale * (v - lo[1]); };

  std::string out = "<g transform=\"translate(" + num(x) + "," + num(y) + ")\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"" + num(width) + "\" height=\"" + num(height) +
         "\" fill=\"white\" stroke=\"#ccc\"/>\n";
  if (!title_.empty()) {
    out += "<text x=\"" + num(width / 2) + "\" y=\"15\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">" +
           escape(title_) + "</text>\n";
  }
  // axes
  const double ax0 = sx(lo[0]), ax1 = sx(hi[0]), ay0 = sy(lo[1]), ay1 = sy(hi[1]);
  out += "<path d=\"M" + num(ax0) + " " + num(ay1) + " V" + num(ay0) + " H" + num(ax1) +
         "\" fill=\"none\" stroke=\"#444\" stroke-width=\"0.8\"/>\n";
  for (int k = 0; k < 2; ++k) {
    const double step = std::pow(10.0, std::floor(std::log10((hi[k] - lo[k]) / 2.0)));
    const double mult = (hi[k] - lo[k]) / step > 10 ? 2.0 * step : step;
    for (double t = std::ceil(lo[k] / mult) * mult; t <= hi[k]; t += mult) {
      if (k == 0) {
        out += "<text x=\"" + num(sx(t)) + "\" y=\"" + num(ay0 + 12) +
               "\" text-anchor=\"middle\" font-size=\"8\" font-family=\"sans-serif\">" + tick_label(t) + "</text>\n";
      } else {
        out += "<text x=\"" + num(ax0 - 3) + "\" y=\"" + num(sy(t) + 3) +
               "\" text-anchor=\"end\" font-size=\"8\" font-family=\"sans-serif\">" + tick_label(t) + "</text>\n";
      }
    }
  }
  for (const auto& layer : layers_) {
    switch (layer.kind) {
      case Layer::Kind::points:
        out += "<g fill=\"" + layer.color + "\" fill-opacity=\"" + num(layer.opacity) + "\">\n";
        for (Eigen::Index i = 0; i < layer.a.rows(); ++i) {
          out += "<circle cx=\"" + num(sx(coord(layer.a, i, 0))) + "\" cy=\"" + num(sy(coord(layer.a, i, 1))) +
                 "\" r=\"" + num(layer.size) + "\"/>\n";
        }
        out += "</g>\n";
        break;
      case Layer::Kind::segments:
      case Layer::Kind::arrows: {
        const bool arrow = layer.kind == Layer::Kind::arrows;
        out += "<g stroke=\"" + layer.color + "\" stroke-width=\"" + num(layer.size) + "\" fill=\"none\">\n";
        for (Eigen::Index i = 0; i < layer.a.rows(); ++i) {
          const double x0 = sx(coord(layer.a, i, 0)), y0 = sy(coord(layer.a, i, 1));
          const double x1 = sx(coord(layer.b, i, 0)), y1 = sy(coord(layer.b, i, 1));
          const double op = layer.per_item_opacity.empty() ? layer.opacity
                                                           : layer.per_item_opacity[static_cast<std::size_t>(i)];
          out += "<path d=\"M" + num(x0) + " " + num(y0) + " L" + num(x1) + " " + num(y1);
          const double len = std::hypot(x1 - x0, y1 - y0);
          if (arrow && len > 4.0) {
            const double ux = (x1 - x0) / len, uy = (y1 - y0) / len;
            const double h = 4.0;
            out += " M" + num(x1 - h * ux + 0.5 * h * uy) + " " + num(y1 - h * uy - 0.5 * h * ux) + " L" + num(x1) +
                   " " + num(y1) + " L" + num(x1 - h * ux - 0.5 * h * uy) + " " + num(y1 - h * uy + 0.5 * h * ux);
          }
          out += "\" stroke-opacity=\"" + num(op) + "\"/>\n";
        }
        out += "</g>\n";
        break;
      }
    }
  }
  out += "</g>\n";
  return out;
}

std::string SvgPlot::render(double width, double height) const {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" + num(height) +
         "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\">\n" + render_group(0, 0, width, height) +
         "</svg>\n";
}

std::string svg_grid(const std::vector<SvgPlot>& panels, int columns, double panel_width, double panel_height) {
  if (columns < 1) throw std::invalid_argument("svg_grid: columns must be positive");
  const int rows = static_cast<int>((panels.size() + static_cast<std::size_t>(columns) - 1) / static_cast<std::size_t>(columns));
  const double width = panel_width * columns;
  const double height = panel_height * std::max(rows, 1);
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" + num(height) +
                    "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\">\n";
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const double x = panel_width * static_cast<double>(p % static_cast<std::size_t>(columns));
    const double y = panel_height * static_cast<double>(p / static_cast<std::size_t>(columns));
    out += panels[p].render_group(x, y, panel_width, panel_height);
  }
  out += "</svg>\n";
  return out;
}

}  // namespace uot
