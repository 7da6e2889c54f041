#pragma once

#include <string>
#include <vector>

#include "uotkit/types.hpp"

namespace uot {

/// Minimal 2-D scatter/arrow plot emitted as SVG. Only the first two
/// coordinates of each point are drawn; bounds fit all layers.
class SvgPlot {
 public:
  explicit SvgPlot(std::string title = {}) : title_(std::move(title)) {}

  void scatter(const Matrix& points, const std::string& color, double radius = 2.5, double opacity = 0.8);
  /// Straight segments from[i] -> to[i]; `opacity` per segment when given.
  void segments(const Matrix& from, const Matrix& to, const std::string& color, double width = 0.6,
                const std::vector<double>& opacity = {});
  void arrows(const Matrix& from, const Matrix& to, const std::string& color, double width = 0.7);
  /// Draws the `max_lines` heaviest plan entries as segments, opacity
  /// proportional to mass relative to the heaviest.
  void coupling(const Matrix& source, const Matrix& target, const Matrix& plan, const std::string& color,
                std::size_t max_lines = 600);

  const std::string& title() const { return title_; }

  /// Standalone document.
  std::string render(double width = 360, double height = 300) const;
  /// A <g> element placed at (x, y), for composing grids.
  std::string render_group(double x, double y, double width, double height) const;

 private:
  struct Layer {
    enum class Kind { points, segments, arrows } kind = Kind::points;
    Matrix a, b;
    std::string color;
    double size = 1.0;
    double opacity = 1.0;
    std::vector<double> per_item_opacity;
  };
  std::string title_;
  std::vector<Layer> layers_;
};

/// Panels laid out row-major, `columns` per row.
std::string svg_grid(const std::vector<SvgPlot>& panels, int columns, double panel_width = 320,
                     double panel_height = 260);

}  // namespace uot
