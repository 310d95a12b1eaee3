#pragma once

#include <optional>
#include <string>
#include <vector>

#include "imbrl/grid.hpp"

namespace imbrl::cli {

struct Rgb {
  unsigned char r, g, b;
};

/// Dark purple at 0 through teal to yellow at 1; t is clamped.
Rgb colormap(double t);

/// Binary PPM (P6), one square of `cell_px` pixels per cell. `values` is
/// indexed by cell; walls and cells without a value are drawn dark grey.
/// Values are scaled over [lo, hi]; a zero-width range maps everything to lo.
std::string heatmap_ppm(const GridSpec& grid, const std::vector<std::optional<double>>& values, double lo, double hi,
                         int cell_px);

/// SVG arrow map; cells with no action (walls, ties, the goal) get no arrow.
std::string policy_svg(const GridSpec& grid, const std::vector<std::optional<Action>>& actions, int cell_px);

}  // namespace imbrl::cli
