#include "render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace imbrl::cli {

Rgb colormap(double t) {
  static constexpr std::array<std::array<double, 3>, 5> stops = {{
      {68, 1, 84},
      {59, 82, 139},
      {33, 145, 140},
      {94, 201, 98},
      {253, 231, 37},
  }};
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
  const double pos = t * (stops.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(pos), stops.size() - 2);
  const double f = pos - static_cast<double>(i);
  auto mix = [&](int c) {
    return static_cast<unsigned char>(std::lround(stops[i][c] + f * (stops[i + 1][c] - stops[i][c])));
  };
  return {mix(0), mix(1), mix(2)};
}

std::string heatmap_ppm(const GridSpec& grid, const std::vector<std::optional<double>>& values, double lo, double hi,
                        int cell_px) {
  const int w = grid.width() * cell_px, h = grid.height() * cell_px;
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + static_cast<std::size_t>(w) * h * 3);
  const double span = hi - lo;
  for (int y = 0; y < grid.height(); ++y)
    for (int x = 0; x < grid.width(); ++x) {
      const auto& v = values[static_cast<std::size_t>(grid.index({x, y}))];
      Rgb c{40, 40, 40};
      if (v) c = colormap(span > 0 ? (*v - lo) / span : 0.0);
      for (int py = 0; py < cell_px; ++py)
        for (int px = 0; px < cell_px; ++px) {
          const std::size_t o = header + 3 * (static_cast<std::size_t>(y * cell_px + py) * w + x * cell_px + px);
          out[o] = static_cast<char>(c.r);
          out[o + 1] = static_cast<char>(c.g);
          out[o + 2] = static_cast<char>(c.b);
        }
    }
  return out;
}

std::string policy_svg(const GridSpec& grid, const std::vector<std::optional<Action>>& actions, int cell_px) {
  std::ostringstream s;
  const int w = grid.width() * cell_px, h = grid.height() * cell_px;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
    << ' ' << h << "\">\n";
  s << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  const double half = cell_px / 2.0, len = cell_px * 0.35, head = cell_px * 0.15;
  for (int y = 0; y < grid.height(); ++y)
    for (int x = 0; x < grid.width(); ++x) {
      const State st{x, y};
      const int x0 = x * cell_px, y0 = y * cell_px;
      if (!grid.feasible(st)) {
        s << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << cell_px << "\" height=\"" << cell_px
          << "\" fill=\"#282828\"/>\n";
        continue;
      }
      if (st == grid.goal()) {
        s << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << cell_px << "\" height=\"" << cell_px
          << "\" fill=\"#fde725\"/>\n";
        continue;
      }
      if (st == grid.start())
        s << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << cell_px << "\" height=\"" << cell_px
          << "\" fill=\"#cfe8ff\"/>\n";
      const auto& a = actions[static_cast<std::size_t>(grid.index(st))];
      if (!a) continue;
      double dx = 0, dy = 0;
      switch (*a) {
        case Action::Up: dy = -1; break;
        case Action::Down: dy = 1; break;
        case Action::Left: dx = -1; break;
        case Action::Right: dx = 1; break;
      }
      const double cx = x0 + half, cy = y0 + half;
      const double tx = cx + dx * len, ty = cy + dy * len;
      const double bx = cx - dx * len, by = cy - dy * len;
      // Arrowhead: two points behind the tip, offset perpendicular to the shaft.
      const double lx = tx - dx * head - dy * head, ly = ty - dy * head + dx * head;
      const double rx = tx - dx * head + dy * head, ry = ty - dy * head - dx * head;
      s << "<path d=\"M" << bx << ' ' << by << " L" << tx << ' ' << ty << " M" << lx << ' ' << ly << " L" << tx << ' '
        << ty << " L" << rx << ' ' << ry << "\" stroke=\"black\" stroke-width=\"2\" fill=\"none\"/>\n";
    }
  s << "</svg>\n";
  return s.str();
}

}  // namespace imbrl::cli
