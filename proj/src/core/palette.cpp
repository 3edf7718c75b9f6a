#include <cmath>

#include "semfusion/core/palette.hpp"

namespace semfusion {

Rgb8 class_color(int class_id) {
  if (class_id <= 0) return {40, 40, 40};
  const double h = std::fmod(class_id * 0.61803398874989485, 1.0) * 6.0;
  const double s = 0.75, v = 0.95;
  const int sector = static_cast<int>(h);
  const double f = h - sector;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r = 0, g = 0, b = 0;
  switch (sector % 6) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    case 5: r = v; g = p; b = q; break;
  }
  return {static_cast<uint8_t>(std::lround(r * 255)),
          static_cast<uint8_t>(std::lround(g * 255)),
          static_cast<uint8_t>(std::lround(b * 255))};
}

}  // namespace semfusion
