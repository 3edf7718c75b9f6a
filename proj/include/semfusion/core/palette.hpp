#pragma once

#include "semfusion/core/image.hpp"

namespace semfusion {

/// Deterministic class-id palette (golden-ratio hue walk); id <= 0 maps to a
/// dark gray. Shared by synthetic RGB, debug dumps, and mesh coloring.
Rgb8 class_color(int class_id);

}  // namespace semfusion
