#include "flowtrack/types.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace flowtrack {

void validate(const Detection& d) {
  if (d.frame < 0) throw std::invalid_argument("detection frame must be >= 0, got " + std::to_string(d.frame));
  if (!(d.w > 0.0) || !(d.h > 0.0))
    throw std::invalid_argument("detection box must have positive size, got w=" + std::to_string(d.w) +
                                " h=" + std::to_string(d.h));
  if (!std::isfinite(d.x) || !std::isfinite(d.y) || !std::isfinite(d.w) || !std::isfinite(d.h) ||
      !std::isfinite(d.score))
    throw std::invalid_argument("detection contains non-finite values");
  if (d.score < 0.0 || d.score > 1.0)
    throw std::invalid_argument("detection score must lie in [0,1], got " + std::to_string(d.score));
}

}  // namespace flowtrack
