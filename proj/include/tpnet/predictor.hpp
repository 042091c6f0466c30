#pragma once

#include <array>

#include "tpnet/interval.hpp"
#include "tpnet/phantom.hpp"

namespace tpnet {

struct Prediction {
  Interval interval;                   // original-volume slice coordinates
  Interval crop_interval;              // sub-volume coordinates
  std::array<double, 2> position{0.0, 0.0};  // detected (row, col)
  std::array<int, 3> crop_origin{0, 0, 0};
};

// Anything that maps a patient to a predicted implant interval. Implementations
// must be safe to call concurrently.
class IntervalPredictor {
 public:
  virtual ~IntervalPredictor() = default;
  virtual Prediction predict(const PatientRecord& record) const = 0;
};

}  // namespace tpnet
