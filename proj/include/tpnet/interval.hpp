#pragma once

#include <algorithm>

namespace tpnet {

// Continuous slice-index interval [start, end). Raw network output may have
// end < start; validity is checked where it matters.
struct Interval {
  double start = 0.0;
  double end = 0.0;

  double length() const { return std::max(0.0, end - start); }
  bool valid() const { return start < end; }
  Interval shifted(double offset) const { return {start + offset, end + offset}; }

  bool operator==(const Interval&) const = default;
};

}  // namespace tpnet
