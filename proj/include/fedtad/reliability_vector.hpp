#pragma once

#include <vector>

namespace fedtad {

/// Per-class knowledge reliability uploaded by one client. Nonnegative, one entry per class;
/// classes absent from the client's labeled training set score exactly 0.
struct ReliabilityVector {
  std::vector<double> phi;

  friend bool operator==(const ReliabilityVector&, const ReliabilityVector&) = default;
};

}  // namespace fedtad
