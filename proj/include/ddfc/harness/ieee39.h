#pragma once

#include <cstdint>
#include <utility>

#include "ddfc/common/json.h"
#include "ddfc/grid/case.h"

namespace ddfc::harness {

using Range = std::pair<double, double>;

/// Uniform sampling ranges for the randomized 39-bus parameters.
struct CaseBounds {
  Range m{2.0, 8.0};
  Range d{0.5, 2.0};
  Range k{15.0, 25.0};
  Range nu{5.0, 10.0};
  Range lambda{0.2, 0.5};
  Range nu_ibr{0.1, 0.5};
  double line_spread = 0.2;  ///< susceptances scaled by U[1 − s, 1 + s]

  Json ToJson() const;
  static CaseBounds FromJson(const Json& j);
};

struct GeneratedCase {
  grid::GridCase grid;
  std::uint64_t seed = 0;
  CaseBounds bounds;
  int redraws = 0;  ///< rejected unstable draws before this one

  /// Case file with a "generator" record of seed and bounds.
  Json ToJson() const;
};

/// New England 39-bus network: SG at bus 31, inverters at 30 and 32–39
/// (VSG and droop alternating), loads at 1–29 with μ = 0. Draws whose
/// ZOH model at period Ts is open-loop unstable are redrawn (at most 20).
GeneratedCase BuildIeee39Case(std::uint64_t seed, const CaseBounds& bounds = {}, double Ts = 1.0);

}  // namespace ddfc::harness
