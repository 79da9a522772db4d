#include "ddfc/harness/ieee39.h"

#include <array>
#include <random>

#include <fmt/format.h>

#include "ddfc/common/errors.h"
#include "ddfc/grid/model.h"

namespace ddfc::harness {
namespace {

struct Branch {
  int from;
  int to;
  double x;  // p.u. reactance on 100 MVA
};

// New England 39-bus branch reactances.
constexpr std::array<Branch, 46> kBranches = {{
    {1, 2, 0.0411},   {1, 39, 0.0250},  {2, 3, 0.0151},   {2, 25, 0.0086},  {2, 30, 0.0181},
    {3, 4, 0.0213},   {3, 18, 0.0133},  {4, 5, 0.0128},   {4, 14, 0.0129},  {5, 6, 0.0026},
    {5, 8, 0.0112},   {6, 7, 0.0092},   {6, 11, 0.0082},  {6, 31, 0.0250},  {7, 8, 0.0046},
    {8, 9, 0.0363},   {9, 39, 0.0250},  {10, 11, 0.0043}, {10, 13, 0.0043}, {10, 32, 0.0200},
    {12, 11, 0.0435}, {12, 13, 0.0435}, {13, 14, 0.0101}, {14, 15, 0.0217}, {15, 16, 0.0094},
    {16, 17, 0.0089}, {16, 19, 0.0195}, {16, 21, 0.0135}, {16, 24, 0.0059}, {17, 18, 0.0082},
    {17, 27, 0.0173}, {19, 20, 0.0138}, {19, 33, 0.0142}, {20, 34, 0.0180}, {21, 22, 0.0140},
    {22, 23, 0.0096}, {22, 35, 0.0143}, {23, 24, 0.0350}, {23, 36, 0.0272}, {25, 26, 0.0323},
    {25, 37, 0.0232}, {26, 27, 0.0147}, {26, 28, 0.0474}, {26, 29, 0.0625}, {28, 29, 0.0151},
    {29, 38, 0.0156},
}};

constexpr int kFirstInertiaBus = 30;
constexpr int kSgBus = 31;

Json RangeJson(const Range& r) { return Json::array({r.first, r.second}); }

Range RangeFrom(const Json& j, const char* key, const Range& dflt) {
  if (!j.contains(key)) return dflt;
  const Json& a = j[key];
  if (!a.is_array() || a.size() != 2) throw ConfigError(fmt::format("bound '{}' must be [lo, hi]", key));
  Range r{a[0].get<double>(), a[1].get<double>()};
  if (!(r.first <= r.second)) throw ConfigError(fmt::format("bound '{}' has lo > hi", key));
  return r;
}

grid::GridCase Draw(std::mt19937_64& rng, const CaseBounds& b) {
  auto uni = [&rng](const Range& r) {
    return std::uniform_real_distribution<double>(r.first, r.second)(rng);
  };
  grid::GridCase c;
  c.n_inertia = 10;
  c.n_load = 29;
  // Internal order: buses 30..39, then 1..29.
  auto index = [](int bus) { return bus >= kFirstInertiaBus ? bus - kFirstInertiaBus : bus + 9; };
  c.bus_labels.resize(39);
  for (int bus = 1; bus <= 39; ++bus) c.bus_labels[index(bus)] = bus;
  for (int i = 0; i < c.n_inertia; ++i) {
    const int bus = kFirstInertiaBus + i;
    const double m = uni(b.m);
    const double d = uni(b.d);
    if (bus == kSgBus) {
      const double k = uni(b.k);
      const double nu = uni(b.nu);
      const double lambda = uni(b.lambda);
      c.devices.push_back(grid::DeviceParams::Sg(m, d, k, nu, lambda));
    } else if (i % 2 == 0) {
      c.devices.push_back(grid::DeviceParams::Vsg(m, d, uni(b.nu_ibr)));
    } else {
      // Droop with k̃ = 1/d and ω_LPF = d/m reproduces the sampled (m, d).
      c.devices.push_back(grid::DeviceParams::Droop(1.0 / d, d / m, uni(b.nu_ibr)));
    }
  }
  const Range spread{1.0 - b.line_spread, 1.0 + b.line_spread};
  for (const Branch& br : kBranches) {
    c.lines.push_back({index(br.from), index(br.to), uni(spread) / br.x});
  }
  c.B = grid::GridCase::SusceptanceFromLines(c.num_buses(), c.lines);
  c.load_damping = Eigen::VectorXd::Zero(c.n_load);
  return c;
}

}  // namespace

Json CaseBounds::ToJson() const {
  Json j;
  j["m"] = RangeJson(m);
  j["d"] = RangeJson(d);
  j["k"] = RangeJson(k);
  j["nu"] = RangeJson(nu);
  j["lambda"] = RangeJson(lambda);
  j["nu_ibr"] = RangeJson(nu_ibr);
  j["line_spread"] = line_spread;
  return j;
}

CaseBounds CaseBounds::FromJson(const Json& j) {
  CaseBounds b;
  b.m = RangeFrom(j, "m", b.m);
  b.d = RangeFrom(j, "d", b.d);
  b.k = RangeFrom(j, "k", b.k);
  b.nu = RangeFrom(j, "nu", b.nu);
  b.lambda = RangeFrom(j, "lambda", b.lambda);
  b.nu_ibr = RangeFrom(j, "nu_ibr", b.nu_ibr);
  b.line_spread = j.value("line_spread", b.line_spread);
  if (!(b.line_spread >= 0.0 && b.line_spread < 1.0)) {
    throw ConfigError("line_spread must be in [0, 1)");
  }
  return b;
}

Json GeneratedCase::ToJson() const {
  Json j = grid.ToJson();
  Json g;
  g["network"] = "ieee39";
  g["seed"] = seed;
  g["redraws"] = redraws;
  g["bounds"] = bounds.ToJson();
  j["generator"] = std::move(g);
  return j;
}

GeneratedCase BuildIeee39Case(std::uint64_t seed, const CaseBounds& bounds, double Ts) {
  std::mt19937_64 rng(seed);
  constexpr int kMaxRedraws = 20;
  double last_radius = 0.0;
  for (int attempt = 0; attempt <= kMaxRedraws; ++attempt) {
    grid::GridCase c = Draw(rng, bounds);
    c.Validate();
    const grid::LtiModel lti = grid::DiscretizeZoh(grid::BuildContinuous(c), Ts);
    const grid::StabilityReport st = grid::AnalyzeOpenLoop(lti);
    if (st.stable) return GeneratedCase{std::move(c), seed, bounds, attempt};
    last_radius = st.reduced_spectral_radius;
  }
  throw NumericalError(fmt::format(
      "39-bus draw open-loop unstable after {} redraws (last spectral radius {:.6f})", kMaxRedraws,
      last_radius));
}

}  // namespace ddfc::harness
