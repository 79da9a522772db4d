#include "ddfc/grid/case.h"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "ddfc/common/errors.h"

namespace ddfc::grid {

std::string ToString(DeviceKind kind) {
  switch (kind) {
    case DeviceKind::kSG:
      return "SG";
    case DeviceKind::kIbrVsg:
      return "IBR_VSG";
    case DeviceKind::kIbrDroop:
      return "IBR_Droop";
  }
  return "?";
}

DeviceKind DeviceKindFromString(const std::string& s) {
  if (s == "SG") return DeviceKind::kSG;
  if (s == "IBR_VSG") return DeviceKind::kIbrVsg;
  if (s == "IBR_Droop") return DeviceKind::kIbrDroop;
  throw ConfigError(fmt::format("unknown device kind '{}'", s));
}

DeviceParams DeviceParams::Sg(double m, double d, double k, double nu, double lambda) {
  DeviceParams p;
  p.kind = DeviceKind::kSG;
  p.m = m;
  p.d = d;
  p.k = k;
  p.nu = nu;
  p.lambda = lambda;
  return p;
}

DeviceParams DeviceParams::Vsg(double m, double d, double nu_ibr) {
  DeviceParams p;
  p.kind = DeviceKind::kIbrVsg;
  p.m = m;
  p.d = d;
  p.nu_ibr = nu_ibr;
  return p;
}

DeviceParams DeviceParams::Droop(double k_droop, double omega_lpf, double nu_ibr) {
  DeviceParams p;
  p.kind = DeviceKind::kIbrDroop;
  p.k_droop = k_droop;
  p.omega_lpf = omega_lpf;
  p.m = 1.0 / (k_droop * omega_lpf);
  p.d = 1.0 / k_droop;
  p.nu_ibr = nu_ibr;
  return p;
}

void DeviceParams::Validate() const {
  auto positive = [&](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ConfigError(fmt::format("{} device: {} must be positive, got {}",
                                    ToString(kind), name, v));
    }
  };
  positive(m, "m");
  positive(d, "d");
  switch (kind) {
    case DeviceKind::kSG:
      positive(k, "k");
      positive(nu, "nu");
      if (!(lambda > 0.0 && lambda < 1.0)) {
        throw ConfigError(fmt::format("SG lambda must lie in (0,1), got {}", lambda));
      }
      break;
    case DeviceKind::kIbrDroop:
      positive(k_droop, "k_droop");
      positive(omega_lpf, "omega_lpf");
      if (std::abs(m - 1.0 / (k_droop * omega_lpf)) > 1e-12 * m ||
          std::abs(d - 1.0 / k_droop) > 1e-12 * d) {
        throw ConfigError("IBR_Droop m, d must equal 1/(k_droop omega_lpf), 1/k_droop");
      }
      [[fallthrough]];
    case DeviceKind::kIbrVsg:
      positive(nu_ibr, "nu_ibr");
      break;
  }
}

Json DeviceParams::ToJson() const {
  Json j;
  j["kind"] = ToString(kind);
  switch (kind) {
    case DeviceKind::kSG:
      j["m"] = m;
      j["d"] = d;
      j["k"] = k;
      j["nu"] = nu;
      j["lambda"] = lambda;
      break;
    case DeviceKind::kIbrVsg:
      j["m"] = m;
      j["d"] = d;
      j["nu_ibr"] = nu_ibr;
      break;
    case DeviceKind::kIbrDroop:
      j["k_droop"] = k_droop;
      j["omega_lpf"] = omega_lpf;
      j["nu_ibr"] = nu_ibr;
      break;
  }
  return j;
}

DeviceParams DeviceParams::FromJson(const Json& j) {
  const DeviceKind kind = DeviceKindFromString(j.at("kind").get<std::string>());
  DeviceParams p;
  switch (kind) {
    case DeviceKind::kSG:
      p = Sg(j.at("m"), j.at("d"), j.at("k"), j.at("nu"), j.at("lambda"));
      break;
    case DeviceKind::kIbrVsg:
      p = Vsg(j.at("m"), j.at("d"), j.at("nu_ibr"));
      break;
    case DeviceKind::kIbrDroop:
      p = Droop(j.at("k_droop"), j.at("omega_lpf"), j.at("nu_ibr"));
      break;
  }
  p.Validate();
  return p;
}

int GridCase::num_sg() const {
  return static_cast<int>(std::count_if(devices.begin(), devices.end(),
                                        [](const DeviceParams& d) { return d.is_sg(); }));
}

int GridCase::num_ibr() const { return static_cast<int>(devices.size()) - num_sg(); }

Eigen::MatrixXd GridCase::SusceptanceFromLines(int num_buses,
                                               const std::vector<Line>& lines) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(num_buses, num_buses);
  for (const Line& l : lines) {
    if (l.from < 0 || l.to < 0 || l.from >= num_buses || l.to >= num_buses ||
        l.from == l.to) {
      throw ConfigError(fmt::format("invalid line {}-{}", l.from, l.to));
    }
    b(l.from, l.to) -= l.susceptance;
    b(l.to, l.from) -= l.susceptance;
    b(l.from, l.from) += l.susceptance;
    b(l.to, l.to) += l.susceptance;
  }
  return b;
}

void GridCase::Validate() const {
  const int nb = num_buses();
  if (n_inertia <= 0 || n_load < 0) throw ConfigError("case needs inertia buses");
  if (B.rows() != nb || B.cols() != nb) {
    throw ConfigError(fmt::format("B is {}x{}, expected {}x{}", B.rows(), B.cols(), nb, nb));
  }
  if (!B.allFinite()) throw ConfigError("B has non-finite entries");
  const double scale = std::max(1.0, B.cwiseAbs().maxCoeff());
  if ((B - B.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw ConfigError("susceptance matrix is not symmetric");
  }
  if (load_damping.size() != n_load) {
    throw ConfigError(fmt::format("{} load damping values for {} load buses",
                                  load_damping.size(), n_load));
  }
  if ((load_damping.array() < 0.0).any()) throw ConfigError("load damping must be >= 0");
  if (static_cast<int>(devices.size()) != n_inertia) {
    throw ConfigError(fmt::format("{} devices for {} inertia buses", devices.size(),
                                  n_inertia));
  }
  for (const auto& d : devices) d.Validate();
  if (!(omega0 > 0.0)) throw ConfigError("omega0 must be positive");
  if (!bus_labels.empty() && static_cast<int>(bus_labels.size()) != nb) {
    throw ConfigError("bus_labels size mismatch");
  }
}

int GridCase::IndexOfLabel(int label) const {
  if (bus_labels.empty()) {
    if (label >= 0 && label < num_buses()) return label;
  } else {
    auto it = std::find(bus_labels.begin(), bus_labels.end(), label);
    if (it != bus_labels.end()) return static_cast<int>(it - bus_labels.begin());
  }
  throw ConfigError(fmt::format("unknown bus label {}", label));
}

Json GridCase::ToJson() const {
  Json j;
  j["omega0"] = omega0;
  j["base_mva"] = base_mva;
  auto label = [&](int i) { return bus_labels.empty() ? i : bus_labels[i]; };
  Json buses = Json::array();
  for (int i = 0; i < num_buses(); ++i) {
    Json b;
    b["label"] = label(i);
    if (i < n_inertia) {
      b["type"] = "inertia";
      b["device"] = devices[i].ToJson();
    } else {
      b["type"] = "load";
      b["mu"] = load_damping(i - n_inertia);
    }
    buses.push_back(std::move(b));
  }
  j["buses"] = std::move(buses);
  Json ls = Json::array();
  for (const Line& l : lines) {
    ls.push_back(Json{{"from", label(l.from)}, {"to", label(l.to)},
                      {"susceptance", l.susceptance}});
  }
  j["lines"] = std::move(ls);
  return j;
}

GridCase GridCase::FromJson(const Json& j) {
  GridCase c;
  try {
    c.omega0 = j.value("omega0", c.omega0);
    c.base_mva = j.value("base_mva", c.base_mva);
    std::vector<const Json*> inertia, load;
    for (const Json& b : j.at("buses")) {
      const std::string type = b.at("type").get<std::string>();
      if (type == "inertia") {
        inertia.push_back(&b);
      } else if (type == "load") {
        load.push_back(&b);
      } else {
        throw ConfigError(fmt::format("unknown bus type '{}'", type));
      }
    }
    c.n_inertia = static_cast<int>(inertia.size());
    c.n_load = static_cast<int>(load.size());
    c.load_damping = Eigen::VectorXd::Zero(c.n_load);
    std::map<int, int> index;
    for (const Json* b : inertia) {
      const int label = b->at("label").get<int>();
      if (!index.emplace(label, static_cast<int>(c.bus_labels.size())).second) {
        throw ConfigError(fmt::format("duplicate bus label {}", label));
      }
      c.bus_labels.push_back(label);
      c.devices.push_back(DeviceParams::FromJson(b->at("device")));
    }
    for (std::size_t i = 0; i < load.size(); ++i) {
      const int label = load[i]->at("label").get<int>();
      if (!index.emplace(label, static_cast<int>(c.bus_labels.size())).second) {
        throw ConfigError(fmt::format("duplicate bus label {}", label));
      }
      c.bus_labels.push_back(label);
      c.load_damping(static_cast<Eigen::Index>(i)) = load[i]->value("mu", 0.0);
    }
    for (const Json& l : j.at("lines")) {
      const int from = l.at("from").get<int>();
      const int to = l.at("to").get<int>();
      if (!index.count(from) || !index.count(to)) {
        throw ConfigError(fmt::format("line {}-{} references an unknown bus", from, to));
      }
      Line line{index[from], index[to], l.at("susceptance").get<double>()};
      if (!(line.susceptance > 0.0)) {
        throw ConfigError(fmt::format("line {}-{} susceptance must be positive", from, to));
      }
      c.lines.push_back(line);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed case file: {}", e.what()));
  }
  c.B = SusceptanceFromLines(c.num_buses(), c.lines);
  c.Validate();
  return c;
}

GridCase GridCase::Load(const std::string& path) { return FromJson(ReadJsonFile(path)); }

void GridCase::Save(const std::string& path) const { WriteJsonFile(path, ToJson()); }

}  // namespace ddfc::grid
