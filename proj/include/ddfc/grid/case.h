#pragma once

/// @file
/// Physical plant description: DC susceptance network, inertia/load bus
/// partition and one frequency-responsive device per inertia bus.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddfc/common/json.h"

namespace ddfc::grid {

enum class DeviceKind {
  kSG,         ///< synchronous generator with droop governor and reheater
  kIbrVsg,     ///< inverter with virtual synchronous generator control
  kIbrDroop,   ///< grid-forming inverter with droop and low-pass filter
};

std::string ToString(DeviceKind kind);
DeviceKind DeviceKindFromString(const std::string& s);

struct DeviceParams {
  DeviceKind kind = DeviceKind::kIbrVsg;
  double m = 0.0;  ///< inertia [s p.u.]
  double d = 0.0;  ///< damping [p.u.]
  // Synchronous generator.
  double k = 0.0;       ///< governor droop gain
  double nu = 0.0;      ///< slow reheat time constant [s]
  double lambda = 0.0;  ///< fast/slow reheat ratio in (0, 1)
  // Inverters.
  double nu_ibr = 0.0;  ///< secondary power tracking time constant [s]
  double k_droop = 0.0;    ///< droop gain k̃ (droop kind only)
  double omega_lpf = 0.0;  ///< filter cut-off [rad/s] (droop kind only)

  static DeviceParams Sg(double m, double d, double k, double nu, double lambda);
  static DeviceParams Vsg(double m, double d, double nu_ibr);
  /// m = 1/(k̃·ω_LPF) and d = 1/k̃.
  static DeviceParams Droop(double k_droop, double omega_lpf, double nu_ibr);

  bool is_sg() const { return kind == DeviceKind::kSG; }
  void Validate() const;
  Json ToJson() const;
  static DeviceParams FromJson(const Json& j);
};

/// Line between internal bus indices (0-based) with positive susceptance.
struct Line {
  int from = 0;
  int to = 0;
  double susceptance = 0.0;
};

/// Buses are ordered inertia first (0..N_I−1) then loads (N_I..N_I+N_L−1).
struct GridCase {
  int n_inertia = 0;
  int n_load = 0;
  /// Full susceptance matrix: off-diagonal −b, diagonal Σb.
  Eigen::MatrixXd B;
  Eigen::VectorXd load_damping;  ///< μ per load bus
  std::vector<DeviceParams> devices;
  double omega0 = 2.0 * 3.14159265358979323846 * 60.0;
  double base_mva = 100.0;
  std::vector<Line> lines;
  /// External bus numbers, one per internal index (used for naming only).
  std::vector<int> bus_labels;

  int num_buses() const { return n_inertia + n_load; }
  int num_sg() const;
  int num_ibr() const;

  /// Builds B from lines (no shunts).
  static Eigen::MatrixXd SusceptanceFromLines(int num_buses,
                                              const std::vector<Line>& lines);

  /// Throws ConfigError on inconsistent sizes, asymmetric B or bad devices.
  void Validate() const;

  /// Case file: {"omega0", "base_mva", "buses": [...], "lines": [...]}.
  /// Buses carry "label", "type" ("inertia" | "load"), "device" or "mu";
  /// lines reference bus labels.
  Json ToJson() const;
  static GridCase FromJson(const Json& j);
  static GridCase Load(const std::string& path);
  void Save(const std::string& path) const;

  /// Internal index of an external bus label; throws if unknown.
  int IndexOfLabel(int label) const;
};

}  // namespace ddfc::grid
