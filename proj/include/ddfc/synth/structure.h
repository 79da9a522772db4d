#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ddfc/common/json.h"
#include "ddfc/grid/model.h"

namespace ddfc::synth {

using EntrySet = std::vector<std::pair<int, int>>;

/// Which state and input indices belong to each agent.
struct AgentPartition {
  std::vector<std::vector<int>> states;
  std::vector<std::vector<int>> inputs;

  int agents() const { return static_cast<int>(states.size()); }
  int num_states() const;
  int num_inputs() const;

  /// Agent i owns (θ_i, ω_i, its device state) and input i.
  static AgentPartition FromStateMap(const grid::StateMap& map);
  /// Agent i owns states [i·sa, (i+1)·sa) and inputs [i·ia, (i+1)·ia).
  static AgentPartition Uniform(int agents, int states_per_agent, int inputs_per_agent);

  /// 𝓘_{K,ij}: entries of K (inputs of i, states of j).
  EntrySet KEntries(int i, int j) const;
  /// 𝓘_{G,ij}: entries of G (states of i, states of j).
  EntrySet GEntries(int i, int j) const;

  void Validate() const;
  Json ToJson() const;
  static AgentPartition FromJson(const Json& j);
};

/// δ_{ij} = 1 iff agent i receives agent j's state. Diagonal is forced to 1.
using Adjacency = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

Adjacency DenseAdjacency(int agents);
Adjacency DecentralizedAdjacency(int agents);
int OffDiagonalLinks(const Adjacency& delta);

/// Zero patterns on (Y, G) that make K = Y G⁻¹ respect δ:
///  Y on 𝓘_{K,ij} and G on 𝓘_{G,ij} whenever δ_ij = 0, and G on 𝓘_{G,zj}
///  whenever δ_ij = 0 and δ_iz = 1. Sorted and duplicate-free.
struct StructuralZeros {
  EntrySet y;
  EntrySet g;
  bool empty() const { return y.empty() && g.empty(); }
};

StructuralZeros StructuralEqualities(const AgentPartition& partition, const Adjacency& delta);

/// Entries of K that δ forbids.
EntrySet ForbiddenGainEntries(const AgentPartition& partition, const Adjacency& delta);

/// Largest |K_ab| over the forbidden entries.
double MaxForbiddenGain(const Eigen::MatrixXd& K, const AgentPartition& partition,
                        const Adjacency& delta);

Json AdjacencyToJson(const Adjacency& delta);
Adjacency AdjacencyFromJson(const Json& j, int agents);

}  // namespace ddfc::synth
