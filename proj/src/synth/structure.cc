#include "ddfc/synth/structure.h"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "ddfc/common/errors.h"

namespace ddfc::synth {

int AgentPartition::num_states() const {
  int s = 0;
  for (const auto& v : states) s += static_cast<int>(v.size());
  return s;
}

int AgentPartition::num_inputs() const {
  int s = 0;
  for (const auto& v : inputs) s += static_cast<int>(v.size());
  return s;
}

AgentPartition AgentPartition::FromStateMap(const grid::StateMap& map) {
  AgentPartition p;
  for (int i = 0; i < map.n_inertia; ++i) {
    p.states.push_back(map.agent_states(i));
    p.inputs.push_back({i});
  }
  return p;
}

AgentPartition AgentPartition::Uniform(int agents, int states_per_agent, int inputs_per_agent) {
  AgentPartition p;
  for (int i = 0; i < agents; ++i) {
    std::vector<int> s(states_per_agent), u(inputs_per_agent);
    std::iota(s.begin(), s.end(), i * states_per_agent);
    std::iota(u.begin(), u.end(), i * inputs_per_agent);
    p.states.push_back(std::move(s));
    p.inputs.push_back(std::move(u));
  }
  return p;
}

EntrySet AgentPartition::KEntries(int i, int j) const {
  EntrySet out;
  for (int a : inputs.at(i)) {
    for (int b : states.at(j)) out.emplace_back(a, b);
  }
  return out;
}

EntrySet AgentPartition::GEntries(int i, int j) const {
  EntrySet out;
  for (int a : states.at(i)) {
    for (int b : states.at(j)) out.emplace_back(a, b);
  }
  return out;
}

namespace {

void CheckCover(const std::vector<std::vector<int>>& groups, const char* what) {
  std::vector<int> all;
  for (const auto& g : groups) all.insert(all.end(), g.begin(), g.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i] != static_cast<int>(i)) {
      throw ConfigError(fmt::format("agent {} indices must partition 0..{}", what,
                                    static_cast<int>(all.size()) - 1));
    }
  }
}

}  // namespace

void AgentPartition::Validate() const {
  if (states.size() != inputs.size()) {
    throw ConfigError("agent partition: state and input group counts differ");
  }
  CheckCover(states, "state");
  CheckCover(inputs, "input");
}

Json AgentPartition::ToJson() const {
  Json j;
  j["states"] = states;
  j["inputs"] = inputs;
  return j;
}

AgentPartition AgentPartition::FromJson(const Json& j) {
  AgentPartition p;
  p.states = j.at("states").get<std::vector<std::vector<int>>>();
  p.inputs = j.at("inputs").get<std::vector<std::vector<int>>>();
  p.Validate();
  return p;
}

Adjacency DenseAdjacency(int agents) { return Adjacency::Ones(agents, agents); }

Adjacency DecentralizedAdjacency(int agents) { return Adjacency::Identity(agents, agents); }

int OffDiagonalLinks(const Adjacency& delta) {
  int c = 0;
  for (Eigen::Index i = 0; i < delta.rows(); ++i) {
    for (Eigen::Index j = 0; j < delta.cols(); ++j) c += i != j && delta(i, j) != 0;
  }
  return c;
}

namespace {

void CheckAdjacency(const AgentPartition& p, const Adjacency& delta) {
  p.Validate();
  if (delta.rows() != p.agents() || delta.cols() != p.agents()) {
    throw ConfigError(fmt::format("adjacency is {}x{} for {} agents", delta.rows(), delta.cols(),
                                  p.agents()));
  }
}

bool Linked(const Adjacency& delta, int i, int j) { return i == j || delta(i, j) != 0; }

void SortUnique(EntrySet* s) {
  std::sort(s->begin(), s->end());
  s->erase(std::unique(s->begin(), s->end()), s->end());
}

}  // namespace

StructuralZeros StructuralEqualities(const AgentPartition& partition, const Adjacency& delta) {
  CheckAdjacency(partition, delta);
  const int na = partition.agents();
  StructuralZeros z;
  for (int i = 0; i < na; ++i) {
    for (int j = 0; j < na; ++j) {
      if (Linked(delta, i, j)) continue;
      for (const auto& e : partition.KEntries(i, j)) z.y.push_back(e);
      for (int q = 0; q < na; ++q) {
        // q = i covers the direct G block.
        if (!Linked(delta, i, q)) continue;
        for (const auto& e : partition.GEntries(q, j)) z.g.push_back(e);
      }
    }
  }
  SortUnique(&z.y);
  SortUnique(&z.g);
  return z;
}

EntrySet ForbiddenGainEntries(const AgentPartition& partition, const Adjacency& delta) {
  CheckAdjacency(partition, delta);
  EntrySet out;
  for (int i = 0; i < partition.agents(); ++i) {
    for (int j = 0; j < partition.agents(); ++j) {
      if (Linked(delta, i, j)) continue;
      for (const auto& e : partition.KEntries(i, j)) out.push_back(e);
    }
  }
  SortUnique(&out);
  return out;
}

double MaxForbiddenGain(const Eigen::MatrixXd& K, const AgentPartition& partition,
                        const Adjacency& delta) {
  double worst = 0.0;
  for (const auto& [a, b] : ForbiddenGainEntries(partition, delta)) {
    worst = std::max(worst, std::abs(K(a, b)));
  }
  return worst;
}

Json AdjacencyToJson(const Adjacency& delta) {
  Json links = Json::array();
  for (Eigen::Index i = 0; i < delta.rows(); ++i) {
    for (Eigen::Index j = 0; j < delta.cols(); ++j) {
      if (i != j && delta(i, j)) links.push_back({{"from", j}, {"to", i}});
    }
  }
  Json j;
  j["agents"] = delta.rows();
  j["links"] = std::move(links);
  return j;
}

Adjacency AdjacencyFromJson(const Json& j, int agents) {
  const int na = j.value("agents", agents);
  if (agents >= 0 && na != agents) {
    throw ConfigError(fmt::format("topology has {} agents, expected {}", na, agents));
  }
  Adjacency d = DecentralizedAdjacency(na);
  for (const Json& l : j.at("links")) {
    const int from = l.at("from");
    const int to = l.at("to");
    if (from < 0 || to < 0 || from >= na || to >= na) {
      throw ConfigError(fmt::format("link {}->{} out of range", from, to));
    }
    d(to, from) = 1;
  }
  return d;
}

}  // namespace ddfc::synth
