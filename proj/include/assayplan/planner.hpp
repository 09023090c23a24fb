#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "assayplan/env.hpp"

namespace assayplan {

struct PlannerParams {
  int n_itr = 20000;
  double c_ucb = 5.0;
  // Double progressive widening: at most ceil(k * n^alpha) expanded actions
  // per node and outcome children per action.
  double k_action = 2.0;
  double alpha_action = 0.5;
  double k_state = 1.0;
  double alpha_state = 0.5;
  /// Maximum rollout steps; negative means until terminal.
  int rollout_depth = -1;
  std::uint64_t seed = 0;
};

void check_params(const PlannerParams& p);

/// Identifies a decision state independently of the path that reached it:
/// the measured set plus the revealed outcomes in assay order.
struct StateKey {
  AssaySet measured = 0;
  std::vector<double> values;

  friend auto operator<=>(const StateKey&, const StateKey&) = default;
  friend bool operator==(const StateKey&, const StateKey&) = default;
};

StateKey key_of(const Environment& env, const CandidateState& s);

struct Policy {
  Action root_action;
  std::map<StateKey, Action> actions;

  std::optional<Action> at(const StateKey& key) const;
};

struct OutcomeChild {
  std::vector<double> signature;
  std::size_t record = 0;  // first record that produced this outcome
  int node = -1;
  int hits = 0;   // traversals
  int draws = 0;  // fresh model samples that produced this outcome
};

struct ActionEdge {
  Action action;
  int visits = 0;
  double value_sum = 0.0;
  std::vector<OutcomeChild> children;

  double mean() const { return visits > 0 ? value_sum / visits : 0.0; }
};

struct SearchNode {
  CandidateState state;
  Belief belief;
  int visits = 1;  // the creation visit
  bool terminal = false;
  bool infeasible = false;
  /// Discounted step reward plus any penalty collected on entering the node.
  double incoming = 0.0;
  std::vector<ActionEdge> edges;
  std::vector<Action> untried;
};

class SearchTree {
 public:
  SearchTree(const Environment& env, const CandidateState& root, const PlannerParams& params);

  void run(int iterations);
  void iterate();

  const std::vector<SearchNode>& nodes() const { return nodes_; }
  const SearchNode& root() const { return nodes_.front(); }
  const PlannerParams& params() const { return params_; }
  int iterations() const { return iterations_; }

  /// Index of the best edge at a node: highest mean value, ties by lower
  /// scalarized cost, then canonical order. -1 if nothing was expanded.
  int best_edge(const SearchNode& node) const;

 private:
  int make_node(CandidateState state, Belief belief, double incoming);
  int child_for(int node, int edge);
  std::size_t select_edge(int node);

  const Environment* env_;
  PlannerParams params_;
  Rng rng_;
  int root_step_ = 0;
  int iterations_ = 0;
  std::vector<SearchNode> nodes_;
};

/// Discounted return of the heuristic rollout from `s`, measured from a tree
/// root at step `root_step`. Stops at a terminal state, on infeasibility
/// (adding the penalty once), or after `depth_cap` steps when non-negative.
double rollout(const Environment& env, const CandidateState& s, const Belief& belief, int depth_cap, Rng& rng,
               int root_step);
inline double rollout(const Environment& env, const CandidateState& s, const Belief& belief, int depth_cap,
                      Rng& rng) {
  return rollout(env, s, belief, depth_cap, rng, s.step);
}

/// The batch the rollout uses at `s`: a uniformly drawn size, then the
/// cheapest subset of that size.
Action rollout_action(const Environment& env, const CandidateState& s, Rng& rng);

Policy extract_policy(const Environment& env, const SearchTree& tree);

struct PlanResult {
  SearchTree tree;
  Policy policy;
};

PlanResult plan(const Environment& env, const CandidateState& root, const PlannerParams& params);

/// Debug dump: nodes with visit counts, functionals and expanded actions.
std::string tree_to_json(const Environment& env, const SearchTree& tree, int max_depth = 3);

}  // namespace assayplan
