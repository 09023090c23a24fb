#include "assayplan/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace assayplan {

void check_params(const PlannerParams& p) {
  if (p.n_itr < 1) throw ConfigError("n_itr must be at least 1");
  if (!(p.c_ucb >= 0.0)) throw ConfigError("c_ucb must be non-negative");
  if (!(p.k_action >= 1.0) || !(p.k_state >= 1.0)) throw ConfigError("widening coefficients must be at least 1");
  if (!(p.alpha_action > 0.0 && p.alpha_action < 1.0) || !(p.alpha_state > 0.0 && p.alpha_state < 1.0))
    throw ConfigError("widening exponents must lie in (0, 1)");
}

StateKey key_of(const Environment& env, const CandidateState& s) {
  StateKey k;
  k.measured = s.measured;
  const auto& d = env.dataset();
  for (auto j : members(s.measured)) k.values.push_back(*s.known[d.assays[j].outcome_feature]);
  return k;
}

std::optional<Action> Policy::at(const StateKey& key) const {
  auto it = actions.find(key);
  if (it == actions.end()) return std::nullopt;
  return it->second;
}

SearchTree::SearchTree(const Environment& env, const CandidateState& root, const PlannerParams& params)
    : env_(&env), params_(params), rng_(params.seed), root_step_(root.step) {
  check_params(params);
  Belief b = env.evaluate(root);
  const int r = make_node(root, std::move(b), 0.0);
  auto& n = nodes_[static_cast<std::size_t>(r)];
  n.terminal = env.is_terminal(n.state, n.belief.f.H);
  if (n.terminal) n.untried.clear();
}

int SearchTree::make_node(CandidateState state, Belief belief, double incoming) {
  SearchNode n;
  n.untried = env_->enumerate_actions(state);
  n.state = std::move(state);
  n.belief = std::move(belief);
  n.incoming = incoming;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size() - 1);
}

std::size_t SearchTree::select_edge(int ni) {
  auto& node = nodes_[static_cast<std::size_t>(ni)];
  const double allowed = std::ceil(params_.k_action * std::pow(static_cast<double>(node.visits + 1), params_.alpha_action));
  if (static_cast<double>(node.edges.size()) < allowed && !node.untried.empty()) {
    const std::size_t pick = uniform_index(rng_, node.untried.size());
    node.edges.push_back(ActionEdge{node.untried[pick], 0, 0.0, {}});
    node.untried.erase(node.untried.begin() + static_cast<std::ptrdiff_t>(pick));
    return node.edges.size() - 1;
  }
  const double log_n = std::log(static_cast<double>(node.visits));
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < node.edges.size(); ++e) {
    const auto& edge = node.edges[e];
    const double score = edge.mean() + params_.c_ucb * std::sqrt(log_n / edge.visits);
    if (score > best_score) {
      best_score = score;
      best = e;
    }
  }
  return best;
}

// Follows (or creates) an outcome child of an edge. Returns the child node
// index, negated and offset by one when the child was created just now.
int SearchTree::child_for(int ni, int ei) {
  const auto& env = *env_;
  const auto& rw = env.reward();
  auto* edge = &nodes_[static_cast<std::size_t>(ni)].edges[static_cast<std::size_t>(ei)];
  const Action a = edge->action;

  if (a.is_eox()) {
    if (!edge->children.empty()) {
      edge->children.front().hits += 1;
      edge->children.front().draws += 1;
      return edge->children.front().node;
    }
    const auto& parent = nodes_[static_cast<std::size_t>(ni)];
    CandidateState next = parent.state;
    next.ended = true;
    double incoming = 0.0;
    if (env.penalize_unmet_terminal() && parent.belief.f.H > rw.epsilon) incoming = rw.penalty;
    Belief b = parent.belief;
    const int c = make_node(std::move(next), std::move(b), incoming);
    auto& child = nodes_[static_cast<std::size_t>(c)];
    child.terminal = true;
    child.untried.clear();
    nodes_[static_cast<std::size_t>(ni)].edges[static_cast<std::size_t>(ei)].children.push_back({{}, 0, c, 1, 1});
    return -c - 1;
  }

  const double allowed = std::ceil(params_.k_state * std::pow(static_cast<double>(edge->visits + 1), params_.alpha_state));
  if (static_cast<double>(edge->children.size()) < allowed) {
    const auto& parent = nodes_[static_cast<std::size_t>(ni)];
    const std::size_t r = env.sample_record(parent.belief.weights, rng_);
    auto sig = env.signature(a, r);
    for (auto& ch : edge->children)
      if (ch.signature == sig) {
        ch.hits += 1;
        ch.draws += 1;
        return ch.node;
      }
    CandidateState next = env.apply(parent.state, a, r);
    Belief b = env.advance(parent.belief, a, r, next);
    const double discount = std::pow(rw.gamma, parent.state.step - root_step_);
    double incoming = discount * env.step_reward(a, parent.belief.f.H - b.f.H);
    bool infeasible = false;
    bool terminal = false;
    if (!env.is_feasible(b.f.L)) {
      infeasible = terminal = true;
      incoming += rw.penalty;
    } else if (env.is_terminal(next, b.f.H)) {
      terminal = true;
      if (env.penalize_unmet_terminal() && b.f.H > rw.epsilon) incoming += rw.penalty;
    }
    const int c = make_node(std::move(next), std::move(b), incoming);
    auto& child = nodes_[static_cast<std::size_t>(c)];
    child.terminal = terminal;
    child.infeasible = infeasible;
    if (terminal) child.untried.clear();
    nodes_[static_cast<std::size_t>(ni)].edges[static_cast<std::size_t>(ei)].children.push_back(
        {std::move(sig), r, c, 1, 1});
    return -c - 1;
  }

  // Saturated: a fresh draw that lands on an existing outcome is followed;
  // otherwise revisit an existing outcome in proportion to its draws.
  {
    const std::size_t r = env.sample_record(nodes_[static_cast<std::size_t>(ni)].belief.weights, rng_);
    const auto sig = env.signature(a, r);
    for (auto& ch : edge->children)
      if (ch.signature == sig) {
        ch.hits += 1;
        ch.draws += 1;
        return ch.node;
      }
  }
  int total = 0;
  for (const auto& ch : edge->children) total += ch.draws;
  double u = uniform01(rng_) * total;
  for (auto& ch : edge->children) {
    u -= ch.draws;
    if (u < 0.0) {
      ch.hits += 1;
      return ch.node;
    }
  }
  edge->children.back().hits += 1;
  return edge->children.back().node;
}

void SearchTree::iterate() {
  ++iterations_;
  if (nodes_.front().terminal) return;
  std::vector<std::pair<int, std::size_t>> path;
  double q = 0.0;
  int cur = 0;
  while (!nodes_[static_cast<std::size_t>(cur)].terminal) {
    const std::size_t e = select_edge(cur);
    path.emplace_back(cur, e);
    int c = child_for(cur, static_cast<int>(e));
    const bool created = c < 0;
    if (created) c = -c - 1;
    const auto& child = nodes_[static_cast<std::size_t>(c)];
    q += child.incoming;
    cur = c;
    if (created) {
      if (!child.terminal) q += rollout(*env_, child.state, child.belief, params_.rollout_depth, rng_, root_step_);
      break;
    }
  }
  for (const auto& [ni, e] : path) {
    auto& node = nodes_[static_cast<std::size_t>(ni)];
    node.visits += 1;
    node.edges[e].visits += 1;
    node.edges[e].value_sum += q;
  }
}

void SearchTree::run(int iterations) {
  for (int i = 0; i < iterations; ++i) iterate();
}

int SearchTree::best_edge(const SearchNode& node) const {
  int best = -1;
  for (std::size_t e = 0; e < node.edges.size(); ++e) {
    const auto& cand = node.edges[e];
    if (cand.visits == 0) continue;
    if (best < 0) {
      best = static_cast<int>(e);
      continue;
    }
    const auto& cur = node.edges[static_cast<std::size_t>(best)];
    const double qa = cand.mean(), qb = cur.mean();
    bool better = qa > qb;
    if (qa == qb) {
      const double ca = env_->scalarized_cost(cand.action), cb = env_->scalarized_cost(cur.action);
      better = ca < cb || (ca == cb && canonical_less(cand.action, cur.action));
    }
    if (better) best = static_cast<int>(e);
  }
  return best;
}

Action rollout_action(const Environment& env, const CandidateState& s, Rng& rng) {
  auto pool = members(env.unmeasured(s));
  const std::size_t kmax = std::min(env.max_batch(), pool.size());
  const std::size_t k = 1 + uniform_index(rng, kmax);
  const auto& d = env.dataset();
  const auto& rho = env.reward().rho;
  std::stable_sort(pool.begin(), pool.end(), [&](std::size_t x, std::size_t y) {
    return d.scalarized_cost(x, rho) < d.scalarized_cost(y, rho);
  });
  AssaySet batch = 0;
  for (std::size_t i = 0; i < k; ++i) batch |= assay_bit(pool[i]);
  return Action::of(batch);
}

double rollout(const Environment& env, const CandidateState& s, const Belief& belief, int depth_cap, Rng& rng,
               int root_step) {
  const auto& rw = env.reward();
  if (depth_cap == 0 || env.is_terminal(s, belief.f.H)) return 0.0;
  CandidateState cur = s;
  Belief b = belief;
  double q = 0.0;
  for (int steps = 0; depth_cap < 0 || steps < depth_cap; ++steps) {
    const Action a = rollout_action(env, cur, rng);
    const std::size_t r = env.sample_record(b.weights, rng);
    const double h_before = b.f.H;
    const double discount = std::pow(rw.gamma, cur.step - root_step);
    cur = env.apply(cur, a, r);
    env.advance_in_place(b, a, r, cur);
    q += discount * env.step_reward(a, h_before - b.f.H);
    if (!env.is_feasible(b.f.L)) return q + rw.penalty;
    if (env.is_terminal(cur, b.f.H)) {
      if (env.penalize_unmet_terminal() && b.f.H > rw.epsilon) q += rw.penalty;
      return q;
    }
  }
  return q;
}

Policy extract_policy(const Environment& env, const SearchTree& tree) {
  Policy p;
  const auto& root = tree.root();
  if (root.terminal) {
    p.root_action = Action::eox();
    p.actions[key_of(env, root.state)] = Action::eox();
    return p;
  }
  std::map<StateKey, int> visits;
  for (const auto& node : tree.nodes()) {
    const int e = tree.best_edge(node);
    if (e < 0) continue;
    auto key = key_of(env, node.state);
    auto it = visits.find(key);
    if (it != visits.end() && it->second >= node.visits) continue;
    visits[key] = node.visits;
    p.actions[std::move(key)] = node.edges[static_cast<std::size_t>(e)].action;
  }
  const int e = tree.best_edge(root);
  p.root_action = e < 0 ? Action::eox() : root.edges[static_cast<std::size_t>(e)].action;
  // The root entry always reflects the root node itself.
  p.actions[key_of(env, root.state)] = p.root_action;
  return p;
}

PlanResult plan(const Environment& env, const CandidateState& root, const PlannerParams& params) {
  PlanResult r{SearchTree(env, root, params), {}};
  if (!r.tree.root().terminal) r.tree.run(params.n_itr);
  r.policy = extract_policy(env, r.tree);
  return r;
}

namespace {

nlohmann::json node_json(const Environment& env, const SearchTree& tree, int ni, int depth, int max_depth) {
  const auto& n = tree.nodes()[static_cast<std::size_t>(ni)];
  const auto names = env.dataset().assay_names();
  nlohmann::json j{{"step", n.state.step},
                   {"measured", to_string(Action::of(n.state.measured), names)},
                   {"visits", n.visits},
                   {"H", n.belief.f.H},
                   {"L", n.belief.f.L},
                   {"terminal", n.terminal},
                   {"infeasible", n.infeasible}};
  auto edges = nlohmann::json::array();
  for (const auto& e : n.edges) {
    nlohmann::json ej{{"action", to_string(e.action, names)},
                      {"visits", e.visits},
                      {"mean_value", e.mean()},
                      {"outcomes", e.children.size()}};
    if (depth < max_depth) {
      auto kids = nlohmann::json::array();
      for (const auto& c : e.children) {
        auto cj = node_json(env, tree, c.node, depth + 1, max_depth);
        cj["hits"] = c.hits;
        cj["draws"] = c.draws;
        cj["signature"] = c.signature;
        kids.push_back(std::move(cj));
      }
      ej["children"] = std::move(kids);
    }
    edges.push_back(std::move(ej));
  }
  j["edges"] = std::move(edges);
  return j;
}

}  // namespace

std::string tree_to_json(const Environment& env, const SearchTree& tree, int max_depth) {
  nlohmann::json j{{"schema_version", 1},
                   {"iterations", tree.iterations()},
                   {"nodes", tree.nodes().size()},
                   {"root", node_json(env, tree, 0, 0, max_depth)}};
  return j.dump(2);
}

}  // namespace assayplan
