#include "spot/spotq.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace spot {

std::size_t ActionMask::count() const {
  return static_cast<std::size_t>(std::count(allowed.begin(), allowed.end(), std::uint8_t{1}));
}

std::vector<double> QFunction::values(const Observation& s) const {
  std::vector<double> out(s.num_actions());
  for (ActionId a = 0; a < out.size(); ++a) out[a] = value(s, a);
  return out;
}

double TabularQ::value(const QKey& k) const {
  auto it = table_.find(k);
  return it == table_.end() ? 0.0 : it->second;
}

double TabularQ::value(const Observation& s, ActionId a) const { return value(s.keys.at(a)); }

void TabularQ::update(const Observation& s, ActionId a, double target, double learning_rate) {
  double& v = table_[s.keys.at(a)];
  v += learning_rate * (target - v);
}

std::unique_ptr<QFunction> TabularQ::snapshot() const { return std::make_unique<TabularQ>(*this); }

std::vector<std::pair<QKey, double>> TabularQ::sorted_entries() const {
  std::vector<std::pair<QKey, double>> entries(table_.begin(), table_.end());
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return entries;
}

void TabularQ::save(std::ostream& out) const {
  char buf[64];
  for (const auto& [key, v] : sorted_entries()) {
    // %a keeps the value bit-exact through a save/load cycle.
    std::snprintf(buf, sizeof buf, "%a", v);
    out << key.context << ' ' << key.slot << ' ' << buf << '\n';
  }
}

TabularQ TabularQ::load(std::istream& in) {
  TabularQ q;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    std::istringstream fields(line);
    std::uint64_t context = 0;
    std::uint32_t slot = 0;
    std::string value_text;
    if (!(fields >> context >> slot >> value_text)) {
      throw std::runtime_error("malformed Q-table record on line " + std::to_string(line_no));
    }
    q.table_[QKey{context, slot}] = std::strtod(value_text.c_str(), nullptr);
  }
  return q;
}

ActionMask observed_mask(const Observation& s) { return s.mask; }

ActionMask unrestricted_mask(const Observation& s) { return ActionMask::all(s.num_actions()); }

ActionId masked_argmax(const QFunction& q, const Observation& s, const ActionMask& mask, Rng& tie_rng) {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<ActionId> tied;
  for (ActionId a = 0; a < s.num_actions(); ++a) {
    if (!mask[a]) continue;
    const double v = q.value(s, a);
    if (tied.empty() || v > best) {
      best = v;
      tied.assign(1, a);
    } else if (v == best) {
      tied.push_back(a);
    }
  }
  if (tied.empty()) throw EmptyActionSpaceError();
  if (tied.size() == 1) return tied.front();
  std::uniform_int_distribution<std::size_t> pick(0, tied.size() - 1);
  return tied[pick(tie_rng)];
}

ActionId greedy_action(const QFunction& q, const Observation& s) {
  return greedy_action(q, s, ActionMask::all(s.num_actions()));
}

ActionId greedy_action(const QFunction& q, const Observation& s, const ActionMask& mask) {
  std::optional<ActionId> best_a;
  double best = -std::numeric_limits<double>::infinity();
  for (ActionId a = 0; a < s.num_actions(); ++a) {
    if (!mask[a]) continue;
    const double v = q.value(s, a);
    if (!best_a || v > best) {
      best = v;
      best_a = a;
    }
  }
  if (!best_a) throw EmptyActionSpaceError();
  return *best_a;
}

SpotQTargets spotq_targets(const Observation& state, double reward, const Observation& next_state,
                           bool terminal, const QFunction& q, const MaskFn& mask_fn,
                           const RewardConfig& cfg) {
  const double gamma = cfg.learn_discount;
  SpotQTargets out;
  out.executed_target = reward;
  if (!terminal) {
    out.executed_target += gamma * q.value(next_state, greedy_action(q, next_state, mask_fn(next_state)));
  }

  const ActionId policy_action = greedy_action(q, state);
  const ActionMask mask = mask_fn(state);
  if (!mask[policy_action]) {
    out.masked_action = policy_action;
    out.masked_target = terminal ? 0.0 : gamma * q.value(next_state, policy_action);
  }
  return out;
}

double huber_loss(double prediction, double target) {
  const double d = std::abs(prediction - target);
  return d <= 1.0 ? 0.5 * d * d : d - 0.5;
}

}  // namespace spot
