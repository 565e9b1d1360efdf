#include "spot/replay.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <tuple>

#include <boost/multi_index/composite_key.hpp>
#include <boost/multi_index/hashed_index.hpp>
#include <boost/multi_index/member.hpp>
#include <boost/multi_index/ranked_index.hpp>
#include <boost/multi_index_container.hpp>
#include <json.hpp>

namespace spot {

namespace bmi = boost::multi_index;

double Experience::surprise() const { return std::abs(training_reward() - predicted_q); }

struct ReplayBuffer::RankIndex {
  struct Entry {
    Index seq;
    double neg_surprise;
    int group;
  };
  struct BySeq {};
  struct BySurprise {};
  struct ByGroup {};

  using Container = bmi::multi_index_container<
      Entry,
      bmi::indexed_by<
          bmi::hashed_unique<bmi::tag<BySeq>, bmi::member<Entry, Index, &Entry::seq>>,
          bmi::ranked_unique<bmi::tag<BySurprise>,
                             bmi::composite_key<Entry, bmi::member<Entry, double, &Entry::neg_surprise>,
                                                bmi::member<Entry, Index, &Entry::seq>>>,
          bmi::ranked_unique<bmi::tag<ByGroup>,
                             bmi::composite_key<Entry, bmi::member<Entry, int, &Entry::group>,
                                                bmi::member<Entry, double, &Entry::neg_surprise>,
                                                bmi::member<Entry, Index, &Entry::seq>>>>>;

  Container entries;
  std::set<std::uint64_t> finalized;
};

ReplayBuffer::ReplayBuffer(ReplayConfig cfg) : cfg_(cfg), rank_(std::make_unique<RankIndex>()) {
  if (cfg_.capacity == 0) throw ConfigError("replay capacity must be positive");
  if (!(cfg_.per_exponent >= 0.0)) throw ConfigError("per_exponent must be >= 0");
  if (!(cfg_.type_filter_prob >= 0.0 && cfg_.type_filter_prob <= 1.0)) {
    throw ConfigError("type_filter_prob must lie in [0, 1]");
  }
}

ReplayBuffer::~ReplayBuffer() = default;
ReplayBuffer::ReplayBuffer(ReplayBuffer&&) noexcept = default;
ReplayBuffer& ReplayBuffer::operator=(ReplayBuffer&&) noexcept = default;

int ReplayBuffer::group_of(ActionType t, bool success) const {
  return static_cast<int>(t) * 2 + (success ? 1 : 0);
}

const Experience& ReplayBuffer::at(Index i) const {
  if (!contains(i)) throw std::out_of_range("replay index " + std::to_string(i) + " not stored");
  return experiences_[i - first_index_];
}

bool ReplayBuffer::contains(Index i) const {
  return i >= first_index_ && i < first_index_ + experiences_.size();
}

const Experience& ReplayBuffer::newest() const {
  if (experiences_.empty()) throw EmptyBufferError();
  return experiences_.back();
}

std::size_t ReplayBuffer::candidate_count() const { return rank_->entries.size(); }

bool ReplayBuffer::is_finalized(std::uint64_t trial_id) const {
  return rank_->finalized.contains(trial_id);
}

void ReplayBuffer::index_insert(Index i) {
  const Experience& e = at(i);
  rank_->entries.insert({i, -e.surprise(), group_of(e.action_type, e.success)});
}

void ReplayBuffer::index_erase(Index i) { rank_->entries.get<RankIndex::BySeq>().erase(i); }

void ReplayBuffer::evict_front_trial(std::uint64_t incoming_trial) {
  const std::uint64_t victim = experiences_.front().trial_id;
  do {
    index_erase(first_index_);
    experiences_.pop_front();
    ++first_index_;
    // A single trial longer than the capacity loses its oldest steps only.
    if (victim == incoming_trial) break;
  } while (!experiences_.empty() && experiences_.front().trial_id == victim);
  if (victim != incoming_trial) rank_->finalized.erase(victim);
}

ReplayBuffer::Index ReplayBuffer::push(Experience e) {
  if (newest_trial_) {
    if (e.trial_id < *newest_trial_) {
      throw ReplayOrderError("experience trial id " + std::to_string(e.trial_id) +
                             " is older than trial " + std::to_string(*newest_trial_));
    }
    if (!experiences_.empty() && e.trial_id == experiences_.back().trial_id &&
        e.step_index <= experiences_.back().step_index) {
      throw ReplayOrderError("step index must increase within a trial");
    }
  }
  if (!e.state || !e.next_state) throw std::invalid_argument("experience without state");
  while (experiences_.size() >= cfg_.capacity) evict_front_trial(e.trial_id);

  newest_trial_ = e.trial_id;
  const bool indexed = !cfg_.finalized_only || is_finalized(e.trial_id);
  experiences_.push_back(std::move(e));
  const Index i = first_index_ + experiences_.size() - 1;
  if (indexed) index_insert(i);
  return i;
}

void ReplayBuffer::finalize_trial(std::uint64_t trial_id, bool completed, const RewardConfig& cfg) {
  if (!newest_trial_ || trial_id > *newest_trial_) {
    throw UnknownTrialError("trial " + std::to_string(trial_id) + " was never pushed");
  }
  if (is_finalized(trial_id)) return;

  // Trial ids never decrease along the deque.
  const auto lo = std::lower_bound(experiences_.begin(), experiences_.end(), trial_id,
                                   [](const Experience& e, std::uint64_t t) { return e.trial_id < t; });
  const auto hi = std::upper_bound(lo, experiences_.end(), trial_id,
                                   [](std::uint64_t t, const Experience& e) { return t < e.trial_id; });
  std::vector<Index> steps;
  for (auto it = lo; it != hi; ++it) {
    steps.push_back(first_index_ + static_cast<Index>(it - experiences_.begin()));
  }
  if (steps.empty()) return;
  rank_->finalized.insert(trial_id);

  if (cfg.uses_trial_rewards()) {
    std::vector<double> instants;
    instants.reserve(steps.size());
    for (Index i : steps) instants.push_back(at(i).instant_reward);
    const std::vector<double> filled = cfg.kind == RewardKind::Discounted
                                           ? discounted_backfill(instants, cfg.trial_discount)
                                           : trial_backfill(instants, completed, cfg.trial_discount);
    for (std::size_t k = 0; k < steps.size(); ++k) {
      experiences_[steps[k] - first_index_].trial_reward = filled[k];
    }
  }
  // Surprise changes with the trial reward; re-key every step.
  for (Index i : steps) {
    index_erase(i);
    index_insert(i);
  }
}

void ReplayBuffer::ensure_mass_table(std::size_t n) const {
  if (cumulative_mass_.empty()) cumulative_mass_.push_back(0.0);
  while (cumulative_mass_.size() <= n) {
    const double r = static_cast<double>(cumulative_mass_.size() - 1);
    cumulative_mass_.push_back(cumulative_mass_.back() + std::pow(r + 1.0, -cfg_.per_exponent));
  }
}

double ReplayBuffer::rank_probability(std::size_t r, std::size_t n) const {
  if (r >= n) return 0.0;
  ensure_mass_table(n);
  return std::pow(static_cast<double>(r) + 1.0, -cfg_.per_exponent) / cumulative_mass_[n];
}

std::size_t ReplayBuffer::draw_rank(Rng& rng, std::size_t n) const {
  ensure_mass_table(n);
  std::uniform_real_distribution<double> uniform(0.0, cumulative_mass_[n]);
  const double u = uniform(rng);
  auto first = cumulative_mass_.begin() + 1;
  auto it = std::upper_bound(first, cumulative_mass_.begin() + static_cast<std::ptrdiff_t>(n) + 1, u);
  const auto r = static_cast<std::size_t>(it - first);
  return std::min(r, n - 1);
}

ReplayBuffer::Index ReplayBuffer::sample(Rng& rng, ActionType last_action_type,
                                         bool last_success) const {
  const auto& by_surprise = rank_->entries.get<RankIndex::BySurprise>();
  const std::size_t total = by_surprise.size();
  if (total == 0) throw EmptyBufferError();

  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < cfg_.type_filter_prob) {
    const auto& by_group = rank_->entries.get<RankIndex::ByGroup>();
    const int g = group_of(last_action_type, !last_success);
    const auto lo = by_group.lower_bound(std::make_tuple(g));
    const auto hi = by_group.upper_bound(std::make_tuple(g));
    const std::size_t lo_rank = by_group.rank(lo);
    const std::size_t n = by_group.rank(hi) - lo_rank;
    if (n > 0) return by_group.nth(lo_rank + draw_rank(rng, n))->seq;
  }
  return by_surprise.nth(draw_rank(rng, total))->seq;
}

ReplayBuffer::Index ReplayBuffer::sample(Rng& rng) const {
  const Experience& last = newest();
  return sample(rng, last.action_type, last.success);
}

std::vector<ReplayBuffer::Index> ReplayBuffer::surprise_order() const {
  std::vector<Index> order;
  order.reserve(candidate_count());
  for (const auto& entry : rank_->entries.get<RankIndex::BySurprise>()) order.push_back(entry.seq);
  return order;
}

namespace {

using nlohmann::ordered_json;

ordered_json observation_to_json(const Observation& s) {
  ordered_json keys = ordered_json::array();
  for (const QKey& k : s.keys) keys.push_back({k.context, k.slot});
  std::string mask(s.mask.size(), '0');
  for (std::size_t a = 0; a < s.mask.size(); ++a) mask[a] = s.mask.allowed[a] ? '1' : '0';
  return ordered_json{{"keys", std::move(keys)}, {"mask", std::move(mask)}};
}

std::shared_ptr<const Observation> observation_from_json(const ordered_json& j) {
  auto s = std::make_shared<Observation>();
  for (const auto& k : j.at("keys")) {
    s->keys.push_back(QKey{k.at(0).get<std::uint64_t>(), k.at(1).get<std::uint32_t>()});
  }
  for (char c : j.at("mask").get<std::string>()) s->mask.allowed.push_back(c == '1' ? 1 : 0);
  if (s->mask.size() != s->keys.size()) throw std::runtime_error("mask and key counts differ");
  return s;
}

}  // namespace

void ReplayBuffer::dump(std::ostream& out) const {
  for (const Experience& e : experiences_) {
    ordered_json line;
    line["state"] = observation_to_json(*e.state);
    line["action_id"] = e.action_id;
    line["action_type"] = std::string(to_string(e.action_type));
    line["instant_reward"] = e.instant_reward;
    line["trial_reward"] = e.trial_reward ? ordered_json(*e.trial_reward) : ordered_json(nullptr);
    line["predicted_q"] = e.predicted_q;
    line["success"] = e.success;
    line["trial_id"] = e.trial_id;
    line["step_index"] = e.step_index;
    line["next_state"] = observation_to_json(*e.next_state);
    line["terminal"] = e.terminal;
    out << line.dump() << '\n';
  }
}

ReplayBuffer ReplayBuffer::restore(std::istream& in, ReplayConfig cfg) {
  ReplayBuffer buf(cfg);
  std::set<std::uint64_t> trials_with_rewards;
  std::string text;
  while (std::getline(in, text)) {
    if (text.empty()) continue;
    const auto j = ordered_json::parse(text);
    Experience e;
    e.state = observation_from_json(j.at("state"));
    e.action_id = j.at("action_id").get<ActionId>();
    e.action_type = action_type_from_string(j.at("action_type").get<std::string>());
    e.instant_reward = j.at("instant_reward").get<double>();
    if (!j.at("trial_reward").is_null()) {
      e.trial_reward = j.at("trial_reward").get<double>();
      trials_with_rewards.insert(j.at("trial_id").get<std::uint64_t>());
    }
    e.predicted_q = j.at("predicted_q").get<double>();
    e.success = j.at("success").get<bool>();
    e.trial_id = j.at("trial_id").get<std::uint64_t>();
    e.step_index = j.at("step_index").get<std::uint32_t>();
    e.next_state = observation_from_json(j.at("next_state"));
    e.terminal = j.at("terminal").get<bool>();
    buf.push(std::move(e));
  }
  // Trials that carried trial rewards were finalized when dumped.
  for (std::uint64_t trial : trials_with_rewards) {
    if (buf.is_finalized(trial)) continue;
    buf.rank_->finalized.insert(trial);
    for (Index i = buf.first_index_; i < buf.first_index_ + buf.size(); ++i) {
      if (buf.at(i).trial_id != trial) continue;
      buf.index_erase(i);
      buf.index_insert(i);
    }
  }
  return buf;
}

double learn_from(const Experience& e, double reward, QFunction& q, const MaskFn& mask_fn,
                  const RewardConfig& cfg, double learning_rate) {
  const SpotQTargets targets =
      spotq_targets(*e.state, reward, *e.next_state, e.terminal, q, mask_fn, cfg);
  double loss = huber_loss(q.value(*e.state, e.action_id), targets.executed_target);
  if (targets.masked_action) {
    loss += huber_loss(q.value(*e.state, *targets.masked_action), *targets.masked_target);
  }
  q.update(*e.state, e.action_id, targets.executed_target, learning_rate);
  if (targets.masked_action) {
    q.update(*e.state, *targets.masked_action, *targets.masked_target, learning_rate);
  }
  return loss;
}

double train_step(const ReplayBuffer& buf, QFunction& q, const MaskFn& mask_fn,
                  const RewardConfig& cfg, double learning_rate, Rng& rng) {
  const Experience& e = buf.at(buf.sample(rng));
  return learn_from(e, e.training_reward(), q, mask_fn, cfg, learning_rate);
}

}  // namespace spot
