#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

#include "spot/rewards.hpp"
#include "spot/spotq.hpp"

namespace spot {

/// How a trial ended. None while it is still running.
enum class Termination { None, Complete, ActionLimit, SituationRemoval, LavaDeath };

std::string_view to_string(Termination t);

struct Transition {
  StepOutcome outcome;
  Termination event = Termination::None;
};

class TerminalStateError : public std::logic_error {
 public:
  TerminalStateError() : std::logic_error("cannot act in a terminal state") {}
};

/// Seedable episodic environment with a discrete action space and a
/// certain-failure mask. Instances are single-owner.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual void reset(std::uint64_t seed) = 0;
  virtual std::size_t num_actions() const = 0;
  virtual Observation observe() const = 0;
  virtual ActionMask mask() const = 0;
  virtual ActionType action_type(ActionId a) const = 0;
  virtual Transition step(ActionId a) = 0;
  /// Environment rule for a hard reset during training, evaluated on the
  /// state reached by the last step.
  virtual bool situation_removal(const StepOutcome& o) const = 0;
  virtual int ideal_actions() const = 0;
  virtual double progress() const = 0;
  virtual bool terminal() const = 0;
  virtual std::string serialize() const = 0;
};

using EnvFactory = std::function<std::unique_ptr<Environment>()>;

/// splitmix64 finalizer; used for seed derivation and state hashing.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace spot
