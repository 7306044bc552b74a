#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string_view>
#include <vector>

#include "tmdc/tensor/tensor.hpp"

namespace tmdc {

/// Ordered record of executed primitives for reverse-mode differentiation.
///
/// A tape is confined to one thread. Operations record onto the thread's
/// active tape (see TapeScope) whenever at least one input requires a
/// gradient; with no active tape, ops run as plain evaluation.
class Tape {
 public:
  using BackwardFn = std::function<void()>;
  using VisitFn = std::function<void(std::size_t index, std::string_view op)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  void record(std::string_view op, Tensor output, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and replays entries in strict reverse order.
  /// Gradients accumulate into every requires_grad tensor reached.
  void backward(const Tensor& loss, const VisitFn& on_visit = {});

  /// Drops every entry and the tensor references they hold.
  void clear();

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// The tape operations on this thread currently record onto, or nullptr.
  static Tape* active();

 private:
  friend class TapeScope;
  friend class NoGradScope;
  struct Entry {
    std::string_view op;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
};

/// Makes a tape active on the current thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  ~TapeScope();

 private:
  Tape* previous_;
};

/// Suspends recording on the current thread for the scope's lifetime.
class NoGradScope {
 public:
  NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;
  ~NoGradScope();

 private:
  Tape* previous_;
};

/// Runs backward on the active tape.
void backward(const Tensor& loss);

/// True when an op with these inputs must be recorded.
bool should_record(std::initializer_list<const Tensor*> inputs);

}  // namespace tmdc
