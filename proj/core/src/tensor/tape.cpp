#include "tmdc/tensor/tape.hpp"

#include <string>

namespace tmdc {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::~Tape() {
  if (g_active_tape == this) g_active_tape = nullptr;
}

void Tape::record(std::string_view op, Tensor output, BackwardFn backward) {
  entries_.push_back(Entry{op, std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss, const VisitFn& on_visit) {
  if (entries_.empty()) throw Error("backward: tape is empty");
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) throw Error("backward: loss does not require grad (not connected to the tape)");

  bool connected = false;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output.same_storage(loss)) {
      connected = true;
      break;
    }
  }
  if (!connected) throw Error("backward: loss was not produced on this tape");

  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;
  for (std::size_t i = entries_.size(); i-- > 0;) {
    if (on_visit) on_visit(i, entries_[i].op);
    entries_[i].backward();
  }
}

void Tape::clear() {
  entries_.clear();
  entries_.shrink_to_fit();
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }

NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (tape == nullptr) throw Error("backward: no active tape");
  tape->backward(loss);
}

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

}  // namespace tmdc
