#include "gateflow/slot_phase.hpp"

#include <string>

#include "gateflow/error.hpp"

namespace gateflow {

std::string_view to_string(SlotPhase phase) {
  switch (phase) {
    case SlotPhase::Connect:
      return "connect";
    case SlotPhase::Wait:
      return "wait";
    case SlotPhase::Send:
      return "send";
    case SlotPhase::Commit:
      return "commit";
    case SlotPhase::Retired:
      return "retired";
  }
  return "retired";
}

std::string_view to_string(Initiator initiator) {
  switch (initiator) {
    case Initiator::Scheduler:
      return "scheduler";
    case Initiator::Slot:
      return "slot";
    case Initiator::Failure:
      return "failure";
  }
  return "failure";
}

SlotPhase parse_slot_phase(std::string_view text) {
  for (auto p : {SlotPhase::Connect, SlotPhase::Wait, SlotPhase::Send, SlotPhase::Commit,
                 SlotPhase::Retired}) {
    if (to_string(p) == text) return p;
  }
  throw ParameterError("unknown slot phase '" + std::string(text) + "'");
}

bool is_regular_transition(SlotPhase from, SlotPhase to) noexcept {
  using P = SlotPhase;
  switch (from) {
    case P::Connect:
      return to == P::Wait;
    case P::Wait:
      return to == P::Send || to == P::Retired;
    case P::Send:
      return to == P::Commit;
    case P::Commit:
      return to == P::Connect || to == P::Retired;
    case P::Retired:
      return false;
  }
  return false;
}

bool is_legal_transition(SlotPhase from, SlotPhase to, Initiator initiator) noexcept {
  using P = SlotPhase;
  switch (initiator) {
    case Initiator::Slot:
      return from == P::Send && to == P::Commit;
    case Initiator::Scheduler:
      return is_regular_transition(from, to) && !(from == P::Send && to == P::Commit);
    case Initiator::Failure:
      return from != P::Retired && to == P::Retired;
  }
  return false;
}

}  // namespace gateflow
