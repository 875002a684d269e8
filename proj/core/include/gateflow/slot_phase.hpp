#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string_view>

namespace gateflow {

/// Strong slot identifier. Ids are handed out by the scheduler starting at 1.
struct SlotId {
  std::uint32_t value = 0;

  friend auto operator<=>(const SlotId&, const SlotId&) = default;
};

/// Connect -> Wait -> Send -> Commit -> Connect ... ; Retired is terminal.
enum class SlotPhase { Connect, Wait, Send, Commit, Retired };

/// Who caused a transition. Only Send -> Commit is the slot's own decision;
/// the scheduler commands every other regular transition. Failure covers
/// I/O and protocol errors that force a slot out of service.
enum class Initiator { Scheduler, Slot, Failure };

std::string_view to_string(SlotPhase phase);
std::string_view to_string(Initiator initiator);
SlotPhase parse_slot_phase(std::string_view text);

/// Regular cycle plus scheduler aborts (Wait -> Retired and the
/// Commit -> Connect boundary, expressed as Commit -> Retired).
bool is_regular_transition(SlotPhase from, SlotPhase to) noexcept;

/// Transitions permitted for `initiator`:
///   Scheduler: Connect->Wait, Wait->Send, Commit->Connect, Wait->Retired, Commit->Retired
///   Slot:      Send->Commit
///   Failure:   any non-Retired phase -> Retired
bool is_legal_transition(SlotPhase from, SlotPhase to, Initiator initiator) noexcept;

}  // namespace gateflow

template <>
struct std::hash<gateflow::SlotId> {
  std::size_t operator()(gateflow::SlotId id) const noexcept { return id.value; }
};
