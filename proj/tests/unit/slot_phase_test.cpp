#include <gtest/gtest.h>

#include <set>
#include <tuple>

#include "gateflow/error.hpp"
#include "gateflow/slot_phase.hpp"

using namespace gateflow;
using P = SlotPhase;
using I = Initiator;

namespace {

const P kPhases[] = {P::Connect, P::Wait, P::Send, P::Commit, P::Retired};
const I kInitiators[] = {I::Scheduler, I::Slot, I::Failure};

}  // namespace

// Exhaustive check of the 5x5x3 transition table against the written model.
TEST(SlotPhase, LegalTransitionsMatchTheModelExactly) {
  const std::set<std::tuple<P, P, I>> legal = {
      {P::Connect, P::Wait, I::Scheduler},   {P::Wait, P::Send, I::Scheduler},
      {P::Commit, P::Connect, I::Scheduler}, {P::Wait, P::Retired, I::Scheduler},
      {P::Commit, P::Retired, I::Scheduler}, {P::Send, P::Commit, I::Slot},
      {P::Connect, P::Retired, I::Failure},  {P::Wait, P::Retired, I::Failure},
      {P::Send, P::Retired, I::Failure},     {P::Commit, P::Retired, I::Failure},
  };
  for (auto from : kPhases) {
    for (auto to : kPhases) {
      for (auto by : kInitiators) {
        EXPECT_EQ(is_legal_transition(from, to, by), legal.count({from, to, by}) == 1)
            << to_string(from) << "->" << to_string(to) << " by " << to_string(by);
      }
    }
  }
}

TEST(SlotPhase, OnlySendToCommitIsSlotInitiated) {
  for (auto from : kPhases) {
    for (auto to : kPhases) {
      if (is_legal_transition(from, to, I::Slot)) {
        EXPECT_EQ(from, P::Send);
        EXPECT_EQ(to, P::Commit);
      }
    }
  }
}

TEST(SlotPhase, RetiredIsTerminal) {
  for (auto to : kPhases) {
    for (auto by : kInitiators) EXPECT_FALSE(is_legal_transition(P::Retired, to, by));
  }
}

TEST(SlotPhase, RegularCycleReturnsToConnect) {
  P p = P::Connect;
  for (P next : {P::Wait, P::Send, P::Commit, P::Connect}) {
    ASSERT_TRUE(is_regular_transition(p, next));
    p = next;
  }
}

TEST(SlotPhase, NamesRoundTrip) {
  for (auto p : kPhases) EXPECT_EQ(parse_slot_phase(to_string(p)), p);
  EXPECT_THROW(parse_slot_phase("sleeping"), ParameterError);
}
