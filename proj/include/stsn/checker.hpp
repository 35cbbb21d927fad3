#pragma once

#include <string>

#include "stsn/matrix.hpp"

namespace stsn {

struct CheckResult {
  bool ok = false;
  std::string reason;           // first violated expectation, empty when ok
  int64_t consistent = 0;       // candidates satisfying every derived constraint
  int64_t derived_answer = -1;  // index of the unique consistent candidate
};

/// Independent rule checker: re-derives the bottom-right completion from the
/// eight context panels and the recorded rule kinds alone (payloads and
/// per-row draws are re-inferred from the context, not trusted), verifies
/// that the context itself conforms to each rule, and demands that exactly
/// one candidate satisfies every derived constraint and that it is the
/// labeled answer.
CheckResult check_problem(const MatrixProblem& problem);

/// Context-blind heuristic credit: each candidate is scored by how many
/// other candidates share each of its attribute profiles (cell set, count,
/// and the shape/color/size value multisets); returns 1/|argmax| when the
/// correct answer is among the top scorers, else 0. On bisection-balanced
/// candidate sets every attribute splits 4/4, so this recovers only chance.
double majority_vote_credit(const MatrixProblem& problem);

}  // namespace stsn
