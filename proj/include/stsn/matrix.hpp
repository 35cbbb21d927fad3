#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stsn/errors.hpp"
#include "stsn/rng.hpp"

namespace stsn {

// ---------------------------------------------------------------------------
// Symbolic domain: objects on a 3x3 grid with shape/size/color attributes,
// arranged into 3x3 matrices governed by per-attribute rules.
// ---------------------------------------------------------------------------

enum class Attribute : uint8_t { shape = 0, color = 1, size = 2, location = 3, count = 4 };

enum class RuleKind : uint8_t {
  null_rule = 0,
  constant = 1,
  distribution3 = 2,
  progression = 3,
  logic_and = 4,
  logic_or = 5,
  logic_xor = 6,
};

enum class ProblemType : uint8_t { logic = 0, location = 1, count = 2 };

std::string to_string(Attribute a);
std::string to_string(RuleKind k);
std::string to_string(ProblemType t);
Attribute attribute_from_string(const std::string& s);
RuleKind rule_kind_from_string(const std::string& s);
ProblemType problem_type_from_string(const std::string& s);

inline constexpr int64_t kCells = 9;      // 3x3 grid of locations
inline constexpr int64_t kShapes = 3;     // square, circle, triangle
inline constexpr int64_t kSizes = 3;      // small, medium, large
inline constexpr int64_t kColors = 8;     // evenly spaced gray levels

struct ObjectSpec {
  int64_t location = 0;  // cell index 0..8, row-major
  int64_t shape = 0;     // 0..2
  int64_t size = 0;      // 0..2
  int64_t color = 0;     // 0..7

  friend bool operator==(const ObjectSpec&, const ObjectSpec&) = default;
};

/// A panel is a set of objects in distinct cells, kept sorted by cell.
struct SymbolicPanel {
  std::vector<ObjectSpec> objects;

  /// Throws contract_error unless 1..9 objects, distinct sorted cells, and
  /// every attribute within range.
  void validate() const;
  /// Occupied cells, ascending.
  std::vector<int64_t> cell_set() const;
  int64_t count() const { return int64_t(objects.size()); }

  friend bool operator==(const SymbolicPanel&, const SymbolicPanel&) = default;
};

/// One per-attribute rule. Payload meaning depends on the kind:
///   distribution3 (shape/size/color): the fixed value triple;
///   distribution3 (location): three cell-set bitmasks (bit i = cell i);
///   distribution3 (count): the fixed count triple;
///   progression: {step} with step in {+1, -1};
///   others: empty (per-row draws are not part of the rule identity).
struct Rule {
  Attribute attribute = Attribute::shape;
  RuleKind kind = RuleKind::null_rule;
  std::vector<int64_t> payload;

  friend bool operator==(const Rule&, const Rule&) = default;
};

/// A fully materialized 3x3 matrix: grid[8] is the held-out correct
/// completion of the bottom-right cell.
struct SymbolicProblem {
  ProblemType type = ProblemType::logic;
  std::vector<Rule> rules;  // shape, color, size, then location-or-count
  std::array<SymbolicPanel, 9> grid;
};

/// A complete problem instance: 8 context panels, 8 candidate panels, the
/// correct candidate index, rule metadata, and (once rasterized) the 16
/// panel images as quantized bytes in [0,255], context first.
struct MatrixProblem {
  ProblemType type = ProblemType::logic;
  std::vector<Rule> rules;
  std::array<SymbolicPanel, 8> context;
  std::array<SymbolicPanel, 8> candidates;
  int64_t answer = -1;

  int64_t image_h = 0, image_w = 0, channels = 1;
  std::vector<std::vector<uint8_t>> images;  // 16 buffers of image_h*image_w*channels

  friend bool operator==(const MatrixProblem&, const MatrixProblem&) = default;
};

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Draws the per-attribute rules for a problem type: shape/color/size each
/// from {null, constant, distribution-of-3}; the location rule from
/// {AND, OR, XOR} (logic), {constant, distribution-of-3, progression}
/// (location); the count rule from {constant, distribution-of-3,
/// progression} (count). Fixed payloads (triples, steps) are drawn here.
std::vector<Rule> sample_rules(ProblemType type, Rng& rng);

/// Materializes all nine panels row by row under the sampled rules. Throws
/// generation_error when bounded internal resampling cannot satisfy a rule
/// (e.g. an empty AND/XOR result after 64 attempts).
SymbolicProblem generate_symbolic(ProblemType type, Rng& rng);

/// Attributes the bisection tree may modify: location (logic/location
/// types) or count (count type), plus every value attribute whose rule is
/// not null. Null attributes are excluded so every candidate stays
/// distinguishable by rule-relevant attributes.
std::vector<Attribute> mutable_attributes(const SymbolicProblem& problem);

struct AnswerSet {
  std::array<SymbolicPanel, 8> candidates;
  int64_t answer = -1;  // index of the panel equal to `correct`
};

/// Attribute-bisection-tree candidate generation: three attributes are
/// drawn without replacement from `mutable_attrs`; level d of a depth-3
/// binary tree keeps or modifies attribute a_d, with one shared modified
/// value per level, giving 8 symbolically distinct leaves of which exactly
/// one (all-keep) equals `correct`. Exactly 4 of 8 leaves carry the correct
/// value of each chosen attribute. Leaves are shuffled; the correct leaf's
/// position is returned. Throws generation_error when fewer than 3
/// attributes are mutable.
AnswerSet bisection_answers(const SymbolicPanel& correct,
                            const std::vector<Attribute>& mutable_attrs, Rng& rng);

/// Full symbolic pipeline for one problem: derive a per-problem stream from
/// (seed, index), then sample rules + grid + candidates with bounded
/// retries. Images are left empty; rasterization is a separate stage.
MatrixProblem generate_problem(ProblemType type, uint64_t seed, int64_t index);

// Helpers shared with the independent checker and tests.
std::vector<int64_t> shift_cells(const std::vector<int64_t>& cells, int64_t step);
int64_t cells_to_mask(const std::vector<int64_t>& cells);
std::vector<int64_t> mask_to_cells(int64_t mask);

}  // namespace stsn
