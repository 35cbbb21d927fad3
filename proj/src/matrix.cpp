#include "stsn/matrix.hpp"

#include <algorithm>
#include <set>

namespace stsn {

namespace {

constexpr int kMaxRetries = 64;

/// Draw uniformly from {0..n-1} \ {skip}.
int64_t uniform_int_except(Rng& rng, int64_t n, int64_t skip) {
  int64_t v = rng.uniform_int(n - 1);
  return v + (v >= skip ? 1 : 0);
}

/// Uniformly random subset of {0..8} of the given size, ascending.
std::vector<int64_t> random_cells(Rng& rng, int64_t size) {
  std::array<int64_t, kCells> pool{0, 1, 2, 3, 4, 5, 6, 7, 8};
  for (int64_t i = 0; i < size; ++i) {
    int64_t j = i + rng.uniform_int(kCells - i);
    std::swap(pool[i], pool[j]);
  }
  std::vector<int64_t> out(pool.begin(), pool.begin() + size);
  std::sort(out.begin(), out.end());
  return out;
}

/// Uniformly random nonempty subset of {0..8} (each cell Bernoulli(1/2),
/// rejecting the empty draw).
std::vector<int64_t> random_nonempty_cells(Rng& rng) {
  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    std::vector<int64_t> out;
    for (int64_t c = 0; c < kCells; ++c)
      if (rng.bernoulli(0.5)) out.push_back(c);
    if (!out.empty()) return out;
  }
  throw generation_error("could not draw a nonempty cell set");
}

std::vector<int64_t> set_and(const std::vector<int64_t>& a, const std::vector<int64_t>& b) {
  std::vector<int64_t> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::vector<int64_t> set_or(const std::vector<int64_t>& a, const std::vector<int64_t>& b) {
  std::vector<int64_t> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::vector<int64_t> set_xor(const std::vector<int64_t>& a, const std::vector<int64_t>& b) {
  std::vector<int64_t> out;
  std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

int64_t attribute_cardinality(Attribute a) {
  switch (a) {
    case Attribute::shape: return kShapes;
    case Attribute::size: return kSizes;
    case Attribute::color: return kColors;
    default: throw contract_error("attribute has no value cardinality: " + to_string(a));
  }
}

int64_t& object_value(ObjectSpec& o, Attribute a) {
  switch (a) {
    case Attribute::shape: return o.shape;
    case Attribute::size: return o.size;
    case Attribute::color: return o.color;
    default: throw contract_error("not a value attribute: " + to_string(a));
  }
}

int64_t object_value(const ObjectSpec& o, Attribute a) {
  return object_value(const_cast<ObjectSpec&>(o), a);
}

}  // namespace

// ---------------------------------------------------------------------------
// Names
// ---------------------------------------------------------------------------

std::string to_string(Attribute a) {
  switch (a) {
    case Attribute::shape: return "shape";
    case Attribute::color: return "color";
    case Attribute::size: return "size";
    case Attribute::location: return "location";
    case Attribute::count: return "count";
  }
  throw contract_error("unknown attribute");
}

std::string to_string(RuleKind k) {
  switch (k) {
    case RuleKind::null_rule: return "null";
    case RuleKind::constant: return "constant";
    case RuleKind::distribution3: return "distribution-of-3";
    case RuleKind::progression: return "progression";
    case RuleKind::logic_and: return "AND";
    case RuleKind::logic_or: return "OR";
    case RuleKind::logic_xor: return "XOR";
  }
  throw contract_error("unknown rule kind");
}

std::string to_string(ProblemType t) {
  switch (t) {
    case ProblemType::logic: return "logic";
    case ProblemType::location: return "location";
    case ProblemType::count: return "count";
  }
  throw contract_error("unknown problem type");
}

Attribute attribute_from_string(const std::string& s) {
  for (Attribute a : {Attribute::shape, Attribute::color, Attribute::size, Attribute::location,
                      Attribute::count})
    if (to_string(a) == s) return a;
  throw format_error("unknown attribute name: " + s);
}

RuleKind rule_kind_from_string(const std::string& s) {
  for (RuleKind k : {RuleKind::null_rule, RuleKind::constant, RuleKind::distribution3,
                     RuleKind::progression, RuleKind::logic_and, RuleKind::logic_or,
                     RuleKind::logic_xor})
    if (to_string(k) == s) return k;
  throw format_error("unknown rule kind: " + s);
}

ProblemType problem_type_from_string(const std::string& s) {
  for (ProblemType t : {ProblemType::logic, ProblemType::location, ProblemType::count})
    if (to_string(t) == s) return t;
  throw format_error("unknown problem type: " + s);
}

// ---------------------------------------------------------------------------
// Panels
// ---------------------------------------------------------------------------

void SymbolicPanel::validate() const {
  if (objects.empty() || objects.size() > size_t(kCells))
    throw contract_error("panel must hold 1..9 objects");
  for (size_t i = 0; i < objects.size(); ++i) {
    const ObjectSpec& o = objects[i];
    if (o.location < 0 || o.location >= kCells || o.shape < 0 || o.shape >= kShapes ||
        o.size < 0 || o.size >= kSizes || o.color < 0 || o.color >= kColors)
      throw contract_error("object attribute out of range");
    if (i > 0 && objects[i - 1].location >= o.location)
      throw contract_error("panel objects must occupy distinct ascending cells");
  }
}

std::vector<int64_t> SymbolicPanel::cell_set() const {
  std::vector<int64_t> out;
  out.reserve(objects.size());
  for (const ObjectSpec& o : objects) out.push_back(o.location);
  return out;
}

std::vector<int64_t> shift_cells(const std::vector<int64_t>& cells, int64_t step) {
  std::vector<int64_t> out;
  out.reserve(cells.size());
  for (int64_t c : cells) out.push_back(((c + step) % kCells + kCells) % kCells);
  std::sort(out.begin(), out.end());
  return out;
}

int64_t cells_to_mask(const std::vector<int64_t>& cells) {
  int64_t mask = 0;
  for (int64_t c : cells) mask |= int64_t(1) << c;
  return mask;
}

std::vector<int64_t> mask_to_cells(int64_t mask) {
  std::vector<int64_t> out;
  for (int64_t c = 0; c < kCells; ++c)
    if (mask & (int64_t(1) << c)) out.push_back(c);
  return out;
}

// ---------------------------------------------------------------------------
// Rule sampling
// ---------------------------------------------------------------------------

std::vector<Rule> sample_rules(ProblemType type, Rng& rng) {
  std::vector<Rule> rules;
  const RuleKind value_kinds[3] = {RuleKind::null_rule, RuleKind::constant,
                                   RuleKind::distribution3};
  for (Attribute a : {Attribute::shape, Attribute::color, Attribute::size}) {
    Rule r{a, value_kinds[rng.uniform_int(3)], {}};
    if (r.kind == RuleKind::distribution3) {
      // the fixed triple of distinct values; for 3-valued attributes this is
      // necessarily all three values
      int64_t n = attribute_cardinality(a);
      std::vector<int64_t> pool(static_cast<size_t>(n));
      for (int64_t v = 0; v < n; ++v) pool[size_t(v)] = v;
      for (int64_t i = 0; i < 3; ++i) {
        int64_t j = i + rng.uniform_int(n - i);
        std::swap(pool[size_t(i)], pool[size_t(j)]);
      }
      r.payload = {pool[0], pool[1], pool[2]};
      std::sort(r.payload.begin(), r.payload.end());
    }
    rules.push_back(std::move(r));
  }

  if (type == ProblemType::logic) {
    const RuleKind ops[3] = {RuleKind::logic_and, RuleKind::logic_or, RuleKind::logic_xor};
    rules.push_back(Rule{Attribute::location, ops[rng.uniform_int(3)], {}});
  } else {
    Attribute target = type == ProblemType::location ? Attribute::location : Attribute::count;
    const RuleKind kinds[3] = {RuleKind::constant, RuleKind::distribution3,
                               RuleKind::progression};
    Rule r{target, kinds[rng.uniform_int(3)], {}};
    if (r.kind == RuleKind::progression) {
      r.payload = {rng.bernoulli(0.5) ? int64_t(1) : int64_t(-1)};
    } else if (r.kind == RuleKind::distribution3 && target == Attribute::location) {
      // three pairwise distinct nonempty cell sets, stored as bitmasks
      for (int attempt = 0;; ++attempt) {
        if (attempt >= kMaxRetries)
          throw generation_error("could not draw three distinct cell sets");
        std::set<int64_t> masks;
        for (int i = 0; i < 3; ++i) masks.insert(cells_to_mask(random_nonempty_cells(rng)));
        if (masks.size() == 3) {
          r.payload.assign(masks.begin(), masks.end());
          break;
        }
      }
    } else if (r.kind == RuleKind::distribution3 && target == Attribute::count) {
      std::vector<int64_t> pool{1, 2, 3, 4, 5, 6, 7, 8, 9};
      for (int64_t i = 0; i < 3; ++i) {
        int64_t j = i + rng.uniform_int(kCells - i);
        std::swap(pool[size_t(i)], pool[size_t(j)]);
      }
      r.payload = {pool[0], pool[1], pool[2]};
      std::sort(r.payload.begin(), r.payload.end());
    }
    rules.push_back(std::move(r));
  }
  return rules;
}

// ---------------------------------------------------------------------------
// Materialization
// ---------------------------------------------------------------------------

namespace {

/// Cell sets for one row's three panels under the problem's location/count
/// rule. Draw order is fixed so generation is deterministic under the seed.
std::array<std::vector<int64_t>, 3> row_cell_sets(const Rule& rule, Rng& rng) {
  switch (rule.kind) {
    case RuleKind::logic_and:
    case RuleKind::logic_or:
    case RuleKind::logic_xor: {
      for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
        std::vector<int64_t> a = random_nonempty_cells(rng);
        std::vector<int64_t> b = random_nonempty_cells(rng);
        std::vector<int64_t> c = rule.kind == RuleKind::logic_and ? set_and(a, b)
                                 : rule.kind == RuleKind::logic_or ? set_or(a, b)
                                                                   : set_xor(a, b);
        if (!c.empty()) return {std::move(a), std::move(b), std::move(c)};
      }
      throw generation_error("logical location rule unsatisfied after bounded retries");
    }
    case RuleKind::constant: {
      if (rule.attribute == Attribute::location) {
        std::vector<int64_t> s = random_nonempty_cells(rng);
        return {s, s, s};
      }
      int64_t c = 1 + rng.uniform_int(kCells);
      return {random_cells(rng, c), random_cells(rng, c), random_cells(rng, c)};
    }
    case RuleKind::distribution3: {
      int64_t perm[3] = {0, 1, 2};
      for (int64_t i = 0; i < 2; ++i) {
        int64_t j = i + rng.uniform_int(3 - i);
        std::swap(perm[i], perm[j]);
      }
      std::array<std::vector<int64_t>, 3> out;
      for (int64_t p = 0; p < 3; ++p) {
        int64_t v = rule.payload[size_t(perm[p])];
        out[size_t(p)] = rule.attribute == Attribute::location ? mask_to_cells(v)
                                                               : random_cells(rng, v);
      }
      return out;
    }
    case RuleKind::progression: {
      int64_t s = rule.payload.at(0);
      if (rule.attribute == Attribute::location) {
        std::vector<int64_t> base = random_nonempty_cells(rng);
        std::vector<int64_t> mid = shift_cells(base, s);
        std::vector<int64_t> last = shift_cells(mid, s);
        return {std::move(base), std::move(mid), std::move(last)};
      }
      // counts stay within 1..9: +1 starts at 1..7, -1 starts at 3..9
      int64_t base = s > 0 ? 1 + rng.uniform_int(7) : 3 + rng.uniform_int(7);
      return {random_cells(rng, base), random_cells(rng, base + s),
              random_cells(rng, base + 2 * s)};
    }
    default:
      throw contract_error("rule kind not valid for locations: " + to_string(rule.kind));
  }
}

}  // namespace

SymbolicProblem generate_symbolic(ProblemType type, Rng& rng) {
  SymbolicProblem problem;
  problem.type = type;
  problem.rules = sample_rules(type, rng);
  const Rule& placement = problem.rules.back();

  for (int64_t row = 0; row < 3; ++row) {
    std::array<std::vector<int64_t>, 3> cells = row_cell_sets(placement, rng);
    std::array<SymbolicPanel, 3> panels;
    for (int64_t p = 0; p < 3; ++p)
      for (int64_t c : cells[size_t(p)]) panels[size_t(p)].objects.push_back({c, 0, 0, 0});

    for (size_t a = 0; a < 3; ++a) {  // shape, color, size in rule order
      const Rule& rule = problem.rules[a];
      int64_t n = attribute_cardinality(rule.attribute);
      switch (rule.kind) {
        case RuleKind::constant: {
          int64_t v = rng.uniform_int(n);
          for (auto& panel : panels)
            for (ObjectSpec& o : panel.objects) object_value(o, rule.attribute) = v;
          break;
        }
        case RuleKind::distribution3: {
          int64_t perm[3] = {0, 1, 2};
          for (int64_t i = 0; i < 2; ++i) {
            int64_t j = i + rng.uniform_int(3 - i);
            std::swap(perm[i], perm[j]);
          }
          for (int64_t p = 0; p < 3; ++p) {
            int64_t v = rule.payload[size_t(perm[p])];
            for (ObjectSpec& o : panels[size_t(p)].objects)
              object_value(o, rule.attribute) = v;
          }
          break;
        }
        case RuleKind::null_rule: {
          for (auto& panel : panels)
            for (ObjectSpec& o : panel.objects)
              object_value(o, rule.attribute) = rng.uniform_int(n);
          break;
        }
        default:
          throw contract_error("rule kind not valid for values: " + to_string(rule.kind));
      }
    }

    for (int64_t p = 0; p < 3; ++p) {
      panels[size_t(p)].validate();
      problem.grid[size_t(row * 3 + p)] = std::move(panels[size_t(p)]);
    }
  }
  return problem;
}

// ---------------------------------------------------------------------------
// Bisection answers
// ---------------------------------------------------------------------------

std::vector<Attribute> mutable_attributes(const SymbolicProblem& problem) {
  std::vector<Attribute> out;
  for (size_t a = 0; a < 3; ++a)
    if (problem.rules[a].kind != RuleKind::null_rule)
      out.push_back(problem.rules[a].attribute);
  out.push_back(problem.type == ProblemType::count ? Attribute::count : Attribute::location);
  return out;
}

namespace {

/// One shared "modify" draw for a bisection level: a different value for
/// value attributes, a different cell set for location, or a different
/// count (with a concrete cell placement) for count.
struct Mutation {
  Attribute attribute;
  int64_t value = 0;            // value attributes
  std::vector<int64_t> cells;   // location / count placements
};

Mutation sample_mutation(const SymbolicPanel& correct, Attribute a, Rng& rng) {
  Mutation m{a, 0, {}};
  switch (a) {
    case Attribute::shape:
    case Attribute::color:
    case Attribute::size: {
      // non-null value rules make the panel's value uniform across objects
      int64_t current = object_value(correct.objects.front(), a);
      m.value = uniform_int_except(rng, attribute_cardinality(a), current);
      return m;
    }
    case Attribute::location: {
      std::vector<int64_t> s = correct.cell_set();
      int64_t size = int64_t(s.size()) < kCells ? int64_t(s.size()) : kCells - 1;
      for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
        std::vector<int64_t> alt = random_cells(rng, size);
        if (alt != s) {
          m.cells = std::move(alt);
          return m;
        }
      }
      throw generation_error("could not draw an alternative cell set");
    }
    case Attribute::count: {
      int64_t alt = 1 + uniform_int_except(rng, kCells, correct.count() - 1);
      m.cells = random_cells(rng, alt);
      return m;
    }
  }
  throw contract_error("unknown attribute");
}

SymbolicPanel apply_mutation(const SymbolicPanel& panel, const Mutation& m) {
  SymbolicPanel out;
  if (m.attribute == Attribute::location || m.attribute == Attribute::count) {
    // relocate: objects inherit attribute values in cell order, cycling when
    // the new set is larger
    for (size_t i = 0; i < m.cells.size(); ++i) {
      ObjectSpec o = panel.objects[i % panel.objects.size()];
      o.location = m.cells[i];
      out.objects.push_back(o);
    }
  } else {
    out = panel;
    for (ObjectSpec& o : out.objects) object_value(o, m.attribute) = m.value;
  }
  out.validate();
  return out;
}

}  // namespace

AnswerSet bisection_answers(const SymbolicPanel& correct,
                            const std::vector<Attribute>& mutable_attrs, Rng& rng) {
  if (mutable_attrs.size() < 3)
    throw generation_error("bisection tree needs at least 3 mutable attributes, have " +
                           std::to_string(mutable_attrs.size()));
  std::vector<Attribute> pool = mutable_attrs;
  for (size_t i = 0; i + 1 < pool.size(); ++i) {
    size_t j = i + size_t(rng.uniform_int(int64_t(pool.size() - i)));
    std::swap(pool[i], pool[j]);
  }

  std::vector<SymbolicPanel> leaves{correct};
  for (int64_t level = 0; level < 3; ++level) {
    Mutation m = sample_mutation(correct, pool[size_t(level)], rng);
    std::vector<SymbolicPanel> next;
    next.reserve(leaves.size() * 2);
    for (const SymbolicPanel& leaf : leaves) {
      next.push_back(leaf);                   // keep child
      next.push_back(apply_mutation(leaf, m));  // modify child
    }
    leaves = std::move(next);
  }

  AnswerSet out;
  int64_t order[8] = {0, 1, 2, 3, 4, 5, 6, 7};
  for (int64_t i = 0; i < 7; ++i) {
    int64_t j = i + rng.uniform_int(8 - i);
    std::swap(order[i], order[j]);
  }
  for (int64_t i = 0; i < 8; ++i) {
    out.candidates[size_t(i)] = leaves[size_t(order[i])];
    if (order[i] == 0) out.answer = i;  // the all-keep leaf
  }
  return out;
}

// ---------------------------------------------------------------------------
// Full symbolic pipeline
// ---------------------------------------------------------------------------

MatrixProblem generate_problem(ProblemType type, uint64_t seed, int64_t index) {
  Rng rng = Rng::derive(seed, {kStreamProblem, uint64_t(index)});
  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    try {
      SymbolicProblem sym = generate_symbolic(type, rng);
      AnswerSet answers = bisection_answers(sym.grid[8], mutable_attributes(sym), rng);
      MatrixProblem out;
      out.type = type;
      out.rules = std::move(sym.rules);
      for (int64_t i = 0; i < 8; ++i) out.context[size_t(i)] = std::move(sym.grid[size_t(i)]);
      out.candidates = std::move(answers.candidates);
      out.answer = answers.answer;
      return out;
    } catch (const generation_error&) {
      continue;  // redraw everything from the same per-problem stream
    }
  }
  throw generation_error("problem generation failed after bounded retries");
}

}  // namespace stsn
