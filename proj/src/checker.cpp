#include "stsn/checker.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <set>

namespace stsn {

namespace {

using CellSet = std::vector<int64_t>;

int64_t value_of(const ObjectSpec& o, Attribute a) {
  switch (a) {
    case Attribute::shape: return o.shape;
    case Attribute::color: return o.color;
    case Attribute::size: return o.size;
    default: throw contract_error("not a value attribute: " + to_string(a));
  }
}

/// All objects of the panel share one value of `a`, or nullopt.
std::optional<int64_t> uniform_value(const SymbolicPanel& p, Attribute a) {
  int64_t v = value_of(p.objects.front(), a);
  for (const ObjectSpec& o : p.objects)
    if (value_of(o, a) != v) return std::nullopt;
  return v;
}

CellSet apply_op(RuleKind op, const CellSet& a, const CellSet& b) {
  CellSet out;
  if (op == RuleKind::logic_and)
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  else if (op == RuleKind::logic_or)
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  else
    std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(),
                                  std::back_inserter(out));
  return out;
}

struct Derivation {
  std::vector<std::function<bool(const SymbolicPanel&)>> constraints;
  std::string failure;  // nonempty when the context itself violates a rule

  void fail(const std::string& why) {
    if (failure.empty()) failure = why;
  }
};

/// The grid as the checker sees it: rows 0 and 1 complete, row 2 missing
/// its last panel.
struct GridView {
  const SymbolicPanel* panel[3][3] = {};  // [row][col]; [2][2] is null

  const SymbolicPanel& at(int64_t r, int64_t c) const { return *panel[r][c]; }
  CellSet cells(int64_t r, int64_t c) const { return at(r, c).cell_set(); }
  int64_t count(int64_t r, int64_t c) const { return at(r, c).count(); }
};

void derive_value_rule(Derivation& d, const GridView& g, const Rule& rule) {
  Attribute a = rule.attribute;
  if (rule.kind == RuleKind::null_rule) return;

  // per-panel shared values where defined; constant additionally needs one
  // value across the whole row
  auto row_values = [&](int64_t r, int64_t n) {
    std::vector<std::optional<int64_t>> vals;
    for (int64_t c = 0; c < n; ++c) vals.push_back(uniform_value(g.at(r, c), a));
    return vals;
  };

  if (rule.kind == RuleKind::constant) {
    for (int64_t r = 0; r < 2; ++r) {
      auto vals = row_values(r, 3);
      if (!vals[0] || vals[0] != vals[1] || vals[1] != vals[2])
        return d.fail(to_string(a) + ": context row is not constant");
    }
    auto vals = row_values(2, 2);
    if (!vals[0] || vals[0] != vals[1])
      return d.fail(to_string(a) + ": last row prefix is not constant");
    int64_t v = *vals[0];
    d.constraints.push_back([a, v](const SymbolicPanel& cand) {
      auto u = uniform_value(cand, a);
      return u && *u == v;
    });
    return;
  }

  // distribution-of-3: one value per panel, each full row carries one fixed
  // triple of distinct values
  std::set<int64_t> triple;
  for (int64_t r = 0; r < 2; ++r) {
    auto vals = row_values(r, 3);
    std::set<int64_t> row_set;
    for (auto& v : vals) {
      if (!v) return d.fail(to_string(a) + ": panel not uniform under distribution-of-3");
      row_set.insert(*v);
    }
    if (row_set.size() != 3)
      return d.fail(to_string(a) + ": row does not carry three distinct values");
    if (r == 0)
      triple = row_set;
    else if (row_set != triple)
      return d.fail(to_string(a) + ": rows disagree on the value triple");
  }
  auto vals = row_values(2, 2);
  if (!vals[0] || !vals[1] || *vals[0] == *vals[1] || !triple.count(*vals[0]) ||
      !triple.count(*vals[1]))
    return d.fail(to_string(a) + ": last row prefix does not fit the triple");
  std::set<int64_t> remaining = triple;
  remaining.erase(*vals[0]);
  remaining.erase(*vals[1]);
  int64_t needed = *remaining.begin();
  d.constraints.push_back([a, needed](const SymbolicPanel& cand) {
    auto u = uniform_value(cand, a);
    return u && *u == needed;
  });
}

void derive_location_rule(Derivation& d, const GridView& g, const Rule& rule) {
  switch (rule.kind) {
    case RuleKind::logic_and:
    case RuleKind::logic_or:
    case RuleKind::logic_xor: {
      for (int64_t r = 0; r < 2; ++r)
        if (apply_op(rule.kind, g.cells(r, 0), g.cells(r, 1)) != g.cells(r, 2))
          return d.fail("location: context row violates " + to_string(rule.kind));
      CellSet target = apply_op(rule.kind, g.cells(2, 0), g.cells(2, 1));
      if (target.empty()) return d.fail("location: derived completion is empty");
      d.constraints.push_back(
          [target](const SymbolicPanel& cand) { return cand.cell_set() == target; });
      return;
    }
    case RuleKind::constant: {
      for (int64_t r = 0; r < 2; ++r)
        if (g.cells(r, 0) != g.cells(r, 1) || g.cells(r, 1) != g.cells(r, 2))
          return d.fail("location: context row is not constant");
      if (g.cells(2, 0) != g.cells(2, 1))
        return d.fail("location: last row prefix is not constant");
      CellSet target = g.cells(2, 0);
      d.constraints.push_back(
          [target](const SymbolicPanel& cand) { return cand.cell_set() == target; });
      return;
    }
    case RuleKind::distribution3: {
      std::set<CellSet> triple;
      for (int64_t r = 0; r < 2; ++r) {
        std::set<CellSet> row_set{g.cells(r, 0), g.cells(r, 1), g.cells(r, 2)};
        if (row_set.size() != 3)
          return d.fail("location: row does not carry three distinct cell sets");
        if (r == 0)
          triple = row_set;
        else if (row_set != triple)
          return d.fail("location: rows disagree on the cell-set triple");
      }
      CellSet s0 = g.cells(2, 0), s1 = g.cells(2, 1);
      if (s0 == s1 || !triple.count(s0) || !triple.count(s1))
        return d.fail("location: last row prefix does not fit the triple");
      std::set<CellSet> remaining = triple;
      remaining.erase(s0);
      remaining.erase(s1);
      CellSet target = *remaining.begin();
      d.constraints.push_back(
          [target](const SymbolicPanel& cand) { return cand.cell_set() == target; });
      return;
    }
    case RuleKind::progression: {
      // infer the step from the context rather than the payload
      std::set<CellSet> targets;
      for (int64_t s : {int64_t(1), int64_t(-1)}) {
        bool fits = true;
        for (int64_t r = 0; r < 2 && fits; ++r)
          fits = g.cells(r, 1) == shift_cells(g.cells(r, 0), s) &&
                 g.cells(r, 2) == shift_cells(g.cells(r, 1), s);
        if (fits && g.cells(2, 1) == shift_cells(g.cells(2, 0), s))
          targets.insert(shift_cells(g.cells(2, 1), s));
      }
      if (targets.size() != 1)
        return d.fail("location: progression step is not uniquely consistent");
      CellSet target = *targets.begin();
      d.constraints.push_back(
          [target](const SymbolicPanel& cand) { return cand.cell_set() == target; });
      return;
    }
    default:
      return d.fail("location: rule kind not recognized");
  }
}

void derive_count_rule(Derivation& d, const GridView& g, const Rule& rule) {
  switch (rule.kind) {
    case RuleKind::constant: {
      for (int64_t r = 0; r < 2; ++r)
        if (g.count(r, 0) != g.count(r, 1) || g.count(r, 1) != g.count(r, 2))
          return d.fail("count: context row is not constant");
      if (g.count(2, 0) != g.count(2, 1))
        return d.fail("count: last row prefix is not constant");
      int64_t target = g.count(2, 0);
      d.constraints.push_back(
          [target](const SymbolicPanel& cand) { return cand.count() == target; });
      return;
    }
    case RuleKind::distribution3: {
      std::set<int64_t> triple;
      for (int64_t r = 0; r < 2; ++r) {
        std::set<int64_t> row_set{g.count(r, 0), g.count(r, 1), g.count(r, 2)};
        if (row_set.size() != 3)
          return d.fail("count: row does not carry three distinct counts");
        if (r == 0)
          triple = row_set;
        else if (row_set != triple)
          return d.fail("count: rows disagree on the count triple");
      }
      int64_t c0 = g.count(2, 0), c1 = g.count(2, 1);
      if (c0 == c1 || !triple.count(c0) || !triple.count(c1))
        return d.fail("count: last row prefix does not fit the triple");
      std::set<int64_t> remaining = triple;
      remaining.erase(c0);
      remaining.erase(c1);
      int64_t target = *remaining.begin();
      d.constraints.push_back(
          [target](const SymbolicPanel& cand) { return cand.count() == target; });
      return;
    }
    case RuleKind::progression: {
      std::set<int64_t> targets;
      for (int64_t s : {int64_t(1), int64_t(-1)}) {
        bool fits = true;
        for (int64_t r = 0; r < 2 && fits; ++r)
          fits = g.count(r, 1) == g.count(r, 0) + s && g.count(r, 2) == g.count(r, 1) + s;
        if (fits && g.count(2, 1) == g.count(2, 0) + s) {
          int64_t t = g.count(2, 1) + s;
          if (t >= 1 && t <= kCells) targets.insert(t);
        }
      }
      if (targets.size() != 1)
        return d.fail("count: progression step is not uniquely consistent");
      int64_t target = *targets.begin();
      d.constraints.push_back(
          [target](const SymbolicPanel& cand) { return cand.count() == target; });
      return;
    }
    default:
      return d.fail("count: rule kind not recognized");
  }
}

}  // namespace

CheckResult check_problem(const MatrixProblem& problem) {
  CheckResult result;
  if (problem.answer < 0 || problem.answer > 7) {
    result.reason = "answer index out of range";
    return result;
  }
  for (const SymbolicPanel& p : problem.context) p.validate();
  for (const SymbolicPanel& p : problem.candidates) p.validate();

  GridView g;
  for (int64_t i = 0; i < 8; ++i) g.panel[i / 3][i % 3] = &problem.context[size_t(i)];

  Derivation d;
  for (const Rule& rule : problem.rules) {
    switch (rule.attribute) {
      case Attribute::shape:
      case Attribute::color:
      case Attribute::size: derive_value_rule(d, g, rule); break;
      case Attribute::location: derive_location_rule(d, g, rule); break;
      case Attribute::count: derive_count_rule(d, g, rule); break;
    }
    if (!d.failure.empty()) {
      result.reason = d.failure;
      return result;
    }
  }
  if (d.constraints.empty()) {
    result.reason = "no diagnostic rules derived";
    return result;
  }

  for (int64_t i = 0; i < 8; ++i) {
    bool fits = true;
    for (const auto& constraint : d.constraints)
      fits = fits && constraint(problem.candidates[size_t(i)]);
    if (fits) {
      result.consistent++;
      result.derived_answer = i;
    }
  }
  if (result.consistent != 1) {
    result.reason = std::to_string(result.consistent) + " candidates satisfy the rules";
    return result;
  }
  if (result.derived_answer != problem.answer) {
    result.reason = "derived answer disagrees with the label";
    return result;
  }
  result.ok = true;
  return result;
}

double majority_vote_credit(const MatrixProblem& problem) {
  // per-candidate attribute profiles
  std::vector<std::vector<std::vector<int64_t>>> profiles(8);
  for (int64_t i = 0; i < 8; ++i) {
    const SymbolicPanel& p = problem.candidates[size_t(i)];
    std::vector<int64_t> shapes, colors, sizes;
    for (const ObjectSpec& o : p.objects) {
      shapes.push_back(o.shape);
      colors.push_back(o.color);
      sizes.push_back(o.size);
    }
    std::sort(shapes.begin(), shapes.end());
    std::sort(colors.begin(), colors.end());
    std::sort(sizes.begin(), sizes.end());
    profiles[size_t(i)] = {p.cell_set(), {p.count()}, shapes, colors, sizes};
  }

  int64_t best = -1;
  std::vector<int64_t> scores(8, 0);
  for (int64_t i = 0; i < 8; ++i) {
    for (int64_t j = 0; j < 8; ++j) {
      if (i == j) continue;
      for (size_t f = 0; f < profiles[size_t(i)].size(); ++f)
        if (profiles[size_t(i)][f] == profiles[size_t(j)][f]) scores[size_t(i)]++;
    }
    best = std::max(best, scores[size_t(i)]);
  }
  int64_t winners = 0;
  bool answer_wins = false;
  for (int64_t i = 0; i < 8; ++i) {
    if (scores[size_t(i)] == best) {
      winners++;
      if (i == problem.answer) answer_wins = true;
    }
  }
  return answer_wins ? 1.0 / double(winners) : 0.0;
}

}  // namespace stsn
