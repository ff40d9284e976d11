#pragma once

// AP activation search. modified_bb walks a single path down the removal
// tree: at each level every single-AP removal of the incumbent is solved and
// the cheapest child that does not raise total power (transmit + circuit)
// becomes the next incumbent. exhaustive solves every nonempty subset and is
// only meant as an oracle for small M.

#include <chrono>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfisac/metrics.hpp"
#include "cfisac/parallel.hpp"
#include "cfisac/relaxed_problem.hpp"

namespace cfisac {

enum class ChildStatus { InfeasiblePruned, NumericalFailure, WorsePruned, Retained };

inline const char* to_string(ChildStatus s) {
  switch (s) {
    case ChildStatus::InfeasiblePruned: return "infeasible-pruned";
    case ChildStatus::NumericalFailure: return "numerical-failure";
    case ChildStatus::WorsePruned: return "worse-pruned";
    case ChildStatus::Retained: return "retained";
  }
  return "?";
}

struct BBChild {
  int removed_ap = -1;
  ChildStatus status = ChildStatus::InfeasiblePruned;
  SolveStatus solver_status = SolveStatus::NumericalFailure;
  double total_power_w = std::numeric_limits<double>::infinity();  // +inf unless exactly feasible
  int iterations = 0;
};

struct BBLevel {
  std::vector<int> incumbent;  // active AP indices, ascending
  double incumbent_power_w = 0;
  std::vector<BBChild> children;  // in AP-index order
  int accepted_removal = -1;      // -1 when the search stops here
};

struct BBTrace {
  std::vector<BBLevel> levels;
  int solves = 0;
  int numerical_failures = 0;
  double wall_seconds = 0;
};

enum class SearchStatus { Ok, RootInfeasible, RootNumericalFailure };

inline const char* to_string(SearchStatus s) {
  switch (s) {
    case SearchStatus::Ok: return "ok";
    case SearchStatus::RootInfeasible: return "root-infeasible";
    case SearchStatus::RootNumericalFailure: return "root-numerical-failure";
  }
  return "?";
}

struct SelectorOptions {
  RelaxedOptions relaxed;
  int workers = 1;  // children of one level solved concurrently
};

struct BBResult {
  SearchStatus status = SearchStatus::RootInfeasible;
  PowerAllocation alloc;
  FeasibilityReport report;
  SubproblemResult root;  // full-set solve
  BBTrace trace;
  bool ok() const { return status == SearchStatus::Ok; }
};

// 1 + sum_{i=0}^{M-1} (M - i)
inline std::int64_t bb_solve_bound(int M) { return 1 + static_cast<std::int64_t>(M) * (M + 1) / 2; }

inline std::vector<bool> mask_from(int M, const std::vector<int>& aps) {
  std::vector<bool> mask(static_cast<std::size_t>(M), false);
  for (int m : aps) mask[static_cast<std::size_t>(m)] = true;
  return mask;
}

inline BBResult modified_bb(const Scenario& sc, const SelectorOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const int M = sc.num_aps();
  BBResult res;
  std::vector<int> incumbent;
  for (int m = 0; m < M; ++m) incumbent.push_back(m);

  res.root = solve_subproblem(sc, mask_from(M, incumbent), opt.relaxed);
  res.trace.solves = 1;
  auto finish = [&] {
    res.trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
  };
  if (!res.root.feasible) {
    if (res.root.status == SolveStatus::NumericalFailure) {
      res.status = SearchStatus::RootNumericalFailure;
      ++res.trace.numerical_failures;
    } else {
      res.status = SearchStatus::RootInfeasible;
    }
    res.alloc = res.root.alloc;
    res.report = res.root.report;
    return finish();
  }
  res.status = SearchStatus::Ok;
  SubproblemResult best = res.root;

  for (;;) {
    BBLevel level;
    level.incumbent = incumbent;
    level.incumbent_power_w = best.total_power_w;
    if (incumbent.size() <= 1) {
      res.trace.levels.push_back(std::move(level));
      break;
    }
    std::vector<SubproblemResult> kids = parallel_map(incumbent.size(), opt.workers, [&](std::size_t i) {
      std::vector<int> child;
      for (std::size_t j = 0; j < incumbent.size(); ++j)
        if (j != i) child.push_back(incumbent[j]);
      return solve_subproblem(sc, mask_from(M, child), opt.relaxed);
    });
    res.trace.solves += static_cast<int>(kids.size());

    int pick = -1;
    for (std::size_t i = 0; i < kids.size(); ++i) {
      const SubproblemResult& r = kids[i];
      BBChild c;
      c.removed_ap = incumbent[i];
      c.solver_status = r.status;
      c.iterations = r.iterations;
      if (r.status == SolveStatus::NumericalFailure) {
        c.status = ChildStatus::NumericalFailure;
        ++res.trace.numerical_failures;
      } else if (!r.feasible) {
        c.status = ChildStatus::InfeasiblePruned;
      } else {
        c.total_power_w = r.total_power_w;
        c.status = r.total_power_w <= best.total_power_w ? ChildStatus::Retained : ChildStatus::WorsePruned;
        // strict < keeps the lowest AP index on ties
        if (c.status == ChildStatus::Retained && (pick < 0 || r.total_power_w < kids[pick].total_power_w))
          pick = static_cast<int>(i);
      }
      level.children.push_back(c);
    }
    // Equal power would not shorten anything worth having; only strict
    // improvements move the incumbent.
    if (pick >= 0 && !(kids[pick].total_power_w < best.total_power_w)) pick = -1;
    if (pick < 0) {
      res.trace.levels.push_back(std::move(level));
      break;
    }
    level.accepted_removal = incumbent[static_cast<std::size_t>(pick)];
    res.trace.levels.push_back(std::move(level));
    best = std::move(kids[static_cast<std::size_t>(pick)]);
    incumbent.erase(incumbent.begin() + pick);
  }
  res.alloc = best.alloc;
  res.report = best.report;
  return finish();
}

// ---------------------------------------------------------------------------

struct EnumerationEntry {
  std::vector<bool> mask;
  SolveStatus solver_status = SolveStatus::NumericalFailure;
  bool feasible = false;
  double total_power_w = std::numeric_limits<double>::infinity();
};

struct ExhaustiveResult {
  bool found = false;
  PowerAllocation alloc;
  FeasibilityReport report;
  std::vector<EnumerationEntry> log;  // one per nonempty subset, by mask value
  int solves = 0;
  double wall_seconds = 0;
};

inline constexpr int kDefaultExhaustiveMaxM = 12;

inline std::string mask_string(const std::vector<bool>& mask) {
  std::string s;
  for (bool b : mask) s += b ? '1' : '0';
  return s;
}

// Ties in total power go to the lexicographically smallest mask string
// (character m is '1' when AP m is active).
inline ExhaustiveResult exhaustive(const Scenario& sc, int max_M = kDefaultExhaustiveMaxM,
                                   const SelectorOptions& opt = {}) {
  const int M = sc.num_aps();
  if (M > max_M)
    throw std::invalid_argument("exhaustive: M=" + std::to_string(M) + " exceeds the cap of " +
                                std::to_string(max_M) + " (2^M - 1 solves); use the bb method instead");
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t count = (std::size_t{1} << M) - 1;
  auto mask_of = [M](std::size_t code) {
    std::vector<bool> mask(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) mask[static_cast<std::size_t>(m)] = (code >> m) & 1U;
    return mask;
  };
  std::vector<SubproblemResult> all = parallel_map(count, opt.workers, [&](std::size_t i) {
    return solve_subproblem(sc, mask_of(i + 1), opt.relaxed);
  });

  ExhaustiveResult res;
  res.solves = static_cast<int>(count);
  int pick = -1;
  std::string pick_key;
  for (std::size_t i = 0; i < count; ++i) {
    EnumerationEntry e;
    e.mask = mask_of(i + 1);
    e.solver_status = all[i].status;
    e.feasible = all[i].feasible;
    if (e.feasible) e.total_power_w = all[i].total_power_w;
    if (e.feasible) {
      const std::string key = mask_string(e.mask);
      if (pick < 0 || e.total_power_w < all[static_cast<std::size_t>(pick)].total_power_w ||
          (e.total_power_w == all[static_cast<std::size_t>(pick)].total_power_w && key < pick_key)) {
        pick = static_cast<int>(i);
        pick_key = key;
      }
    }
    res.log.push_back(std::move(e));
  }
  if (pick >= 0) {
    res.found = true;
    res.alloc = all[static_cast<std::size_t>(pick)].alloc;
    res.report = all[static_cast<std::size_t>(pick)].report;
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace cfisac
