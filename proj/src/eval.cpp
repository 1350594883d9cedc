#include "dlo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dlo {

ActionPath accumulate_actions(const EpisodeRecord& rec) {
  if (rec.steps.empty()) throw DomainError("accumulate_actions: empty record");
  ActionPath path;
  path.points.reserve(rec.steps.size() + 1);
  Vec2 p = Vec2::Zero();
  path.points.push_back(p);
  for (const EpisodeStep& s : rec.steps) {
    p += s.action;
    path.points.push_back(p);
  }
  return path;
}

double dtw(const ActionPath& a, const ActionPath& b) {
  const std::size_t n = a.points.size(), m = b.points.size();
  if (n == 0 || m == 0) throw DomainError("dtw: empty path");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j) {
      const double cost = (a.points[i - 1] - b.points[j - 1]).norm();
      cur[j] = cost + std::min({prev[j - 1], prev[j], cur[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

MeanPath mean_path(std::span<const ActionPath> paths, int horizon) {
  if (paths.empty()) throw DomainError("mean_path: no paths");
  const std::size_t len = static_cast<std::size_t>(horizon) + 1;
  MeanPath out;
  out.mean.assign(len, Vec2::Zero());
  out.stddev.assign(len, Vec2::Zero());
  auto at = [&](const ActionPath& p, std::size_t t) -> const Vec2& {
    return p.points[std::min(t, p.points.size() - 1)];
  };
  const double n = static_cast<double>(paths.size());
  for (std::size_t t = 0; t < len; ++t) {
    for (const ActionPath& p : paths) out.mean[t] += at(p, t);
    out.mean[t] /= n;
    Vec2 var = Vec2::Zero();
    for (const ActionPath& p : paths) var += (at(p, t) - out.mean[t]).cwiseAbs2();
    out.stddev[t] = (var / n).cwiseSqrt();
  }
  return out;
}

EvalGrid build_eval_grid(std::span<const NamedPolicy> policies, std::span<const NamedEnv> envs,
                         int repetitions) {
  if (repetitions < 1) throw DomainError("build_eval_grid: repetitions must be >= 1");
  EvalGrid grid;
  for (const NamedPolicy& pol : policies) {
    for (const NamedEnv& env : envs) {
      EvalCell cell;
      cell.policy = pol.name;
      cell.env = env.name;
      try {
        Evaluation ev = evaluate(pol.policy, env.env, repetitions);
        cell.records = std::move(ev.records);
        std::vector<ActionPath> paths;
        double total = 0.0;
        for (const EpisodeRecord& r : cell.records) {
          paths.push_back(accumulate_actions(r));
          total += r.total_reward();
        }
        cell.mean_episode_reward = total / static_cast<double>(cell.records.size());
        cell.path = mean_path(paths);
        cell.mean_step_reward.assign(kHorizon, 0.0);
        cell.step_count.assign(kHorizon, 0);
        for (const auto& rewards : ev.step_rewards) {
          for (std::size_t t = 0; t < rewards.size() && t < kHorizon; ++t) {
            cell.mean_step_reward[t] += rewards[t];
            ++cell.step_count[t];
          }
        }
        for (int t = 0; t < kHorizon; ++t) {
          if (cell.step_count[t] > 0) cell.mean_step_reward[t] /= cell.step_count[t];
        }
      } catch (const std::exception& e) {
        cell.complete = false;
        cell.error = e.what();
      }
      grid.cells.push_back(std::move(cell));
    }
  }
  const auto n = static_cast<Eigen::Index>(grid.cells.size());
  grid.dtw = Eigen::MatrixXd::Zero(n, n);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const EvalCell& a = grid.cells[i];
      const EvalCell& b = grid.cells[j];
      const double d = a.complete && b.complete ? dtw(a.path.as_path(), b.path.as_path()) : nan;
      grid.dtw(i, j) = d;
      grid.dtw(j, i) = d;
    }
    if (!grid.cells[i].complete) grid.dtw(i, i) = nan;
  }
  return grid;
}

}  // namespace dlo
