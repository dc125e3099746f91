// Plans the ladder (1, 2, 11, 51) at a few budgets and runs the protocol
// once per budget at a fixed angle.

#include <cstdio>

#include "hscale/allocator.hpp"
#include "hscale/analysis.hpp"
#include "hscale/simulator.hpp"

int main() {
  using namespace hscale;
  StrategyCatalog cat = make_catalog({1, 2, 11, 51});
  std::vector<std::int64_t> grid;
  for (std::int64_t N = 2; N <= 5000; N += 2) grid.push_back(N);
  cat = upgrade_points(std::move(cat), grid);

  const double theta = 1.0;
  for (std::int64_t N : {20, 100, 500, 2000, 5000}) {
    const ResourcePlan plan = plan_for_budget(cat, N);
    const EstimationRun run = run_protocol_once(plan, SimConfig{theta, {}, 7});
    std::printf("N = %5lld  %-12s n = [", static_cast<long long>(N), cat.strategy_id(cat.select(N)).c_str());
    for (std::size_t k = 0; k < plan.n.size(); ++k) std::printf("%s%d", k ? " " : "", plan.n[k]);
    std::printf("]  bound = %.3e  estimate = %.6f  error = %.2e  SQL = %.2e\n", plan.bound, run.final_theta,
                circular_distance(run.final_theta, theta), sql_rmse(double(N)));
  }
}
