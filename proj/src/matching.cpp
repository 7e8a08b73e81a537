#include "vrdone/matching.hpp"

#include <limits>
#include <stdexcept>

namespace vrdone {

std::vector<int> hungarian(const Matrix& cost) {
  const int m = static_cast<int>(cost.rows());  // queries
  const int n = static_cast<int>(cost.cols());  // ground-truth items
  if (n == 0) return {};
  if (n > m) throw std::invalid_argument("hungarian: more columns than rows");
  if (!cost.allFinite()) throw std::invalid_argument("hungarian: non-finite cost");

  // Shortest augmenting paths with dual potentials; item i (1-based) is
  // matched to query p^-1(i). Index 0 is the virtual source.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(j - 1, i0 - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> assignment(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) assignment[p[j] - 1] = j - 1;
  }
  return assignment;
}

double assignment_cost(const Matrix& cost, const std::vector<int>& assignment) {
  double total = 0.0;
  for (std::size_t j = 0; j < assignment.size(); ++j) total += cost(assignment[j], static_cast<Index>(j));
  return total;
}

}  // namespace vrdone
