#pragma once

#include "vrdone/autograd.hpp"

#include <vector>

namespace vrdone {

/// Minimum-cost assignment of the columns of an R x C cost matrix (C <= R)
/// to distinct rows. Returns, for each column j, the chosen row.
std::vector<int> hungarian(const Matrix& cost);

/// Sum of cost(assignment[j], j).
double assignment_cost(const Matrix& cost, const std::vector<int>& assignment);

}  // namespace vrdone
