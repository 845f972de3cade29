#pragma once

#include <span>
#include <vector>

#include "feddadil/ot.hpp"

namespace feddadil {

/// Euclidean projection onto the probability simplex {u >= 0, sum u = 1}
/// (sort-and-threshold). Total on finite input.
std::vector<double> project_to_simplex(std::span<const double> v);

/// Projects every row of `rows` onto the simplex in place.
void project_rows_to_simplex(Matrix& rows);

bool on_simplex(std::span<const double> v, double tol);

}  // namespace feddadil
