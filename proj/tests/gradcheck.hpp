#pragma once
// Central-difference check of the analytic dictionary gradients against the
// loss with every transport plan frozen, evaluated elementwise.

#include <cstdint>
#include <random>

#include "feddadil/dictionary.hpp"

namespace oracle {

struct GradCheckResult {
  double features = 0.0, labels = 0.0, alpha = 0.0;
  double base_mismatch = 0.0;  ///< frozen loss vs solver loss at the base point
};

/// K in {2, 3} atoms of 3..8 points in 2-D with 3 classes, all drawn from `seed`.
GradCheckResult check_frozen_gradients(std::uint64_t seed, bool labeled);

/// K atoms of n points, atom i shifted by 2i along the first axis.
feddadil::Dictionary random_dictionary(std::mt19937_64& rng, std::size_t k, Eigen::Index n, Eigen::Index d,
                                       Eigen::Index nc);

double rel_error(double analytic, double numeric, double scale);

}  // namespace oracle
