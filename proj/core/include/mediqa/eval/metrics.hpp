#pragma once

#include <span>
#include <vector>

namespace mediqa::eval {

/// Fractional ranks (1-based); ties share their average rank.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman rank correlation with average ranks for ties. Throws
/// UndefinedCorrelationError when either input is constant.
double srcc(std::span<const double> pred, std::span<const double> target);
/// Pearson correlation. Throws UndefinedCorrelationError on zero variance.
double plcc(std::span<const double> pred, std::span<const double> target);
double rmse(std::span<const double> pred, std::span<const double> target);

}  // namespace mediqa::eval
