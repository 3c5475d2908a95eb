#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace swm::stats {

/// Percentile with linear interpolation between closest ranks (q in [0,100]).
double percentile(std::vector<double> values, double q);

double mean(std::span<const double> values);

/// Area under the ROC curve via the Mann-Whitney rank statistic (ties get average rank).
/// Returns 0.5 when one of the classes is absent.
double auroc(std::span<const double> scores, std::span<const int> labels);

/// Average precision (step-wise area under the precision-recall curve).
double auprc(std::span<const double> scores, std::span<const int> labels);

double sigmoid(double x);
double softplus(double x);

/// FNV-1a over raw bytes; used for config fingerprints in reports.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 1469598103934665603ULL);

}  // namespace swm::stats
