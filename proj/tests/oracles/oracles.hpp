#pragma once

// Brute-force reference implementations. They share only data types and the
// documented tie rules with the library, never its code paths.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace vipcap::oracle {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

struct KnnEntry {
    std::string id;
    std::vector<double> embedding;
};

/// Full scan: descending cosine similarity, ties by ascending id.
std::vector<std::string> brute_force_knn(const std::vector<KnnEntry>& entries, const std::vector<double>& query,
                                         std::size_t k);

/// For every row of v, the 0-based index of the most cosine-similar row of g,
/// lowest index on ties. Zero-norm candidates never win; a zero-norm patch
/// scores 0 against every candidate.
std::vector<int> brute_force_patch_retrieve(const Mat& g, const Mat& v);

/// Central differences (f(p+h) - f(p-h)) / 2h per coordinate. Throws a numeric
/// error when f is non-finite at any probe.
Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& params, double h = 1e-5);

struct Moments {
    Vec mean;
    Vec std;  // unbiased
};

/// Per-column mean and unbiased standard deviation of an S x K sample matrix.
Moments empirical_moments(const Mat& samples);

}  // namespace vipcap::oracle
