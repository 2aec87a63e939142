#pragma once

#include <vector>

namespace diane::linalg {

// Eigen-decomposition of a dense symmetric matrix.
struct SymmetricEigen {
    int n = 0;
    std::vector<double> values;   // descending
    std::vector<double> vectors;  // column j (row-major n x n) pairs with values[j], unit norm
};

// Cyclic Jacobi rotations. `a` is row-major n x n and must be symmetric.
SymmetricEigen jacobi_eigen(std::vector<double> a, int n);

}  // namespace diane::linalg
