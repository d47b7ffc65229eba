#pragma once

#include <cstdint>

#include "dcls/mat.hpp"

namespace dcls {

// Project rows of X (n x d) onto the top-2 principal components.
// Deterministic: Jacobi eigensolver with a fixed sweep order and a sign
// convention on the eigenvectors. Requires n >= 3.
Mat pca_2d(const Mat& X);

// Exact (O(n^2)) t-SNE to 2D with a fixed iteration budget, seeded init.
Mat tsne_2d(const Mat& X, double perplexity, int iterations, uint64_t seed);

} // namespace dcls
