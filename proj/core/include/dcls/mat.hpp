#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace dcls {

// Dense row-major matrix of doubles. All model math runs in double precision
// so finite-difference gradient checks have headroom.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

    double* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
    const double* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }
    double& at(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    double at(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }
    void zero() { std::fill(a.begin(), a.end(), 0.0); }
    size_t size() const { return a.size(); }
};

inline double dot(const double* x, const double* y, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

inline void axpy(double alpha, const double* x, double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// out = A * B^T. A: n x k, B: m x k, out: n x m. Both operands are walked
// along contiguous rows, which is the cache-friendly orientation here.
inline void matmul_nt(const Mat& A, const Mat& B, Mat& out) {
    assert(A.cols == B.cols && out.rows == A.rows && out.cols == B.rows);
    for (int i = 0; i < A.rows; ++i) {
        const double* ai = A.row(i);
        double* oi = out.row(i);
        for (int j = 0; j < B.rows; ++j) oi[j] = dot(ai, B.row(j), A.cols);
    }
}

// out = A * B. A: n x k, B: k x m, out: n x m.
inline void matmul_nn(const Mat& A, const Mat& B, Mat& out) {
    assert(A.cols == B.rows && out.rows == A.rows && out.cols == B.cols);
    out.zero();
    for (int i = 0; i < A.rows; ++i) {
        const double* ai = A.row(i);
        double* oi = out.row(i);
        for (int k = 0; k < A.cols; ++k) axpy(ai[k], B.row(k), oi, B.cols);
    }
}

// out += A^T * B. A: n x r, B: n x c, out: r x c. Accumulating form used for
// weight gradients.
inline void matmul_tn_acc(const Mat& A, const Mat& B, Mat& out) {
    assert(A.rows == B.rows && out.rows == A.cols && out.cols == B.cols);
    for (int i = 0; i < A.rows; ++i) {
        const double* ai = A.row(i);
        const double* bi = B.row(i);
        for (int r = 0; r < A.cols; ++r) axpy(ai[r], bi, out.row(r), B.cols);
    }
}

} // namespace dcls
