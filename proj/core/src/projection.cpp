#include "dcls/projection.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dcls/common.hpp"
#include "dcls/rng.hpp"

namespace dcls {

namespace {

// Cyclic Jacobi eigen decomposition of a symmetric matrix. Returns
// eigenvalues (diagonal) and accumulates rotations into V (columns are
// eigenvectors).
void jacobi_eigen(Mat& A, Mat& V) {
    const int n = A.rows;
    V = Mat(n, n);
    for (int i = 0; i < n; ++i) V.at(i, i) = 1.0;
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += A.at(p, q) * A.at(p, q);
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = A.at(p, q);
                if (std::abs(apq) < 1e-300) continue;
                double theta = (A.at(q, q) - A.at(p, p)) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int i = 0; i < n; ++i) {
                    double aip = A.at(i, p), aiq = A.at(i, q);
                    A.at(i, p) = c * aip - s * aiq;
                    A.at(i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    double api = A.at(p, i), aqi = A.at(q, i);
                    A.at(p, i) = c * api - s * aqi;
                    A.at(q, i) = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    double vip = V.at(i, p), viq = V.at(i, q);
                    V.at(i, p) = c * vip - s * viq;
                    V.at(i, q) = s * vip + c * viq;
                }
            }
        }
    }
}

} // namespace

Mat pca_2d(const Mat& X) {
    const int n = X.rows, d = X.cols;
    if (n < 3) throw ConfigError("projection needs at least 3 points");

    std::vector<double> mean(d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) mean[j] += X.at(i, j);
    for (int j = 0; j < d; ++j) mean[j] /= n;

    Mat cov(d, d);
    for (int i = 0; i < n; ++i) {
        for (int a = 0; a < d; ++a) {
            double ca = X.at(i, a) - mean[a];
            for (int b = a; b < d; ++b) cov.at(a, b) += ca * (X.at(i, b) - mean[b]);
        }
    }
    for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) {
            cov.at(a, b) /= (n - 1);
            cov.at(b, a) = cov.at(a, b);
        }

    Mat V;
    jacobi_eigen(cov, V);
    // top-2 eigenvalues on the (now) diagonal
    std::vector<int> order(d);
    for (int i = 0; i < d; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return cov.at(a, a) > cov.at(b, b); });

    Mat out(n, 2);
    for (int k = 0; k < 2 && k < d; ++k) {
        int col = order[k];
        // sign convention: largest-magnitude component positive
        int arg = 0;
        for (int j = 1; j < d; ++j)
            if (std::abs(V.at(j, col)) > std::abs(V.at(arg, col))) arg = j;
        double sign = V.at(arg, col) >= 0.0 ? 1.0 : -1.0;
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) s += (X.at(i, j) - mean[j]) * V.at(j, col);
            out.at(i, k) = s * sign;
        }
    }
    return out;
}

Mat tsne_2d(const Mat& X, double perplexity, int iterations, uint64_t seed) {
    const int n = X.rows;
    if (n < 3) throw ConfigError("projection needs at least 3 points");
    perplexity = std::min(perplexity, (n - 1) / 3.0);
    perplexity = std::max(perplexity, 2.0);

    // pairwise squared distances
    Mat d2(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < X.cols; ++k) {
                double diff = X.at(i, k) - X.at(j, k);
                s += diff * diff;
            }
            d2.at(i, j) = d2.at(j, i) = s;
        }

    // binary-search per-point precision for the target perplexity
    Mat P(n, n);
    const double logU = std::log(perplexity);
    for (int i = 0; i < n; ++i) {
        double beta = 1.0, lo = -1e300, hi = 1e300;
        std::vector<double> row(n);
        for (int it = 0; it < 50; ++it) {
            double sum = 0.0;
            for (int j = 0; j < n; ++j) {
                row[j] = (j == i) ? 0.0 : std::exp(-beta * d2.at(i, j));
                sum += row[j];
            }
            if (sum <= 0.0) sum = 1e-300;
            double H = 0.0;
            for (int j = 0; j < n; ++j)
                if (row[j] > 0.0) {
                    double p = row[j] / sum;
                    H -= p * std::log(p);
                }
            if (std::abs(H - logU) < 1e-5) break;
            if (H > logU) {
                lo = beta;
                beta = (hi > 1e299) ? beta * 2.0 : (beta + hi) / 2.0;
            } else {
                hi = beta;
                beta = (lo < -1e299) ? beta / 2.0 : (beta + lo) / 2.0;
            }
        }
        double sum = 0.0;
        for (int j = 0; j < n; ++j) sum += row[j];
        if (sum <= 0.0) sum = 1e-300;
        for (int j = 0; j < n; ++j) P.at(i, j) = row[j] / sum;
    }
    // symmetrize
    double psum = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) psum += P.at(i, j);
    Mat Psym(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            Psym.at(i, j) = std::max((P.at(i, j) + P.at(j, i)) / psum, 1e-12);

    RngStream rng(seed);
    Mat Y(n, 2), dY(n, 2), gains(n, 2), vel(n, 2);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < 2; ++k) {
            Y.at(i, k) = rng.normal() * 1e-4;
            gains.at(i, k) = 1.0;
        }

    const double lr = 100.0;
    for (int iter = 0; iter < iterations; ++iter) {
        double exag = iter < 100 ? 4.0 : 1.0;
        // low-dim affinities
        Mat num(n, n);
        double qsum = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                double dx = Y.at(i, 0) - Y.at(j, 0);
                double dy = Y.at(i, 1) - Y.at(j, 1);
                double q = 1.0 / (1.0 + dx * dx + dy * dy);
                num.at(i, j) = num.at(j, i) = q;
                qsum += 2.0 * q;
            }
        dY.zero();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                double q = std::max(num.at(i, j) / qsum, 1e-12);
                double mult = (exag * Psym.at(i, j) - q) * num.at(i, j);
                dY.at(i, 0) += 4.0 * mult * (Y.at(i, 0) - Y.at(j, 0));
                dY.at(i, 1) += 4.0 * mult * (Y.at(i, 1) - Y.at(j, 1));
            }
        double momentum = iter < 250 ? 0.5 : 0.8;
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < 2; ++k) {
                bool same_sign = (dY.at(i, k) > 0) == (vel.at(i, k) > 0);
                gains.at(i, k) = std::max(0.01, same_sign ? gains.at(i, k) * 0.8
                                                          : gains.at(i, k) + 0.2);
                vel.at(i, k) = momentum * vel.at(i, k) - lr * gains.at(i, k) * dY.at(i, k);
                Y.at(i, k) += vel.at(i, k);
            }
    }
    return Y;
}

} // namespace dcls
