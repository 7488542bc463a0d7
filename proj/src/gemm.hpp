#pragma once

// Row-major GEMM kernels shared by matmul and conv2d. All accumulate into C.

namespace sadlr::detail {

/// crow[0..n) += a0*b0 + a1*b1 + a2*b2 + a3*b3
template <typename T>
inline void axpy4(int n, T a0, T a1, T a2, T a3, const T* __restrict b0, const T* __restrict b1,
                  const T* __restrict b2, const T* __restrict b3, T* __restrict crow) {
    for (int j = 0; j < n; ++j) {
        crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
    }
}

template <typename T>
inline void axpy1(int n, T a0, const T* __restrict b0, T* __restrict crow) {
    for (int j = 0; j < n; ++j) {
        crow[j] += a0 * b0[j];
    }
}

/// C[M x N] += A[M x K] * B[K x N]
template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c) {
    if (n == 1) {
        for (int i = 0; i < m; ++i) {
            const T* arow = a + static_cast<long>(i) * k;
            T s = 0;
            for (int p = 0; p < k; ++p) {
                s += arow[p] * b[p];
            }
            c[i] += s;
        }
        return;
    }
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<long>(i) * n;
        const T* arow = a + static_cast<long>(i) * k;
        int p = 0;
        for (; p + 4 <= k; p += 4) {
            const T* b0 = b + static_cast<long>(p) * n;
            axpy4(n, arow[p], arow[p + 1], arow[p + 2], arow[p + 3], b0, b0 + n, b0 + 2 * n, b0 + 3 * n, crow);
        }
        for (; p < k; ++p) {
            axpy1(n, arow[p], b + static_cast<long>(p) * n, crow);
        }
    }
}

/// C[M x N] += A[M x K] * B[N x K]^T
template <typename T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<long>(i) * k;
        T* crow = c + static_cast<long>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* brow = b + static_cast<long>(j) * k;
            T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
            int p = 0;
            for (; p + 4 <= k; p += 4) {
                s0 += arow[p] * brow[p];
                s1 += arow[p + 1] * brow[p + 1];
                s2 += arow[p + 2] * brow[p + 2];
                s3 += arow[p + 3] * brow[p + 3];
            }
            for (; p < k; ++p) {
                s0 += arow[p] * brow[p];
            }
            crow[j] += (s0 + s1) + (s2 + s3);
        }
    }
}

/// C[M x N] += A[K x M]^T * B[K x N]
template <typename T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c) {
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<long>(i) * n;
        int p = 0;
        for (; p + 4 <= k; p += 4) {
            const T* a0 = a + static_cast<long>(p) * m + i;
            const T* b0 = b + static_cast<long>(p) * n;
            axpy4(n, a0[0], a0[m], a0[2 * m], a0[3 * m], b0, b0 + n, b0 + 2 * n, b0 + 3 * n, crow);
        }
        for (; p < k; ++p) {
            axpy1(n, a[static_cast<long>(p) * m + i], b + static_cast<long>(p) * n, crow);
        }
    }
}

} // namespace sadlr::detail
