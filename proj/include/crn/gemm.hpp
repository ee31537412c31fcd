#pragma once

#include <cstdint>

#ifdef CRN_HAVE_CBLAS
#include <cblas.h>
#endif

namespace crn::detail {

// The three product patterns an affine layer needs. B is always the weight
// matrix stored row-major as [out, in], so every inner loop runs over
// contiguous memory in the portable fallback too.

#ifdef CRN_HAVE_CBLAS
inline void cblas_gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int64_t m, int64_t n,
                       int64_t k, const float* a, int64_t lda, const float* b,
                       int64_t ldb, float beta, float* c, int64_t ldc) {
  cblas_sgemm(CblasRowMajor, ta, tb, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), 1.0f, a, static_cast<int>(lda), b,
              static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}
inline void cblas_gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int64_t m, int64_t n,
                       int64_t k, const double* a, int64_t lda, const double* b,
                       int64_t ldb, double beta, double* c, int64_t ldc) {
  cblas_dgemm(CblasRowMajor, ta, tb, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), 1.0, a, static_cast<int>(lda), b,
              static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}
#endif

// C[M,N] = A[M,K] * B[N,K]^T  (+C when accumulate)
template <typename Real>
void gemm_nt(int64_t M, int64_t N, int64_t K, const Real* A, const Real* B, Real* C,
             bool accumulate) {
#ifdef CRN_HAVE_CBLAS
  cblas_gemm(CblasNoTrans, CblasTrans, M, N, K, A, K, B, K,
             accumulate ? Real(1) : Real(0), C, N);
#else
  for (int64_t i = 0; i < M; ++i) {
    const Real* a = A + i * K;
    Real* c = C + i * N;
    for (int64_t j = 0; j < N; ++j) {
      const Real* b = B + j * K;
      Real acc = 0;
      for (int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
      c[j] = accumulate ? c[j] + acc : acc;
    }
  }
#endif
}

// C[M,K] = A[M,N] * B[N,K]  (+C when accumulate)
template <typename Real>
void gemm_nn(int64_t M, int64_t N, int64_t K, const Real* A, const Real* B, Real* C,
             bool accumulate) {
#ifdef CRN_HAVE_CBLAS
  cblas_gemm(CblasNoTrans, CblasNoTrans, M, K, N, A, N, B, K,
             accumulate ? Real(1) : Real(0), C, K);
#else
  for (int64_t i = 0; i < M; ++i) {
    Real* c = C + i * K;
    if (!accumulate)
      for (int64_t k = 0; k < K; ++k) c[k] = 0;
    const Real* a = A + i * N;
    for (int64_t j = 0; j < N; ++j) {
      const Real av = a[j];
      const Real* b = B + j * K;
      for (int64_t k = 0; k < K; ++k) c[k] += av * b[k];
    }
  }
#endif
}

// C[N,K] = A[M,N]^T * B[M,K]  (+C when accumulate)
template <typename Real>
void gemm_tn(int64_t M, int64_t N, int64_t K, const Real* A, const Real* B, Real* C,
             bool accumulate) {
#ifdef CRN_HAVE_CBLAS
  cblas_gemm(CblasTrans, CblasNoTrans, N, K, M, A, N, B, K,
             accumulate ? Real(1) : Real(0), C, K);
#else
  if (!accumulate)
    for (int64_t i = 0; i < N * K; ++i) C[i] = 0;
  for (int64_t i = 0; i < M; ++i) {
    const Real* a = A + i * N;
    const Real* b = B + i * K;
    for (int64_t j = 0; j < N; ++j) {
      const Real av = a[j];
      Real* c = C + j * K;
      for (int64_t k = 0; k < K; ++k) c[k] += av * b[k];
    }
  }
#endif
}

}  // namespace crn::detail
