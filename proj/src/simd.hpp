#pragma once

#if defined(__AVX2__)
#include <immintrin.h>
#define NMTDEC_HAVE_AVX2 1
#else
#define NMTDEC_HAVE_AVX2 0
#endif

// Keeps the compiler from auto-vectorizing a reference loop.
#if defined(__clang__)
#define NMTDEC_NO_VECTORIZE
#define NMTDEC_SCALAR_LOOP _Pragma("clang loop vectorize(disable) interleave(disable)")
#elif defined(__GNUC__)
#define NMTDEC_NO_VECTORIZE __attribute__((optimize("no-tree-vectorize")))
#define NMTDEC_SCALAR_LOOP
#else
#define NMTDEC_NO_VECTORIZE
#define NMTDEC_SCALAR_LOOP
#endif
