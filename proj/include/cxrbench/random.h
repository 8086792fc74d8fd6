// Copyright 2026 The CXRBench Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CXRBENCH_RANDOM_H_
#define CXRBENCH_RANDOM_H_

#include <cstdint>
#include <random>

namespace cxrbench {

// SplitMix64 finalizer; used to derive independent per-item seed streams so
// results never depend on evaluation order.
inline uint64_t MixSeed(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t DeriveSeed(uint64_t base, uint64_t a, uint64_t b = 0) {
  return MixSeed(MixSeed(MixSeed(base) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

// Uniform double in [0, 1) from the top 53 bits. std::uniform_real_distribution
// is implementation-defined, this is not.
inline double UniformDouble(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

}  // namespace cxrbench

#endif  // CXRBENCH_RANDOM_H_
