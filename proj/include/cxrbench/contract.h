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

#ifndef CXRBENCH_CONTRACT_H_
#define CXRBENCH_CONTRACT_H_

#include <stdexcept>
#include <string>

namespace cxrbench {

// Raised when a caller breaks a documented precondition (bad group size,
// mismatched array lengths, gold/task mismatch, ...).
class ContractViolation : public std::invalid_argument {
 public:
  explicit ContractViolation(const std::string& what)
      : std::invalid_argument(what) {}
};

#define CXRBENCH_REQUIRE(cond, msg)                                   \
  do {                                                                \
    if (!(cond)) throw ::cxrbench::ContractViolation(std::string(msg)); \
  } while (0)

}  // namespace cxrbench

#endif  // CXRBENCH_CONTRACT_H_
