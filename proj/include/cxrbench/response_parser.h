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

// Splits a raw model response into <think> reasoning segments, the final
// \boxed{} answer and any bracketed bounding boxes.

#ifndef CXRBENCH_RESPONSE_PARSER_H_
#define CXRBENCH_RESPONSE_PARSER_H_

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cxrbench::parse {

// Corner order is canonicalized on parse so x1 <= x2 and y1 <= y2.
struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

class ImageDims {
 public:
  // Throws ContractViolation unless both sides are positive.
  ImageDims(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }

 private:
  int width_;
  int height_;
};

struct ParsedResponse {
  std::string raw;
  std::vector<std::string> think_segments;
  std::optional<std::string> boxed_answer;
  std::vector<BoundingBox> boxes;
  bool format_ok = false;
};

// What one "coordinate" means when counting grounded regions.
enum class CoordinateUnit { kBox, kPoint, kNumber };

// Total: malformed input yields format_ok = false.
ParsedResponse ParseResponse(std::string_view raw);

// Inverse of ParseResponse for the fields it extracts.
std::string Serialize(const ParsedResponse& parsed);

// All "[a, b, c, d]" numeric groups in `text`, in order of appearance.
std::vector<BoundingBox> ScanBoxes(std::string_view text);

int CountCoordinates(const ParsedResponse& parsed,
                     CoordinateUnit unit = CoordinateUnit::kBox);

// Closed interval: a box touching the image edge is in range.
std::vector<bool> ValidateBoxes(const std::vector<BoundingBox>& boxes,
                                const ImageDims& dims);

// Splits reasoning text into numbered steps at sentence terminators followed
// by whitespace and at line breaks. Empty steps are dropped.
std::vector<std::string> SplitReasoningSteps(std::string_view reasoning);

}  // namespace cxrbench::parse

#endif  // CXRBENCH_RESPONSE_PARSER_H_
