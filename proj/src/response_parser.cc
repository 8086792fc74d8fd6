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

#include "cxrbench/response_parser.h"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <string>

#include "cxrbench/contract.h"

namespace cxrbench::parse {
namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kBoxedOpen = "\\boxed{";

std::string Trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

void SkipSpaces(std::string_view s, size_t& pos) {
  while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
}

// Reads [+-]?(digits[.digits] | .digits) at pos.
bool ReadNumber(std::string_view s, size_t& pos, double& out) {
  size_t p = pos;
  if (p < s.size() && (s[p] == '-' || s[p] == '+')) ++p;
  size_t int_digits = 0, frac_digits = 0;
  while (p < s.size() && std::isdigit(static_cast<unsigned char>(s[p]))) {
    ++p;
    ++int_digits;
  }
  if (p < s.size() && s[p] == '.') {
    size_t q = p + 1;
    while (q < s.size() && std::isdigit(static_cast<unsigned char>(s[q]))) {
      ++q;
      ++frac_digits;
    }
    if (frac_digits > 0) p = q;
  }
  if (int_digits == 0 && frac_digits == 0) return false;
  out = std::strtod(std::string(s.substr(pos, p - pos)).c_str(), nullptr);
  pos = p;
  return true;
}

// Parses "[a, b, c, d]" starting at the '[' at pos.
bool ReadBox(std::string_view s, size_t pos, BoundingBox& box, size_t& end) {
  double v[4];
  size_t p = pos + 1;
  for (int k = 0; k < 4; ++k) {
    SkipSpaces(s, p);
    if (!ReadNumber(s, p, v[k])) return false;
    SkipSpaces(s, p);
    const char expected = k < 3 ? ',' : ']';
    if (p >= s.size() || s[p] != expected) return false;
    ++p;
  }
  box = {std::min(v[0], v[2]), std::min(v[1], v[3]), std::max(v[0], v[2]),
         std::max(v[1], v[3])};
  end = p;
  return true;
}

}  // namespace

ImageDims::ImageDims(int width, int height) : width_(width), height_(height) {
  CXRBENCH_REQUIRE(width > 0 && height > 0, "image dimensions must be positive");
}

std::vector<BoundingBox> ScanBoxes(std::string_view text) {
  std::vector<BoundingBox> boxes;
  size_t pos = 0;
  while ((pos = text.find('[', pos)) != std::string_view::npos) {
    BoundingBox box;
    size_t end = 0;
    if (ReadBox(text, pos, box, end)) {
      boxes.push_back(box);
      pos = end;
    } else {
      ++pos;
    }
  }
  return boxes;
}

ParsedResponse ParseResponse(std::string_view raw) {
  ParsedResponse parsed;
  parsed.raw = std::string(raw);

  int depth = 0;
  size_t start = 0;
  for (size_t i = 0; i < raw.size();) {
    if (raw.compare(i, kThinkOpen.size(), kThinkOpen) == 0) {
      if (depth++ == 0) start = i + kThinkOpen.size();
      i += kThinkOpen.size();
    } else if (raw.compare(i, kThinkClose.size(), kThinkClose) == 0) {
      if (depth > 0 && --depth == 0) {
        parsed.think_segments.push_back(Trim(raw.substr(start, i - start)));
      }
      i += kThinkClose.size();
    } else {
      ++i;
    }
  }

  size_t pos = 0;
  while ((pos = raw.find(kBoxedOpen, pos)) != std::string_view::npos) {
    const size_t content = pos + kBoxedOpen.size();
    int braces = 1;
    size_t k = content;
    for (; k < raw.size() && braces > 0; ++k) {
      if (raw[k] == '{') ++braces;
      if (raw[k] == '}') --braces;
    }
    if (braces == 0) parsed.boxed_answer = Trim(raw.substr(content, k - 1 - content));
    pos = content;
  }

  parsed.boxes = ScanBoxes(raw);
  parsed.format_ok = !parsed.think_segments.empty() && parsed.boxed_answer.has_value();
  return parsed;
}

std::string Serialize(const ParsedResponse& parsed) {
  std::string out;
  for (const auto& segment : parsed.think_segments) {
    out += kThinkOpen;
    out += segment;
    out += kThinkClose;
    out += '\n';
  }
  if (parsed.boxed_answer) {
    out += kBoxedOpen;
    out += *parsed.boxed_answer;
    out += '}';
  }
  return out;
}

int CountCoordinates(const ParsedResponse& parsed, CoordinateUnit unit) {
  const int boxes = static_cast<int>(parsed.boxes.size());
  switch (unit) {
    case CoordinateUnit::kBox:
      return boxes;
    case CoordinateUnit::kPoint:
      return 2 * boxes;
    case CoordinateUnit::kNumber:
      return 4 * boxes;
  }
  return boxes;
}

std::vector<bool> ValidateBoxes(const std::vector<BoundingBox>& boxes,
                                const ImageDims& dims) {
  std::vector<bool> flags;
  flags.reserve(boxes.size());
  for (const auto& b : boxes) {
    flags.push_back(0 <= b.x1 && b.x1 <= b.x2 && b.x2 <= dims.width() &&
                    0 <= b.y1 && b.y1 <= b.y2 && b.y2 <= dims.height());
  }
  return flags;
}

std::vector<std::string> SplitReasoningSteps(std::string_view reasoning) {
  std::vector<std::string> steps;
  size_t start = 0;
  auto emit = [&](size_t end) {
    std::string step = Trim(reasoning.substr(start, end - start));
    if (!step.empty()) steps.push_back(std::move(step));
    start = end;
  };
  for (size_t i = 0; i < reasoning.size(); ++i) {
    const char c = reasoning[i];
    if (c == '\n') {
      emit(i);
      start = i + 1;
    } else if ((c == '.' || c == '!' || c == '?') &&
               (i + 1 == reasoning.size() ||
                std::isspace(static_cast<unsigned char>(reasoning[i + 1])))) {
      emit(i + 1);
    }
  }
  emit(reasoning.size());
  return steps;
}

}  // namespace cxrbench::parse
