// Copyright 2026 The biaslens Authors
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

#pragma once

#include <string>
#include <string_view>

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "biaslens/common.hpp"

namespace biaslens::text {

/// Canonical composed form (NFC).
inline std::string nfc(std::string_view utf8) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
  const auto src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  icu::UnicodeString out = norm->normalize(src, status);
  if (U_FAILURE(status)) throw InputError("text is not valid UTF-8");
  std::string result;
  out.toUTF8String(result);
  return result;
}

inline std::string to_lower(std::string_view utf8) {
  auto s = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  s.toLower(icu::Locale::getRoot());
  std::string out;
  s.toUTF8String(out);
  return out;
}

inline bool is_space(UChar32 c) { return u_isUWhiteSpace(c) != 0; }
inline bool is_punct(UChar32 c) { return u_ispunct(c) != 0; }

/// Trimmed of Unicode whitespace on both ends.
inline std::string trim(std::string_view utf8) {
  auto s = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  int32_t b = 0;
  int32_t e = s.length();
  while (b < e && is_space(s.char32At(b))) b = s.moveIndex32(b, 1);
  while (e > b && is_space(s.char32At(s.moveIndex32(e, -1)))) e = s.moveIndex32(e, -1);
  std::string out;
  s.tempSubStringBetween(b, e).toUTF8String(out);
  return out;
}

}  // namespace biaslens::text
