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

#include <initializer_list>
#include <string>
#include <string_view>
#include <unordered_map>

namespace biaslens::chunking {

enum class Tag {
  kDet,
  kAdj,
  kNoun,
  kPron,
  kPrep,
  kConj,
  kAux,
  kVerb,
  kAdv,
  kPossessive,
  kPunct,
  kUnknown,
};

inline std::string_view tag_name(Tag t) {
  switch (t) {
    case Tag::kDet: return "DET";
    case Tag::kAdj: return "ADJ";
    case Tag::kNoun: return "NOUN";
    case Tag::kPron: return "PRON";
    case Tag::kPrep: return "PREP";
    case Tag::kConj: return "CONJ";
    case Tag::kAux: return "AUX";
    case Tag::kVerb: return "VERB";
    case Tag::kAdv: return "ADV";
    case Tag::kPossessive: return "POS";
    case Tag::kPunct: return "PUNCT";
    case Tag::kUnknown: return "UNK";
  }
  return "UNK";
}

// Closed-class words plus a short list of very common caption verbs and
// adjectives. Anything else falls back to the contextual rules in chunker.hpp.
inline const std::unordered_map<std::string, Tag>& lexicon() {
  static const std::unordered_map<std::string, Tag> table = [] {
    std::unordered_map<std::string, Tag> m;
    auto add = [&m](Tag t, std::initializer_list<const char*> words) {
      for (const char* w : words) m.emplace(w, t);
    };
    add(Tag::kDet, {"a", "an", "the", "this", "that", "these", "those", "some", "any",
                    "each", "every", "no", "another", "its", "his", "her", "their",
                    "our", "my", "your", "both", "all", "several", "many", "few",
                    "one", "two", "three", "four", "five", "six", "seven", "eight",
                    "nine", "ten", "much", "most", "other"});
    add(Tag::kPron, {"he", "she", "it", "they", "we", "i", "you", "him", "them", "us",
                     "me", "who", "whom", "whose", "which", "what", "someone",
                     "something", "somebody", "anyone", "anything", "everyone",
                     "everything", "nobody", "nothing", "itself", "himself",
                     "herself", "themselves", "there", "here", "where", "when"});
    add(Tag::kPrep, {"in", "on", "at", "with", "near", "beside", "besides", "by", "of",
                     "from", "to", "into", "onto", "under", "over", "above", "below",
                     "behind", "between", "through", "across", "along", "around",
                     "against", "toward", "towards", "next", "for", "about", "during",
                     "without", "within", "inside", "outside", "up", "down", "off",
                     "out", "upon", "underneath", "beneath", "among", "like", "past",
                     "via", "atop", "amid"});
    add(Tag::kConj, {"and", "or", "but", "nor", "while", "as", "than", "so", "because",
                     "if", "then", "though", "although", "whereas", "yet"});
    add(Tag::kAux, {"is", "are", "was", "were", "be", "been", "being", "am", "has",
                    "have", "had", "does", "do", "did", "can", "could", "will",
                    "would", "should", "may", "might", "must", "shall", "isn't",
                    "aren't", "wasn't", "weren't", "doesn't", "don't", "didn't",
                    "can't", "won't", "hasn't", "haven't"});
    add(Tag::kVerb, {"holds", "holding", "hold", "sits", "sitting", "sit", "stands",
                     "standing", "stand", "rides", "riding", "ride", "wears",
                     "wearing", "wear", "looks", "looking", "look", "eats", "eating",
                     "eat", "plays", "playing", "play", "walks", "walking", "walk",
                     "runs", "running", "run", "lies", "lying", "laying", "flies",
                     "flying", "fly", "carries", "carrying", "carry", "shows",
                     "showing", "show", "takes", "taking", "take", "uses", "using",
                     "watches", "watching", "appears", "seems", "seem", "parked",
                     "covered", "filled", "made", "sat", "stood", "rode", "wore",
                     "held", "grins", "grinning", "smiling", "laughing", "posing",
                     "poses", "jumping", "jumps", "throwing", "throws", "catching",
                     "catches", "waiting", "waits", "talking", "talks", "getting",
                     "gets", "going", "goes", "doing", "having", "being", "featuring",
                     "features", "contains", "containing", "displays", "displaying"});
    add(Tag::kAdv, {"very", "too", "also", "not", "just", "really", "quite",
                    "slightly", "together", "away", "back", "only", "still",
                    "almost", "nearly", "rather", "somewhat", "extremely", "well",
                    "outdoors", "indoors", "nearby", "again"});
    add(Tag::kAdj, {"big", "small", "large", "little", "tiny", "huge", "red", "blue",
                    "green", "yellow", "white", "black", "brown", "gray", "grey",
                    "orange", "pink", "purple", "young", "old", "elderly", "tall",
                    "short", "long", "wide", "narrow", "bright", "dark", "happy",
                    "sad", "beautiful", "pretty", "handsome", "new", "open", "closed",
                    "wooden", "empty", "full", "clean", "dirty", "wet", "dry", "hot",
                    "cold", "sunny", "cloudy", "busy", "calm", "thin", "thick",
                    "heavy", "light", "blond", "blonde", "curly", "straight", "wavy",
                    "bald", "attractive", "serious", "colorful", "plastic", "metal",
                    "high", "low", "round", "square", "fresh", "modern", "ancient"});
    return m;
  }();
  return table;
}

}  // namespace biaslens::chunking
