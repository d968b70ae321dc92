// serfuse/types.hpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace serfuse {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Rng = std::mt19937_64;

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// The four emotion classes, in canonical order.
enum class Emotion : int { kAng = 0, kHap = 1, kNeu = 2, kSad = 3 };

inline constexpr int kNumEmotions = 4;

inline const std::array<Emotion, kNumEmotions>& all_emotions() {
  static const std::array<Emotion, kNumEmotions> kAll = {
      Emotion::kAng, Emotion::kHap, Emotion::kNeu, Emotion::kSad};
  return kAll;
}

inline const char* emotion_name(Emotion e) {
  switch (e) {
    case Emotion::kAng: return "ang";
    case Emotion::kHap: return "hap";
    case Emotion::kNeu: return "neu";
    case Emotion::kSad: return "sad";
  }
  throw Error("emotion_name: invalid emotion value");
}

inline Emotion emotion_from_name(const std::string& name) {
  for (Emotion e : all_emotions()) {
    if (name == emotion_name(e)) return e;
  }
  throw Error("unknown emotion label: \"" + name + "\"");
}

// Feature stream names a manifest may reference.
inline constexpr const char* kStreamMfcc = "mfcc";
inline constexpr const char* kStreamHiddenFirst = "hidden_first";
inline constexpr const char* kStreamHiddenMiddle = "hidden_middle";
inline constexpr const char* kStreamHiddenFinal = "hidden_final";
inline constexpr const char* kStreamText = "text";

inline const std::vector<std::string>& known_streams() {
  static const std::vector<std::string> kStreams = {
      kStreamMfcc, kStreamHiddenFirst, kStreamHiddenMiddle, kStreamHiddenFinal,
      kStreamText};
  return kStreams;
}

inline bool is_known_stream(const std::string& name) {
  for (const auto& s : known_streams()) {
    if (s == name) return true;
  }
  return false;
}

// One dataset utterance. Transcripts are whitespace-separated word tokens;
// feature values live in separate binary files referenced by path.
struct UtteranceRecord {
  std::string utterance_id;
  std::string session_id;
  std::string speaker_id;
  Emotion emotion = Emotion::kNeu;
  std::vector<std::string> ref_transcript;
  std::optional<std::vector<std::string>> hyp_transcript;
  std::map<std::string, std::string> features;  // stream name -> feature file path
};

}  // namespace serfuse
