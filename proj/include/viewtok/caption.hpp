#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "viewtok/renderer.hpp"

namespace viewtok {

// Fixed word-level vocabulary of the toy caption language:
//   "a photo of <color> <noun> [on <background> <backdrop|floor>]"
// Id 0 is the padding token and never appears inside a caption.
class Vocabulary {
 public:
  Vocabulary();

  std::size_t size() const { return words_.size(); }
  int id(std::string_view word) const;  // throws InputError for unknown words
  bool contains(int id) const { return id >= 0 && static_cast<std::size_t>(id) < words_.size(); }
  const std::string& word(int id) const;  // throws InputError

  // Stable fingerprint of the word list, stored in checkpoints.
  std::string fingerprint() const;

  static constexpr int kPadId = 0;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> ids_;
};

// Appearance-augmentation background phrases.
struct BackgroundPhrase {
  std::string_view name;  // teal, beige, pink, checkered, striped
  std::string_view noun;  // backdrop or floor
};
std::span<const BackgroundPhrase> background_phrases();

struct Caption {
  std::vector<int> ids;
  int object_span_end = 0;  // one past the object noun
  bool operator==(const Caption&) const = default;
};

Caption make_caption(const Vocabulary& vocab, std::string_view color, ObjectKind kind,
                     std::optional<BackgroundPhrase> background = std::nullopt);

// Parses free text under the grammar; throws InputError on anything else.
Caption parse_caption(const Vocabulary& vocab, std::string_view text);

std::string caption_text(const Vocabulary& vocab, const Caption& caption);

bool has_background_phrase(const Caption& caption);

}  // namespace viewtok
