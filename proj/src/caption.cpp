#include "viewtok/caption.hpp"

#include <sstream>

#include "viewtok/errors.hpp"

namespace viewtok {

namespace {

constexpr BackgroundPhrase kBackgrounds[] = {
    {"teal", "backdrop"}, {"beige", "backdrop"}, {"pink", "backdrop"},
    {"checkered", "floor"}, {"striped", "floor"},
};

constexpr std::size_t kPrefixLength = 3;  // "a photo of"
constexpr std::size_t kObjectLength = kPrefixLength + 2;
constexpr std::size_t kWithBackgroundLength = kObjectLength + 3;

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream in{std::string(text)};
  for (std::string w; in >> w;) {
    for (auto& ch : w) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    words.push_back(std::move(w));
  }
  return words;
}

}  // namespace

Vocabulary::Vocabulary() {
  words_ = {"<pad>", "a", "photo", "of", "on", "backdrop", "floor"};
  for (const auto& c : object_palette()) words_.emplace_back(c.name);
  for (ObjectKind k : kAllObjectKinds) words_.emplace_back(object_noun(k));
  for (const auto& b : kBackgrounds) words_.emplace_back(b.name);
  for (std::size_t i = 0; i < words_.size(); ++i) ids_.emplace(words_[i], static_cast<int>(i));
}

int Vocabulary::id(std::string_view word) const {
  const auto it = ids_.find(std::string(word));
  if (it == ids_.end()) throw InputError("out-of-vocabulary word: " + std::string(word));
  return it->second;
}

const std::string& Vocabulary::word(int id) const {
  if (!contains(id)) throw InputError("out-of-vocabulary id: " + std::to_string(id));
  return words_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::fingerprint() const {
  std::string joined;
  for (const auto& w : words_) {
    joined += w;
    joined += ' ';
  }
  return joined;
}

std::span<const BackgroundPhrase> background_phrases() { return kBackgrounds; }

Caption make_caption(const Vocabulary& vocab, std::string_view color, ObjectKind kind,
                     std::optional<BackgroundPhrase> background) {
  object_color(color);  // validates the color name
  Caption cap;
  cap.ids = {vocab.id("a"), vocab.id("photo"), vocab.id("of"), vocab.id(color), vocab.id(object_noun(kind))};
  cap.object_span_end = static_cast<int>(kObjectLength);
  if (background) {
    cap.ids.push_back(vocab.id("on"));
    cap.ids.push_back(vocab.id(background->name));
    cap.ids.push_back(vocab.id(background->noun));
  }
  return cap;
}

Caption parse_caption(const Vocabulary& vocab, std::string_view text) {
  const auto words = split_words(text);
  if (words.size() != kObjectLength && words.size() != kWithBackgroundLength) {
    throw InputError("caption must read 'a photo of <color> <object> [on <background> <backdrop|floor>]'");
  }
  if (words[0] != "a" || words[1] != "photo" || words[2] != "of") {
    throw InputError("caption must start with 'a photo of'");
  }
  const ObjectKind kind = [&] {
    try {
      return object_kind_from_string(words[4]);
    } catch (const ConfigError&) {
      throw InputError("unknown object noun: " + words[4]);
    }
  }();
  try {
    object_color(words[3]);
  } catch (const ConfigError&) {
    throw InputError("unknown color: " + words[3]);
  }
  std::optional<BackgroundPhrase> background;
  if (words.size() == kWithBackgroundLength) {
    if (words[5] != "on") throw InputError("background phrase must start with 'on'");
    for (const auto& b : kBackgrounds) {
      if (b.name == words[6] && b.noun == words[7]) background = b;
    }
    if (!background) throw InputError("unknown background phrase: " + words[6] + " " + words[7]);
  }
  return make_caption(vocab, words[3], kind, background);
}

std::string caption_text(const Vocabulary& vocab, const Caption& caption) {
  std::string text;
  for (std::size_t i = 0; i < caption.ids.size(); ++i) {
    if (i) text += ' ';
    text += vocab.word(caption.ids[i]);
  }
  return text;
}

bool has_background_phrase(const Caption& caption) { return caption.ids.size() > kObjectLength; }

}  // namespace viewtok
