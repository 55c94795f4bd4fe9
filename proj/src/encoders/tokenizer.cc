#include "msta/encoders/tokenizer.h"

#include <algorithm>
#include <cctype>

#include "msta/error.h"

namespace msta {
namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

const std::vector<std::string>& Tokenizer::core_vocabulary() {
  static const std::vector<std::string> words = {
      "a", "video", "of", "class", "fwd", "rev", "obj",
      "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
      "the", "blob", "on", "background", "in", "shows", "then", "it", "moves",
      "first", "starts", "ends", "forward", "reverse", "still",
      "red", "green", "blue", "yellow", "striped", "plain", "dotted", "small", "large",
      "top", "bottom", "shape", "step", "and",
  };
  return words;
}

Tokenizer::Tokenizer(std::int64_t vocab_size) : vocab_size_(vocab_size) {
  if (vocab_size < 3) raise(ErrorKind::kConfig, "vocabulary must hold at least 3 ids");
}

std::vector<std::string> Tokenizer::split(std::string_view text) const {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isalpha(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (std::isdigit(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

std::int64_t Tokenizer::word_id(std::string_view word) const {
  const auto& core = core_vocabulary();
  const std::int64_t slots = vocab_size_ - 2;
  auto it = std::find(core.begin(), core.end(), word);
  if (it != core.end()) {
    const auto idx = static_cast<std::int64_t>(it - core.begin());
    if (idx < slots) return 2 + idx;
  }
  return 2 + static_cast<std::int64_t>(fnv1a(word) % static_cast<std::uint64_t>(slots));
}

std::vector<std::int64_t> Tokenizer::encode(std::string_view text, std::int64_t max_tokens) const {
  std::vector<std::int64_t> ids;
  for (const auto& w : split(text)) {
    if (static_cast<std::int64_t>(ids.size()) + 1 >= max_tokens) break;
    ids.push_back(word_id(w));
  }
  return ids;
}

}  // namespace msta
