#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace msta {

// Word-level tokenizer. Text is lowercased and split on anything that is not
// a letter; digits become single-character tokens so class indices share
// vocabulary. A fixed core vocabulary gets dedicated ids, other words are
// hashed into the id range.
class Tokenizer {
 public:
  static constexpr std::int64_t kPad = 0;
  static constexpr std::int64_t kEot = 1;

  explicit Tokenizer(std::int64_t vocab_size);

  std::vector<std::string> split(std::string_view text) const;
  // At most `max_tokens - 1` ids so the end-of-text token always fits.
  std::vector<std::int64_t> encode(std::string_view text, std::int64_t max_tokens) const;
  std::int64_t word_id(std::string_view word) const;
  std::int64_t vocab_size() const { return vocab_size_; }

  static const std::vector<std::string>& core_vocabulary();

 private:
  std::int64_t vocab_size_;
};

}  // namespace msta
