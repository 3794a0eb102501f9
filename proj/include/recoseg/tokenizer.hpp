#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace recoseg {

/// Byte-level BPE tokenizer compatible with the image-text model's
/// distributed merges file (`bpe_simple_vocab_16e6.txt[.gz]`).
class BpeTokenizer {
  public:
    explicit BpeTokenizer(const std::filesystem::path& merges_file);

    /// Token ids for `text`, without start/end markers.
    std::vector<int> encode(std::string_view text) const;

    /// [start] + encode(text) + [end]; throws DataError when the result does
    /// not fit in `context_length`.
    std::vector<int> tokenize(std::string_view text, int context_length) const;

    int start_token() const { return start_token_; }
    int end_token() const { return end_token_; }
    size_t vocab_size() const { return encoder_.size(); }

  private:
    std::vector<std::string> bpe(const std::string& token) const;

    std::unordered_map<std::string, int> encoder_;
    std::map<std::pair<std::string, std::string>, int> ranks_;
    std::vector<std::string> byte_encoder_;  // byte -> UTF-8 symbol
    int start_token_ = 0;
    int end_token_ = 0;
};

/// Text normalization applied before splitting: entity unescape, whitespace
/// collapse, lowercase.
std::string clean_text(std::string_view text);

/// Pre-tokenizer split into words, digits, contractions and punctuation runs.
std::vector<std::string> split_words(std::string_view cleaned);

}  // namespace recoseg
