#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace encore {

/// Whitespace/punctuation word vocabulary with five reserved ids.
class Vocabulary {
 public:
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kCls = 1;
  static constexpr int32_t kSep = 2;
  static constexpr int32_t kMask = 3;
  static constexpr int32_t kUnk = 4;
  static constexpr int32_t kNumReserved = 5;

  Vocabulary();

  /// Appends a token; returns its id. Rejects duplicates and reserved names.
  int32_t add(const std::string& token);

  int32_t id_of(const std::string& token) const;  // kUnk when absent
  const std::string& token_of(int32_t id) const;
  bool contains(const std::string& token) const;
  int32_t size() const { return static_cast<int32_t>(id_to_token_.size()); }

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::unordered_map<std::string, int32_t> token_to_id_;
  std::vector<std::string> id_to_token_;
};

/// Lowercased word tokens: alphanumeric runs plus single punctuation marks.
std::vector<std::string> split_words(const std::string& text);

/// Top-frequency tokens from a one-document-per-line corpus stream, capped at
/// max_size total ids (reserved included); ties break lexicographically.
Vocabulary build_vocab(std::istream& corpus, int32_t max_size,
                       int32_t min_freq = 1);
Vocabulary build_vocab_file(const std::string& path, int32_t max_size,
                            int32_t min_freq = 1);

/// [CLS] + token ids (UNK fallback), truncated to max_len ids total.
std::vector<int32_t> tokenize(const std::string& text, const Vocabulary& vocab,
                              int32_t max_len);

}  // namespace encore
