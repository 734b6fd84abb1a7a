#include "encore/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "encore/common.hpp"

namespace encore {

Vocabulary::Vocabulary() {
  id_to_token_ = {"[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"};
  for (int32_t i = 0; i < kNumReserved; ++i) token_to_id_[id_to_token_[i]] = i;
}

int32_t Vocabulary::add(const std::string& token) {
  check<DataError>(!token.empty(), "vocabulary: empty token");
  check<DataError>(token_to_id_.find(token) == token_to_id_.end(),
                   "vocabulary: duplicate token '", token, "'");
  int32_t id = size();
  token_to_id_[token] = id;
  id_to_token_.push_back(token);
  return id;
}

int32_t Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int32_t id) const {
  check<DataError>(id >= 0 && id < size(), "vocabulary: id ", id,
                   " out of range [0,", size(), ")");
  return id_to_token_[id];
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.find(token) != token_to_id_.end();
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  check<DataError>(out.good(), "vocabulary: cannot write ", path);
  for (int32_t id = kNumReserved; id < size(); ++id)
    out << id_to_token_[id] << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check<DataError>(in.good(), "vocabulary: cannot read ", path);
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) v.add(line);
  }
  return v;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      if (!cur.empty()) {
        words.push_back(cur);
        cur.clear();
      }
      if (std::ispunct(c)) words.push_back(std::string(1, static_cast<char>(c)));
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

Vocabulary build_vocab(std::istream& corpus, int32_t max_size, int32_t min_freq) {
  check<DataError>(max_size >= Vocabulary::kNumReserved,
                   "build_vocab: max_size ", max_size, " below reserved count");
  std::unordered_map<std::string, int64_t> freq;
  std::string line;
  bool any = false;
  while (std::getline(corpus, line)) {
    for (auto& w : split_words(line)) {
      ++freq[w];
      any = true;
    }
  }
  check<DataError>(any, "build_vocab: empty corpus");

  std::vector<std::pair<std::string, int64_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  for (const auto& [token, count] : ranked) {
    if (v.size() >= max_size) break;
    if (count < min_freq) break;
    v.add(token);
  }
  return v;
}

Vocabulary build_vocab_file(const std::string& path, int32_t max_size,
                            int32_t min_freq) {
  std::ifstream in(path, std::ios::binary);
  check<DataError>(in.good(), "build_vocab: cannot read ", path);
  return build_vocab(in, max_size, min_freq);
}

std::vector<int32_t> tokenize(const std::string& text, const Vocabulary& vocab,
                              int32_t max_len) {
  check<DataError>(max_len >= 2, "tokenize: max_len must be >= 2, got ", max_len);
  std::vector<int32_t> ids{Vocabulary::kCls};
  for (const auto& w : split_words(text)) {
    if (static_cast<int32_t>(ids.size()) >= max_len) break;
    ids.push_back(vocab.id_of(w));
  }
  return ids;
}

}  // namespace encore
