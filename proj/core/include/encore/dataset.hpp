#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace encore {

/// Queries, documents, and relevance judgments for retrieval experiments.
struct RetrievalDataset {
  std::vector<std::string> doc_ids;
  std::vector<std::string> doc_texts;
  std::vector<std::string> query_ids;
  std::vector<std::string> query_texts;
  std::map<std::string, std::set<std::string>> qrels;

  std::unordered_map<std::string, size_t> doc_index;
  std::unordered_map<std::string, size_t> query_index;

  void rebuild_index();
  /// Every qrel must reference existing ids; every query needs >= 1 relevant.
  void validate() const;

  const std::string& doc_text(const std::string& doc_id) const;
  const std::string& query_text(const std::string& query_id) const;
};

RetrievalDataset load_retrieval_dataset(const std::string& collection_tsv,
                                        const std::string& queries_tsv,
                                        const std::string& qrels_tsv);

std::vector<std::pair<std::string, std::string>> read_tsv2(
    const std::string& path);

/// Synthetic topic corpus: each topic owns a small word set (half shared with
/// a paired topic), documents interleave topic words with a predictable
/// filler-word chain, and queries draw topic words only. Relevance = shared
/// topic. Local patterns are learnable from a short window; topic identity at
/// topic-word positions is not, unless it arrives through the sequence
/// representation.
struct ToyDatasetOptions {
  int32_t num_topics = 96;
  int32_t docs_per_topic = 12;
  int32_t train_queries_per_topic = 2;
  int32_t dev_queries_per_topic = 1;
  int32_t doc_len = 31;        // tokens per document (before CLS)
  int32_t query_len = 4;
  int32_t topic_words_per_topic = 4;  // half unique, half shared with pair
  int32_t topic_word_every = 4;       // topic word at positions 0, k, 2k, ...
  int32_t filler_vocab = 220;
  double filler_jump_prob = 0.12;     // chain leaves its cycle this often
  uint64_t seed = 7;
};

struct ToyDatasetPaths {
  std::string collection;
  std::string queries_train;
  std::string qrels_train;
  std::string queries_dev;
  std::string qrels_dev;
  std::string corpus;  // pretraining text, one document per line
};

ToyDatasetPaths make_toy_dataset(const ToyDatasetOptions& opt,
                                 const std::string& out_dir);

}  // namespace encore
