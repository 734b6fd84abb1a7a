#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "encore/model.hpp"
#include "encore/vocab.hpp"

namespace encore {

enum class Metric { kDot, kCosine };

Metric metric_from_string(const std::string& s);
std::string metric_to_string(Metric m);

/// dot or cosine over equal-length vectors; cosine rejects zero-norm inputs.
double similarity(const std::vector<float>& q, const std::vector<float>& d,
                  Metric metric);
double similarity(const Tensor& q, const Tensor& d, Metric metric);

/// Exact-search index: one CLS embedding per document.
struct RetrievalIndex {
  std::vector<std::string> doc_ids;
  Tensor embeddings;  // [N, d]
  Metric metric = Metric::kDot;

  int64_t size() const { return static_cast<int64_t>(doc_ids.size()); }
};

/// Encodes every document with the encoder in eval mode. Embeddings are
/// independent of collection order and batch grouping (fixed batch geometry).
RetrievalIndex build_index(const ModelParams& params, const Vocabulary& vocab,
                           const std::vector<std::string>& doc_ids,
                           const std::vector<std::string>& doc_texts,
                           Metric metric = Metric::kDot,
                           int64_t batch_size = 32);

Tensor encode_texts(const ModelParams& params, const Vocabulary& vocab,
                    const std::vector<std::string>& texts,
                    int64_t batch_size = 32, int64_t pad_to = 0);

struct ScoredDoc {
  std::string doc_id;
  double score;
};

/// Exact top-K by the index metric; ties break by ascending doc id. K > N is
/// clipped to N with a warning on `warn`.
std::vector<ScoredDoc> search(const RetrievalIndex& index,
                              const std::vector<float>& query_embedding,
                              int64_t k, std::ostream* warn = nullptr);

/// Ranked lists per query, scores non-increasing.
struct RunResult {
  std::vector<std::string> query_ids;
  std::vector<std::vector<ScoredDoc>> rankings;
};

using Qrels = std::map<std::string, std::set<std::string>>;

RunResult search_all(const RetrievalIndex& index, const ModelParams& params,
                     const Vocabulary& vocab,
                     const std::vector<std::string>& query_ids,
                     const std::vector<std::string>& query_texts, int64_t k);

std::vector<double> per_query_mrr_at_k(const RunResult& run, const Qrels& qrels,
                                       int64_t k);
std::vector<double> per_query_recall_at_k(const RunResult& run,
                                          const Qrels& qrels, int64_t k);
std::vector<double> per_query_hit_at_k(const RunResult& run, const Qrels& qrels,
                                       int64_t k);

double mrr_at_k(const RunResult& run, const Qrels& qrels, int64_t k);
double recall_at_k(const RunResult& run, const Qrels& qrels, int64_t k);
double hit_at_k(const RunResult& run, const Qrels& qrels, int64_t k);

/// Two-sided paired sign-flip permutation test on per-query differences.
/// Exact enumeration when n <= 20 (p = hits / 2^n), otherwise Monte-Carlo
/// with `iters` seeded flips.
double permutation_test(const std::vector<double>& a,
                        const std::vector<double>& b, int64_t iters = 100000,
                        uint64_t seed = 17);
double permutation_test_exact(const std::vector<double>& a,
                              const std::vector<double>& b);
double permutation_test_mc(const std::vector<double>& a,
                           const std::vector<double>& b, int64_t iters,
                           uint64_t seed);

/// TREC format: query_id Q0 doc_id rank score run_tag.
void save_trec_run(const std::string& path, const RunResult& run,
                   const std::string& tag);
RunResult load_trec_run(const std::string& path);

Qrels load_qrels_tsv(const std::string& path);

}  // namespace encore
