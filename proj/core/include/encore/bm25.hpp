#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "encore/dataset.hpp"

namespace encore {

struct Bm25Params {
  double k1 = 0.9;
  double b = 0.4;
};

/// Precomputed collection statistics for Okapi BM25 scoring.
struct CorpusStats {
  int64_t num_docs = 0;
  double avg_len = 0.0;
  std::unordered_map<std::string, int64_t> doc_freq;
  std::vector<std::unordered_map<std::string, int32_t>> term_freq;
  std::vector<int64_t> doc_len;
};

CorpusStats build_corpus_stats(const std::vector<std::string>& doc_texts);

/// Okapi BM25 with idf = ln(1 + (N - df + 0.5)/(df + 0.5)); absent terms
/// contribute zero. Summation runs over query term occurrences.
double bm25_score(const std::vector<std::string>& query_terms, size_t doc,
                  const CorpusStats& stats, const Bm25Params& params = {});

double bm25_score_text(const std::string& query_text, size_t doc,
                       const CorpusStats& stats, const Bm25Params& params = {});

struct TripletText {
  std::string query;
  std::string positive;
  std::string negative;
};

/// BM25-ranks the collection per query, keeps the top `depth` candidates,
/// drops relevant docs, samples `per_query` negatives (seeded), and pairs
/// each with every relevant document. Queries whose candidate window is all
/// relevant fall back to uniform random negatives (logged to `log`).
std::vector<TripletText> mine_lexical_negatives(const RetrievalDataset& ds,
                                                int32_t per_query, int32_t depth,
                                                const Bm25Params& params,
                                                uint64_t seed,
                                                std::ostream* log = nullptr);

void save_triples(const std::string& path, const std::vector<TripletText>& triples);
std::vector<TripletText> load_triples(const std::string& path);

}  // namespace encore
