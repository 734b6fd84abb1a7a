#include "encore/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "encore/common.hpp"
#include "encore/rng.hpp"
#include "encore/vocab.hpp"

namespace encore {

CorpusStats build_corpus_stats(const std::vector<std::string>& doc_texts) {
  check<DataError>(!doc_texts.empty(), "bm25: empty collection");
  CorpusStats stats;
  stats.num_docs = static_cast<int64_t>(doc_texts.size());
  stats.term_freq.resize(doc_texts.size());
  stats.doc_len.resize(doc_texts.size());
  int64_t total_len = 0;
  for (size_t i = 0; i < doc_texts.size(); ++i) {
    auto words = split_words(doc_texts[i]);
    stats.doc_len[i] = static_cast<int64_t>(words.size());
    total_len += stats.doc_len[i];
    auto& tf = stats.term_freq[i];
    for (const auto& w : words) ++tf[w];
    for (const auto& [w, n] : tf) ++stats.doc_freq[w];
  }
  stats.avg_len = static_cast<double>(total_len) / stats.num_docs;
  return stats;
}

double bm25_score(const std::vector<std::string>& query_terms, size_t doc,
                  const CorpusStats& stats, const Bm25Params& params) {
  check<DataError>(doc < stats.term_freq.size(), "bm25: doc index ", doc,
                   " out of range");
  const auto& tf_map = stats.term_freq[doc];
  double len_norm = params.k1 * (1.0 - params.b +
                                 params.b * stats.doc_len[doc] / stats.avg_len);
  double score = 0.0;
  for (const auto& term : query_terms) {
    auto it = tf_map.find(term);
    if (it == tf_map.end()) continue;
    double tf = it->second;
    auto df_it = stats.doc_freq.find(term);
    double df = df_it == stats.doc_freq.end() ? 0.0 : df_it->second;
    double idf =
        std::log(1.0 + (stats.num_docs - df + 0.5) / (df + 0.5));
    score += idf * tf * (params.k1 + 1.0) / (tf + len_norm);
  }
  return score;
}

double bm25_score_text(const std::string& query_text, size_t doc,
                       const CorpusStats& stats, const Bm25Params& params) {
  return bm25_score(split_words(query_text), doc, stats, params);
}

std::vector<TripletText> mine_lexical_negatives(const RetrievalDataset& ds,
                                                int32_t per_query, int32_t depth,
                                                const Bm25Params& params,
                                                uint64_t seed, std::ostream* log) {
  check<DataError>(per_query >= 1 && depth >= 1,
                   "mine_lexical_negatives: per_query and depth must be >= 1");
  check<DataError>(!ds.qrels.empty(), "mine_lexical_negatives: dataset has no qrels");
  CorpusStats stats = build_corpus_stats(ds.doc_texts);
  int64_t n_docs = static_cast<int64_t>(ds.doc_ids.size());

  std::vector<TripletText> triples;
  for (size_t qi = 0; qi < ds.query_ids.size(); ++qi) {
    const std::string& qid = ds.query_ids[qi];
    const std::string& qtext = ds.query_texts[qi];
    auto rel_it = ds.qrels.find(qid);
    check<DataError>(rel_it != ds.qrels.end(), "mine_lexical_negatives: query '",
                     qid, "' missing from qrels");
    const auto& relevant = rel_it->second;

    auto terms = split_words(qtext);
    std::vector<std::pair<double, int64_t>> ranked(n_docs);
    for (int64_t di = 0; di < n_docs; ++di)
      ranked[di] = {bm25_score(terms, di, stats, params), di};
    int64_t take = std::min<int64_t>(depth, n_docs);
    std::partial_sort(ranked.begin(), ranked.begin() + take, ranked.end(),
                      [&](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return ds.doc_ids[a.second] < ds.doc_ids[b.second];
                      });

    std::vector<int64_t> candidates;
    for (int64_t r = 0; r < take; ++r)
      if (!relevant.count(ds.doc_ids[ranked[r].second]))
        candidates.push_back(ranked[r].second);

    Rng rng(derive_seed(seed, 0xB325, qi));
    std::vector<int64_t> negatives;
    if (candidates.empty()) {
      if (log)
        (*log) << "mine_lexical_negatives: query " << qid
               << " has an all-relevant candidate window; using random negatives\n";
      while (static_cast<int32_t>(negatives.size()) < per_query) {
        int64_t di = rng.uniform_int(static_cast<uint32_t>(n_docs));
        if (!relevant.count(ds.doc_ids[di])) negatives.push_back(di);
      }
    } else {
      for (int32_t i = 0; i < per_query; ++i)
        negatives.push_back(
            candidates[rng.uniform_int(static_cast<uint32_t>(candidates.size()))]);
    }

    for (const auto& did : relevant)
      for (int64_t neg : negatives)
        triples.push_back({qtext, ds.doc_text(did), ds.doc_texts[neg]});
  }
  return triples;
}

void save_triples(const std::string& path, const std::vector<TripletText>& triples) {
  std::ofstream out(path, std::ios::trunc);
  check<DataError>(out.good(), "triples: cannot write ", path);
  for (const auto& t : triples)
    out << t.query << '\t' << t.positive << '\t' << t.negative << '\n';
}

std::vector<TripletText> load_triples(const std::string& path) {
  std::ifstream in(path);
  check<DataError>(in.good(), "triples: cannot read ", path);
  std::vector<TripletText> triples;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    size_t t1 = line.find('\t');
    size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    check<DataError>(t2 != std::string::npos, "triples: malformed line '", line, "'");
    triples.push_back({line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1),
                       line.substr(t2 + 1)});
  }
  return triples;
}

}  // namespace encore
