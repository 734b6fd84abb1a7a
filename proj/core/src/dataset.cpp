#include "encore/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "encore/common.hpp"
#include "encore/rng.hpp"

namespace fs = std::filesystem;

namespace encore {

void RetrievalDataset::rebuild_index() {
  doc_index.clear();
  query_index.clear();
  for (size_t i = 0; i < doc_ids.size(); ++i) doc_index[doc_ids[i]] = i;
  for (size_t i = 0; i < query_ids.size(); ++i) query_index[query_ids[i]] = i;
  check<DataError>(doc_index.size() == doc_ids.size(),
                   "dataset: duplicate document ids");
  check<DataError>(query_index.size() == query_ids.size(),
                   "dataset: duplicate query ids");
}

void RetrievalDataset::validate() const {
  for (const auto& [qid, docs] : qrels) {
    check<DataError>(query_index.count(qid), "dataset: qrels reference unknown query '",
                     qid, "'");
    check<DataError>(!docs.empty(), "dataset: query '", qid, "' has no relevant docs");
    for (const auto& did : docs)
      check<DataError>(doc_index.count(did), "dataset: qrels reference unknown doc '",
                       did, "'");
  }
  for (const auto& qid : query_ids)
    check<DataError>(qrels.count(qid) && !qrels.at(qid).empty(),
                     "dataset: query '", qid, "' has no relevant docs");
}

const std::string& RetrievalDataset::doc_text(const std::string& doc_id) const {
  auto it = doc_index.find(doc_id);
  check<DataError>(it != doc_index.end(), "dataset: unknown doc '", doc_id, "'");
  return doc_texts[it->second];
}

const std::string& RetrievalDataset::query_text(const std::string& query_id) const {
  auto it = query_index.find(query_id);
  check<DataError>(it != query_index.end(), "dataset: unknown query '", query_id, "'");
  return query_texts[it->second];
}

std::vector<std::pair<std::string, std::string>> read_tsv2(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check<DataError>(in.good(), "dataset: cannot read ", path);
  std::vector<std::pair<std::string, std::string>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    check<DataError>(tab != std::string::npos, "dataset: ", path, " line ", lineno,
                     ": expected two tab-separated fields");
    rows.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return rows;
}

RetrievalDataset load_retrieval_dataset(const std::string& collection_tsv,
                                        const std::string& queries_tsv,
                                        const std::string& qrels_tsv) {
  RetrievalDataset ds;
  for (auto& [id, text] : read_tsv2(collection_tsv)) {
    ds.doc_ids.push_back(id);
    ds.doc_texts.push_back(text);
  }
  for (auto& [id, text] : read_tsv2(queries_tsv)) {
    ds.query_ids.push_back(id);
    ds.query_texts.push_back(text);
  }
  for (auto& [qid, did] : read_tsv2(qrels_tsv)) ds.qrels[qid].insert(did);
  ds.rebuild_index();
  ds.validate();
  return ds;
}

namespace {

struct TopicVocab {
  // word ids into a flat topic-word list; text form "w<idx>"
  std::vector<std::vector<int32_t>> topic_words;
  int32_t pool_size = 0;
};

/// Half of each topic's words are unique; the other half is shared with its
/// paired topic (t and t^1), so lexical overlap creates hard negatives.
TopicVocab build_topic_vocab(const ToyDatasetOptions& opt) {
  TopicVocab tv;
  int32_t w = opt.topic_words_per_topic;
  int32_t unique_per_topic = (w + 1) / 2;
  int32_t shared_per_pair = w - unique_per_topic;
  int32_t num_pairs = (opt.num_topics + 1) / 2;
  int32_t next = 0;
  std::vector<std::vector<int32_t>> pair_shared(num_pairs);
  for (int32_t p = 0; p < num_pairs; ++p)
    for (int32_t j = 0; j < shared_per_pair; ++j) pair_shared[p].push_back(next++);
  tv.topic_words.resize(opt.num_topics);
  for (int32_t t = 0; t < opt.num_topics; ++t) {
    for (int32_t j = 0; j < unique_per_topic; ++j) tv.topic_words[t].push_back(next++);
    for (int32_t id : pair_shared[t / 2]) tv.topic_words[t].push_back(id);
  }
  tv.pool_size = next;
  return tv;
}

}  // namespace

ToyDatasetPaths make_toy_dataset(const ToyDatasetOptions& opt,
                                 const std::string& out_dir) {
  check<DataError>(opt.num_topics >= 2 && opt.docs_per_topic >= 1,
                   "toy dataset: need >= 2 topics and >= 1 doc per topic");
  check<DataError>(opt.topic_word_every >= 2,
                   "toy dataset: topic_word_every must be >= 2");
  fs::create_directories(out_dir);
  TopicVocab tv = build_topic_vocab(opt);
  Rng rng(derive_seed(opt.seed, 0x70D0));

  auto topic_word = [&](int32_t topic, Rng& r) {
    const auto& words = tv.topic_words[topic];
    return "w" + std::to_string(words[r.uniform_int(words.size())]);
  };

  auto make_doc = [&](int32_t topic, Rng& r) {
    std::ostringstream text;
    int32_t chain = static_cast<int32_t>(r.uniform_int(opt.filler_vocab));
    for (int32_t p = 0; p < opt.doc_len; ++p) {
      if (p) text << ' ';
      if (p % opt.topic_word_every == 0) {
        text << topic_word(topic, r);
      } else {
        if (r.uniform01() < opt.filler_jump_prob)
          chain = static_cast<int32_t>(r.uniform_int(opt.filler_vocab));
        else
          chain = (chain + 1) % opt.filler_vocab;
        text << 'f' << chain;
      }
    }
    return text.str();
  };

  auto make_query = [&](int32_t topic, Rng& r) {
    std::ostringstream text;
    for (int32_t p = 0; p < opt.query_len; ++p) {
      if (p) text << ' ';
      text << topic_word(topic, r);
    }
    return text.str();
  };

  ToyDatasetPaths paths;
  paths.collection = (fs::path(out_dir) / "collection.tsv").string();
  paths.queries_train = (fs::path(out_dir) / "queries.train.tsv").string();
  paths.qrels_train = (fs::path(out_dir) / "qrels.train.tsv").string();
  paths.queries_dev = (fs::path(out_dir) / "queries.dev.tsv").string();
  paths.qrels_dev = (fs::path(out_dir) / "qrels.dev.tsv").string();
  paths.corpus = (fs::path(out_dir) / "corpus.txt").string();

  std::ofstream coll(paths.collection, std::ios::trunc);
  std::ofstream corpus(paths.corpus, std::ios::trunc);
  std::ofstream qtrain(paths.queries_train, std::ios::trunc);
  std::ofstream reltrain(paths.qrels_train, std::ios::trunc);
  std::ofstream qdev(paths.queries_dev, std::ios::trunc);
  std::ofstream reldev(paths.qrels_dev, std::ios::trunc);
  check<DataError>(coll.good() && corpus.good() && qtrain.good() &&
                       reltrain.good() && qdev.good() && reldev.good(),
                   "toy dataset: cannot write to ", out_dir);

  int32_t doc_counter = 0;
  for (int32_t t = 0; t < opt.num_topics; ++t) {
    std::vector<std::string> topic_docs;
    for (int32_t i = 0; i < opt.docs_per_topic; ++i) {
      std::string did = "d" + std::to_string(doc_counter++);
      std::string text = make_doc(t, rng);
      coll << did << '\t' << text << '\n';
      corpus << text << '\n';
      topic_docs.push_back(did);
    }
    for (int32_t i = 0; i < opt.train_queries_per_topic; ++i) {
      std::string qid = "qtrain" + std::to_string(t) + "_" + std::to_string(i);
      qtrain << qid << '\t' << make_query(t, rng) << '\n';
      for (const auto& did : topic_docs) reltrain << qid << '\t' << did << '\n';
    }
    for (int32_t i = 0; i < opt.dev_queries_per_topic; ++i) {
      std::string qid = "qdev" + std::to_string(t) + "_" + std::to_string(i);
      qdev << qid << '\t' << make_query(t, rng) << '\n';
      for (const auto& did : topic_docs) reldev << qid << '\t' << did << '\n';
    }
  }
  return paths;
}

}  // namespace encore
