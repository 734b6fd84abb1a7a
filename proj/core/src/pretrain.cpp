#include "encore/pretrain.hpp"

#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "encore/checkpoint.hpp"
#include "encore/csv.hpp"
#include "encore/losses.hpp"
#include "encore/vocab.hpp"

namespace fs = std::filesystem;

namespace encore {

namespace {

std::vector<std::string> read_corpus_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check<DataError>(in.good(), "pretrain: cannot read corpus ", path);
  std::vector<std::string> docs;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) docs.push_back(line);
  }
  check<DataError>(!docs.empty(), "pretrain: corpus ", path, " has no documents");
  return docs;
}

// Namespacing tags for derived RNG substreams.
enum : uint64_t { kTagBatch = 0xBA7C, kTagMask = 0x3A5C, kTagDrop = 0xD120 };

}  // namespace

PretrainResult pretrain(const PretrainOptions& opt) {
  check<DataError>(opt.steps >= 1, "pretrain: steps must be >= 1");
  check<DataError>(opt.batch_size >= 1, "pretrain: batch_size must be >= 1");
  fs::create_directories(opt.out_dir);

  auto docs = read_corpus_lines(opt.corpus_path);
  std::string vocab_path = (fs::path(opt.out_dir) / "vocab.txt").string();

  Vocabulary vocab = fs::exists(vocab_path)
                         ? Vocabulary::load(vocab_path)
                         : build_vocab_file(opt.corpus_path, opt.max_vocab,
                                            opt.min_freq);
  if (!fs::exists(vocab_path)) vocab.save(vocab_path);

  ModelConfig cfg = opt.model;
  cfg.vocab_size = vocab.size();
  cfg.validate();

  std::vector<std::vector<int32_t>> tokenized;
  tokenized.reserve(docs.size());
  for (const auto& d : docs) tokenized.push_back(tokenize(d, vocab, cfg.max_seq_len));

  ModelParams params;
  AdamState adam;
  adam.cfg = opt.optim;
  int64_t start_step = 0;
  if (!opt.resume_from.empty()) {
    Checkpoint ckpt = load_checkpoint(opt.resume_from);
    check<DataError>(ckpt.has_opt, "pretrain: resume checkpoint ",
                     opt.resume_from, " lacks optimizer state");
    params = std::move(ckpt.params);
    adam = std::move(ckpt.opt);
    start_step = ckpt.step;
    check<DataError>(start_step < opt.steps, "pretrain: checkpoint step ",
                     start_step, " is past requested ", opt.steps, " steps");
  } else {
    params = init_model_params<float>(cfg, derive_seed(opt.seed, 0x1217));
  }

  // Params updated this run; the decoder is frozen out in plain-MLM mode.
  std::vector<std::pair<std::string, Tensor>> trainable;
  for (auto& [name, t] : params.named) {
    if (opt.decoder_weight == 0.0 && name.rfind("dec.", 0) == 0) continue;
    trainable.emplace_back(name, t);
  }

  std::string loss_csv = (fs::path(opt.out_dir) / "loss.csv").string();
  CsvWriter csv(loss_csv, {"step", "lr", "loss_total", "loss_mlm", "loss_dec"},
                /*append=*/start_step > 0);

  auto ckpt_path = [&](const std::string& stem) {
    return (fs::path(opt.out_dir) / (stem + ".ckpt")).string();
  };
  auto save = [&](const std::string& stem, int64_t step) {
    Checkpoint ckpt;
    ckpt.params = params;
    ckpt.opt = adam;
    ckpt.has_opt = true;
    ckpt.step = step;
    Rng state_probe(derive_seed(opt.seed, kTagBatch, step));
    ckpt.rng_state = state_probe.state();
    ckpt.rng_inc = state_probe.inc();
    save_checkpoint(ckpt_path(stem), ckpt);
    return ckpt_path(stem);
  };

  std::deque<std::string> rolling;
  double best_mlm = std::numeric_limits<double>::infinity();
  std::string best_path;
  PretrainResult result;
  result.vocab_path = vocab_path;
  result.loss_csv = loss_csv;

  double last_mlm = 0, last_dec = 0;
  for (int64_t step = start_step + 1; step <= opt.steps; ++step) {
    Rng batch_rng(derive_seed(opt.seed, kTagBatch, step));
    std::vector<std::vector<int32_t>> seqs(opt.batch_size);
    for (int64_t i = 0; i < opt.batch_size; ++i)
      seqs[i] = tokenized[batch_rng.uniform_int(
          static_cast<uint32_t>(tokenized.size()))];

    MaskedBatch batch = create_mlm_batch(seqs, opt.masking, cfg.vocab_size,
                                         derive_seed(opt.seed, kTagMask, step));

    Tape tape;
    LossParts parts;
    try {
      parts = combined_loss(&tape, params, batch, /*train=*/true,
                            derive_seed(opt.seed, kTagDrop, step),
                            opt.decoder_weight);
    } catch (const SkipBatch&) {
      continue;
    }

    double total = parts.total.item();
    last_mlm = parts.mlm.item();
    last_dec = parts.dec.item();
    if (!std::isfinite(total)) {
      csv.flush();
      fail<NumericError>("pretrain: non-finite loss at step ", step,
                         "; last good checkpoint retained at ",
                         rolling.empty() ? std::string("<none>") : rolling.back());
    }

    params.zero_grads();
    tape.backward(parts.total);
    double lr = lr_at(step, adam.cfg);
    adam_step(trainable, adam, lr);

    csv.row({std::to_string(step), fmt_double(lr), fmt_float(parts.total.item()),
             fmt_float(parts.mlm.item()), fmt_float(parts.dec.item())});

    if (opt.checkpoint_interval > 0 && step % opt.checkpoint_interval == 0) {
      std::string p = save(strcat("ckpt_step", step), step);
      rolling.push_back(p);
      while (static_cast<int64_t>(rolling.size()) > opt.keep_last) {
        fs::remove(rolling.front());
        rolling.pop_front();
      }
      if (last_mlm < best_mlm) {
        best_mlm = last_mlm;
        best_path = save("ckpt_best", step);
      }
      if (!opt.quiet)
        std::cerr << "[pretrain] step " << step << " lr " << fmt_double(lr)
                  << " mlm " << last_mlm << " dec " << last_dec << "\n";
    }
    result.steps_run = step;
  }
  csv.flush();

  result.final_checkpoint = save("ckpt_final", opt.steps);
  result.best_checkpoint = best_path.empty() ? result.final_checkpoint : best_path;
  result.final_mlm = last_mlm;
  result.final_dec = last_dec;
  return result;
}

}  // namespace encore
