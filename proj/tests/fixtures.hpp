#pragma once

// Small corpora and configurations that keep trainer tests fast.

#include "deaps/pipeline.hpp"
#include "deaps/sampling.hpp"
#include "deaps/state.hpp"
#include "deaps/synthgen.hpp"

namespace deaps::testing {

inline train::TrainConfig tiny_config(train::Method m = train::Method::Deaps) {
  train::TrainConfig c;
  c.method = m;
  c.iterations = 10;
  c.batch_size = 4;
  c.checkpoint_every = 5;
  c.encoder.patch_len = 50;
  c.encoder.n_blocks = 1;
  c.encoder.n_heads = 2;
  c.encoder.model_dim = 8;
  c.encoder.mlp_hidden = 16;
  c.encoder.head_hidden = 16;
  c.encoder.head_out = 8;
  c.loss.proj_dim = 8;
  c.loss.n_selected = 4;
  return c;
}

inline std::vector<SignalRecord> preprocessed_records(int subjects, int records, double duration_s, std::uint64_t seed) {
  const auto ds = synth::generate_corpus(subjects, records, duration_s, seed);
  std::vector<SignalRecord> out;
  for (const auto& r : ds.records) out.push_back(pipeline::preprocess(r.to_signal()));
  return out;
}

inline sampling::Corpus small_corpus(std::uint64_t seed = 0) {
  return sampling::Corpus::from_records(preprocessed_records(3, 2, 300.0, seed));
}

}  // namespace deaps::testing
