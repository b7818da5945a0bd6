#pragma once

#include <cstdint>
#include <filesystem>

#include "ibmrec/dataset.hpp"

namespace ibmrec {

// Planted-signal generator. Users and items get rank-`rank` latent factors;
// each user interacts with `interactions_per_user` items drawn without
// replacement from softmax(sharpness * u.v / sqrt(rank)) via Gumbel top-k.
// Each modality's features are [V A_k / sqrt(rank) | noise * N(0, 1)]: a
// relevant block of `relevant_dim` columns and an independent block of
// `irrelevant_dim` columns.
struct SynthSpec {
  Index users = 500;
  Index items = 300;
  int rank = 8;
  int relevant_dim = 16;
  int irrelevant_dim = 64;
  double noise = 1.0;
  int interactions_per_user = 20;
  double sharpness = 2.0;
  int modalities = 2;
  std::uint64_t seed = 1;
};

struct SynthData {
  Dataset dataset;
  Matrix user_factors;  // users x rank
  Matrix item_factors;  // items x rank
};

SynthData make_synthetic(const SynthSpec& spec);

// Generates and writes the standard dataset layout.
Dataset write_synthetic(const std::filesystem::path& dir, const SynthSpec& spec);

}  // namespace ibmrec
