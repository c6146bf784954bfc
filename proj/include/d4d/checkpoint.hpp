#pragma once

#include <memory>
#include <string>

#include "d4d/graph_export.hpp"
#include "d4d/localizer.hpp"

namespace d4d {

// Versioned checkpoint: magic line, JSON header (classifier spec, vocab and
// its hash, T/L_max/S, parameter count), then the flat little-endian 64-bit
// float parameter block covering every tensor including buffers.
struct Checkpoint {
  ClassifierSpec spec;
  std::uint64_t build_seed = 0;
  Vocab vocab;
  int T = 0, l_max = 0, S = 0;
};

inline constexpr const char* kCheckpointMagic = "D4DCKPT1";

void save_checkpoint(const std::string& path, const FaultClassifier& clf, const Vocab& vocab,
                     int T, int l_max, int S);

struct LoadedCheckpoint {
  Checkpoint meta;
  std::unique_ptr<FaultClassifier> classifier;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace d4d
