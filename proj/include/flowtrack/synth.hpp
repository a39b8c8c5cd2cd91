#pragma once

#include <cstdint>

#include "flowtrack/config.hpp"
#include "flowtrack/data_io.hpp"

namespace flowtrack {

/// Generates one synthetic sequence: constant-velocity boxes reflecting at
/// the scene boundary, per-object anchor embeddings (+/- basis vectors when
/// they suffice, random unit vectors otherwise) perturbed per frame, plus
/// configurable misses, false positives, positional/score noise, and
/// occlusion windows. Deterministic in `seed`.
Sequence generate_sequence(const SynthConfig& cfg, uint64_t seed, const std::string& name);

/// Generates cfg.n_sequences sequences into root/seq_000..., seeding each
/// from `seed` + index. Returns the directories written.
std::vector<std::string> generate_dataset(const SynthConfig& cfg, uint64_t seed,
                                          const std::string& root);

}  // namespace flowtrack
