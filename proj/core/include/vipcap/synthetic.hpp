#pragma once

// Synthetic captioning corpus for desk-scale runs. Each caption combines a
// colour, an object, an action, and a place; patch j of the image carries the
// embedding of slot j mod 4 plus small noise, so captions are recoverable
// from the visual features.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "vipcap/datastore.hpp"
#include "vipcap/training.hpp"

namespace vipcap {

struct SyntheticCorpus {
    std::vector<Example> examples;
    /// One entry per example caption (same id); embedding = mean patch vector.
    std::vector<CaptionEntry> datastore;
};

/// `count` examples with distinct captions. Throws an input error when
/// `count` exceeds the number of distinct captions the grammar can produce.
SyntheticCorpus make_synthetic_corpus(int count, const EncoderConfig& encoder, std::uint64_t seed,
                                      double noise = 0.05);

/// Writes <dir>/data/pairs.jsonl with one VIPC feature file per example and a
/// datastore under <dir>/datastore.
void save_synthetic_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus);

}  // namespace vipcap
