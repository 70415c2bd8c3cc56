#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shiftadd/dataset.hpp"
#include "shiftadd/network.hpp"
#include "shiftadd/trainer.hpp"

namespace shiftadd {

// Sources:
//   synth:blobs:classes=3,n=600,hw=12,seed=7   gaussian-blob classes
//   synth:digits:n=500,seed=7                   8x8 digit-style glyphs
//   raw:<path>                                  binary raw-array file (see README)
Dataset load_dataset(const std::string& spec);

// Deterministic split; test gets round(fraction * N).
std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double test_fraction,
                                          std::uint64_t seed);

void save_raw_dataset(const std::string& path, const Dataset& d);

// Architecture config, plain-text key-value lines (see README for schema).
ArchConfig parse_arch_text(const std::string& text);
ArchConfig parse_arch_file(const std::string& path);
std::string arch_to_text(const ArchConfig& arch);

// Checkpoint container: magic, version, then length-prefixed named records,
// little-endian 64-bit lengths. Bit-exact round trip.
void save_checkpoint(const std::string& path, const TrainerState& state);
TrainerState load_checkpoint(const std::string& path);

std::string train_record_jsonl(const TrainRecord& record);
TrainRecord train_record_from_jsonl(const std::string& text);

struct NamedRecord {
    std::string run_id;
    TrainRecord record;
};

// CSV per run plus SVG overlays (accuracy vs epoch, accuracy vs energy).
std::vector<std::string> emit_curves(const std::vector<NamedRecord>& records,
                                     const std::string& out_dir);

// Seeds and config actually used by a run, for audit.
void write_manifest(const std::string& out_dir, const TrainConfig& cfg,
                    const std::string& dataset_spec, std::uint64_t model_seed);

}  // namespace shiftadd
