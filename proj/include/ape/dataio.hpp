#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "ape/matrix.hpp"
#include "ape/numkit.hpp"
#include "ape/task.hpp"

namespace ape::dataio {

// APEF layout: "APEF", u32 version, u64 rows, u64 cols, rows*cols float32,
// all little-endian, row-major.
inline constexpr std::uint32_t kApefVersion = 1;
inline constexpr std::size_t kApefHeaderBytes = 24;

std::string encode_matrix(const DenseMatrix& m);
DenseMatrix decode_matrix(const std::string& bytes);

/// float32 payload widened to float64.
DenseMatrix read_matrix(const std::filesystem::path& path);
/// Narrows to float32 (round to nearest even); write is temp file + rename.
void write_matrix(const std::filesystem::path& path, const DenseMatrix& m);

/// Rounds every entry through float32, i.e. what a write/read cycle yields.
DenseMatrix quantize_f32(const DenseMatrix& m);

/// Loads an `APE-TASK v1` manifest. Relative file paths resolve against the
/// manifest's directory. Rows more than 1e-4 off unit norm are renormalized
/// and reported to `diag`.
FewShotTask load_task(const std::filesystem::path& manifest_path, Diagnostics* diag = nullptr);

/// Writes every role as an APEF file next to `manifest_path` plus the manifest.
void save_task(const std::filesystem::path& manifest_path, const FewShotTask& task);

struct SyntheticSpec {
    std::size_t c = 10;
    std::size_t k = 16;
    std::size_t d = 64;
    std::size_t n_test_per_class = 50;
    double noise_sigma = 0.6;
    // Offset between each class's text prototype and its image cluster
    // center, per active channel. 0 puts image clusters on the prototypes.
    double modality_gap = 0.0;
    std::uint64_t seed = 0;
};

/// Seeded Gaussian class prototypes with a random 25% of channels zeroed,
/// support/test samples drawn as prototype + N(0, sigma^2) per channel and
/// renormalized. Prototypes and the zeroed channels depend only on (c, d,
/// seed), so tasks differing only in sigma share their classes.
FewShotTask gen_synthetic(const SyntheticSpec& spec);

/// Channels the generator zeroed for (d, seed), ascending.
std::vector<std::size_t> synthetic_zeroed_channels(std::size_t d, std::uint64_t seed);

}  // namespace ape::dataio
