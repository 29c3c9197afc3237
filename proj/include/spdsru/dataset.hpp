#pragma once

// Labeled SPD sequences and their binary file format.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "spdsru/geometry.hpp"

namespace spdsru {

struct LabeledSequence {
    std::vector<SymPosDef> xs;
    std::uint32_t label = 0;

    friend bool operator==(const LabeledSequence&, const LabeledSequence&) = default;
};

struct SpdSequenceDataset {
    std::size_t n = 0;
    std::size_t length = 0;  // T
    std::size_t classes = 0;
    std::vector<LabeledSequence> items;
    // Provenance; kept in memory only, the file format has no slot for it.
    std::uint64_t seed = 0;
    std::string generator;

    std::size_t size() const noexcept { return items.size(); }
    /// Checks shapes, labels < classes and positive definiteness of every matrix.
    void validate() const;
    /// Same header, items picked by index.
    SpdSequenceDataset subset(std::span<const std::size_t> idx) const;
};

inline constexpr char kDatasetMagic[7] = {'S', 'P', 'D', 'S', 'E', 'Q', '1'};

/// magic[7]; u32 n, T, count, classes; per item u32 label then T matrices,
/// each n(n+1)/2 f64: the diagonal, then entries (i, j), i > j, row-major.
void save_dataset(std::ostream& os, const SpdSequenceDataset& d);
SpdSequenceDataset load_dataset(std::istream& is);
void save_dataset(const std::string& path, const SpdSequenceDataset& d);
SpdSequenceDataset load_dataset(const std::string& path);

}  // namespace spdsru
