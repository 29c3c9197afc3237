#include "spdsru/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "binio.hpp"

namespace spdsru {

void SpdSequenceDataset::validate() const {
    if (n == 0 || length == 0 || classes == 0) throw FormatError("dataset: n, T and class count must be positive");
    for (const LabeledSequence& item : items) {
        if (item.xs.size() != length) throw FormatError("dataset: sequence length differs from header");
        if (item.label >= classes) throw FormatError("dataset: label out of range");
        for (const SymPosDef& x : item.xs) {
            if (x.dim() != n) throw FormatError("dataset: matrix dimension differs from header");
            if (!x.is_positive_definite()) throw FormatError("dataset: matrix is not positive definite");
        }
    }
}

SpdSequenceDataset SpdSequenceDataset::subset(std::span<const std::size_t> idx) const {
    SpdSequenceDataset out;
    out.n = n;
    out.length = length;
    out.classes = classes;
    out.seed = seed;
    out.generator = generator;
    out.items.reserve(idx.size());
    for (std::size_t i : idx) out.items.push_back(items.at(i));
    return out;
}

void save_dataset(std::ostream& os, const SpdSequenceDataset& d) {
    using namespace binio;
    constexpr auto cap = std::numeric_limits<std::uint32_t>::max();
    if (d.n > cap || d.length > cap || d.items.size() > cap || d.classes > cap)
        throw FormatError("dataset too large for the file format");
    os.write(kDatasetMagic, sizeof kDatasetMagic);
    put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(d.n));
    put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(d.length));
    put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(d.items.size()));
    put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(d.classes));
    for (const LabeledSequence& item : d.items) {
        if (item.xs.size() != d.length) throw FormatError("dataset: sequence length differs from header");
        put_uint<std::uint32_t>(os, item.label);
        for (const SymPosDef& x : item.xs) {
            if (x.dim() != d.n) throw FormatError("dataset: matrix dimension differs from header");
            for (std::size_t i = 0; i < d.n; ++i) put_f64(os, x(i, i));
            for (std::size_t i = 0; i < d.n; ++i)
                for (std::size_t j = 0; j < i; ++j) put_f64(os, x(i, j));
        }
    }
    if (!os) throw FormatError("dataset write failed");
}

SpdSequenceDataset load_dataset(std::istream& is) {
    using namespace binio;
    char magic[sizeof kDatasetMagic];
    if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kDatasetMagic))
        throw FormatError("not a dataset file (bad magic)");
    SpdSequenceDataset d;
    d.n = get_uint<std::uint32_t>(is, "dataset header");
    d.length = get_uint<std::uint32_t>(is, "dataset header");
    const std::size_t count = get_uint<std::uint32_t>(is, "dataset header");
    d.classes = get_uint<std::uint32_t>(is, "dataset header");
    if (d.n == 0 || d.n > 4096 || d.length == 0 || d.classes == 0) throw FormatError("implausible dataset header");

    d.items.reserve(std::min<std::size_t>(count, 1u << 16));
    for (std::size_t k = 0; k < count; ++k) {
        LabeledSequence item;
        item.label = get_uint<std::uint32_t>(is, "item label");
        item.xs.reserve(d.length);
        for (std::size_t t = 0; t < d.length; ++t) {
            DenseMatrix m(d.n, d.n);
            for (std::size_t i = 0; i < d.n; ++i) m(i, i) = get_f64(is, "matrix entry");
            for (std::size_t i = 0; i < d.n; ++i)
                for (std::size_t j = 0; j < i; ++j) m(i, j) = m(j, i) = get_f64(is, "matrix entry");
            if (!m.all_finite()) throw FormatError("non-finite matrix entry");
            item.xs.push_back(SymPosDef(m));
        }
        d.items.push_back(std::move(item));
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after dataset");
    d.validate();
    return d;
}

void save_dataset(const std::string& path, const SpdSequenceDataset& d) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    save_dataset(os, d);
}

SpdSequenceDataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path);
    return load_dataset(is);
}

}  // namespace spdsru
