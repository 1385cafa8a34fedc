#include "biascope/embedding.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "biascope/error.hpp"

namespace biascope {

namespace {

constexpr char kMagic[5] = {'B', 'S', 'C', 'P', '1'};

// On-disk integers are little-endian; this code assumes a little-endian
// host, which covers every supported target.
template <typename T>
void write_pod(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) fail(errc::truncated_file, path + ": truncated header");
    return value;
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(uint32_t dim, std::vector<std::string> ids,
                                 std::vector<float> data)
    : dim_(dim), ids_(std::move(ids)), data_(std::move(data)) {
    if (dim_ == 0) fail(errc::invalid_dim, "embedding dim must be positive");
    if (data_.size() != ids_.size() * static_cast<size_t>(dim_)) {
        fail(errc::dimension_mismatch, "embedding data size does not match ids * dim");
    }
    index_.reserve(ids_.size());
    for (size_t i = 0; i < ids_.size(); ++i) {
        if (!index_.emplace(ids_[i], i).second) {
            fail(errc::duplicate_id, "duplicate embedding id: " + ids_[i]);
        }
    }
    for (size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            fail(errc::non_finite_value,
                 "non-finite value in embedding row " + std::to_string(i / dim_));
        }
    }
}

std::span<const float> EmbeddingMatrix::lookup(const std::string& id) const {
    return row(index_of(id));
}

size_t EmbeddingMatrix::index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) fail(errc::unknown_id, "unknown embedding id: " + id);
    return it->second;
}

EmbeddingMatrix read_embeddings(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(errc::io_failure, "cannot open " + path);

    char magic[5];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        fail(errc::bad_magic, path + ": not a BSCP1 embedding file");
    }
    const auto dim = read_pod<uint32_t>(in, path);
    const auto count = read_pod<uint64_t>(in, path);
    if (dim == 0) fail(errc::invalid_dim, path + ": zero dim");

    std::vector<float> data(static_cast<size_t>(count) * dim);
    if (!data.empty()) {
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(float)));
        if (!in) {
            fail(errc::truncated_file,
                 path + ": expected " + std::to_string(count) + " rows of dim " +
                     std::to_string(dim));
        }
    }

    std::vector<std::string> ids(count);
    for (auto& id : ids) {
        const auto len = read_pod<uint32_t>(in, path);
        id.resize(len);
        in.read(id.data(), len);
        if (!in) fail(errc::truncated_file, path + ": truncated id table");
    }

    return EmbeddingMatrix(dim, std::move(ids), std::move(data));
}

void write_embeddings(const EmbeddingMatrix& matrix, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(errc::io_failure, "cannot open " + path + " for writing");

    out.write(kMagic, sizeof(kMagic));
    write_pod<uint32_t>(out, matrix.dim());
    write_pod<uint64_t>(out, matrix.count());
    if (!matrix.data().empty()) {
        out.write(reinterpret_cast<const char*>(matrix.data().data()),
                  static_cast<std::streamsize>(matrix.data().size() * sizeof(float)));
    }
    for (const auto& id : matrix.ids()) {
        write_pod<uint32_t>(out, static_cast<uint32_t>(id.size()));
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
    }
    if (!out) fail(errc::io_failure, "write failed: " + path);
}

EmbeddingMatrix make_single_row(const std::string& id, std::span<const double> values) {
    std::vector<float> data(values.size());
    for (size_t i = 0; i < values.size(); ++i) data[i] = static_cast<float>(values[i]);
    return EmbeddingMatrix(static_cast<uint32_t>(values.size()), {id}, std::move(data));
}

}  // namespace biascope
