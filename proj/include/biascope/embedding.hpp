#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace biascope {

// Id-indexed dense f32 matrix; row i belongs to ids()[i].
// Immutable in spirit: build once, then share across readers.
class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;
    EmbeddingMatrix(uint32_t dim, std::vector<std::string> ids, std::vector<float> data);

    uint32_t dim() const { return dim_; }
    size_t count() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<float>& data() const { return data_; }

    std::span<const float> row(size_t i) const {
        return {data_.data() + i * dim_, dim_};
    }
    bool contains(const std::string& id) const { return index_.count(id) > 0; }
    std::span<const float> lookup(const std::string& id) const;
    size_t index_of(const std::string& id) const;

private:
    uint32_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<float> data_;  // count * dim, row-major
    std::unordered_map<std::string, size_t> index_;
};

// Binary layout: "BSCP1" magic, u32 dim, u64 count, count*dim little-endian
// f32 rows, then a u32-length-prefixed UTF-8 id per row. Round trips are
// bit-exact for all finite payloads.
EmbeddingMatrix read_embeddings(const std::string& path);
void write_embeddings(const EmbeddingMatrix& matrix, const std::string& path);

// Convenience for persisted directions (count-1 matrices).
EmbeddingMatrix make_single_row(const std::string& id, std::span<const double> values);

}  // namespace biascope
