#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mapfuse/tensor.hpp"

namespace mapfuse {

namespace detail {

inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

// Named trainable tensors. Initialization is seeded per parameter name, so the
// draw does not depend on creation order.
template <typename T>
class ParamStore {
public:
    explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}

    // Uniform init in +-sqrt(1/fan_in).
    Tensor<T>& create(const std::string& name, Shape shape, int fan_in) {
        if (params_.count(name)) throw ContractError("parameter '" + name + "' already exists");
        const T bound = static_cast<T>(std::sqrt(1.0 / std::max(1, fan_in)));
        Rng rng(mix_seed(seed_, detail::fnv1a(name)));
        auto [it, ok] = params_.emplace(name, Tensor<T>::uniform(std::move(shape), rng, -bound, bound, true));
        return it->second;
    }

    Tensor<T>& create_zeros(const std::string& name, Shape shape) {
        if (params_.count(name)) throw ContractError("parameter '" + name + "' already exists");
        auto [it, ok] = params_.emplace(name, Tensor<T>::zeros(std::move(shape), true));
        return it->second;
    }

    Tensor<T>& create_const(const std::string& name, Shape shape, T value) {
        Tensor<T>& t = create_zeros(name, std::move(shape));
        std::fill(t.data().begin(), t.data().end(), value);
        return t;
    }

    Tensor<T>& get(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
        return it->second;
    }
    const Tensor<T>& get(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
        return it->second;
    }
    bool has(const std::string& name) const { return params_.count(name) != 0; }

    // Lexicographic by construction (std::map).
    const std::map<std::string, Tensor<T>>& all() { return params_; }
    const std::map<std::string, Tensor<T>>& all() const { return params_; }

    void zero_grads() {
        for (auto& [name, t] : params_) t.zero_grad();
    }

    int64_t total_size() const {
        int64_t n = 0;
        for (const auto& [name, t] : params_) n += t.size();
        return n;
    }

    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_;
    std::map<std::string, Tensor<T>> params_;
};

// ---------------------------------------------------------------------------
// Checkpoint file: magic "CDP1" | entry count u32 | entries sorted by name,
// each: name length u16, UTF-8 name, shape rank u8, extents u32, f32 payload.
// ---------------------------------------------------------------------------

struct CheckpointEntry {
    Shape shape;
    std::vector<float> data;
};

using CheckpointTable = std::map<std::string, CheckpointEntry>;

inline void save_checkpoint(const CheckpointTable& table, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    auto put_le = [&f](uint32_t v, int bytes) {
        for (int i = 0; i < bytes; ++i) f.put(static_cast<char>((v >> (8 * i)) & 0xff));
    };
    f.write("CDP1", 4);
    put_le(static_cast<uint32_t>(table.size()), 4);
    for (const auto& [name, e] : table) {
        put_le(static_cast<uint32_t>(name.size()), 2);
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        f.put(static_cast<char>(e.shape.size()));
        for (int ext : e.shape) put_le(static_cast<uint32_t>(ext), 4);
        for (float v : e.data) {
            uint32_t bits;
            std::memcpy(&bits, &v, 4);
            put_le(bits, 4);
        }
    }
    if (!f) throw IoError("short write to " + path);
}

inline CheckpointTable load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    auto get_le = [&f, &path](int bytes) -> uint32_t {
        uint32_t v = 0;
        for (int i = 0; i < bytes; ++i) {
            const int c = f.get();
            if (c == EOF) throw ParseError("truncated checkpoint " + path);
            v |= static_cast<uint32_t>(c) << (8 * i);
        }
        return v;
    };
    char magic[4];
    f.read(magic, 4);
    if (!f || std::string(magic, 4) != "CDP1") throw ParseError("bad checkpoint magic in " + path);
    const uint32_t count = get_le(4);
    CheckpointTable table;
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = get_le(2);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        if (!f) throw ParseError("truncated checkpoint " + path);
        const int rank = f.get();
        if (rank == EOF) throw ParseError("truncated checkpoint " + path);
        CheckpointEntry e;
        int64_t n = 1;
        for (int r = 0; r < rank; ++r) {
            e.shape.push_back(static_cast<int>(get_le(4)));
            n *= e.shape.back();
        }
        e.data.resize(n);
        for (int64_t j = 0; j < n; ++j) {
            const uint32_t bits = get_le(4);
            std::memcpy(&e.data[j], &bits, 4);
        }
        table.emplace(std::move(name), std::move(e));
    }
    return table;
}

template <typename T>
CheckpointTable params_to_table(const ParamStore<T>& store) {
    CheckpointTable table;
    for (const auto& [name, t] : store.all()) {
        CheckpointEntry e;
        e.shape = t.shape();
        e.data.reserve(t.size());
        for (T v : t.data()) e.data.push_back(static_cast<float>(v));
        table.emplace(name, std::move(e));
    }
    return table;
}

template <typename T>
void table_to_params(const CheckpointTable& table, ParamStore<T>& store) {
    for (auto& [name, t] : const_cast<std::map<std::string, Tensor<T>>&>(store.all())) {
        auto it = table.find(name);
        if (it == table.end()) throw DataError("checkpoint is missing parameter '" + name + "'");
        if (it->second.shape != t.shape())
            throw DataError("checkpoint shape mismatch for '" + name + "': " +
                            shape_str(it->second.shape) + " vs " + shape_str(t.shape()));
        for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<T>(it->second.data[i]);
    }
}

}  // namespace mapfuse
