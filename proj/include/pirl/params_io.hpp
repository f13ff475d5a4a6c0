#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "pirl/tensor.hpp"

namespace pirl::nn {

// Named parameter tensors plus matching gradient accumulators. std::map keeps
// iteration deterministic, which the update loop and serialization rely on.
struct ParamStore {
    std::map<std::string, Tensor> values;
    std::map<std::string, Tensor> grads;
    std::map<std::string, std::string> meta;

    void add(const std::string& name, Tensor init) {
        if (values.count(name)) throw DimensionError("ParamStore: duplicate parameter " + name);
        grads[name] = Tensor::zeros(init.shape);
        values[name] = std::move(init);
    }

    Tensor& value(const std::string& name) {
        auto it = values.find(name);
        if (it == values.end()) throw DimensionError("ParamStore: unknown parameter " + name);
        return it->second;
    }

    const Tensor& value(const std::string& name) const {
        auto it = values.find(name);
        if (it == values.end()) throw DimensionError("ParamStore: unknown parameter " + name);
        return it->second;
    }

    Tensor& grad(const std::string& name) {
        auto it = grads.find(name);
        if (it == grads.end()) throw DimensionError("ParamStore: unknown parameter " + name);
        return it->second;
    }

    void zero_grads() {
        for (auto& [name, g] : grads) g.v.assign(g.v.size(), 0.0);
    }

    // Plain ascent step along the accumulated gradients.
    void ascend(double step) {
        for (auto& [name, val] : values) {
            const Tensor& g = grads.at(name);
            for (std::size_t i = 0; i < val.size(); ++i) val.v[i] += step * g.v[i];
        }
    }

    double grad_norm() const {
        double acc = 0.0;
        for (const auto& [name, g] : grads)
            for (double x : g.v) acc += x * x;
        return std::sqrt(acc);
    }

    void clip_grads(double max_norm) {
        const double n = grad_norm();
        if (n <= max_norm || n == 0.0) return;
        const double s = max_norm / n;
        for (auto& [name, g] : grads)
            for (double& x : g.v) x *= s;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : values) n += t.size();
        return n;
    }
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t x) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t x) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& os, double x) {
    std::uint64_t u;
    std::memcpy(&u, &x, 8);
    put_u64(os, u);
}

inline void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DatasetError("parameter container truncated");
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return x;
}

inline std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw DatasetError("parameter container truncated");
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return x;
}

inline double get_f64(std::istream& is) {
    std::uint64_t u = get_u64(is);
    double x;
    std::memcpy(&x, &u, 8);
    return x;
}

inline std::string get_str(std::istream& is) {
    std::uint32_t n = get_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw DatasetError("parameter container truncated");
    return s;
}

}  // namespace detail

constexpr char kParamMagic[9] = "PIRLNET1";

// Versioned binary container: magic, meta table, then per tensor a name, a
// shape table and row-major little-endian doubles.
inline void save_params(const std::string& path, const ParamStore& store) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DatasetError("cannot write parameters: " + path);
    f.write(kParamMagic, 8);
    detail::put_u32(f, static_cast<std::uint32_t>(store.meta.size()));
    for (const auto& [k, v] : store.meta) {
        detail::put_str(f, k);
        detail::put_str(f, v);
    }
    detail::put_u32(f, static_cast<std::uint32_t>(store.values.size()));
    for (const auto& [name, t] : store.values) {
        detail::put_str(f, name);
        detail::put_u32(f, static_cast<std::uint32_t>(t.shape.size()));
        for (std::size_t d : t.shape) detail::put_u64(f, d);
        for (double x : t.v) detail::put_f64(f, x);
    }
}

inline ParamStore load_params(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DatasetError("cannot open parameters: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kParamMagic, 8) != 0)
        throw DatasetError("not a pirl parameter container: " + path);
    ParamStore store;
    const std::uint32_t n_meta = detail::get_u32(f);
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        std::string k = detail::get_str(f);
        store.meta[k] = detail::get_str(f);
    }
    const std::uint32_t n_tensors = detail::get_u32(f);
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        std::string name = detail::get_str(f);
        const std::uint32_t ndims = detail::get_u32(f);
        std::vector<std::size_t> shape;
        for (std::uint32_t d = 0; d < ndims; ++d) shape.push_back(static_cast<std::size_t>(detail::get_u64(f)));
        Tensor t = Tensor::zeros(shape);
        for (double& x : t.v) x = detail::get_f64(f);
        store.add(name, std::move(t));
    }
    return store;
}

}  // namespace pirl::nn
