#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "eirehn/cells/cell.hpp"
#include "eirehn/errors.hpp"
#include "eirehn/tensor.hpp"

namespace eirehn {

// %.17g round-trips every finite double exactly through strtod.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Flat text container for named parameter tensors plus a small string
// metadata map. Layout:
//   eirehn-checkpoint 1
//   meta <K>
//   <key> <value>            (K lines, single-token values)
//   params <N>
//   <name> <rank> <dims...>
//   <numel space-separated values, one line>
struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Tensor>> params;

    const Tensor* find(const std::string& name) const {
        for (const auto& [n, t] : params)
            if (n == name) return &t;
        return nullptr;
    }

    std::string meta_at(const std::string& key) const {
        auto it = meta.find(key);
        if (it == meta.end()) throw DataError("checkpoint: missing meta key '" + key + "'");
        return it->second;
    }
};

inline void write_checkpoint(std::ostream& os, const std::map<std::string, std::string>& meta,
                             std::span<const ParamRef> params) {
    os << "eirehn-checkpoint 1\n";
    os << "meta " << meta.size() << "\n";
    for (const auto& [k, v] : meta) os << k << ' ' << v << "\n";
    os << "params " << params.size() << "\n";
    for (const ParamRef& p : params) {
        const Tensor& t = *p.tensor;
        os << p.name << ' ' << t.rank();
        for (int d : t.shape()) os << ' ' << d;
        os << "\n";
        for (size_t i = 0; i < t.numel(); ++i) os << (i ? " " : "") << format_double(t[i]);
        os << "\n";
    }
}

inline void write_checkpoint(const std::string& path,
                             const std::map<std::string, std::string>& meta,
                             std::span<const ParamRef> params) {
    std::ofstream os(path);
    if (!os) throw IoError("checkpoint: cannot open '" + path + "' for writing");
    write_checkpoint(os, meta, params);
    if (!os) throw IoError("checkpoint: write failed for '" + path + "'");
}

inline Checkpoint read_checkpoint(std::istream& is) {
    Checkpoint ck;
    std::string magic;
    int version = 0;
    if (!(is >> magic >> version) || magic != "eirehn-checkpoint" || version != 1)
        throw DataError("checkpoint: bad header");
    std::string tag;
    size_t count = 0;
    if (!(is >> tag >> count) || tag != "meta") throw DataError("checkpoint: bad meta section");
    for (size_t i = 0; i < count; ++i) {
        std::string k, v;
        if (!(is >> k >> v)) throw DataError("checkpoint: truncated meta");
        ck.meta[k] = v;
    }
    if (!(is >> tag >> count) || tag != "params")
        throw DataError("checkpoint: bad params section");
    for (size_t i = 0; i < count; ++i) {
        std::string name;
        int rank = 0;
        if (!(is >> name >> rank) || rank < 0) throw DataError("checkpoint: bad tensor header");
        std::vector<int> shape(rank);
        for (int& d : shape)
            if (!(is >> d)) throw DataError("checkpoint: truncated shape for " + name);
        Tensor t(shape);
        for (size_t j = 0; j < t.numel(); ++j)
            if (!(is >> t[j])) throw DataError("checkpoint: truncated values for " + name);
        ck.params.emplace_back(name, std::move(t));
    }
    return ck;
}

inline Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
    return read_checkpoint(is);
}

// Copies checkpoint tensors into the live parameters, matched by name with
// exact shape agreement.
inline void assign_params(const Checkpoint& ck, std::span<const ParamRef> params) {
    for (const ParamRef& p : params) {
        const Tensor* src = ck.find(p.name);
        if (!src) throw DataError("checkpoint: missing parameter '" + p.name + "'");
        if (src->shape() != p.tensor->shape())
            throw DataError("checkpoint: shape mismatch for '" + p.name + "': file " +
                            src->shape_str() + " vs model " + p.tensor->shape_str());
        *p.tensor = *src;
    }
}

}  // namespace eirehn
