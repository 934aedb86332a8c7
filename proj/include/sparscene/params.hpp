#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "sparscene/error.hpp"
#include "sparscene/tensor.hpp"

namespace sparscene {

// Deterministic RNG with hand-rolled distributions so streams are identical
// across standard library implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next() { return gen_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<__uint128_t>(gen_()) * n) >> 64);
    }

    int range(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool chance(double p) { return uniform() < p; }

    double normal() {
        // Box-Muller; one draw per call, spare discarded for simplicity.
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

  private:
    std::mt19937_64 gen_;
};

// Named map of learnable tensors with stable iteration order, plus the
// per-parameter optimizer state slots.
class ParamRegistry {
  public:
    struct Slot {
        std::vector<double> m;  // first moment
        std::vector<double> v;  // second moment
    };

    // Registers a tensor initialized uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    Tensor add(const std::string& name, Shape shape, int fan_in, Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor t = Tensor::zeros(shape, true);
        for (double& v : t.data()) v = rng.uniform(-bound, bound);
        insert(name, t);
        return t;
    }

    // Registers a tensor filled with a constant (layer-norm scales, biases
    // that want zero).
    Tensor add_constant(const std::string& name, Shape shape, double value) {
        Tensor t = Tensor::zeros(shape, true);
        std::fill(t.data().begin(), t.data().end(), value);
        insert(name, t);
        return t;
    }

    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    Tensor get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("unknown parameter: " + name);
        return entries_[it->second].tensor;
    }

    const std::vector<std::string>& names() const { return names_; }
    std::size_t size() const { return entries_.size(); }

    std::size_t total_elements() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += static_cast<std::size_t>(e.tensor.numel());
        return n;
    }

    void zero_grad() {
        for (auto& e : entries_) e.tensor.zero_grad();
    }

    Slot& slot(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("unknown parameter: " + name);
        Slot& s = entries_[it->second].slot;
        const auto n = static_cast<std::size_t>(entries_[it->second].tensor.numel());
        if (s.m.size() != n) {
            s.m.assign(n, 0.0);
            s.v.assign(n, 0.0);
        }
        return s;
    }

    // ------------------------------------------------------------------
    // Checkpoint format: "SPSC" magic, u32 version, u64 entry count, then
    // per entry: u32 name length, name bytes, u32 rank, u64 dims, raw
    // little-endian f64 payload. Optimizer slots ride along as entries
    // named "#m.<param>" / "#v.<param>", the step counter as "#step".
    // ------------------------------------------------------------------

    static constexpr std::uint32_t kCheckpointVersion = 1;

    void save(const std::string& path, bool with_optimizer_state = false,
              std::uint64_t step = 0) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot open checkpoint for writing: " + path);
        out.write("SPSC", 4);
        write_u32(out, kCheckpointVersion);
        std::uint64_t count = entries_.size();
        if (with_optimizer_state) count += 2 * entries_.size() + 1;
        write_u64(out, count);
        for (const auto& e : entries_) {
            write_entry(out, e.name, e.tensor.shape(), e.tensor.data());
        }
        if (with_optimizer_state) {
            for (const auto& e : entries_) {
                const Shape flat{static_cast<int>(e.tensor.numel())};
                Slot s = e.slot;
                if (s.m.size() != static_cast<std::size_t>(e.tensor.numel())) {
                    s.m.assign(static_cast<std::size_t>(e.tensor.numel()), 0.0);
                    s.v.assign(static_cast<std::size_t>(e.tensor.numel()), 0.0);
                }
                write_entry(out, "#m." + e.name, flat, s.m);
                write_entry(out, "#v." + e.name, flat, s.v);
            }
            write_entry(out, "#step", {1}, {static_cast<double>(step)});
        }
        if (!out) throw DataError("short write to checkpoint: " + path);
    }

    struct LoadInfo {
        bool has_optimizer_state = false;
        std::uint64_t step = 0;
    };

    // Restores parameter values (and optimizer slots when present) in place.
    // Every registered parameter must appear with a matching shape.
    LoadInfo load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot open checkpoint: " + path);
        char magic[4];
        in.read(magic, 4);
        if (!in || std::memcmp(magic, "SPSC", 4) != 0)
            throw VersionError("not a SparScene checkpoint: " + path);
        const std::uint32_t version = read_u32(in);
        if (version != kCheckpointVersion)
            throw VersionError("checkpoint version " + std::to_string(version) +
                               " unsupported (expected " + std::to_string(kCheckpointVersion) +
                               ")");
        const std::uint64_t count = read_u64(in);
        LoadInfo info;
        std::unordered_map<std::string, bool> restored;
        for (std::uint64_t k = 0; k < count; ++k) {
            std::string name;
            Shape shape;
            std::vector<double> payload;
            read_entry(in, name, shape, payload);
            if (name == "#step") {
                info.has_optimizer_state = true;
                info.step = static_cast<std::uint64_t>(payload.at(0));
                continue;
            }
            if (name.rfind("#m.", 0) == 0 || name.rfind("#v.", 0) == 0) {
                const bool is_m = name[1] == 'm';
                const std::string pname = name.substr(3);
                auto it = index_.find(pname);
                if (it == index_.end()) continue;  // stale slot; params win
                Slot& s = slot(pname);
                auto& dst = is_m ? s.m : s.v;
                if (payload.size() != dst.size())
                    throw DataError("optimizer slot size mismatch for " + pname);
                dst = std::move(payload);
                info.has_optimizer_state = true;
                continue;
            }
            auto it = index_.find(name);
            if (it == index_.end())
                throw DataError("checkpoint has unknown parameter: " + name);
            Tensor t = entries_[it->second].tensor;
            if (t.shape() != shape)
                throw DataError("parameter " + name + ": shape " + shape_str(shape) +
                                " does not match registered " + shape_str(t.shape()));
            t.data() = std::move(payload);
            restored[name] = true;
        }
        for (const auto& name : names_) {
            if (!restored.count(name))
                throw DataError("checkpoint missing parameter: " + name);
        }
        return info;
    }

  private:
    struct Entry {
        std::string name;
        Tensor tensor;
        Slot slot;
    };

    void insert(const std::string& name, const Tensor& t) {
        if (name.empty() || name[0] == '#')
            throw ContractError("invalid parameter name: '" + name + "'");
        if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
        index_.emplace(name, entries_.size());
        entries_.push_back({name, t, {}});
        names_.push_back(name);
    }

    static void write_u32(std::ofstream& out, std::uint32_t v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    static void write_u64(std::ofstream& out, std::uint64_t v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    static std::uint32_t read_u32(std::ifstream& in) {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!in) throw DataError("truncated checkpoint");
        return v;
    }
    static std::uint64_t read_u64(std::ifstream& in) {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!in) throw DataError("truncated checkpoint");
        return v;
    }

    static void write_entry(std::ofstream& out, const std::string& name, const Shape& shape,
                            const std::vector<double>& payload) {
        write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(out, static_cast<std::uint32_t>(shape.size()));
        for (int d : shape) write_u64(out, static_cast<std::uint64_t>(d));
        out.write(reinterpret_cast<const char*>(payload.data()),
                  static_cast<std::streamsize>(payload.size() * sizeof(double)));
    }

    static void read_entry(std::ifstream& in, std::string& name, Shape& shape,
                           std::vector<double>& payload) {
        const std::uint32_t name_len = read_u32(in);
        name.resize(name_len);
        in.read(name.data(), name_len);
        const std::uint32_t rank = read_u32(in);
        shape.resize(rank);
        std::uint64_t numel = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            const std::uint64_t d = read_u64(in);
            shape[i] = static_cast<int>(d);
            numel *= d;
        }
        payload.resize(numel);
        in.read(reinterpret_cast<char*>(payload.data()),
                static_cast<std::streamsize>(numel * sizeof(double)));
        if (!in) throw DataError("truncated checkpoint");
    }

    std::vector<Entry> entries_;
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace sparscene
