#pragma once

#include <map>
#include <string>
#include <vector>

#include "synnet/tensor.hpp"

namespace synnet {

enum class ParamKind : std::uint8_t { ConvWeight, ConvBias, BnGamma, BnBeta, BnRunningMean, BnRunningVar };

constexpr bool is_learnable(ParamKind k) noexcept {
    return k != ParamKind::BnRunningMean && k != ParamKind::BnRunningVar;
}

template <typename T>
struct ParamEntry {
    std::string name;
    ParamKind kind;
    Tensor<T> value;
};

/// Ordered name -> tensor map. Iteration follows insertion order.
template <typename T>
class ParamSet {
public:
    std::size_t add(std::string name, ParamKind kind, Tensor<T> value) {
        if (index_.contains(name)) throw UsageError("duplicate parameter name " + name);
        index_.emplace(name, entries_.size());
        entries_.push_back(ParamEntry<T>{std::move(name), kind, std::move(value)});
        return entries_.size() - 1;
    }

    std::size_t size() const noexcept { return entries_.size(); }
    bool contains(const std::string& name) const { return index_.contains(name); }

    std::size_t index_of(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw UsageError("unknown parameter " + name);
        return it->second;
    }

    Tensor<T>& operator[](std::size_t i) { return entries_.at(i).value; }
    const Tensor<T>& operator[](std::size_t i) const { return entries_.at(i).value; }
    Tensor<T>& get(const std::string& name) { return entries_[index_of(name)].value; }
    const Tensor<T>& get(const std::string& name) const { return entries_[index_of(name)].value; }

    std::vector<ParamEntry<T>>& entries() noexcept { return entries_; }
    const std::vector<ParamEntry<T>>& entries() const noexcept { return entries_; }

    /// Same names and shapes, every value zero.
    ParamSet zeros_like() const {
        ParamSet out;
        for (const auto& e : entries_) out.add(e.name, e.kind, Tensor<T>(e.value.shape()));
        return out;
    }

    bool same_layout(const ParamSet& o) const {
        if (o.size() != size()) return false;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const auto& a = entries_[i];
            const auto& b = o.entries_[i];
            if (a.name != b.name || a.kind != b.kind || a.value.shape() != b.value.shape()) return false;
        }
        return true;
    }

    std::size_t learnable_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) {
            if (is_learnable(e.kind)) n += e.value.size();
        }
        return n;
    }

    friend bool operator==(const ParamSet& a, const ParamSet& b) {
        if (!a.same_layout(b)) return false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!(a.entries_[i].value == b.entries_[i].value)) return false;
        }
        return true;
    }

private:
    std::vector<ParamEntry<T>> entries_;
    std::map<std::string, std::size_t> index_;
};

} // namespace synnet
