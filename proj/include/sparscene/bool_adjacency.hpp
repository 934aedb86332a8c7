#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "sparscene/error.hpp"

namespace sparscene {

// Sparse boolean matrix over the boolean semiring, stored as row-major
// sorted neighbor lists. Entry (r, c) reads "message flows node r -> node c".
class BoolAdjacency {
  public:
    BoolAdjacency() = default;
    BoolAdjacency(int rows, int cols) : rows_(rows), cols_(cols), adj_(rows) {
        if (rows < 0 || cols < 0) throw ContractError("BoolAdjacency: negative dimension");
    }

    static BoolAdjacency identity(int n) {
        BoolAdjacency m(n, n);
        for (int i = 0; i < n; ++i) m.adj_[i].push_back(i);
        m.edge_count_ = n;
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t edge_count() const { return edge_count_; }
    const std::vector<int>& row(int r) const { return adj_[r]; }

    void add_edge(int r, int c) {
        check_index(r, c);
        auto& list = adj_[r];
        auto it = std::lower_bound(list.begin(), list.end(), c);
        if (it != list.end() && *it == c) return;
        list.insert(it, c);
        ++edge_count_;
    }

    bool contains(int r, int c) const {
        check_index(r, c);
        const auto& list = adj_[r];
        return std::binary_search(list.begin(), list.end(), c);
    }

    BoolAdjacency transpose() const {
        BoolAdjacency out(cols_, rows_);
        for (int r = 0; r < rows_; ++r) {
            for (int c : adj_[r]) out.adj_[c].push_back(r);
        }
        for (auto& list : out.adj_) std::sort(list.begin(), list.end());
        out.edge_count_ = edge_count_;
        return out;
    }

    // Boolean matrix product: out(r, c) = OR_k this(r, k) AND other(k, c).
    BoolAdjacency multiply(const BoolAdjacency& other) const {
        if (cols_ != other.rows_)
            throw ShapeError("BoolAdjacency::multiply: " + dims() + " x " + other.dims());
        BoolAdjacency out(rows_, other.cols_);
        std::vector<int> stamp(other.cols_, -1);
        std::vector<int> hits;
        for (int r = 0; r < rows_; ++r) {
            hits.clear();
            for (int k : adj_[r]) {
                for (int c : other.adj_[k]) {
                    if (stamp[c] != r) {
                        stamp[c] = r;
                        hits.push_back(c);
                    }
                }
            }
            std::sort(hits.begin(), hits.end());
            out.adj_[r] = hits;
            out.edge_count_ += hits.size();
        }
        return out;
    }

    // Element-wise union (logical OR).
    BoolAdjacency unite(const BoolAdjacency& other) const {
        if (rows_ != other.rows_ || cols_ != other.cols_)
            throw ShapeError("BoolAdjacency::unite: " + dims() + " vs " + other.dims());
        BoolAdjacency out(rows_, cols_);
        for (int r = 0; r < rows_; ++r) {
            auto& dst = out.adj_[r];
            std::set_union(adj_[r].begin(), adj_[r].end(), other.adj_[r].begin(),
                           other.adj_[r].end(), std::back_inserter(dst));
            out.edge_count_ += dst.size();
        }
        return out;
    }

    BoolAdjacency without_diagonal() const {
        BoolAdjacency out(rows_, cols_);
        for (int r = 0; r < rows_; ++r) {
            for (int c : adj_[r]) {
                if (c != r) out.adj_[r].push_back(c);
            }
            out.edge_count_ += out.adj_[r].size();
        }
        return out;
    }

    bool subset_of(const BoolAdjacency& other) const {
        if (rows_ != other.rows_ || cols_ != other.cols_) return false;
        for (int r = 0; r < rows_; ++r) {
            for (int c : adj_[r]) {
                if (!other.contains(r, c)) return false;
            }
        }
        return true;
    }

    bool operator==(const BoolAdjacency& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && adj_ == other.adj_;
    }

    // Flat (row, col) pairs ordered by column then row: the edge-list order
    // used by message passing, where columns are targets.
    std::vector<std::pair<int, int>> edges_by_col() const {
        std::vector<std::pair<int, int>> edges;
        edges.reserve(edge_count_);
        for (int r = 0; r < rows_; ++r) {
            for (int c : adj_[r]) edges.emplace_back(r, c);
        }
        std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
            return a.second != b.second ? a.second < b.second : a.first < b.first;
        });
        return edges;
    }

  private:
    void check_index(int r, int c) const {
        if (r < 0 || r >= rows_ || c < 0 || c >= cols_)
            throw ContractError("BoolAdjacency: index (" + std::to_string(r) + ", " +
                                std::to_string(c) + ") out of range for " + dims());
    }
    std::string dims() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    int rows_ = 0;
    int cols_ = 0;
    std::vector<std::vector<int>> adj_;
    std::size_t edge_count_ = 0;
};

}  // namespace sparscene
